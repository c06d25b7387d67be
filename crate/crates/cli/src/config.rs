//! Flat `key = value` config files merged under command-line flags.
//!
//! Keys are long flag names (`lambda-tv`, or `lambda_tv`). Blank lines and
//! lines starting with `#` are ignored. Unknown keys are errors. Values from
//! the file are spliced in front of the real arguments, so any flag given on
//! the command line wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got '{line}'", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` (either `--config x` or `--config=x`) in `args`.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Rewrites `args` (program name, subcommand, rest) so that config-file
/// entries become flags placed before the user's own flags.
pub fn merge_config_file(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(sub_name) = args.get(1).map(|a| a.to_string_lossy().into_owned()) else {
        return Ok(args);
    };
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| anyhow!("--config needs a subcommand"))?;
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("cannot read config file {}", Path::new(&path).display()))?;
    let mut injected = Vec::new();
    for (key, value) in parse(&text)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| anyhow!("unknown config key '{key}' for '{sub_name}'"))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                _ => bail!("config key '{key}' expects true or false, got '{value}'"),
            },
            _ => injected.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}
