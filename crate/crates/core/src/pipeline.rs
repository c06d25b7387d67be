//! Frame-level deinterlacing with either the network or a baseline.
//!
//! The network sees lightness only. For RGB input the frame goes through
//! L*a*b*: the network fills the missing L rows, the chroma planes use bob
//! with cubic interpolation, and after converting back the known rows are
//! copied from the original RGB so they stay bit-exact.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::classic::{deinterlace_classic, BaselineKind};
use crate::color::{lab_planes_to_rgb, rgb_to_lab_planes};
use crate::frame::{Frame, FrameError, Parity};
use crate::model::{DeinterlaceNet, ModelError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("method 'net' needs trained weights")]
    MissingNet,
    #[error("expected 1 or 3 channels, got {0}")]
    Channels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Net,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Net,
        Method::Baseline(BaselineKind::Weave),
        Method::Baseline(BaselineKind::BobLinear),
        Method::Baseline(BaselineKind::BobBicubic),
        Method::Baseline(BaselineKind::Ela),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Net => "net",
            Method::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
            format!("unknown method '{s}' (expected one of: {})", names.join(", "))
        })
    }
}

/// Copies rows of `parity` from `src` into `dst`.
fn copy_rows(dst: &mut Frame, src: &Frame, parity: Parity) {
    for y in (parity.offset()..src.height()).step_by(2) {
        dst.row_mut(y).copy_from_slice(src.row(y));
    }
}

/// Reconstructs (frame `t`, frame `t + 1`) from one interlaced frame.
/// `net` is required for [`Method::Net`] and ignored otherwise.
pub fn deinterlace_frame(
    method: Method,
    net: Option<&DeinterlaceNet<f32>>,
    interlaced: &Frame,
) -> Result<(Frame, Frame), PipelineError> {
    if !matches!(interlaced.channels(), 1 | 3) {
        return Err(PipelineError::Channels(interlaced.channels()));
    }
    let net = match method {
        Method::Baseline(kind) => return Ok(deinterlace_classic(interlaced, kind)?),
        Method::Net => net.ok_or(PipelineError::MissingNet)?,
    };
    if interlaced.channels() == 1 {
        return Ok(net.deinterlace(interlaced)?);
    }
    if !interlaced.height().is_multiple_of(2) {
        return Err(ModelError::OddHeight(interlaced.height()).into());
    }
    let [l, a, b] = rgb_to_lab_planes(interlaced)?;
    let (l_t, l_t1) = net.deinterlace(&l)?;
    let (a_t, a_t1) = deinterlace_classic(&a, BaselineKind::BobBicubic)?;
    let (b_t, b_t1) = deinterlace_classic(&b, BaselineKind::BobBicubic)?;
    let mut t = lab_planes_to_rgb(&[l_t, a_t, b_t])?;
    let mut t1 = lab_planes_to_rgb(&[l_t1, a_t1, b_t1])?;
    copy_rows(&mut t, interlaced, Parity::Odd);
    copy_rows(&mut t1, interlaced, Parity::Even);
    Ok((t, t1))
}
