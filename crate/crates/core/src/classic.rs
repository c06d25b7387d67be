//! Non-learned baselines: weave, bob (linear and Catmull-Rom cubic) and
//! edge-based line averaging (ELA).
//!
//! The intra-field methods rebuild a full frame from a single field. Rows of
//! the field's own parity are copied unchanged; missing rows are
//! interpolated from the field rows around them, with replicated rows past
//! the top and bottom edges.

use std::fmt;
use std::str::FromStr;

use crate::frame::{Field, Frame, FrameError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Weave,
    BobLinear,
    BobBicubic,
    Ela,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Weave,
        BaselineKind::BobLinear,
        BaselineKind::BobBicubic,
        BaselineKind::Ela,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Weave => "weave",
            BaselineKind::BobLinear => "bob_linear",
            BaselineKind::BobBicubic => "bob_bicubic",
            BaselineKind::Ela => "ela",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown baseline '{s}'"))
    }
}

/// Field row indices (clamped) bracketing missing full-frame row `y`:
/// `(above, below)`.
fn neighbours(field: &Field, y: usize) -> (isize, isize) {
    let above = (y as isize - 1 - field.parity().offset() as isize).div_euclid(2);
    (above, above + 1)
}

fn clamp_row(field: &Field, i: isize) -> &[f32] {
    field.row(i.clamp(0, field.height() as isize - 1) as usize)
}

/// Rebuilds a full frame, filling each missing row with `fill(field, y, out)`.
fn rebuild(field: &Field, mut fill: impl FnMut(&Field, usize, &mut [f32])) -> Frame {
    let mut frame = field.expand(0.0);
    for y in (field.parity().opposite().offset()..frame.height()).step_by(2) {
        fill(field, y, frame.row_mut(y));
    }
    frame
}

/// Bob with linear vertical interpolation.
pub fn bob_linear(field: &Field) -> Frame {
    rebuild(field, |f, y, out| {
        let (a, b) = neighbours(f, y);
        let (ra, rb) = (clamp_row(f, a), clamp_row(f, b));
        for ((o, &u), &d) in out.iter_mut().zip(ra).zip(rb) {
            *o = ((u as f64 + d as f64) * 0.5) as f32;
        }
    })
}

/// Catmull-Rom weights at the midpoint between the two middle taps.
pub const CUBIC_MIDPOINT_WEIGHTS: [f64; 4] = [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0];

/// Bob with Catmull-Rom cubic vertical interpolation over the four nearest
/// field rows.
pub fn bob_bicubic(field: &Field) -> Frame {
    rebuild(field, |f, y, out| {
        let (a, _) = neighbours(f, y);
        let taps = [a - 1, a, a + 1, a + 2].map(|i| clamp_row(f, i));
        for (x, o) in out.iter_mut().enumerate() {
            let v: f64 = taps
                .iter()
                .zip(CUBIC_MIDPOINT_WEIGHTS)
                .map(|(r, w)| r[x] as f64 * w)
                .sum();
            *o = v as f32;
        }
    })
}

/// Candidate interpolation directions for ELA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeDirection {
    /// Upper-left with lower-right.
    Falling,
    /// Straight above and below.
    Vertical,
    /// Upper-right with lower-left.
    Rising,
}

impl EdgeDirection {
    /// Column offset applied to the row above; the row below uses the
    /// negated offset.
    pub fn offset(self) -> isize {
        match self {
            EdgeDirection::Falling => -1,
            EdgeDirection::Vertical => 0,
            EdgeDirection::Rising => 1,
        }
    }
}

fn at(row: &[f32], channels: usize, x: isize, c: usize) -> f32 {
    let w = (row.len() / channels) as isize;
    row[x.clamp(0, w - 1) as usize * channels + c]
}

/// Direction with the smallest absolute difference between its pair of
/// pixels. Vertical wins ties, then falling over rising.
pub fn ela_direction(above: &[f32], below: &[f32], channels: usize, x: usize, c: usize) -> EdgeDirection {
    let x = x as isize;
    let diff = |d: EdgeDirection| {
        let o = d.offset();
        (at(above, channels, x + o, c) as f64 - at(below, channels, x - o, c) as f64).abs()
    };
    let mut best = EdgeDirection::Vertical;
    let mut best_diff = diff(best);
    for d in [EdgeDirection::Falling, EdgeDirection::Rising] {
        let v = diff(d);
        if v < best_diff {
            best = d;
            best_diff = v;
        }
    }
    best
}

/// Edge-based line averaging over three candidate directions.
pub fn ela(field: &Field) -> Frame {
    let ch = field.channels();
    rebuild(field, |f, y, out| {
        let (a, b) = neighbours(f, y);
        let (above, below) = (clamp_row(f, a), clamp_row(f, b));
        for x in 0..f.width() {
            for c in 0..ch {
                let d = ela_direction(above, below, ch, x, c);
                let o = d.offset();
                let (xi, u) = (x as isize, at(above, ch, x as isize + o, c));
                let l = at(below, ch, xi - o, c);
                out[x * ch + c] = ((u as f64 + l as f64) * 0.5) as f32;
            }
        }
    })
}

/// Applies one single-field method; `None` for weave, which needs both
/// fields.
pub fn interpolate_field(field: &Field, kind: BaselineKind) -> Option<Frame> {
    match kind {
        BaselineKind::Weave => None,
        BaselineKind::BobBicubic => Some(bob_bicubic(field)),
        BaselineKind::BobLinear => Some(bob_linear(field)),
        BaselineKind::Ela => Some(ela(field)),
    }
}

/// Reconstructs (frame `t`, frame `t + 1`) from an interlaced frame: frame
/// `t` from its odd field, frame `t + 1` from its even field. Weave returns
/// the interlaced frame twice.
pub fn deinterlace_classic(interlaced: &Frame, kind: BaselineKind) -> Result<(Frame, Frame), FrameError> {
    let (odd, even) = interlaced.split()?;
    match (interpolate_field(&odd, kind), interpolate_field(&even, kind)) {
        (Some(t), Some(t1)) => Ok((t, t1)),
        _ => Ok((interlaced.clone(), interlaced.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Parity;

    fn field(parity: Parity, width: usize, rows: &[&[f32]]) -> Field {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Field::new(parity, width, rows.len(), 1, data).unwrap()
    }

    #[test]
    fn bob_constant() {
        let f = Field::new(Parity::Odd, 3, 4, 1, vec![0.5; 12]).unwrap();
        for frame in [bob_bicubic(&f), bob_linear(&f), ela(&f)] {
            assert!(frame.data().iter().all(|&v| v == 0.5));
            assert_eq!(frame.height(), 8);
        }
    }

    #[test]
    fn bicubic_reproduces_linear_ramp_in_interior() {
        // field rows hold full-frame rows 0, 2, ..., 14 of the ramp v = y / 16
        let f = Field::new(
            Parity::Odd,
            2,
            8,
            1,
            (0..16).map(|i| (i / 2 * 2) as f32 / 16.0).collect(),
        )
        .unwrap();
        let frame = bob_bicubic(&f);
        // rows 3..=11 have all four taps inside the field
        for y in (3..=11).step_by(2) {
            for &v in frame.row(y) {
                assert!((v as f64 - y as f64 / 16.0).abs() < 1e-6, "row {y}: {v}");
            }
        }
    }

    #[test]
    fn even_field_rows_land_on_odd_indices() {
        let f = field(Parity::Even, 1, &[&[1.0], &[3.0]]);
        let frame = bob_linear(&f);
        assert_eq!(frame.data(), &[1.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn ela_follows_a_diagonal_edge() {
        // A 45-degree edge: bright region moves one column right per field row.
        let f = field(Parity::Odd, 3, &[&[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0]]);
        let frame = ela(&f);
        // Missing row 1, column 1: vertical pair (0, 1) differs by 1; the
        // upper-left/lower-right pair (1, 1) matches.
        assert_eq!(ela_direction(f.row(0), f.row(1), 1, 1, 0), EdgeDirection::Falling);
        assert_eq!(frame.row(1)[1], 1.0);
        assert_eq!(bob_linear(&f).row(1)[1], 0.5);
    }

    #[test]
    fn ela_prefers_vertical_on_ties() {
        let f = field(Parity::Odd, 3, &[&[0.2, 0.2, 0.2], &[0.2, 0.2, 0.2]]);
        for x in 0..3 {
            assert_eq!(ela_direction(f.row(0), f.row(1), 1, x, 0), EdgeDirection::Vertical);
        }
    }

    #[test]
    fn weave_returns_input() {
        let i = Frame::from_fn(4, 4, |x, y| (x + 4 * y) as f32).unwrap();
        let (a, b) = deinterlace_classic(&i, BaselineKind::Weave).unwrap();
        assert_eq!((a, b), (i.clone(), i));
    }

    #[test]
    fn known_rows_preserved_rgb() {
        let i = Frame::new(3, 6, 3, (0..54).map(|v| (v % 7) as f32 / 7.0).collect()).unwrap();
        for kind in BaselineKind::ALL {
            let (t, t1) = deinterlace_classic(&i, kind).unwrap();
            for y in 0..6 {
                let out = if y % 2 == 0 { &t } else { &t1 };
                assert_eq!(out.row(y), i.row(y), "{kind} row {y}");
            }
        }
    }

    #[test]
    fn parse_names() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("bob".parse::<BaselineKind>().is_err());
    }
}
