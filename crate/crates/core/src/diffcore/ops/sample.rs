//! Interpolation taps for sampling an `H×W×T×C` feature volume at
//! normalized `(x, y, t)` coordinates.
//!
//! Node `i` of an axis with `n` nodes sits at `(i + 0.5) / n`. Queries
//! beyond the outermost node centers clamp to the edge node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    #[default]
    Linear,
    Nearest,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "trilinear" => Ok(SampleMode::Linear),
            "nearest" => Ok(SampleMode::Nearest),
            other => Err(Error::Config(format!(
                "unknown interpolation mode `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SampleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SampleMode::Linear => "linear",
            SampleMode::Nearest => "nearest",
        })
    }
}

/// Precomputed gather plan: `taps_per_query` `(node, weight)` pairs per query.
#[derive(Clone, Debug)]
pub struct SampleTaps {
    pub taps_per_query: usize,
    pub taps: Vec<(u32, f64)>,
}

impl SampleTaps {
    pub fn num_queries(&self) -> usize {
        self.taps
            .len()
            .checked_div(self.taps_per_query)
            .unwrap_or(0)
    }
}

/// Continuous node index for normalized coordinate `c` on an axis of `n` nodes.
#[inline]
fn axis_position(c: f64, n: usize) -> f64 {
    (c * n as f64 - 0.5).clamp(0.0, (n - 1) as f64)
}

#[inline]
fn linear_axis(c: f64, n: usize) -> [(usize, f64); 2] {
    let u = axis_position(c, n);
    let i0 = (u.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    let f = u - i0 as f64;
    [(i0, 1.0 - f), (i1, f)]
}

#[inline]
fn nearest_axis(c: f64, n: usize) -> usize {
    let u = axis_position(c, n);
    ((u + 0.5).floor() as usize).min(n - 1)
}

/// Builds sampling taps for a grid of `dims = [H, W, T]` nodes.
pub fn build_taps(dims: [usize; 3], coords: &[[f64; 3]], mode: SampleMode) -> Result<SampleTaps> {
    let [h, w, t] = dims;
    let node = |iy: usize, ix: usize, it: usize| ((iy * w + ix) * t + it) as u32;
    let taps_per_query = match mode {
        SampleMode::Linear => 8,
        SampleMode::Nearest => 1,
    };
    let mut taps = Vec::with_capacity(coords.len() * taps_per_query);
    for (q, &[x, y, tq]) in coords.iter().enumerate() {
        if !(x.is_finite() && y.is_finite() && tq.is_finite()) {
            return Err(Error::Input(format!(
                "sample coordinate {q} is not finite: ({x}, {y}, {tq})"
            )));
        }
        match mode {
            SampleMode::Linear => {
                let ax = linear_axis(x, w);
                let ay = linear_axis(y, h);
                let at = linear_axis(tq, t);
                for &(iy, wy) in &ay {
                    for &(ix, wx) in &ax {
                        for &(it, wt) in &at {
                            taps.push((node(iy, ix, it), wy * wx * wt));
                        }
                    }
                }
            }
            SampleMode::Nearest => {
                taps.push((
                    node(nearest_axis(y, h), nearest_axis(x, w), nearest_axis(tq, t)),
                    1.0,
                ));
            }
        }
    }
    Ok(SampleTaps {
        taps_per_query,
        taps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        let coords = [[0.3, 0.71, 0.2], [0.0, 1.0, 0.5], [0.99, 0.01, 0.93]];
        let taps = build_taps([4, 5, 3], &coords, SampleMode::Linear).unwrap();
        for q in taps.taps.chunks(8) {
            let s: f64 = q.iter().map(|t| t.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clamps_outside_node_range() {
        let taps = build_taps([1, 4, 1], &[[0.0, 0.5, 0.5]], SampleMode::Nearest).unwrap();
        assert_eq!(taps.taps, vec![(0, 1.0)]);
        let taps = build_taps([1, 4, 1], &[[1.0, 0.5, 0.5]], SampleMode::Nearest).unwrap();
        assert_eq!(taps.taps, vec![(3, 1.0)]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(build_taps([2, 2, 2], &[[f64::NAN, 0.5, 0.5]], SampleMode::Linear).is_err());
    }
}
