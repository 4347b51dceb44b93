//! Min-max scaling between physical quantities and the model's unit-box
//! coordinates.
//!
//! Each network carries its own per-dimension ranges. Input ranges come
//! from the training data; target ranges use the bus voltage bounds for the
//! magnitude half (so feasible magnitudes always land inside [0,1]) and the
//! training min/max with a 10% margin for the angle half (keeping training
//! angles strictly inside). Inputs are never clamped: out-of-range values
//! map outside [0,1] proportionally.

use crate::error::{Error, Result};
use crate::grid::NetworkCase;
use serde::{Deserialize, Serialize};

/// One dimension's scaling interval; `x ↦ (x - lo) / (hi - lo)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    fn scale(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }

    fn unscale(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}

/// Width below which a data-driven range is considered degenerate and is
/// replaced by value ± 0.5 (e.g. a bus with zero reactive load in every
/// sample, or the fixed slack angle).
const DEGENERATE_WIDTH: f64 = 1e-12;

/// Fraction of the observed span added on each side of angle ranges.
const ANGLE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScaler {
    /// Ranges for the input vector `[p_loads, q_loads]`.
    pub input: Vec<Range>,
    /// Ranges for the target vector `[vm, va]`.
    pub target: Vec<Range>,
}

/// Per-network min-max ranges for inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub networks: Vec<NetworkScaler>,
}

/// Data-driven range over `values`, widened when degenerate.
fn data_range<'a>(values: impl Iterator<Item = &'a f64>, margin: f64) -> Range {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span.is_nan() || span <= DEGENERATE_WIDTH {
        let mid = if lo.is_finite() { (lo + hi) / 2.0 } else { 0.0 };
        return Range {
            lo: mid - 0.5,
            hi: mid + 0.5,
        };
    }
    let pad = margin * span;
    Range {
        lo: lo - pad,
        hi: hi + pad,
    }
}

impl NetworkScaler {
    /// Fits one network's ranges on its training split.
    ///
    /// `inputs` are `[p, q]` load vectors, `angles` the per-sample `va`
    /// vectors; the magnitude half of the target side is taken from the bus
    /// voltage limits, not the data.
    pub fn fit(case: &NetworkCase, inputs: &[Vec<f64>], angles: &[Vec<f64>]) -> Self {
        let in_dim = inputs.first().map_or(0, |v| v.len());
        let input = (0..in_dim)
            .map(|d| data_range(inputs.iter().map(|v| &v[d]), 0.0))
            .collect();
        let mut target: Vec<Range> = case
            .buses
            .iter()
            .map(|b| Range {
                lo: b.vmin,
                hi: b.vmax,
            })
            .collect();
        for d in 0..case.n_bus() {
            target.push(data_range(angles.iter().map(|v| &v[d]), ANGLE_MARGIN));
        }
        NetworkScaler { input, target }
    }
}

fn apply(ranges: &[Range], v: &[f64], invert: bool) -> Result<Vec<f64>> {
    if v.len() != ranges.len() {
        return Err(Error::UnfittedDimension(v.len()));
    }
    Ok(v.iter()
        .zip(ranges)
        .map(|(&x, r)| if invert { r.unscale(x) } else { r.scale(x) })
        .collect())
}

impl Scaler {
    fn network(&self, k: usize) -> Result<&NetworkScaler> {
        self.networks.get(k).ok_or(Error::UnfittedDimension(k))
    }

    /// Physical input `[p, q]` → unit-box coordinates (no clamping).
    pub fn scale_input(&self, k: usize, v: &[f64]) -> Result<Vec<f64>> {
        apply(&self.network(k)?.input, v, false)
    }

    pub fn unscale_input(&self, k: usize, v: &[f64]) -> Result<Vec<f64>> {
        apply(&self.network(k)?.input, v, true)
    }

    /// Physical target `[vm, va]` → unit-box coordinates.
    pub fn scale_target(&self, k: usize, v: &[f64]) -> Result<Vec<f64>> {
        apply(&self.network(k)?.target, v, false)
    }

    pub fn unscale_target(&self, k: usize, v: &[f64]) -> Result<Vec<f64>> {
        apply(&self.network(k)?.target, v, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;

    fn case14() -> NetworkCase {
        let path = format!("{}/../../cases/case14.m", env!("CARGO_MANIFEST_DIR"));
        parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn endpoints_map_to_zero_and_one() {
        let r = Range { lo: 2.0, hi: 6.0 };
        assert_eq!(r.scale(2.0), 0.0);
        assert_eq!(r.scale(6.0), 1.0);
        assert_eq!(r.scale(4.0), 0.5);
        // No clamping: outside values map outside [0,1].
        assert!(r.scale(7.0) > 1.0);
        assert!(r.scale(1.0) < 0.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let case = case14();
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|i| (0..6).map(|d| 0.3 + 0.01 * (i * 7 % 13) as f64 + 0.1 * d as f64).collect())
            .collect();
        let angles: Vec<Vec<f64>> = (0..20)
            .map(|i| (0..case.n_bus()).map(|d| -0.2 + 0.004 * (i + d) as f64).collect())
            .collect();
        let net = NetworkScaler::fit(&case, &inputs, &angles);
        let scaler = Scaler {
            networks: vec![net],
        };
        let x: Vec<f64> = (0..6).map(|d| 0.35 + 0.09 * d as f64).collect();
        let u = scaler.scale_input(0, &x).unwrap();
        let back = scaler.unscale_input(0, &u).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let t: Vec<f64> = (0..2 * case.n_bus())
            .map(|d| if d < case.n_bus() { 1.0 } else { -0.1 })
            .collect();
        let u = scaler.scale_target(0, &t).unwrap();
        let back = scaler.unscale_target(0, &u).unwrap();
        for (a, b) in t.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn magnitude_ranges_use_bus_limits() {
        let case = case14();
        let net = NetworkScaler::fit(&case, &[vec![1.0]], &[vec![0.0; case.n_bus()]]);
        // All case14 buses have limits [0.94, 1.06]: magnitudes scale by the
        // operating box itself, so any in-limit voltage maps into [0, 1] and
        // the sigmoid output can never leave the feasible band.
        let bus0 = net.target[0];
        assert!((bus0.lo - case.buses[0].vmin).abs() < 1e-12);
        assert!((bus0.hi - case.buses[0].vmax).abs() < 1e-12);
        // Midpoint symmetry: vm = 1.0 lands at 0.5.
        let mid = (1.0 - bus0.lo) / (bus0.hi - bus0.lo);
        assert!((mid - 0.5).abs() < 1e-9);
    }

    #[test]
    fn angle_ranges_carry_margin_and_degenerate_dims_widen() {
        let case = case14();
        let n = case.n_bus();
        // Angles vary in [-0.3, 0.1] at every bus except bus 0 (constant).
        let angles: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..n)
                    .map(|d| if d == 0 { 0.25 } else { -0.3 + 0.1 * i as f64 })
                    .collect()
            })
            .collect();
        let net = NetworkScaler::fit(&case, &[vec![1.0]], &angles);
        let slack = net.target[n];
        assert!((slack.lo - (0.25 - 0.5)).abs() < 1e-12);
        assert!((slack.hi - (0.25 + 0.5)).abs() < 1e-12);
        let moving = net.target[n + 1];
        // Span 0.4 with 10% margin per side.
        assert!((moving.lo - (-0.34)).abs() < 1e-12);
        assert!((moving.hi - 0.14).abs() < 1e-12);
        // Every training angle sits strictly inside its range.
        for row in &angles {
            for (d, &v) in row.iter().enumerate() {
                let r = net.target[n + d];
                assert!(v > r.lo && v < r.hi);
            }
        }
    }

    #[test]
    fn unknown_network_or_dimension_errors() {
        let scaler = Scaler {
            networks: vec![],
        };
        assert!(matches!(
            scaler.scale_input(0, &[1.0]),
            Err(Error::UnfittedDimension(_))
        ));
    }
}
