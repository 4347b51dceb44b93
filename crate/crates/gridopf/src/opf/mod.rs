//! Optimal power flow: minimum-cost dispatch subject to power balance,
//! generator limits, voltage bounds, and branch flow limits, solved with a
//! primal-dual interior-point method in polar coordinates.

mod ipm;
mod kkt;
mod problem;

pub use kkt::kkt_residuals;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, NetworkCase};
use ipm::{solve_nlp, IpmOptions};
use problem::OpfStructure;

/// Solutions that stall with a feasibility residual above this level are
/// classified as infeasible rather than merely unconverged.
pub const INFEASIBILITY_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct OpfOptions {
    /// Convergence tolerance on the normalized KKT conditions.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions { tol: 1e-6, max_iter: 150 }
    }
}

/// A converged optimal-power-flow operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    /// Per-bus voltage magnitude (p.u.).
    pub vm: Vec<f64>,
    /// Per-bus voltage angle (radians).
    pub va: Vec<f64>,
    /// Per-generator active dispatch (p.u.).
    pub pg: Vec<f64>,
    /// Per-generator reactive dispatch (p.u.).
    pub qg: Vec<f64>,
    /// Total generation cost ($/h).
    pub objective: f64,
    pub iterations: usize,
    /// Wall-clock solve time in seconds.
    pub solve_time: f64,
    /// Equality multipliers in solver layout: active balance per bus,
    /// reactive balance per bus, then one row per pinned variable.
    pub lam: Vec<f64>,
    /// Inequality multipliers: from-side flow rows, to-side flow rows, then
    /// bound rows.
    pub mu: Vec<f64>,
    /// Inequality slacks, aligned with `mu`.
    pub slack: Vec<f64>,
}

/// Total generation cost ($/h) for a per-unit dispatch.
pub fn objective(case: &NetworkCase, pg: &[f64]) -> Result<f64> {
    if pg.len() != case.n_gen() {
        return Err(Error::DimensionMismatch { expected: case.n_gen(), got: pg.len() });
    }
    Ok(case
        .generators
        .iter()
        .zip(pg)
        .map(|(g, &p)| {
            let p_mw = p * case.base_mva;
            let (c2, c1, c0) = g.cost;
            c2 * p_mw * p_mw + c1 * p_mw + c0
        })
        .sum())
}

/// Solves the AC optimal power flow for the given per-unit bus demands.
///
/// Returns an error when the iteration stalls; stalls with a large
/// feasibility residual are reported as [`Error::Infeasible`].
pub fn solve_opf(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    loads: &[(f64, f64)],
    options: &OpfOptions,
) -> Result<OpfSolution> {
    let started = std::time::Instant::now();
    let st = OpfStructure::new(case, y, loads)?;
    let x0 = st.initial_point();
    let opt = IpmOptions {
        tol: options.tol,
        max_iter: options.max_iter,
        ..IpmOptions::default()
    };
    let r = solve_nlp(&st, x0, &opt);
    if !r.converged {
        log::debug!(
            "opf stalled on {}: iterations {}, numerical failure {}, residuals ({:.3e}, {:.3e}, {:.3e})",
            case.name,
            r.iterations,
            r.failed,
            r.feascond,
            r.gradcond,
            r.compcond
        );
        if r.feascond.is_finite() && r.feascond > INFEASIBILITY_THRESHOLD {
            return Err(Error::Infeasible { feascond: r.feascond });
        }
        return Err(Error::NotConverged {
            iterations: r.iterations,
            feascond: if r.feascond.is_finite() { r.feascond } else { f64::INFINITY },
        });
    }
    Ok(OpfSolution {
        vm: st.vm_slice(&r.x).to_vec(),
        va: st.va_full(&r.x),
        pg: st.pg_slice(&r.x).to_vec(),
        qg: st.qg_slice(&r.x).to_vec(),
        objective: r.f,
        iterations: r.iterations,
        solve_time: started.elapsed().as_secs_f64(),
        lam: r.lam.as_slice().to_vec(),
        mu: r.z.as_slice().to_vec(),
        slack: r.s.as_slice().to_vec(),
    })
}

pub(crate) fn pack_solution(st: &OpfStructure, sol: &OpfSolution) -> DVector<f64> {
    st.pack(&sol.vm, &sol.va, &sol.pg, &sol.qg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_admittance, parse_case};

    fn two_bus(pd: f64, qd: f64) -> NetworkCase {
        // Slack magnitude pinned at 1.0 via a zero-width voltage box.
        let text = format!(
            "function mpc = twobus\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n 1 3 0 0 0 0 1 1 0 345 1 1.0 1.0;\n 2 1 {pd} {qd} 0 0 1 1 0 345 1 1.1 0.9;\n];\n\
             mpc.gen = [\n 1 0 0 300 -300 1 100 1 2000 0;\n];\n\
             mpc.branch = [\n 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n];\n\
             mpc.gencost = [\n 2 0 0 3 0.01 40 0;\n];\n"
        );
        parse_case(&text).unwrap()
    }

    #[test]
    fn objective_sums_polynomial_costs() {
        let case = two_bus(50.0, 10.0);
        // 0.01 * 60^2 + 40 * 60 + 0 = 2436
        let f = objective(&case, &[0.6]).unwrap();
        assert!((f - 2436.0).abs() < 1e-9);
        assert!(matches!(
            objective(&case, &[0.6, 0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_bus_dispatch_covers_load_and_losses() {
        let case = two_bus(50.0, 10.0);
        let y = build_admittance(&case).unwrap();
        let loads = case.base_loads_pu();
        let sol = solve_opf(&case, &y, &loads, &OpfOptions::default()).unwrap();
        assert!(sol.pg[0] > 0.5, "dispatch {} must exceed the 0.5 p.u. load", sol.pg[0]);
        assert!(sol.pg[0] < 0.52, "losses are small on this line, got {}", sol.pg[0]);
        assert!((sol.vm[0] - 1.0).abs() < 1e-8, "pinned slack magnitude moved");
        let (p, d, c) = kkt_residuals(&case, &y, &loads, &sol).unwrap();
        assert!(p < 1e-6 && d < 1e-6 && c < 1e-6, "residuals ({p}, {d}, {c})");
    }

    #[test]
    fn impossible_load_is_classified_infeasible() {
        let case = two_bus(4000.0, 0.0); // 40 p.u. over one 0.1 p.u. line
        let y = build_admittance(&case).unwrap();
        let loads = case.base_loads_pu();
        let err = solve_opf(&case, &y, &loads, &OpfOptions::default());
        assert!(
            matches!(err, Err(Error::Infeasible { .. })),
            "expected infeasibility, got {err:?}"
        );
    }

    #[test]
    fn solve_time_is_recorded() {
        let case = two_bus(50.0, 10.0);
        let y = build_admittance(&case).unwrap();
        let loads = case.base_loads_pu();
        let sol = solve_opf(&case, &y, &loads, &OpfOptions::default()).unwrap();
        assert!(sol.solve_time > 0.0);
    }
}
