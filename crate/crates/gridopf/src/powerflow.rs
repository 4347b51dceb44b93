//! Power-flow equations: complex injections, Newton-Raphson solution in polar
//! coordinates, branch apparent-power flows, and operating-limit checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{branch_admittance, AdmittanceMatrix, BusKind, NetworkCase};

/// Newton-Raphson mismatch tolerance (p.u.).
pub const PF_TOLERANCE: f64 = 1e-8;
/// Newton-Raphson iteration cap.
pub const PF_MAX_ITER: usize = 20;

/// A candidate or solved operating voltage profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoltageSolution {
    /// Per-bus voltage magnitude (p.u.).
    pub vm: Vec<f64>,
    /// Per-bus voltage angle (radians).
    pub va: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest power-balance residual at the returned point (p.u.).
    pub max_mismatch: f64,
}

impl VoltageSolution {
    /// Complex per-bus voltages.
    pub fn phasors(&self) -> Vec<Complex64> {
        to_phasors(&self.vm, &self.va)
    }
}

pub(crate) fn to_phasors(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter()
        .zip(va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

/// S_i = V_i * conj(sum_j Y_ij V_j) for every bus, as complex power (p.u.).
pub fn complex_injections(y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> Result<Vec<Complex64>> {
    if vm.len() != y.dim || va.len() != y.dim {
        return Err(Error::DimensionMismatch {
            expected: y.dim,
            got: vm.len().min(va.len()),
        });
    }
    let v = DVector::from_vec(to_phasors(vm, va));
    let i = &y.m * &v;
    Ok(v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect())
}

/// Partial derivatives of the injection vector S with respect to bus angles
/// and magnitudes (standard polar forms, both n x n complex).
pub(crate) fn dsbus_dv(
    y: &AdmittanceMatrix,
    v: &[Complex64],
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = y.dim;
    let vv = DVector::from_column_slice(v);
    let ibus = &y.m * &vv;
    let vnorm: Vec<Complex64> = v.iter().map(|v| v / v.norm()).collect();

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    let mut ds_dva = DMatrix::<Complex64>::zeros(n, n);
    // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
    let mut ds_dvm = DMatrix::<Complex64>::zeros(n, n);
    let j = Complex64::new(0.0, 1.0);
    for r in 0..n {
        for c in 0..n {
            let y_rc = y.m[(r, c)];
            let mut a = -(y_rc * v[c]);
            if r == c {
                a += ibus[r];
            }
            ds_dva[(r, c)] = j * v[r] * a.conj();
            let mut m = v[r] * (y_rc * vnorm[c]).conj();
            if r == c {
                m += ibus[r].conj() * vnorm[c];
            }
            ds_dvm[(r, c)] = m;
        }
    }
    (ds_dva, ds_dvm)
}

/// Fixed quantities the Newton-Raphson solve holds at their setpoints:
/// per-generator active dispatch (p.u.) and voltage magnitude (p.u.).
#[derive(Debug, Clone)]
pub struct GenSetpoints {
    pub pg: Vec<f64>,
    pub vm: Vec<f64>,
}

impl GenSetpoints {
    /// Setpoints from the case file's initial dispatch and voltage columns.
    pub fn from_case(case: &NetworkCase) -> Self {
        GenSetpoints {
            pg: case.generators.iter().map(|g| g.pg0 / case.base_mva).collect(),
            vm: case.generators.iter().map(|g| g.vg).collect(),
        }
    }
}

/// Solves the power-flow equations by full Newton-Raphson in polar
/// coordinates. Unknowns are angles at pv+pq buses and magnitudes at pq
/// buses; the slack bus covers the system imbalance. Generator reactive
/// limits are not enforced here (no pv->pq switching); use
/// [`evaluate_constraints`] to surface violations.
pub fn solve_powerflow(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    loads: &[(f64, f64)],
    setpoints: &GenSetpoints,
    warm_start: Option<(&[f64], &[f64])>,
) -> Result<VoltageSolution> {
    let n = case.n_bus();
    if loads.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: loads.len() });
    }
    if setpoints.pg.len() != case.n_gen() || setpoints.vm.len() != case.n_gen() {
        return Err(Error::DimensionMismatch {
            expected: case.n_gen(),
            got: setpoints.pg.len().min(setpoints.vm.len()),
        });
    }
    let slack = case.slack();
    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusKind::Pq)
        .collect();

    // Net scheduled injection per bus (p.u.); the slack entries are unused.
    let mut p_spec: Vec<f64> = loads.iter().map(|&(p, _)| -p).collect();
    let q_spec: Vec<f64> = loads.iter().map(|&(_, q)| -q).collect();
    for (g, gen) in case.generators.iter().enumerate() {
        p_spec[gen.bus] += setpoints.pg[g];
    }

    // Start: flat unless warm-started; generator buses take their voltage
    // setpoint, the slack angle is the file reference.
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    if let Some((wm, wa)) = warm_start {
        if wm.len() != n || wa.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: wm.len().min(wa.len()) });
        }
        vm.copy_from_slice(wm);
        va.copy_from_slice(wa);
    }
    va[slack] = case.buses[slack].va0.to_radians();
    for (g, gen) in case.generators.iter().enumerate() {
        if case.buses[gen.bus].kind != BusKind::Pq {
            vm[gen.bus] = setpoints.vm[g];
        }
    }

    let n_unknown = pvpq.len() + pq.len();
    for iter in 0..=PF_MAX_ITER {
        let s = complex_injections(y, &vm, &va)?;
        let mut f = DVector::<f64>::zeros(n_unknown);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - p_spec[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[i].im - q_spec[i];
        }
        let max_mismatch = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_mismatch < PF_TOLERANCE {
            return Ok(VoltageSolution {
                vm,
                va,
                converged: true,
                iterations: iter,
                max_mismatch,
            });
        }
        if iter == PF_MAX_ITER {
            break;
        }

        let v = to_phasors(&vm, &va);
        let (ds_dva, ds_dvm) = dsbus_dv(y, &v);
        let mut jac = DMatrix::<f64>::zeros(n_unknown, n_unknown);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva[(i, k)].re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, pvpq.len() + c)] = ds_dvm[(i, k)].re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(pvpq.len() + r, c)] = ds_dva[(i, k)].im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(pvpq.len() + r, pvpq.len() + c)] = ds_dvm[(i, k)].im;
            }
        }
        let dx = jac.lu().solve(&f).ok_or(Error::SingularJacobian)?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] -= dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] -= dx[pvpq.len() + r];
        }
    }
    Err(Error::MaxIterationsExceeded(PF_MAX_ITER))
}

/// From-side and to-side apparent-power magnitudes per branch (p.u.), using
/// the same two-port model as the admittance assembly.
pub fn branch_flows(case: &NetworkCase, vm: &[f64], va: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = case.n_bus();
    if vm.len() != n || va.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: vm.len().min(va.len()) });
    }
    let v = to_phasors(vm, va);
    case.branches
        .iter()
        .map(|br| {
            let ba = branch_admittance(br)?;
            let (vf, vt) = (v[br.from], v[br.to]);
            let sf = vf * (ba.yff * vf + ba.yft * vt).conj();
            let st = vt * (ba.ytf * vf + ba.ytt * vt).conj();
            Ok((sf.norm(), st.norm()))
        })
        .collect()
}

/// Violations and satisfaction flags for one constraint family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyReport {
    /// Violation magnitude per constraint (0.0 when satisfied exactly).
    pub violations: Vec<f64>,
    /// violation <= tolerance, per constraint.
    pub satisfied: Vec<bool>,
}

impl FamilyReport {
    fn new(violations: Vec<f64>, tol: f64) -> Self {
        let satisfied = violations.iter().map(|&v| v <= tol).collect();
        FamilyReport { violations, satisfied }
    }

    pub fn total(&self) -> usize {
        self.violations.len()
    }

    pub fn n_satisfied(&self) -> usize {
        self.satisfied.iter().filter(|&&s| s).count()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    pub fn all_satisfied(&self) -> bool {
        self.n_satisfied() == self.total()
    }
}

/// Inequality-constraint evaluation of an operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Tolerance used for the satisfied flags (p.u.).
    pub tolerance: f64,
    pub pg_limits: FamilyReport,
    pub qg_limits: FamilyReport,
    pub v_limits: FamilyReport,
    /// Two entries per flow-limited branch: from side, then to side.
    /// Branches with no limit are excluded.
    pub branch_limits: FamilyReport,
}

impl ConstraintReport {
    pub fn all_satisfied(&self) -> bool {
        self.pg_limits.all_satisfied()
            && self.qg_limits.all_satisfied()
            && self.v_limits.all_satisfied()
            && self.branch_limits.all_satisfied()
    }
}

/// Checks generator, voltage, and branch-flow limits at `tol` (p.u.).
/// Dispatch is per-generator in p.u.
pub fn evaluate_constraints(
    case: &NetworkCase,
    vm: &[f64],
    va: &[f64],
    pg: &[f64],
    qg: &[f64],
    tol: f64,
) -> Result<ConstraintReport> {
    let ng = case.n_gen();
    if pg.len() != ng || qg.len() != ng {
        return Err(Error::DimensionMismatch { expected: ng, got: pg.len().min(qg.len()) });
    }
    let base = case.base_mva;
    let over = |v: f64, lo: f64, hi: f64| (v - hi).max(lo - v).max(0.0);

    let pg_viol = case
        .generators
        .iter()
        .zip(pg)
        .map(|(g, &p)| over(p, g.pmin / base, g.pmax / base))
        .collect();
    let qg_viol = case
        .generators
        .iter()
        .zip(qg)
        .map(|(g, &q)| over(q, g.qmin / base, g.qmax / base))
        .collect();
    let v_viol = case
        .buses
        .iter()
        .zip(vm)
        .map(|(b, &m)| over(m, b.vmin, b.vmax))
        .collect();
    let flows = branch_flows(case, vm, va)?;
    let mut br_viol = Vec::new();
    for (br, (sf, st)) in case.branches.iter().zip(&flows) {
        if br.smax > 0.0 {
            let lim = br.smax / base;
            br_viol.push((sf - lim).max(0.0));
            br_viol.push((st - lim).max(0.0));
        }
    }
    Ok(ConstraintReport {
        tolerance: tol,
        pg_limits: FamilyReport::new(pg_viol, tol),
        qg_limits: FamilyReport::new(qg_viol, tol),
        v_limits: FamilyReport::new(v_viol, tol),
        branch_limits: FamilyReport::new(br_viol, tol),
    })
}
