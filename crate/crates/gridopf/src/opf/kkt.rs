//! Independent first-order optimality check. Every quantity here is
//! recomputed from scratch with scalar, textbook trigonometric forms of the
//! power-flow equations — deliberately not sharing the solver's complex
//! matrix algebra — so a bookkeeping error in one path cannot hide in the
//! other.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{branch_admittance, AdmittanceMatrix, NetworkCase};
use crate::opf::problem::OpfStructure;
use crate::opf::{pack_solution, OpfSolution};

/// Normalized primal-feasibility, stationarity, and complementarity
/// residuals of a solution, in that order. A converged solve keeps all three
/// below its tolerance.
pub fn kkt_residuals(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    loads: &[(f64, f64)],
    sol: &OpfSolution,
) -> Result<(f64, f64, f64)> {
    let st = OpfStructure::new(case, y, loads)?;
    if sol.lam.len() != st.n_eq() {
        return Err(Error::LengthMismatch { expected: st.n_eq(), got: sol.lam.len() });
    }
    if sol.mu.len() != st.n_ineq() || sol.slack.len() != st.n_ineq() {
        return Err(Error::LengthMismatch {
            expected: st.n_ineq(),
            got: sol.mu.len().min(sol.slack.len()),
        });
    }
    let x = pack_solution(&st, sol);
    let g = naive_equalities(&st, &x);
    let h = naive_inequalities(&st, &x);
    let lx = naive_gradient(&st, &x, &sol.lam, &sol.mu);

    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let max_h = h.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let viol = if h.is_empty() { inf(&g) } else { inf(&g).max(max_h) };
    let primal = viol / (1.0 + inf(x.as_slice()).max(inf(&sol.slack)));
    let dual = inf(&lx) / (1.0 + inf(&sol.lam).max(inf(&sol.mu)));
    let comp: f64 = sol
        .slack
        .iter()
        .zip(&sol.mu)
        .map(|(&s, &m)| s * m)
        .sum::<f64>()
        / (1.0 + inf(x.as_slice()));
    Ok((primal, dual, comp))
}

/// P and Q injection at bus `i` from the trigonometric sums
/// P_i = v_i sum_k v_k (G cos t_ik + B sin t_ik),
/// Q_i = v_i sum_k v_k (G sin t_ik - B cos t_ik), t_ik = th_i - th_k.
fn injection_at(st: &OpfStructure, vm: &[f64], va: &[f64], i: usize) -> (f64, f64) {
    let n = st.case.n_bus();
    let (mut p, mut q) = (0.0, 0.0);
    for k in 0..n {
        let yik = st.y.y(i, k);
        if yik.re == 0.0 && yik.im == 0.0 {
            continue;
        }
        let t = va[i] - va[k];
        p += vm[k] * (yik.re * t.cos() + yik.im * t.sin());
        q += vm[k] * (yik.re * t.sin() - yik.im * t.cos());
    }
    (vm[i] * p, vm[i] * q)
}

pub(crate) fn naive_equalities(st: &OpfStructure, x: &DVector<f64>) -> Vec<f64> {
    let n = st.case.n_bus();
    let vm = st.vm_slice(x);
    let va = st.va_full(x);
    let mut g = vec![0.0; st.n_eq()];
    for i in 0..n {
        let (p, q) = injection_at(st, vm, &va, i);
        g[i] = p + st.loads[i].0;
        g[n + i] = q + st.loads[i].1;
    }
    for (gi, gen) in st.case.generators.iter().enumerate() {
        g[gen.bus] -= x[st.off_pg + gi];
        g[n + gen.bus] -= x[st.off_qg + gi];
    }
    for (r, &(var, value)) in st.pins.iter().enumerate() {
        g[2 * n + r] = x[var] - value;
    }
    g
}

/// One branch side's P, Q and their partials over
/// (th_own, v_own, v_other); the other angle's partial is the negation.
struct SideFlow {
    p: f64,
    q: f64,
    dp_dth: f64,
    dp_dvo: f64,
    dp_dvx: f64,
    dq_dth: f64,
    dq_dvo: f64,
    dq_dvx: f64,
}

#[allow(clippy::too_many_arguments)]
fn side_flow(gs: f64, bs: f64, gx: f64, bx: f64, vo: f64, vx: f64, delta: f64) -> SideFlow {
    let (sin, cos) = delta.sin_cos();
    let a = gx * cos + bx * sin;
    let b = gx * sin - bx * cos;
    SideFlow {
        p: gs * vo * vo + vo * vx * a,
        q: -bs * vo * vo + vo * vx * b,
        dp_dth: vo * vx * (-gx * sin + bx * cos),
        dp_dvo: 2.0 * gs * vo + vx * a,
        dp_dvx: vo * a,
        dq_dth: vo * vx * a,
        dq_dvo: -2.0 * bs * vo + vx * b,
        dq_dvx: vo * b,
    }
}

fn limited_sides(st: &OpfStructure, vm: &[f64], va: &[f64], b: usize) -> (SideFlow, SideFlow) {
    let br = &st.case.branches[b];
    let ba = branch_admittance(br).expect("validated case");
    let from = side_flow(
        ba.yff.re,
        ba.yff.im,
        ba.yft.re,
        ba.yft.im,
        vm[br.from],
        vm[br.to],
        va[br.from] - va[br.to],
    );
    let to = side_flow(
        ba.ytt.re,
        ba.ytt.im,
        ba.ytf.re,
        ba.ytf.im,
        vm[br.to],
        vm[br.from],
        va[br.to] - va[br.from],
    );
    (from, to)
}

pub(crate) fn naive_inequalities(st: &OpfStructure, x: &DVector<f64>) -> Vec<f64> {
    let nf = st.limited.len();
    let vm = st.vm_slice(x);
    let va = st.va_full(x);
    let mut h = vec![0.0; st.n_ineq()];
    for (r, &b) in st.limited.iter().enumerate() {
        let lim = st.case.branches[b].smax / st.case.base_mva;
        let (from, to) = limited_sides(st, vm, &va, b);
        h[r] = from.p * from.p + from.q * from.q - lim * lim;
        h[nf + r] = to.p * to.p + to.q * to.q - lim * lim;
    }
    for (r, bx) in st.boxes.iter().enumerate() {
        h[2 * nf + r] = bx.sign * (x[bx.var] - bx.bound);
    }
    h
}

/// Gradient of f + lam' g + mu' h at x, assembled bus by bus from the
/// textbook injection partials.
pub(crate) fn naive_gradient(
    st: &OpfStructure,
    x: &DVector<f64>,
    lam: &[f64],
    mu: &[f64],
) -> Vec<f64> {
    let n = st.case.n_bus();
    let base = st.case.base_mva;
    let vm = st.vm_slice(x);
    let va = st.va_full(x);
    let mut lx = vec![0.0; st.nx];

    // objective
    for (g, gen) in st.case.generators.iter().enumerate() {
        let (c2, c1, _) = gen.cost;
        lx[st.off_pg + g] += (2.0 * c2 * x[st.off_pg + g] * base + c1) * base;
    }

    // balance rows
    for i in 0..n {
        let (lp, lq) = (lam[i], lam[n + i]);
        if lp == 0.0 && lq == 0.0 {
            continue;
        }
        let (p_i, q_i) = injection_at(st, vm, &va, i);
        for k in 0..n {
            let yik = st.y.y(i, k);
            let gik = yik.re;
            let bik = yik.im;
            let (dp_dth, dq_dth, dp_dv, dq_dv);
            if k == i {
                dp_dth = -q_i - bik * vm[i] * vm[i];
                dq_dth = p_i - gik * vm[i] * vm[i];
                dp_dv = p_i / vm[i] + gik * vm[i];
                dq_dv = q_i / vm[i] - bik * vm[i];
            } else {
                if gik == 0.0 && bik == 0.0 {
                    continue;
                }
                let t = va[i] - va[k];
                let a = gik * t.cos() + bik * t.sin();
                let b = gik * t.sin() - bik * t.cos();
                dp_dth = vm[i] * vm[k] * b;
                dq_dth = -vm[i] * vm[k] * a;
                dp_dv = vm[i] * a;
                dq_dv = vm[i] * b;
            }
            if let Some(pos) = st.va_pos[k] {
                lx[pos] += lp * dp_dth + lq * dq_dth;
            }
            lx[st.off_vm + k] += lp * dp_dv + lq * dq_dv;
        }
    }
    for (g, gen) in st.case.generators.iter().enumerate() {
        lx[st.off_pg + g] -= lam[gen.bus];
        lx[st.off_qg + g] -= lam[n + gen.bus];
    }
    for (r, &(var, _)) in st.pins.iter().enumerate() {
        lx[var] += lam[2 * n + r];
    }

    // flow rows
    let nf = st.limited.len();
    for (r, &b) in st.limited.iter().enumerate() {
        let (wf, wt) = (mu[r], mu[nf + r]);
        if wf == 0.0 && wt == 0.0 {
            continue;
        }
        let br = &st.case.branches[b];
        let (from, to) = limited_sides(st, vm, &va, b);
        // d(P^2 + Q^2) = 2 P dP + 2 Q dQ, own angle first
        let f_th = 2.0 * (from.p * from.dp_dth + from.q * from.dq_dth);
        let t_th = 2.0 * (to.p * to.dp_dth + to.q * to.dq_dth);
        if let Some(pos) = st.va_pos[br.from] {
            lx[pos] += wf * f_th - wt * t_th;
        }
        if let Some(pos) = st.va_pos[br.to] {
            lx[pos] += wt * t_th - wf * f_th;
        }
        lx[st.off_vm + br.from] += wf * 2.0 * (from.p * from.dp_dvo + from.q * from.dq_dvo)
            + wt * 2.0 * (to.p * to.dp_dvx + to.q * to.dq_dvx);
        lx[st.off_vm + br.to] += wf * 2.0 * (from.p * from.dp_dvx + from.q * from.dq_dvx)
            + wt * 2.0 * (to.p * to.dp_dvo + to.q * to.dq_dvo);
    }

    // bound rows
    for (r, bx) in st.boxes.iter().enumerate() {
        lx[bx.var] += mu[2 * nf + r] * bx.sign;
    }
    lx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_admittance, parse_case};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn load_case(name: &str) -> NetworkCase {
        let path = format!("{}/../../cases/{name}.m", env!("CARGO_MANIFEST_DIR"));
        parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    /// The scalar trigonometric path and the solver's complex-matrix path
    /// must describe the same functions.
    #[test]
    fn naive_and_vectorized_paths_agree() {
        let case = load_case("case57");
        let y = build_admittance(&case).unwrap();
        let loads = case.base_loads_pu();
        let st = OpfStructure::new(&case, &y, &loads).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut x = st.initial_point();
            for i in 0..case.n_bus() {
                if let Some(p) = st.va_pos[i] {
                    x[p] += rng.random_range(-0.2..0.2);
                }
                x[st.off_vm + i] = rng.random_range(0.94..1.08);
            }
            for g in 0..case.n_gen() {
                x[st.off_pg + g] = rng.random_range(0.0..1.2);
                x[st.off_qg + g] = rng.random_range(-0.4..0.4);
            }
            let lam: Vec<f64> = (0..st.n_eq()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mu: Vec<f64> = (0..st.n_ineq()).map(|_| rng.random_range(0.0..2.0)).collect();

            let (g_vec, jg) = st.eval_equalities(&x);
            let (h_vec, jh) = st.eval_inequalities(&x);
            let (_, df) = st.eval_objective(&x);
            let g_naive = naive_equalities(&st, &x);
            let h_naive = naive_inequalities(&st, &x);
            for (a, b) in g_vec.iter().zip(&g_naive) {
                assert!((a - b).abs() < 1e-11, "equalities: {a} vs {b}");
            }
            for (a, b) in h_vec.iter().zip(&h_naive) {
                assert!((a - b).abs() < 1e-11, "inequalities: {a} vs {b}");
            }
            let lam_v = DVector::from_column_slice(&lam);
            let mu_v = DVector::from_column_slice(&mu);
            let lx_vec = df + jg.transpose() * lam_v + jh.transpose() * mu_v;
            let lx_naive = naive_gradient(&st, &x, &lam, &mu);
            for (a, b) in lx_vec.iter().zip(&lx_naive) {
                assert!((a - b).abs() < 1e-9, "gradient: {a} vs {b}");
            }
        }
    }

    #[test]
    fn perturbed_solution_fails_the_check() {
        let case = load_case("case9");
        let y = build_admittance(&case).unwrap();
        let loads = case.base_loads_pu();
        let sol = crate::opf::solve_opf(&case, &y, &loads, &Default::default()).unwrap();
        let (p, d, c) = kkt_residuals(&case, &y, &loads, &sol).unwrap();
        assert!(p < 1e-6 && d < 1e-6 && c < 1e-6, "({p}, {d}, {c})");
        let mut bad = sol.clone();
        bad.pg[0] += 0.05;
        let (p_bad, d_bad, _) = kkt_residuals(&case, &y, &loads, &bad).unwrap();
        assert!(
            p_bad > 1e-4 || d_bad > 1e-4,
            "perturbation must be visible: ({p_bad}, {d_bad})"
        );
    }
}
