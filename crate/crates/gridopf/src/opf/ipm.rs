//! Primal-dual interior-point solver for smooth nonlinear programs
//!
//! ```text
//!     min f(x)   s.t.   g(x) = 0,   h(x) <= 0
//! ```
//!
//! Inequalities carry slack variables s > 0 with duals z > 0; the barrier
//! coefficient gamma is re-centred from the complementarity gap each
//! iteration. Each Newton step solves the condensed KKT system
//!
//! ```text
//!     [ Lxx + Jh' diag(z/s) Jh   Jg' ] [ dx   ]   [ -N ]
//!     [ Jg                        0  ] [ dlam ] = [ -g ]
//! ```
//!
//! with N = Lx + Jh' diag(1/s) (gamma e + z .* h), then recovers the slack
//! and dual directions and steps back by a factor xi to stay interior.

use nalgebra::{DMatrix, DVector};

/// Callbacks a problem must provide. Jacobians are row-per-constraint.
pub(crate) trait NlpProblem {
    fn n_vars(&self) -> usize;
    /// Objective value and gradient.
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>);
    /// Equality residuals g(x) and their Jacobian.
    fn equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    /// Inequality values h(x) (satisfied when <= 0) and their Jacobian.
    fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    /// Hessian of f(x) + lam' g(x) + z' h(x) with the given multipliers.
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        z: &DVector<f64>,
    ) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOptions {
    /// Shared tolerance for the feasibility, gradient, complementarity, and
    /// cost-decrease conditions.
    pub tol: f64,
    pub max_iter: usize,
    /// Step-back factor keeping iterates strictly interior.
    pub xi: f64,
    /// Centering parameter for the barrier update.
    pub sigma: f64,
    /// Smallest productive step length; below this the iteration has stalled.
    pub alpha_min: f64,
    /// Initial barrier coefficient.
    pub initial_mu: f64,
    /// Floor applied to the initial slacks.
    pub slack_floor: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-6,
            max_iter: 150,
            xi: 0.9995,
            sigma: 0.1,
            alpha_min: 1e-8,
            initial_mu: 1.0,
            slack_floor: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub x: DVector<f64>,
    pub f: f64,
    /// Equality multipliers.
    pub lam: DVector<f64>,
    /// Inequality multipliers.
    pub z: DVector<f64>,
    /// Inequality slacks.
    pub s: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Numerical breakdown (NaN step, vanishing step length, barrier
    /// collapse) as opposed to running out of iterations.
    pub failed: bool,
    pub feascond: f64,
    pub gradcond: f64,
    pub compcond: f64,
}

fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Conditions {
    feas: f64,
    grad: f64,
    comp: f64,
    cost: f64,
}

#[allow(clippy::too_many_arguments)]
fn conditions(
    x: &DVector<f64>,
    f: f64,
    f0: f64,
    g: &DVector<f64>,
    h: &DVector<f64>,
    lx: &DVector<f64>,
    lam: &DVector<f64>,
    z: &DVector<f64>,
    s: &DVector<f64>,
) -> Conditions {
    let max_h = h.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let viol = if h.is_empty() {
        norm_inf(g)
    } else {
        norm_inf(g).max(max_h)
    };
    Conditions {
        feas: viol / (1.0 + norm_inf(x).max(norm_inf(s))),
        grad: norm_inf(lx) / (1.0 + norm_inf(lam).max(norm_inf(z))),
        comp: s.dot(z) / (1.0 + norm_inf(x)),
        cost: (f - f0).abs() / (1.0 + f0.abs()),
    }
}

pub(crate) fn solve_nlp(p: &impl NlpProblem, x0: DVector<f64>, opt: &IpmOptions) -> IpmResult {
    let nx = p.n_vars();
    assert_eq!(x0.len(), nx);
    let mut x = x0;

    let (mut f, mut df) = p.objective(&x);
    let (mut g, mut jg) = p.equalities(&x);
    let (mut h, mut jh) = p.inequalities(&x);
    let neq = g.len();
    let niq = h.len();

    let mut gamma = opt.initial_mu;
    let mut lam = DVector::<f64>::zeros(neq);
    let mut s =
        DVector::from_iterator(niq, h.iter().map(|&hk| (-hk).max(opt.slack_floor)));
    let mut z = DVector::from_iterator(niq, s.iter().map(|&sk| gamma / sk));

    let mut f0 = f;
    let mut lx = &df + jg.transpose() * &lam + jh.transpose() * &z;
    let mut cond = conditions(&x, f, f0, &g, &h, &lx, &lam, &z, &s);
    let mut converged =
        cond.feas < opt.tol && cond.grad < opt.tol && cond.comp < opt.tol && cond.cost < opt.tol;

    let mut iterations = 0;
    let mut failed = false;

    while !converged && iterations < opt.max_iter {
        iterations += 1;

        let lxx = p.lagrangian_hessian(&x, &lam, &z);

        // Condensed system: fold the slack/dual rows into the x block.
        let z_over_s = DVector::from_iterator(niq, z.iter().zip(s.iter()).map(|(&z, &s)| z / s));
        let mut m = lxx;
        for r in 0..niq {
            for a in 0..nx {
                let ja = jh[(r, a)];
                if ja == 0.0 {
                    continue;
                }
                let w = z_over_s[r] * ja;
                for b in 0..nx {
                    m[(a, b)] += w * jh[(r, b)];
                }
            }
        }
        let mut n_vec = lx.clone();
        for r in 0..niq {
            let w = (gamma + z[r] * h[r]) / s[r];
            for a in 0..nx {
                n_vec[a] += jh[(r, a)] * w;
            }
        }

        let dim = nx + neq;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        kkt.view_mut((0, 0), (nx, nx)).copy_from(&m);
        kkt.view_mut((0, nx), (nx, neq))
            .copy_from(&jg.transpose());
        kkt.view_mut((nx, 0), (neq, nx)).copy_from(&jg);
        let mut rhs = DVector::<f64>::zeros(dim);
        for a in 0..nx {
            rhs[a] = -n_vec[a];
        }
        for r in 0..neq {
            rhs[nx + r] = -g[r];
        }

        let step = match kkt.lu().solve(&rhs) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) && sol.norm() <= 1e10 => sol,
            _ => {
                failed = true;
                break;
            }
        };
        let dx = step.rows(0, nx).into_owned();
        let dlam = step.rows(nx, neq).into_owned();

        let jh_dx = &jh * &dx;
        let ds = DVector::from_iterator(
            niq,
            (0..niq).map(|r| -h[r] - s[r] - jh_dx[r]),
        );
        let dz = DVector::from_iterator(
            niq,
            (0..niq).map(|r| -z[r] + (gamma - z[r] * ds[r]) / s[r]),
        );

        let alpha_toward = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            let mut a = 1.0f64;
            for (vk, dvk) in v.iter().zip(dv.iter()) {
                if *dvk < 0.0 {
                    a = a.min(opt.xi * (vk / -dvk));
                }
            }
            a
        };
        let alpha_p = alpha_toward(&s, &ds);
        let alpha_d = alpha_toward(&z, &dz);

        x += alpha_p * &dx;
        s += alpha_p * &ds;
        lam += alpha_d * &dlam;
        z += alpha_d * &dz;
        if niq > 0 {
            gamma = opt.sigma * s.dot(&z) / niq as f64;
        }

        (f, df) = p.objective(&x);
        (g, jg) = p.equalities(&x);
        (h, jh) = p.inequalities(&x);
        lx = &df + jg.transpose() * &lam + jh.transpose() * &z;
        cond = conditions(&x, f, f0, &g, &h, &lx, &lam, &z, &s);

        if cond.feas < opt.tol && cond.grad < opt.tol && cond.comp < opt.tol && cond.cost < opt.tol
        {
            converged = true;
        } else {
            if x.iter().any(|v| !v.is_finite())
                || alpha_p < opt.alpha_min
                || alpha_d < opt.alpha_min
                || !(f64::EPSILON..=1.0 / f64::EPSILON).contains(&gamma)
            {
                failed = true;
                break;
            }
            f0 = f;
        }
    }

    IpmResult {
        x,
        f,
        lam,
        z,
        s,
        iterations,
        converged,
        failed,
        feascond: cond.feas,
        gradcond: cond.grad,
        compcond: cond.comp,
    }
}
