//! Optimal-power-flow problem assembly: variable layout, constraint
//! evaluation, and first/second derivatives over the vector
//! x = [va (non-slack); vm (all buses); pg; qg], everything in per-unit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{branch_admittance, AdmittanceMatrix, BranchAdmittance, NetworkCase};
use crate::opf::ipm::NlpProblem;
use crate::powerflow::{complex_injections, dsbus_dv, to_phasors};

/// Bounds with magnitude at or above this are treated as absent.
const UNBOUNDED: f64 = 1e10;
/// Boxes narrower than this collapse into equality pins.
const PIN_WIDTH: f64 = 1e-12;

/// One bound row: h = sign * (x[var] - bound) <= 0, sign +1 for an upper
/// bound and -1 for a lower bound.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundRow {
    pub var: usize,
    pub bound: f64,
    pub sign: f64,
}

pub(crate) struct OpfStructure<'a> {
    pub case: &'a NetworkCase,
    pub y: &'a AdmittanceMatrix,
    /// Per-bus (p, q) demand in p.u.
    pub loads: &'a [(f64, f64)],
    pub slack_va: f64,
    /// x position of each bus angle; the slack bus has none.
    pub va_pos: Vec<Option<usize>>,
    pub off_vm: usize,
    pub off_pg: usize,
    pub off_qg: usize,
    pub nx: usize,
    /// Zero-width boxes pinned as extra equality rows x[var] = value.
    pub pins: Vec<(usize, f64)>,
    /// Finite one-sided bound rows, appended after the flow rows.
    pub boxes: Vec<BoundRow>,
    /// Branches with a positive flow limit; each yields a from-side row and
    /// a to-side row (all from-sides first).
    pub limited: Vec<usize>,
}

impl<'a> OpfStructure<'a> {
    pub fn new(
        case: &'a NetworkCase,
        y: &'a AdmittanceMatrix,
        loads: &'a [(f64, f64)],
    ) -> Result<Self> {
        let n = case.n_bus();
        if y.dim != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.dim });
        }
        if loads.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: loads.len() });
        }
        let slack = case.slack();
        let mut va_pos = vec![None; n];
        let mut next = 0;
        for (i, pos) in va_pos.iter_mut().enumerate() {
            if i != slack {
                *pos = Some(next);
                next += 1;
            }
        }
        let off_vm = next;
        let off_pg = off_vm + n;
        let off_qg = off_pg + case.n_gen();
        let nx = off_qg + case.n_gen();

        let mut st = OpfStructure {
            case,
            y,
            loads,
            slack_va: case.buses[slack].va0.to_radians(),
            va_pos,
            off_vm,
            off_pg,
            off_qg,
            nx,
            pins: Vec::new(),
            boxes: Vec::new(),
            limited: (0..case.n_branch())
                .filter(|&b| case.branches[b].smax > 0.0)
                .collect(),
        };
        let base = case.base_mva;
        for (i, bus) in case.buses.iter().enumerate() {
            st.add_box(st.off_vm + i, bus.vmin, bus.vmax);
        }
        for (g, gen) in case.generators.iter().enumerate() {
            st.add_box(st.off_pg + g, gen.pmin / base, gen.pmax / base);
        }
        for (g, gen) in case.generators.iter().enumerate() {
            st.add_box(st.off_qg + g, gen.qmin / base, gen.qmax / base);
        }
        Ok(st)
    }

    fn add_box(&mut self, var: usize, lo: f64, hi: f64) {
        let lo_finite = lo > -UNBOUNDED;
        let hi_finite = hi < UNBOUNDED;
        if lo_finite && hi_finite && hi - lo <= PIN_WIDTH {
            self.pins.push((var, hi));
            return;
        }
        if hi_finite {
            self.boxes.push(BoundRow { var, bound: hi, sign: 1.0 });
        }
        if lo_finite {
            self.boxes.push(BoundRow { var, bound: lo, sign: -1.0 });
        }
    }

    pub fn n_eq(&self) -> usize {
        2 * self.case.n_bus() + self.pins.len()
    }

    pub fn n_ineq(&self) -> usize {
        2 * self.limited.len() + self.boxes.len()
    }

    /// Full per-bus angle vector, slack included.
    pub fn va_full(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.case.n_bus())
            .map(|i| match self.va_pos[i] {
                Some(p) => x[p],
                None => self.slack_va,
            })
            .collect()
    }

    pub fn vm_slice<'x>(&self, x: &'x DVector<f64>) -> &'x [f64] {
        &x.as_slice()[self.off_vm..self.off_pg]
    }

    pub fn pg_slice<'x>(&self, x: &'x DVector<f64>) -> &'x [f64] {
        &x.as_slice()[self.off_pg..self.off_qg]
    }

    pub fn qg_slice<'x>(&self, x: &'x DVector<f64>) -> &'x [f64] {
        &x.as_slice()[self.off_qg..self.nx]
    }

    /// Packs bus/generator quantities into the solver layout.
    pub fn pack(&self, vm: &[f64], va: &[f64], pg: &[f64], qg: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.nx);
        for (i, pos) in self.va_pos.iter().enumerate() {
            if let Some(p) = *pos {
                x[p] = va[i];
            }
        }
        for (i, &m) in vm.iter().enumerate() {
            x[self.off_vm + i] = m;
        }
        for (g, &p) in pg.iter().enumerate() {
            x[self.off_pg + g] = p;
        }
        for (g, &q) in qg.iter().enumerate() {
            x[self.off_qg + g] = q;
        }
        x
    }

    /// Well-centred interior start: every bounded variable sits mid-way
    /// between its bounds (one-sided bounds are backed off by 1 p.u.),
    /// angles start at the slack reference. Keeps the first iterates away
    /// from the box faces regardless of the operating point stored in the
    /// case file.
    pub fn initial_point(&self) -> DVector<f64> {
        let case = self.case;
        let base = case.base_mva;
        let mid = |lo: f64, hi: f64| -> f64 {
            let lo_f = lo > -UNBOUNDED;
            let hi_f = hi < UNBOUNDED;
            match (lo_f, hi_f) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            }
        };
        let vm: Vec<f64> = case.buses.iter().map(|b| mid(b.vmin, b.vmax)).collect();
        let va = vec![self.slack_va; case.n_bus()];
        let pg: Vec<f64> = case
            .generators
            .iter()
            .map(|g| mid(g.pmin / base, g.pmax / base))
            .collect();
        let qg: Vec<f64> = case
            .generators
            .iter()
            .map(|g| mid(g.qmin / base, g.qmax / base))
            .collect();
        let mut x = self.pack(&vm, &va, &pg, &qg);
        for &(var, value) in &self.pins {
            x[var] = value;
        }
        x
    }

    pub fn eval_objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let base = self.case.base_mva;
        let mut f = 0.0;
        let mut df = DVector::zeros(self.nx);
        for (g, gen) in self.case.generators.iter().enumerate() {
            let (c2, c1, c0) = gen.cost;
            let p_mw = x[self.off_pg + g] * base;
            f += c2 * p_mw * p_mw + c1 * p_mw + c0;
            df[self.off_pg + g] = (2.0 * c2 * p_mw + c1) * base;
        }
        (f, df)
    }

    pub fn eval_equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.case.n_bus();
        let vm = self.vm_slice(x);
        let va = self.va_full(x);
        let s = complex_injections(self.y, vm, &va).expect("dimensions fixed by layout");

        let mut g = DVector::zeros(self.n_eq());
        for i in 0..n {
            g[i] = s[i].re + self.loads[i].0;
            g[n + i] = s[i].im + self.loads[i].1;
        }
        for (gi, gen) in self.case.generators.iter().enumerate() {
            g[gen.bus] -= x[self.off_pg + gi];
            g[n + gen.bus] -= x[self.off_qg + gi];
        }
        for (r, &(var, value)) in self.pins.iter().enumerate() {
            g[2 * n + r] = x[var] - value;
        }

        let v = to_phasors(vm, &va);
        let (ds_dva, ds_dvm) = dsbus_dv(self.y, &v);
        let mut jg = DMatrix::zeros(self.n_eq(), self.nx);
        for i in 0..n {
            for b in 0..n {
                if let Some(p) = self.va_pos[b] {
                    jg[(i, p)] = ds_dva[(i, b)].re;
                    jg[(n + i, p)] = ds_dva[(i, b)].im;
                }
                jg[(i, self.off_vm + b)] = ds_dvm[(i, b)].re;
                jg[(n + i, self.off_vm + b)] = ds_dvm[(i, b)].im;
            }
        }
        for (gi, gen) in self.case.generators.iter().enumerate() {
            jg[(gen.bus, self.off_pg + gi)] = -1.0;
            jg[(n + gen.bus, self.off_qg + gi)] = -1.0;
        }
        for (r, &(var, _)) in self.pins.iter().enumerate() {
            jg[(2 * n + r, var)] = 1.0;
        }
        (g, jg)
    }

    /// Local x columns of one branch's variables: [va_f, va_t, vm_f, vm_t]
    /// (None where the angle belongs to the slack bus).
    fn branch_cols(&self, b: usize) -> [Option<usize>; 4] {
        let br = &self.case.branches[b];
        [
            self.va_pos[br.from],
            self.va_pos[br.to],
            Some(self.off_vm + br.from),
            Some(self.off_vm + br.to),
        ]
    }

    pub fn eval_inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let nf = self.limited.len();
        let vm = self.vm_slice(x);
        let va = self.va_full(x);
        let mut h = DVector::zeros(self.n_ineq());
        let mut jh = DMatrix::zeros(self.n_ineq(), self.nx);

        for (r, &b) in self.limited.iter().enumerate() {
            let br = &self.case.branches[b];
            let ba = branch_admittance(br).expect("validated case");
            let lim = br.smax / self.case.base_mva;
            let cols = self.branch_cols(b);
            for (row, from_side) in [(r, true), (nf + r, false)] {
                let d = sq_flow_derivs(
                    &ba,
                    from_side,
                    va[br.from],
                    va[br.to],
                    vm[br.from],
                    vm[br.to],
                );
                h[row] = d.value - lim * lim;
                for (k, col) in cols.iter().enumerate() {
                    if let Some(c) = *col {
                        jh[(row, c)] = d.grad[k];
                    }
                }
            }
        }
        for (r, bx) in self.boxes.iter().enumerate() {
            let row = 2 * nf + r;
            h[row] = bx.sign * (x[bx.var] - bx.bound);
            jh[(row, bx.var)] = bx.sign;
        }
        (h, jh)
    }

    pub fn eval_lagr_hessian(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        z: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.case.n_bus();
        let base = self.case.base_mva;
        let mut hess = DMatrix::zeros(self.nx, self.nx);

        for (g, gen) in self.case.generators.iter().enumerate() {
            hess[(self.off_pg + g, self.off_pg + g)] = 2.0 * gen.cost.0 * base * base;
        }

        let vm = self.vm_slice(x);
        let va = self.va_full(x);
        let v = to_phasors(vm, &va);
        let mu: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(lam[i], -lam[n + i]))
            .collect();
        let blocks = d2sbus_dv2(self.y, &v, &mu);
        for r in 0..n {
            for c in 0..n {
                let pr = self.va_pos[r];
                let pc = self.va_pos[c];
                if let (Some(a), Some(b)) = (pr, pc) {
                    hess[(a, b)] += blocks.aa[(r, c)].re;
                }
                if let Some(a) = pr {
                    hess[(a, self.off_vm + c)] += blocks.av[(r, c)].re;
                }
                if let Some(b) = pc {
                    hess[(self.off_vm + r, b)] += blocks.va[(r, c)].re;
                }
                hess[(self.off_vm + r, self.off_vm + c)] += blocks.vv[(r, c)].re;
            }
        }

        let nf = self.limited.len();
        for (r, &b) in self.limited.iter().enumerate() {
            let br = &self.case.branches[b];
            let ba = branch_admittance(br).expect("validated case");
            let cols = self.branch_cols(b);
            for (row, from_side) in [(r, true), (nf + r, false)] {
                let w = z[row];
                if w == 0.0 {
                    continue;
                }
                let d = sq_flow_derivs(
                    &ba,
                    from_side,
                    va[br.from],
                    va[br.to],
                    vm[br.from],
                    vm[br.to],
                );
                for (p, cp) in cols.iter().enumerate() {
                    let Some(a) = *cp else { continue };
                    for (q, cq) in cols.iter().enumerate() {
                        if let Some(bcol) = *cq {
                            hess[(a, bcol)] += w * d.hess[p][q];
                        }
                    }
                }
            }
        }
        hess
    }
}

impl NlpProblem for OpfStructure<'_> {
    fn n_vars(&self) -> usize {
        self.nx
    }
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.eval_objective(x)
    }
    fn equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        self.eval_equalities(x)
    }
    fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        self.eval_inequalities(x)
    }
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        z: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.eval_lagr_hessian(x, lam, z)
    }
}

/// Value, gradient, and Hessian of the squared apparent-power flow on one
/// branch side, over the local variables [va_f, va_t, vm_f, vm_t].
pub(crate) struct SqFlowDerivs {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

pub(crate) fn sq_flow_derivs(
    ba: &BranchAdmittance,
    from_side: bool,
    va_f: f64,
    va_t: f64,
    vm_f: f64,
    vm_t: f64,
) -> SqFlowDerivs {
    // S = conj(a) vo^2 + conj(b) w with w = vm_f vm_t e^{j sgn (va_f - va_t)}
    // where (a, b, vo) are the own-side self/transfer admittances and own-end
    // magnitude; sgn is +1 on the from side and -1 on the to side.
    let (a, b, sgn, own) = if from_side {
        (ba.yff, ba.yft, 1.0, 2usize)
    } else {
        (ba.ytt, ba.ytf, -1.0, 3usize)
    };
    let vo = if from_side { vm_f } else { vm_t };
    let w = Complex64::from_polar(vm_f * vm_t, sgn * (va_f - va_t));
    let s = a.conj() * vo * vo + b.conj() * w;

    let j = Complex64::new(0.0, 1.0);
    let dw = [j * sgn * w, -j * sgn * w, w / vm_f, w / vm_t];
    let mut ds = dw.map(|d| b.conj() * d);
    ds[own] += 2.0 * a.conj() * vo;

    let jwf = j * sgn * w / vm_f;
    let jwt = j * sgn * w / vm_t;
    let wft = w / (vm_f * vm_t);
    let zero = Complex64::new(0.0, 0.0);
    let d2w = [
        [-w, w, jwf, jwt],
        [w, -w, -jwf, -jwt],
        [jwf, -jwf, zero, wft],
        [jwt, -jwt, wft, zero],
    ];
    let mut d2s = d2w.map(|row| row.map(|d| b.conj() * d));
    d2s[own][own] += 2.0 * a.conj();

    let mut grad = [0.0; 4];
    let mut hess = [[0.0; 4]; 4];
    for p in 0..4 {
        grad[p] = 2.0 * (s.conj() * ds[p]).re;
        for q in 0..4 {
            hess[p][q] = 2.0 * (ds[q].conj() * ds[p] + s.conj() * d2s[p][q]).re;
        }
    }
    SqFlowDerivs { value: s.norm_sqr(), grad, hess }
}

pub(crate) struct InjectionHessian {
    pub aa: DMatrix<Complex64>,
    pub av: DMatrix<Complex64>,
    pub va: DMatrix<Complex64>,
    pub vv: DMatrix<Complex64>,
}

/// Second derivatives of mu' S(V) with respect to bus angles and magnitudes,
/// for a complex weight vector mu. The real parts of the returned blocks are
/// the Hessian of Re(mu') weighted active power plus Im(mu') weighted
/// reactive power.
pub(crate) fn d2sbus_dv2(
    y: &AdmittanceMatrix,
    v: &[Complex64],
    mu: &[Complex64],
) -> InjectionHessian {
    let n = y.dim;
    let w: Vec<Complex64> = mu.iter().zip(v).map(|(m, v)| m * v).collect();
    let vv = DVector::from_column_slice(v);
    let ibus = &y.m * &vv;
    // colsum[r] = sum_c conj(Y[c][r]) w[c], the column sums of C below
    let mut colsum = vec![Complex64::new(0.0, 0.0); n];
    for (c, wc) in w.iter().enumerate() {
        for (r, cs) in colsum.iter_mut().enumerate() {
            *cs += y.m[(c, r)].conj() * wc;
        }
    }

    let mut aa = DMatrix::zeros(n, n);
    let mut av = DMatrix::zeros(n, n);
    let mut va = DMatrix::zeros(n, n);
    let mut vv_blk = DMatrix::zeros(n, n);
    let j = Complex64::new(0.0, 1.0);
    // C[r][c] = w[r] conj(Y[r][c] v[c]); note conj(v[r]) colsum[r] = sum of
    // C's column r, and w[r] conj(ibus[r]) = sum of C's row r.
    let c_at = |r: usize, c: usize| w[r] * (y.m[(r, c)] * v[c]).conj();
    for r in 0..n {
        let inv_vr = 1.0 / v[r].norm();
        for c in 0..n {
            let c_rc = c_at(r, c);
            let mut e_rc = v[r].conj() * y.m[(c, r)].conj() * w[c];
            let mut f_rc = c_rc;
            if r == c {
                e_rc -= v[r].conj() * colsum[r];
                f_rc -= w[r] * ibus[r].conj();
            }
            aa[(r, c)] = e_rc + f_rc;
            va[(r, c)] = j * inv_vr * (e_rc - f_rc);
            vv_blk[(r, c)] = (c_rc + c_at(c, r)) * (inv_vr / v[c].norm());
        }
    }
    for r in 0..n {
        for c in 0..n {
            av[(r, c)] = va[(c, r)];
        }
    }
    InjectionHessian { aa, av, va, vv: vv_blk }
}
