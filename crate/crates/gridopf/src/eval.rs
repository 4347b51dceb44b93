//! Prediction-quality metrics.
//!
//! A trained model predicts a voltage profile; everything else an operator
//! cares about is implied by physics. [`postprocess_prediction`] recovers the
//! dispatch and served load behind a predicted profile, and the η metrics
//! score a batch of predictions against their oracle labels:
//!
//! * `eta_opt` — mean relative cost gap |C(x̂) − C(x*)| / C(x*), percent
//!   (lower is better);
//! * `eta_v`, `eta_pg`, `eta_qg`, `eta_sl` — percentage of
//!   (sample, constraint) pairs inside the voltage, active, reactive, and
//!   branch-flow limits at the evaluation tolerance;
//! * `eta_pd`, `eta_qd` — mean per-load-bus demand-satisfaction percentage
//!   `max(0, 1 − |implied − requested| / max(|requested|, 1e-3)) × 100`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{full_loads, SampleRecord, Scaler, TrackingSchedule};
use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, NetworkCase};
use crate::nn::{param_count_separate, param_count_unified, ElasticDnn, SlotMap};
use crate::opf::objective;
use crate::powerflow::{complex_injections, evaluate_constraints};

/// Default tolerance (p.u.) for the constraint-satisfaction metrics.
pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-4;

/// Floor on the demand-accuracy denominator so near-zero requested loads do
/// not blow the relative error up.
pub const LOAD_DENOM_FLOOR: f64 = 1e-3;

/// A predicted operating point, fleshed out from the voltage profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Predicted voltage magnitude per bus (p.u.).
    pub vm: Vec<f64>,
    /// Predicted voltage angle per bus (radians).
    pub va: Vec<f64>,
    /// Implied dispatch per generator (p.u.).
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Implied served load per load slot (p.u.), aligned with the
    /// requested `loads_p` / `loads_q` of the sample.
    pub pd_implied: Vec<f64>,
    pub qd_implied: Vec<f64>,
    /// Cost of the implied dispatch ($/h).
    pub objective: f64,
    /// Seconds for forward pass plus postprocessing; 0.0 when timing is off.
    pub infer_time: f64,
}

/// Splits a bus total among its units: each starts at its lower bound and
/// the excess is shared in proportion to capacity headroom (equally when no
/// unit has any).
fn split_by_headroom(total: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let floor: f64 = bounds.iter().map(|b| b.0).sum();
    let headroom: Vec<f64> = bounds.iter().map(|&(lo, hi)| hi - lo).collect();
    let cap: f64 = headroom.iter().sum();
    let excess = total - floor;
    bounds
        .iter()
        .zip(&headroom)
        .map(|(&(lo, _), &h)| {
            if cap > 0.0 {
                lo + excess * h / cap
            } else {
                lo + excess / bounds.len() as f64
            }
        })
        .collect()
}

/// Derives the full operating point implied by a predicted voltage profile.
///
/// The net injection at every bus follows from the admittance matrix. At a
/// generator bus the requested load is taken as served and the remainder is
/// attributed to its units (split by capacity headroom); elsewhere the
/// negated injection is the load actually served. `loads_p` / `loads_q` are
/// the requested per-slot loads (p.u.).
pub fn postprocess_prediction(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    vm: &[f64],
    va: &[f64],
    loads_p: &[f64],
    loads_q: &[f64],
) -> Result<PredictionRecord> {
    let slots = case.load_slots();
    if loads_p.len() != slots.len() || loads_q.len() != slots.len() {
        return Err(Error::LengthMismatch {
            expected: slots.len(),
            got: loads_p.len().min(loads_q.len()),
        });
    }
    let s = complex_injections(y, vm, va)?;
    let requested = full_loads(case, loads_p, loads_q);

    let mut pg = vec![0.0; case.n_gen()];
    let mut qg = vec![0.0; case.n_gen()];
    let base = case.base_mva;
    for i in 0..case.n_bus() {
        let units: Vec<usize> = (0..case.n_gen()).filter(|&u| case.generators[u].bus == i).collect();
        if units.is_empty() {
            continue;
        }
        // injection = generation - load, so the bus's units must produce the
        // injection plus whatever the requested load consumes there.
        let p_total = s[i].re + requested[i].0;
        let q_total = s[i].im + requested[i].1;
        let p_bounds: Vec<(f64, f64)> = units
            .iter()
            .map(|&u| (case.generators[u].pmin / base, case.generators[u].pmax / base))
            .collect();
        let q_bounds: Vec<(f64, f64)> = units
            .iter()
            .map(|&u| (case.generators[u].qmin / base, case.generators[u].qmax / base))
            .collect();
        for (j, &u) in units.iter().enumerate() {
            pg[u] = split_by_headroom(p_total, &p_bounds)[j];
            qg[u] = split_by_headroom(q_total, &q_bounds)[j];
        }
    }

    // Served load per slot: requested at generator buses (the mismatch is
    // already attributed to the units), negated injection elsewhere.
    let mut pd_implied = Vec::with_capacity(slots.len());
    let mut qd_implied = Vec::with_capacity(slots.len());
    for (j, &b) in slots.iter().enumerate() {
        if case.has_generator(b) {
            pd_implied.push(loads_p[j]);
            qd_implied.push(loads_q[j]);
        } else {
            pd_implied.push(-s[b].re);
            qd_implied.push(-s[b].im);
        }
    }

    let objective = objective(case, &pg)?;
    Ok(PredictionRecord {
        vm: vm.to_vec(),
        va: va.to_vec(),
        pg,
        qg,
        pd_implied,
        qd_implied,
        objective,
        infer_time: 0.0,
    })
}

/// Runs the model on every sample of network `k` and postprocesses each
/// prediction. With `timing` on, each record carries its own wall-clock
/// forward-plus-postprocess time.
pub fn predict_records(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    dnn: &ElasticDnn,
    scaler: &Scaler,
    k: usize,
    records: &[SampleRecord],
    timing: bool,
) -> Result<Vec<PredictionRecord>> {
    let n_bus = case.n_bus();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let started = timing.then(Instant::now);
        let mut input = Vec::with_capacity(rec.loads_p.len() * 2);
        input.extend_from_slice(&rec.loads_p);
        input.extend_from_slice(&rec.loads_q);
        let scaled = scaler.scale_input(k, &input)?;
        let raw = dnn.forward(k, &scaled)?;
        let target = scaler.unscale_target(k, &raw)?;
        let (vm, va) = target.split_at(n_bus);
        let mut pred = postprocess_prediction(case, y, vm, va, &rec.loads_p, &rec.loads_q)?;
        if let Some(t0) = started {
            pred.infer_time = t0.elapsed().as_secs_f64();
        }
        out.push(pred);
    }
    Ok(out)
}

/// Aggregated quality metrics for one network's evaluation split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub name: String,
    pub n_samples: usize,
    /// Mean relative cost gap, percent (lower is better).
    pub eta_opt: f64,
    /// Constraint-satisfaction percentages (higher is better).
    pub eta_v: f64,
    pub eta_pg: f64,
    pub eta_qg: f64,
    pub eta_sl: f64,
    /// Demand-satisfaction percentages (higher is better).
    pub eta_pd: f64,
    pub eta_qd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_solve_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_infer_time: Option<f64>,
    /// Oracle solve time over model inference time; omitted when timing is
    /// off in either source.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
}

/// Scores predictions against their oracle labels at tolerance `tol` (p.u.).
pub fn evaluate_network(
    case: &NetworkCase,
    records: &[SampleRecord],
    preds: &[PredictionRecord],
    tol: f64,
) -> Result<NetworkMetrics> {
    if records.is_empty() || records.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: records.len().max(1),
            got: preds.len(),
        });
    }
    let n = records.len();
    let mut gap_sum = 0.0;
    let mut sat = [0usize; 4]; // v, pg, qg, sl
    let mut tot = [0usize; 4];
    let mut pd_sum = 0.0;
    let mut qd_sum = 0.0;
    let mut slot_count = 0usize;
    for (rec, pred) in records.iter().zip(preds) {
        gap_sum += (pred.objective - rec.objective).abs() / rec.objective.abs().max(1e-9);
        let report = evaluate_constraints(case, &pred.vm, &pred.va, &pred.pg, &pred.qg, tol)?;
        for (s, fam) in [
            &report.v_limits,
            &report.pg_limits,
            &report.qg_limits,
            &report.branch_limits,
        ]
        .iter()
        .enumerate()
        {
            sat[s] += fam.n_satisfied();
            tot[s] += fam.total();
        }
        for (req, imp) in rec.loads_p.iter().zip(&pred.pd_implied) {
            pd_sum += (1.0 - (imp - req).abs() / req.abs().max(LOAD_DENOM_FLOOR)).max(0.0);
        }
        for (req, imp) in rec.loads_q.iter().zip(&pred.qd_implied) {
            qd_sum += (1.0 - (imp - req).abs() / req.abs().max(LOAD_DENOM_FLOOR)).max(0.0);
        }
        slot_count += rec.loads_p.len();
    }
    // An empty constraint family (e.g. no flow-rated branches) is vacuously
    // satisfied.
    let pct = |s: usize, t: usize| if t == 0 { 100.0 } else { 100.0 * s as f64 / t as f64 };
    let mean_solve = records.iter().map(|r| r.solve_time).sum::<f64>() / n as f64;
    let mean_infer = preds.iter().map(|p| p.infer_time).sum::<f64>() / n as f64;
    let timed = mean_solve > 0.0 && mean_infer > 0.0;
    Ok(NetworkMetrics {
        name: case.name.clone(),
        n_samples: n,
        eta_opt: 100.0 * gap_sum / n as f64,
        eta_v: pct(sat[0], tot[0]),
        eta_pg: pct(sat[1], tot[1]),
        eta_qg: pct(sat[2], tot[2]),
        eta_sl: pct(sat[3], tot[3]),
        eta_pd: 100.0 * pd_sum / slot_count as f64,
        eta_qd: 100.0 * qd_sum / slot_count as f64,
        mean_solve_time: timed.then_some(mean_solve),
        mean_infer_time: timed.then_some(mean_infer),
        speedup: timed.then_some(mean_solve / mean_infer),
    })
}

/// Parameter and on-disk footprint of the unified model next to one
/// standalone model per network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageReport {
    pub unified_params: usize,
    pub separate_params: usize,
    /// unified / separate (smaller is better).
    pub ratio: f64,
    pub bytes_per_param: usize,
    pub unified_bytes: u64,
    pub separate_bytes: u64,
}

/// Compares parameter counts for a slot map and trunk, at `bytes_per_param`
/// stored bytes per weight.
pub fn storage_comparison(map: &SlotMap, hidden_dims: &[usize], bytes_per_param: usize) -> StorageReport {
    let unified = param_count_unified(map, hidden_dims);
    let separate = param_count_separate(map, hidden_dims);
    StorageReport {
        unified_params: unified,
        separate_params: separate,
        ratio: unified as f64 / separate as f64,
        bytes_per_param,
        unified_bytes: (unified * bytes_per_param) as u64,
        separate_bytes: (separate * bytes_per_param) as u64,
    }
}

/// Full evaluation artifact written by the command-line tool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub networks: Vec<NetworkMetrics>,
    pub storage: StorageReport,
    /// Sample-weighted overall speed-up; omitted when timing is off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
}

impl MetricsReport {
    /// Assembles the report; the overall speed-up pools solve and inference
    /// times across networks, weighted by sample count.
    pub fn new(networks: Vec<NetworkMetrics>, storage: StorageReport) -> Self {
        let mut solve = 0.0;
        let mut infer = 0.0;
        let mut n = 0usize;
        let mut timed = !networks.is_empty();
        for m in &networks {
            match (m.mean_solve_time, m.mean_infer_time) {
                (Some(s), Some(i)) => {
                    solve += s * m.n_samples as f64;
                    infer += i * m.n_samples as f64;
                    n += m.n_samples;
                }
                _ => timed = false,
            }
        }
        let speedup = (timed && n > 0 && infer > 0.0).then(|| solve / infer);
        MetricsReport { networks, storage, speedup }
    }
}

/// One slot of the day-tracking comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingRow {
    pub t: usize,
    pub network: String,
    pub scale: f64,
    pub oracle_objective: f64,
    pub predicted_objective: f64,
    /// |predicted − oracle| / oracle, percent.
    pub gap_percent: f64,
}

/// Joins per-slot oracle and predicted costs with the schedule.
/// `names[k]` labels the network serving segment `k`.
pub fn tracking_rows(
    schedule: &TrackingSchedule,
    names: &[String],
    oracle: &[f64],
    predicted: &[f64],
) -> Result<Vec<TrackingRow>> {
    let n = schedule.slots.len();
    if oracle.len() != n || predicted.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: oracle.len().min(predicted.len()) });
    }
    schedule
        .slots
        .iter()
        .map(|e| {
            let name = names.get(e.network).ok_or(Error::LengthMismatch {
                expected: e.network + 1,
                got: names.len(),
            })?;
            let (o, p) = (oracle[e.t], predicted[e.t]);
            Ok(TrackingRow {
                t: e.t,
                network: name.clone(),
                scale: e.scale,
                oracle_objective: o,
                predicted_objective: p,
                gap_percent: 100.0 * (p - o).abs() / o.abs().max(1e-9),
            })
        })
        .collect()
}

/// Renders tracking rows as CSV with a header line.
pub fn render_tracking_csv(rows: &[TrackingRow]) -> String {
    let mut out = String::from("t,network,scale,oracle_objective,predicted_objective,gap_percent\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t, r.network, r.scale, r.oracle_objective, r.predicted_objective, r.gap_percent
        ));
    }
    out
}
