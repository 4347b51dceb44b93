//! Dataset generation: seeded load sampling, oracle labeling, train/test
//! splitting, scaling, and the time-varying tracking set.

mod io;
mod scaler;
mod tracking;

pub use io::{read_dataset, read_schedule, write_dataset, write_schedule};
pub use scaler::{NetworkScaler, Range, Scaler};
pub use tracking::{daily_profile, generate_tracking_dataset, SlotEntry, TrackingSchedule};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, NetworkCase};
use crate::nn::{NetworkTensors, TrainSet};
use crate::opf::{solve_opf, OpfOptions, OpfSolution};
use crate::par::map_batch;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One sampled loading of a network, optionally labeled by the oracle.
#[derive(Debug, Clone)]
pub struct LoadSample {
    /// Index of the network in the run's registration order.
    pub network_id: usize,
    /// Active load per load bus (p.u.), slot order.
    pub loads_p: Vec<f64>,
    /// Reactive load per load bus (p.u.), slot order.
    pub loads_q: Vec<f64>,
    /// Present exactly when the oracle solved this sample.
    pub label: Option<OpfSolution>,
}

/// One labeled sample as persisted to disk: loads over the network's load
/// buses, the oracle's voltage/dispatch solution, its cost, and its solve
/// time (zeroed when timing capture is disabled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub loads_p: Vec<f64>,
    pub loads_q: Vec<f64>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub objective: f64,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkData {
    pub name: String,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

/// Generation parameters recorded alongside the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Per-bus uniform sampling range as fractions of base load.
    pub range: (f64, f64),
    pub n_requested: usize,
    /// Oracle failures per network (dropped from the data).
    pub failures: Vec<usize>,
    pub split_fraction: f64,
    pub solver_tol: f64,
    /// Unix seconds at generation; omitted in reproducible-comparison mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub networks: Vec<NetworkData>,
    pub scaler: Scaler,
    pub provenance: Provenance,
}

impl Dataset {
    /// Reconstructs the model slot map from the fitted scaler dimensions,
    /// so a model can be sized from the dataset alone (no case files).
    pub fn slot_map(&self) -> Result<crate::nn::SlotMap> {
        let map = crate::nn::SlotMap {
            in_len: self.scaler.networks.iter().map(|n| n.input.len()).collect(),
            out_len: self.scaler.networks.iter().map(|n| n.target.len()).collect(),
        };
        map.validate()?;
        Ok(map)
    }
}

/// Options shared by the dataset generators.
#[derive(Debug, Clone)]
pub struct GenOptions {
    /// Per-bus sampling range as fractions of the base load.
    pub range: (f64, f64),
    pub opf: OpfOptions,
    /// Record wall-clock solve times; disable for byte-reproducible output.
    pub timing: bool,
    /// Stamp the manifest with the generation time.
    pub timestamp: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            range: (0.9, 1.1),
            opf: OpfOptions::default(),
            timing: true,
            timestamp: true,
        }
    }
}

/// Derives the sampling generator for network `k` of a run; networks own
/// disjoint reproducible streams.
fn network_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws `n` load samples: every load bus's `(pd, qd)` pair is scaled by an
/// independent uniform factor in `[range.0, range.1]` (constant power
/// factor per bus). Deterministic under `seed`.
pub fn sample_uniform_loads(
    case: &NetworkCase,
    range: (f64, f64),
    n: usize,
    seed: u64,
) -> Vec<LoadSample> {
    let slots = case.load_slots();
    let base = case.base_loads_pu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut loads_p = Vec::with_capacity(slots.len());
            let mut loads_q = Vec::with_capacity(slots.len());
            for &b in &slots {
                let f = rng.random_range(range.0..=range.1);
                loads_p.push(base[b].0 * f);
                loads_q.push(base[b].1 * f);
            }
            LoadSample {
                network_id: 0,
                loads_p,
                loads_q,
                label: None,
            }
        })
        .collect()
}

/// Scatters a load-slot vector onto the full per-bus demand vector the
/// solver expects (non-load buses keep zero demand).
pub fn full_loads(case: &NetworkCase, loads_p: &[f64], loads_q: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); case.n_bus()];
    for (j, &b) in case.load_slots().iter().enumerate() {
        out[b] = (loads_p[j], loads_q[j]);
    }
    out
}

fn to_record(sample: &LoadSample, timing: bool) -> SampleRecord {
    let label = sample.label.as_ref().expect("labeled sample");
    SampleRecord {
        loads_p: sample.loads_p.clone(),
        loads_q: sample.loads_q.clone(),
        vm: label.vm.clone(),
        va: label.va.clone(),
        pg: label.pg.clone(),
        qg: label.qg.clone(),
        objective: label.objective,
        solve_time: if timing { label.solve_time } else { 0.0 },
    }
}

/// Labels samples with the oracle in parallel, preserving order; failed
/// solves leave `label == None`.
fn label_samples(case: &NetworkCase, samples: &mut [LoadSample], opts: &OpfOptions) -> Result<()> {
    let y = build_admittance(case)?;
    let labels: Vec<Option<OpfSolution>> = map_batch(samples, |s| {
        let loads = full_loads(case, &s.loads_p, &s.loads_q);
        solve_opf(case, &y, &loads, opts).ok()
    });
    for (s, l) in samples.iter_mut().zip(labels) {
        s.label = l;
    }
    Ok(())
}

fn fit_scaler(cases: &[&NetworkCase], networks: &[NetworkData]) -> Scaler {
    Scaler {
        networks: cases
            .iter()
            .zip(networks)
            .map(|(case, data)| {
                let inputs: Vec<Vec<f64>> = data
                    .train
                    .iter()
                    .map(|r| {
                        let mut v = r.loads_p.clone();
                        v.extend_from_slice(&r.loads_q);
                        v
                    })
                    .collect();
                let angles: Vec<Vec<f64>> = data.train.iter().map(|r| r.va.clone()).collect();
                NetworkScaler::fit(case, &inputs, &angles)
            })
            .collect(),
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Generates the per-network train/test datasets: `n_per_network` samples
/// per case, oracle-labeled (failures dropped and counted), split with the
/// first `split_fraction` of the surviving samples as training data, scaler
/// fitted on the training split only.
pub fn generate_dataset(
    cases: &[&NetworkCase],
    n_per_network: usize,
    split_fraction: f64,
    seed: u64,
    opts: &GenOptions,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&split_fraction) {
        return Err(Error::InvalidCase(format!(
            "split fraction {split_fraction} outside [0, 1]"
        )));
    }
    let mut networks = Vec::with_capacity(cases.len());
    let mut failures = Vec::with_capacity(cases.len());
    for (k, case) in cases.iter().enumerate() {
        let mut samples =
            sample_uniform_loads(case, opts.range, n_per_network, network_rng(seed, k).random());
        for s in &mut samples {
            s.network_id = k;
        }
        label_samples(case, &mut samples, &opts.opf)?;
        let labeled: Vec<&LoadSample> = samples.iter().filter(|s| s.label.is_some()).collect();
        let failed = samples.len() - labeled.len();
        if failed * 10 > n_per_network {
            return Err(Error::TooFewLabeled {
                network: case.name.clone(),
                failures: failed,
                requested: n_per_network,
            });
        }
        failures.push(failed);
        let records: Vec<SampleRecord> =
            labeled.iter().map(|s| to_record(s, opts.timing)).collect();
        let n_train = (split_fraction * records.len() as f64).floor() as usize;
        let (train, test) = records.split_at(n_train);
        networks.push(NetworkData {
            name: case.name.clone(),
            train: train.to_vec(),
            test: test.to_vec(),
        });
    }
    let scaler = fit_scaler(cases, &networks);
    Ok(Dataset {
        networks,
        scaler,
        provenance: Provenance {
            seed,
            range: opts.range,
            n_requested: n_per_network,
            failures,
            split_fraction,
            solver_tol: opts.opf.tol,
            timestamp: opts.timestamp.then(unix_now),
        },
    })
}

/// Assembles the scaled training tensors the trainer consumes.
pub fn to_tensors(dataset: &Dataset) -> Result<TrainSet> {
    let mut networks = Vec::with_capacity(dataset.networks.len());
    for (k, data) in dataset.networks.iter().enumerate() {
        let build = |records: &[SampleRecord]| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
            if records.is_empty() {
                return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
            }
            let in_dim = records[0].loads_p.len() * 2;
            let out_dim = records[0].vm.len() * 2;
            let mut inputs = DMatrix::zeros(in_dim, records.len());
            let mut targets = DMatrix::zeros(out_dim, records.len());
            for (c, r) in records.iter().enumerate() {
                let mut u = r.loads_p.clone();
                u.extend_from_slice(&r.loads_q);
                let u = dataset.scaler.scale_input(k, &u)?;
                let mut t = r.vm.clone();
                t.extend_from_slice(&r.va);
                let t = dataset.scaler.scale_target(k, &t)?;
                inputs.column_mut(c).copy_from_slice(&u);
                targets.column_mut(c).copy_from_slice(&t);
            }
            Ok((inputs, targets))
        };
        let (train_inputs, train_targets) = build(&data.train)?;
        let (test_inputs, test_targets) = build(&data.test)?;
        networks.push(NetworkTensors {
            train_inputs,
            train_targets,
            test_inputs,
            test_targets,
        });
    }
    Ok(TrainSet { networks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;
    use crate::powerflow::evaluate_constraints;

    fn load_case(name: &str) -> NetworkCase {
        let path = format!("{}/../../cases/{name}.m", env!("CARGO_MANIFEST_DIR"));
        parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn unit_range_reproduces_base_load() {
        let case = load_case("case14");
        let samples = sample_uniform_loads(&case, (1.0, 1.0), 3, 42);
        let base = case.base_loads_pu();
        let slots = case.load_slots();
        for s in &samples {
            for (j, &b) in slots.iter().enumerate() {
                assert_eq!(s.loads_p[j], base[b].0);
                assert_eq!(s.loads_q[j], base[b].1);
            }
        }
    }

    #[test]
    fn sampling_is_uniform_and_deterministic() {
        let case = load_case("case14");
        let n = 10_000;
        let samples = sample_uniform_loads(&case, (0.9, 1.1), n, 7);
        let again = sample_uniform_loads(&case, (0.9, 1.1), n, 7);
        assert_eq!(samples.len(), n);
        for (a, b) in samples.iter().zip(&again) {
            assert_eq!(a.loads_p, b.loads_p);
            assert_eq!(a.loads_q, b.loads_q);
        }
        // Per-bus factors: mean within 1% of 1.0, all inside [0.9, 1.1], and
        // the same factor applied to P and Q (constant power factor).
        let base = case.base_loads_pu();
        let slots = case.load_slots();
        for (j, &b) in slots.iter().enumerate() {
            let mut mean = 0.0;
            for s in &samples {
                let f = s.loads_p[j] / base[b].0;
                assert!((0.9..=1.1).contains(&f), "factor {f}");
                if base[b].1 != 0.0 {
                    let fq = s.loads_q[j] / base[b].1;
                    assert!((f - fq).abs() < 1e-12);
                }
                mean += f;
            }
            mean /= n as f64;
            assert!((mean - 1.0).abs() < 0.01, "bus {b} mean factor {mean}");
        }
    }

    #[test]
    fn generated_dataset_splits_and_survives_feasibility_check() {
        let case = load_case("case9");
        let opts = GenOptions {
            timing: false,
            timestamp: false,
            ..GenOptions::default()
        };
        let ds = generate_dataset(&[&case], 25, 0.8, 3, &opts).unwrap();
        assert_eq!(ds.networks.len(), 1);
        let net = &ds.networks[0];
        assert_eq!(net.train.len() + net.test.len() + ds.provenance.failures[0], 25);
        assert_eq!(net.train.len(), 20);
        assert_eq!(ds.provenance.failures[0], 0);
        assert!(ds.provenance.timestamp.is_none());
        // Every label satisfies the operating limits it was solved under.
        for r in net.train.iter().chain(&net.test) {
            assert_eq!(r.solve_time, 0.0);
            let rep = evaluate_constraints(&case, &r.vm, &r.va, &r.pg, &r.qg, 1e-4).unwrap();
            assert!(rep.all_satisfied());
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let case = load_case("case9");
        let opts = GenOptions {
            timing: false,
            timestamp: false,
            ..GenOptions::default()
        };
        let a = generate_dataset(&[&case], 10, 0.8, 5, &opts).unwrap();
        let b = generate_dataset(&[&case], 10, 0.8, 5, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_training_targets_stay_in_unit_box() {
        let case = load_case("case14");
        let opts = GenOptions {
            timing: false,
            timestamp: false,
            ..GenOptions::default()
        };
        let ds = generate_dataset(&[&case], 20, 0.75, 9, &opts).unwrap();
        let tensors = to_tensors(&ds).unwrap();
        let t = &tensors.networks[0].train_targets;
        for &v in t.iter() {
            assert!((0.0..=1.0).contains(&v), "scaled target {v}");
        }
        let n = &tensors.networks[0];
        assert_eq!(n.train_inputs.ncols(), 15);
        assert_eq!(n.test_inputs.ncols(), 5);
        assert_eq!(n.train_inputs.nrows(), 2 * case.load_slots().len());
        assert_eq!(n.train_targets.nrows(), 2 * case.n_bus());
    }

    #[test]
    fn impossible_network_reports_too_few_labeled() {
        // A demand far beyond generation capacity fails every sample.
        let mut case = load_case("case9");
        for b in case.buses.iter_mut() {
            if b.pd > 0.0 {
                b.pd *= 50.0;
                b.qd *= 50.0;
            }
        }
        let opts = GenOptions {
            timing: false,
            timestamp: false,
            ..GenOptions::default()
        };
        match generate_dataset(&[&case], 5, 0.8, 1, &opts) {
            Err(Error::TooFewLabeled { failures, requested, .. }) => {
                assert_eq!(requested, 5);
                assert!(failures > 0);
            }
            other => panic!("expected TooFewLabeled, got {other:?}"),
        }
    }
}
