//! Time-varying dataset over an expanding family of networks.
//!
//! A synthetic daily load profile drives the base load through the day; the
//! day is cut into one contiguous segment per family member (smallest
//! first), emulating a network that grows while being operated. Slot bases
//! form the held-out trajectory; jittered samples around each slot base form
//! the training data.

use super::{
    full_loads, to_record, unix_now, Dataset, GenOptions, LoadSample, NetworkData, Provenance,
};
use crate::dataset::fit_scaler;
use crate::error::{Error, Result};
use crate::grid::{is_slot_prefix, NetworkCase};
use crate::par::map_batch;
use crate::opf::{solve_opf, OpfSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Synthetic daily load profile: a double-peaked (morning/evening) smooth
/// curve over `slots` equal time steps, affinely placed so the values span
/// exactly `[1 - swing/2, 1 + swing/2]` — the discrete series attains both
/// endpoints. `swing = 0` gives the constant series 1.0.
pub fn daily_profile(swing: f64, slots: usize) -> Vec<f64> {
    assert!((0.0..1.0).contains(&swing), "swing must be in [0, 1)");
    assert!(slots >= 1);
    let bump = |x: f64, center: f64, width: f64| (-((x - center) / width).powi(2)).exp();
    let raw: Vec<f64> = (0..slots)
        .map(|t| {
            let x = t as f64 / slots as f64;
            0.55 * bump(x, 0.40, 0.13) + bump(x, 0.80, 0.10)
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&g| {
            let u = if hi > lo { (g - lo) / (hi - lo) } else { 0.5 };
            (1.0 - swing / 2.0) + swing * u
        })
        .collect()
}

/// Which network serves each time slot, and at what profile scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub t: usize,
    /// Index into the expanding family (registration order, smallest first).
    pub network: usize,
    /// Profile value multiplying the base load in this slot.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSchedule {
    pub slots: Vec<SlotEntry>,
}

impl TrackingSchedule {
    /// Contiguous slot ranges per network, in family order.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out: Vec<std::ops::Range<usize>> = Vec::new();
        for e in &self.slots {
            if out.len() == e.network + 1 {
                out[e.network].end = e.t + 1;
            } else {
                out.push(e.t..e.t + 1);
            }
        }
        out
    }
}

/// Generates the expanding-network tracking dataset.
///
/// `family` must be ordered smallest to largest with nested slot orders
/// (see `derive_family`). The day is partitioned into one contiguous slot
/// segment per member; in each slot the base load is the member's base
/// scaled by the profile, `per_slot_n` training samples are jittered around
/// it within `opts.range`, and the exact slot base — labeled by the oracle —
/// becomes one test-trajectory point.
pub fn generate_tracking_dataset(
    family: &[&NetworkCase],
    profile: &[f64],
    per_slot_n: usize,
    seed: u64,
    opts: &GenOptions,
) -> Result<(Dataset, TrackingSchedule)> {
    if family.is_empty() || profile.is_empty() {
        return Err(Error::InvalidCase("empty tracking family or profile".into()));
    }
    for w in family.windows(2) {
        if !is_slot_prefix(w[0], w[1]) {
            return Err(Error::InvalidCase(format!(
                "family members {} and {} do not nest by slot prefix",
                w[0].name, w[1].name
            )));
        }
    }
    let k_total = family.len();
    let n_slots = profile.len();
    // Contiguous segments, earlier (smaller) networks first; remainders go
    // to the earliest segments.
    let seg_len = |k: usize| n_slots / k_total + usize::from(k < n_slots % k_total);

    let mut schedule = TrackingSchedule { slots: Vec::with_capacity(n_slots) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per network: jittered training samples and the slot-base trajectory.
    let mut train: Vec<Vec<LoadSample>> = vec![Vec::new(); k_total];
    let mut tests: Vec<Vec<LoadSample>> = vec![Vec::new(); k_total];
    let mut t = 0;
    for (k, case) in family.iter().enumerate() {
        let slots = case.load_slots();
        let base = case.base_loads_pu();
        for _ in 0..seg_len(k) {
            let s_t = profile[t];
            schedule.slots.push(SlotEntry { t, network: k, scale: s_t });
            let slot_base: Vec<(f64, f64)> =
                slots.iter().map(|&b| (base[b].0 * s_t, base[b].1 * s_t)).collect();
            tests[k].push(LoadSample {
                network_id: k,
                loads_p: slot_base.iter().map(|l| l.0).collect(),
                loads_q: slot_base.iter().map(|l| l.1).collect(),
                label: None,
            });
            for _ in 0..per_slot_n {
                let mut loads_p = Vec::with_capacity(slots.len());
                let mut loads_q = Vec::with_capacity(slots.len());
                for &(p, q) in &slot_base {
                    let f = rng.random_range(opts.range.0..=opts.range.1);
                    loads_p.push(p * f);
                    loads_q.push(q * f);
                }
                train[k].push(LoadSample { network_id: k, loads_p, loads_q, label: None });
            }
            t += 1;
        }
    }

    // Label everything; training failures are dropped (within the usual
    // quota), trajectory failures are fatal since every slot must be
    // comparable against the oracle.
    let mut networks = Vec::with_capacity(k_total);
    let mut failures = Vec::with_capacity(k_total);
    let mut t0 = 0;
    for (k, case) in family.iter().enumerate() {
        let y = crate::grid::build_admittance(case)?;
        let label = |samples: &[LoadSample]| -> Vec<Option<OpfSolution>> {
            map_batch(samples, |s| {
                let loads = full_loads(case, &s.loads_p, &s.loads_q);
                solve_opf(case, &y, &loads, &opts.opf).ok()
            })
        };
        let train_labels = label(&train[k]);
        for (s, l) in train[k].iter_mut().zip(train_labels) {
            s.label = l;
        }
        let test_labels = label(&tests[k]);
        for (i, l) in test_labels.iter().enumerate() {
            if l.is_none() {
                return Err(Error::MissingLabel(t0 + i));
            }
        }
        for (s, l) in tests[k].iter_mut().zip(test_labels) {
            s.label = l;
        }
        let failed = train[k].iter().filter(|s| s.label.is_none()).count();
        if failed * 10 > train[k].len().max(1) {
            return Err(Error::TooFewLabeled {
                network: case.name.clone(),
                failures: failed,
                requested: train[k].len(),
            });
        }
        failures.push(failed);
        networks.push(NetworkData {
            name: case.name.clone(),
            train: train[k]
                .iter()
                .filter(|s| s.label.is_some())
                .map(|s| to_record(s, opts.timing))
                .collect(),
            test: tests[k].iter().map(|s| to_record(s, opts.timing)).collect(),
        });
        t0 += seg_len(k);
    }

    let scaler = fit_scaler(family, &networks);
    let dataset = Dataset {
        networks,
        scaler,
        provenance: Provenance {
            seed,
            range: opts.range,
            n_requested: per_slot_n,
            failures,
            split_fraction: 0.0,
            solver_tol: opts.opf.tol,
            timestamp: opts.timestamp.then(unix_now),
        },
    };
    Ok((dataset, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{derive_family, parse_case};

    fn load_case(name: &str) -> NetworkCase {
        let path = format!("{}/../../cases/{name}.m", env!("CARGO_MANIFEST_DIR"));
        parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn zero_swing_is_constant_one() {
        for s in daily_profile(0.0, 50) {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn swing_is_attained_exactly() {
        let p = daily_profile(0.54, 288);
        assert_eq!(p.len(), 288);
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((hi - lo - 0.54).abs() < 1e-12, "range {}", hi - lo);
        assert!((lo - 0.73).abs() < 1e-12);
        assert!((hi - 1.27).abs() < 1e-12);
    }

    #[test]
    fn profile_has_two_peaks() {
        let p = daily_profile(0.54, 288);
        let mut maxima = 0;
        for i in 1..p.len() - 1 {
            if p[i] > p[i - 1] && p[i] > p[i + 1] {
                maxima += 1;
            }
        }
        assert_eq!(maxima, 2);
    }

    #[test]
    fn segments_partition_the_day() {
        let case = load_case("case14");
        let family = derive_family(&case, &[9, 11, 14]).unwrap();
        let refs: Vec<&NetworkCase> = family.iter().collect();
        let profile = daily_profile(0.2, 10);
        let opts = GenOptions { timing: false, timestamp: false, ..GenOptions::default() };
        let (ds, schedule) = generate_tracking_dataset(&refs, &profile, 1, 3, &opts).unwrap();
        // 10 slots over 3 networks: segments of 4, 3, 3.
        let segs = schedule.segments();
        assert_eq!(segs, vec![0..4, 4..7, 7..10]);
        assert_eq!(ds.networks.len(), 3);
        assert_eq!(ds.networks[0].test.len(), 4);
        assert_eq!(ds.networks[1].test.len(), 3);
        assert_eq!(ds.networks[2].test.len(), 3);
        // Vector lengths follow each member's size.
        for (k, case) in family.iter().enumerate() {
            for r in ds.networks[k].test.iter().chain(&ds.networks[k].train) {
                assert_eq!(r.loads_p.len(), case.load_slots().len());
                assert_eq!(r.vm.len(), case.n_bus());
            }
        }
    }

    #[test]
    fn trajectory_points_sit_on_the_profile() {
        let case = load_case("case14");
        let family = derive_family(&case, &[11, 14]).unwrap();
        let refs: Vec<&NetworkCase> = family.iter().collect();
        let profile = daily_profile(0.3, 6);
        let opts = GenOptions { timing: false, timestamp: false, ..GenOptions::default() };
        let (ds, schedule) = generate_tracking_dataset(&refs, &profile, 0, 5, &opts).unwrap();
        for e in &schedule.slots {
            let case = &family[e.network];
            let base = case.base_loads_pu();
            let slots = case.load_slots();
            let seg_start = schedule.segments()[e.network].start;
            let rec = &ds.networks[e.network].test[e.t - seg_start];
            for (j, &b) in slots.iter().enumerate() {
                assert!((rec.loads_p[j] - base[b].0 * e.scale).abs() < 1e-15);
            }
            assert!(rec.objective > 0.0);
        }
        // per_slot_n = 0: trajectory only.
        assert!(ds.networks.iter().all(|n| n.train.is_empty()));
    }

    #[test]
    fn non_nested_family_is_rejected() {
        let a = load_case("case9");
        let b = load_case("case14");
        let profile = daily_profile(0.1, 4);
        let opts = GenOptions { timing: false, timestamp: false, ..GenOptions::default() };
        assert!(matches!(
            generate_tracking_dataset(&[&a, &b], &profile, 0, 1, &opts),
            Err(Error::InvalidCase(_))
        ));
    }
}
