//! Deterministic sub-network derivation.
//!
//! Buses are removed one at a time: always the highest-internal-index
//! non-slack, non-generator bus whose removal keeps the graph connected.
//! The full removal sequence (continued until no bus is removable) defines a
//! canonical slot ranking shared by every sub-network of the same parent:
//! never-removed "core" buses first, in the parent's slot order, followed by
//! the removable buses ordered by how late they are removed. A smaller
//! sub-network's slot list is therefore always a prefix of a larger one's.

use super::{connected, Branch, NetworkCase};
use crate::error::{Error, Result};

/// The parent's full greedy removal order (earliest first).
fn removal_sequence(case: &NetworkCase) -> Vec<usize> {
    let n = case.n_bus();
    let slack = case.slack();
    let removable = |i: usize| i != slack && !case.has_generator(i);

    let mut present = vec![true; n];
    let mut branches: Vec<Branch> = case.branches.clone();
    let mut seq = Vec::new();
    loop {
        let mut picked = None;
        for i in (0..n).rev() {
            if !present[i] || !removable(i) {
                continue;
            }
            // Try removing bus i: drop it and its incident branches, then
            // check connectivity over the survivors.
            let kept: Vec<usize> = (0..n).filter(|&j| present[j] && j != i).collect();
            let reindex: Vec<Option<usize>> = {
                let mut map = vec![None; n];
                for (new, &old) in kept.iter().enumerate() {
                    map[old] = Some(new);
                }
                map
            };
            let sub: Vec<Branch> = branches
                .iter()
                .filter(|br| br.from != i && br.to != i)
                .map(|br| Branch {
                    from: reindex[br.from].unwrap(),
                    to: reindex[br.to].unwrap(),
                    ..br.clone()
                })
                .collect();
            if connected(kept.len(), &sub) {
                picked = Some(i);
                break;
            }
        }
        match picked {
            Some(i) => {
                present[i] = false;
                branches.retain(|br| br.from != i && br.to != i);
                seq.push(i);
            }
            None => return seq,
        }
    }
}

/// Canonical slot ranking of the parent's buses for a given removal sequence:
/// core buses (never removed) in parent slot order, then removed buses, the
/// latest-removed first.
fn canonical_ranking(case: &NetworkCase, seq: &[usize]) -> Vec<usize> {
    let removed_at: Vec<Option<usize>> = {
        let mut v = vec![None; case.n_bus()];
        for (step, &i) in seq.iter().enumerate() {
            v[i] = Some(step);
        }
        v
    };
    let mut ranking: Vec<usize> = case
        .slot_order
        .iter()
        .copied()
        .filter(|&i| removed_at[i].is_none())
        .collect();
    let mut removed: Vec<usize> = seq.to_vec();
    removed.reverse();
    ranking.extend(removed);
    ranking
}

/// Builds the sub-network with the first `n_remove` buses of `seq` deleted,
/// slotted by the canonical ranking.
fn build_sub(case: &NetworkCase, seq: &[usize], n_remove: usize) -> NetworkCase {
    let n = case.n_bus();
    let mut present = vec![true; n];
    for &i in &seq[..n_remove] {
        present[i] = false;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| present[i]).collect();
    let reindex: Vec<Option<usize>> = {
        let mut map = vec![None; n];
        for (new, &old) in kept.iter().enumerate() {
            map[old] = Some(new);
        }
        map
    };
    let buses = kept.iter().map(|&i| case.buses[i].clone()).collect();
    let generators = case
        .generators
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.bus = reindex[g.bus].expect("generator buses are never removed");
            g
        })
        .collect();
    let branches = case
        .branches
        .iter()
        .filter(|br| present[br.from] && present[br.to])
        .map(|br| Branch {
            from: reindex[br.from].unwrap(),
            to: reindex[br.to].unwrap(),
            ..br.clone()
        })
        .collect();
    let slot_order = canonical_ranking(case, seq)
        .into_iter()
        .filter_map(|i| reindex[i])
        .collect();
    NetworkCase {
        name: format!("{}_{}", case.name, kept.len()),
        base_mva: case.base_mva,
        buses,
        generators,
        branches,
        slot_order,
    }
}

/// Derives the `target_buses`-bus sub-network of `case`.
///
/// `target_buses == n_bus()` returns the case unchanged. Smaller targets are
/// produced by the deterministic removal rule; the result's slot order is the
/// canonical ranking, so sub-networks of one parent nest by slot prefix.
pub fn derive_subnetwork(case: &NetworkCase, target_buses: usize) -> Result<NetworkCase> {
    let n = case.n_bus();
    if target_buses < 2 || target_buses > n {
        return Err(Error::CannotReachTarget {
            target: target_buses,
            reached: n,
        });
    }
    if target_buses == n {
        return Ok(case.clone());
    }
    let seq = removal_sequence(case);
    let core = n - seq.len();
    if target_buses < core {
        return Err(Error::CannotReachTarget {
            target: target_buses,
            reached: core,
        });
    }
    let sub = build_sub(case, &seq, n - target_buses);
    sub.validate()?;
    Ok(sub)
}

/// Derives the nested family for strictly increasing `targets`.
///
/// Unlike [`derive_subnetwork`], a target equal to the parent's size is
/// re-slotted by the same canonical ranking, so *every* family member nests:
/// `slots(family[i])` is a prefix of `slots(family[i+1])`.
pub fn derive_family(case: &NetworkCase, targets: &[usize]) -> Result<Vec<NetworkCase>> {
    if targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCase("family targets must be strictly increasing".into()));
    }
    let n = case.n_bus();
    let seq = removal_sequence(case);
    let core = n - seq.len();
    let mut family = Vec::with_capacity(targets.len());
    for &t in targets {
        if t < core.max(2) || t > n {
            return Err(Error::CannotReachTarget {
                target: t,
                reached: core,
            });
        }
        let sub = build_sub(case, &seq, n - t);
        sub.validate()?;
        family.push(sub);
    }
    Ok(family)
}

/// True when `small`'s slot list is a prefix of `large`'s: position by
/// position the external bus ids match and the bus carries the same load.
/// The load comparison is exact, which holds for members derived from a
/// common parent (bus records are copied verbatim) and rejects unrelated
/// cases whose ids merely happen to align.
pub fn is_slot_prefix(small: &NetworkCase, large: &NetworkCase) -> bool {
    if small.n_bus() > large.n_bus() {
        return false;
    }
    small.slot_order.iter().zip(&large.slot_order).all(|(&a, &b)| {
        let (sa, sb) = (&small.buses[a], &large.buses[b]);
        sa.id == sb.id && sa.pd == sb.pd && sa.qd == sb.qd
    })
}
