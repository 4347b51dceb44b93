//! Per-unit network model: buses, generators, branches, admittance matrix,
//! and deterministic sub-network derivation for expanding-feeder experiments.

mod derive;
mod parse;
mod write;

pub use derive::{derive_family, derive_subnetwork, is_slot_prefix};
pub use parse::parse_case;
pub use write::write_case;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a bus plays in the power-flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// One network node. Loads and shunts are stored in the case-file units
/// (MW / MVAr at system base); voltage bounds are per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: u32,
    pub kind: BusKind,
    /// Active load (MW).
    pub pd: f64,
    /// Reactive load (MVAr).
    pub qd: f64,
    /// Shunt conductance (MW demanded at 1.0 p.u. voltage).
    pub gs: f64,
    /// Shunt susceptance (MVAr injected at 1.0 p.u. voltage).
    pub bs: f64,
    /// Nominal voltage (kV).
    pub base_kv: f64,
    /// Voltage magnitude bounds (p.u.).
    pub vmin: f64,
    pub vmax: f64,
    /// Initial voltage magnitude (p.u.) and angle (degrees) from the file.
    pub vm0: f64,
    pub va0: f64,
}

/// One generating unit attached to a bus. Limits are MW / MVAr; the cost
/// polynomial applies to the dispatch in MW: c2*P^2 + c1*P + c0 [$ per h].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// Cost coefficients (c2, c1, c0).
    pub cost: (f64, f64, f64),
    /// Initial dispatch (MW, MVAr) and voltage setpoint (p.u.) from the file.
    pub pg0: f64,
    pub qg0: f64,
    pub vg: f64,
}

/// One branch (line or transformer) in the two-port pi model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Internal bus indices.
    pub from: usize,
    pub to: usize,
    /// Series resistance and reactance (p.u.).
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance (p.u.).
    pub b: f64,
    /// Off-nominal tap ratio; 0.0 means 1.0 (file convention).
    pub tap: f64,
    /// Phase-shift angle (degrees).
    pub shift: f64,
    /// Apparent-power limit (MVA); 0.0 means unlimited.
    pub smax: f64,
}

impl Branch {
    /// Tap ratio with the 0-means-nominal convention applied.
    pub fn tap_ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

/// The four entries of a branch's two-port admittance model.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Two-port admittance of one branch: series y = 1/(r + jx), charging b/2 on
/// each side, tap ratio on the from side, phase shift across the tap.
pub fn branch_admittance(br: &Branch) -> Result<BranchAdmittance> {
    if br.r == 0.0 && br.x == 0.0 {
        return Err(Error::ZeroImpedanceBranch {
            from: br.from as u32,
            to: br.to as u32,
        });
    }
    let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let ych = Complex64::new(0.0, br.b / 2.0);
    let tau = br.tap_ratio();
    let shift = br.shift.to_radians();
    let phase = Complex64::from_polar(1.0, shift);
    Ok(BranchAdmittance {
        yff: (y + ych) / (tau * tau),
        yft: -y / (tau * phase.conj()),
        ytf: -y / (tau * phase),
        ytt: y + ych,
    })
}

/// A validated, immutable per-unit network description.
///
/// `buses` keeps the case-file order; `slot_order` is the permutation that
/// lists bus positions in elastic-layer slot order (identity for parsed
/// cases, removal-derived for sub-networks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub slot_order: Vec<usize>,
}

impl NetworkCase {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    /// Internal index of the slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Base load per bus in p.u., internal bus order.
    pub fn base_loads_pu(&self) -> Vec<(f64, f64)> {
        self.buses
            .iter()
            .map(|b| (b.pd / self.base_mva, b.qd / self.base_mva))
            .collect()
    }

    /// Bus indices that carry load (pd != 0 or qd != 0), in slot order.
    pub fn load_slots(&self) -> Vec<usize> {
        self.slot_order
            .iter()
            .copied()
            .filter(|&i| self.buses[i].pd != 0.0 || self.buses[i].qd != 0.0)
            .collect()
    }

    /// True if any generator is attached to bus `i`.
    pub fn has_generator(&self, i: usize) -> bool {
        self.generators.iter().any(|g| g.bus == i)
    }

    /// Checks every structural invariant; parse and derive both call this.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_bus();
        match self.buses.iter().filter(|b| b.kind == BusKind::Slack).count() {
            0 => return Err(Error::NoSlack),
            1 => {}
            _ => return Err(Error::MultipleSlack),
        }
        for b in &self.buses {
            if b.vmin.is_nan() || b.vmin <= 0.0 {
                return Err(Error::InvalidCase(format!("bus {}: vmin must be > 0", b.id)));
            }
            if b.vmin > b.vmax {
                return Err(Error::InvalidCase(format!("bus {}: vmin > vmax", b.id)));
            }
        }
        for g in &self.generators {
            if g.bus >= n {
                return Err(Error::InvalidCase(format!("generator bus index {} out of range", g.bus)));
            }
            if g.pmin > g.pmax {
                return Err(Error::InvalidCase(format!("generator at bus {}: pmin > pmax", self.buses[g.bus].id)));
            }
            if g.qmin > g.qmax {
                return Err(Error::InvalidCase(format!("generator at bus {}: qmin > qmax", self.buses[g.bus].id)));
            }
        }
        for br in &self.branches {
            if br.from >= n || br.to >= n {
                return Err(Error::InvalidCase(format!("branch bus index {}-{} out of range", br.from, br.to)));
            }
            if br.from == br.to {
                return Err(Error::InvalidCase(format!("branch loops on bus {}", self.buses[br.from].id)));
            }
        }
        if self.slot_order.len() != n {
            return Err(Error::InvalidCase("slot_order length != bus count".into()));
        }
        let mut seen = vec![false; n];
        for &s in &self.slot_order {
            if s >= n || seen[s] {
                return Err(Error::InvalidCase("slot_order is not a permutation".into()));
            }
            seen[s] = true;
        }
        if !connected(n, &self.branches) {
            return Err(Error::Disconnected);
        }
        Ok(())
    }
}

/// True when every bus is reachable from bus 0 over `branches`.
fn connected(n: usize, branches: &[Branch]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for br in branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

/// Dense complex bus admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub dim: usize,
    pub m: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn y(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }
}

/// Assembles the bus admittance matrix from branch two-ports and bus shunts.
pub fn build_admittance(case: &NetworkCase) -> Result<AdmittanceMatrix> {
    let n = case.n_bus();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for br in &case.branches {
        let ba = branch_admittance(br).map_err(|_| Error::ZeroImpedanceBranch {
            from: case.buses[br.from].id,
            to: case.buses[br.to].id,
        })?;
        m[(br.from, br.from)] += ba.yff;
        m[(br.from, br.to)] += ba.yft;
        m[(br.to, br.from)] += ba.ytf;
        m[(br.to, br.to)] += ba.ytt;
    }
    for (i, b) in case.buses.iter().enumerate() {
        m[(i, i)] += Complex64::new(b.gs, b.bs) / case.base_mva;
    }
    Ok(AdmittanceMatrix { dim: n, m })
}
