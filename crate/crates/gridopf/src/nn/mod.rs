//! Unified multi-network voltage surrogate.
//!
//! One fully-connected trunk is shared by several power networks of
//! different sizes. The first layer's weight matrix is partitioned into
//! per-network *column* blocks and the output layer into per-network *row*
//! blocks: network `k` (0-based, in registration order) reads the first
//! `in_len[k]` input columns and writes the first `out_len[k]` output rows,
//! so adding a network appends one column block and one row block while the
//! hidden layers stay shared. Sharing is purely positional: column `j`
//! serves every network whose input is at least `j+1` wide.
//!
//! Layout conventions (fixed across the crate):
//! - input vector of network `k`: active loads `[p_0..p_{L-1}, q_0..q_{L-1}]`
//!   over its load buses in slot order, min-max scaled;
//! - output vector: `[vm_0..vm_{N-1}, va_0..va_{N-1}]` over all buses, each
//!   component squashed through a sigmoid into (0,1).

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle, CHECKPOINT_VERSION};
pub use train::{
    train_incremental, EpochRecord, NetworkTensors, Schedule, TrainConfig, TrainHistory, TrainSet,
};

use crate::error::{Error, Result};
use crate::grid::NetworkCase;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cumulative input/output widths of the elastic layers, one entry per
/// network in registration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMap {
    /// `in_len[k]` = width of network `k`'s input (twice its load-bus count).
    pub in_len: Vec<usize>,
    /// `out_len[k]` = height of network `k`'s output (twice its bus count).
    pub out_len: Vec<usize>,
}

impl SlotMap {
    /// Slot map for a list of networks in registration order.
    pub fn from_cases(cases: &[&NetworkCase]) -> Result<Self> {
        let map = SlotMap {
            in_len: cases.iter().map(|c| 2 * c.load_slots().len()).collect(),
            out_len: cases.iter().map(|c| 2 * c.n_bus()).collect(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn n_networks(&self) -> usize {
        self.in_len.len()
    }

    /// Width of the input block appended by network `k`.
    pub fn input_increment(&self, k: usize) -> usize {
        self.in_len[k] - if k == 0 { 0 } else { self.in_len[k - 1] }
    }

    /// Height of the output block appended by network `k`.
    pub fn output_increment(&self, k: usize) -> usize {
        self.out_len[k] - if k == 0 { 0 } else { self.out_len[k - 1] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_len.is_empty() {
            return Err(Error::InvalidSlotMap("no networks".into()));
        }
        if self.in_len.len() != self.out_len.len() {
            return Err(Error::InvalidSlotMap(format!(
                "{} input widths vs {} output widths",
                self.in_len.len(),
                self.out_len.len()
            )));
        }
        if self.in_len[0] == 0 || self.out_len[0] == 0 {
            return Err(Error::InvalidSlotMap("zero-width first network".into()));
        }
        for k in 1..self.in_len.len() {
            if self.in_len[k] <= self.in_len[k - 1] || self.out_len[k] <= self.out_len[k - 1] {
                return Err(Error::InvalidSlotMap(format!(
                    "widths must be strictly increasing, violated at network {k}"
                )));
            }
        }
        Ok(())
    }
}

/// The unified model parameters. All blocks are dense 64-bit matrices;
/// biases start at zero, weights at He-uniform (hidden, ReLU) or
/// Xavier-uniform (output, sigmoid) draws from a seeded generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticDnn {
    pub slot_map: SlotMap,
    /// Hidden widths `[h_1, ..., h_H]`; layer 1 is the elastic input layer.
    pub hidden_dims: Vec<usize>,
    /// Per-network column blocks of the first layer, `h_1 × increment(k)`.
    pub w1_blocks: Vec<DMatrix<f64>>,
    /// First-layer bias, shared by all networks.
    pub b1: DVector<f64>,
    /// Trunk layers 2..=H as `(h_i × h_{i-1}, h_i)` weight/bias pairs.
    pub hidden: Vec<(DMatrix<f64>, DVector<f64>)>,
    /// Per-network row blocks of the output layer, `increment(k) × h_H`.
    pub wo_blocks: Vec<DMatrix<f64>>,
    /// Per-network output bias blocks, `increment(k)`.
    pub bo_blocks: Vec<DVector<f64>>,
    /// Seed the parameters were drawn from (provenance for checkpoints).
    pub init_seed: u64,
}

/// Draws a `rows × cols` matrix with entries uniform in `[-limit, limit]`,
/// filled row-major so the draw order is part of the format.
fn uniform_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> DMatrix<f64> {
    DMatrix::from_row_iterator(rows, cols, (0..rows * cols).map(|_| rng.random_range(-limit..limit)))
}

/// Initializes a unified model. Deterministic under `seed`; the draw order
/// is: input blocks in network order, trunk layers in depth order, output
/// blocks in network order (biases are zero and consume no draws).
///
/// Input block `k` uses the He-uniform limit `sqrt(6 / in_len[k])` — the
/// fan-in seen by network `k`, the widest network the block is new for.
/// Trunk layers use `sqrt(6 / fan_in)`; output block `k` uses the
/// Xavier-uniform limit `sqrt(6 / (h_H + out_len[k]))` for its sigmoid.
pub fn init_elastic_dnn(slot_map: SlotMap, hidden_dims: &[usize], seed: u64) -> Result<ElasticDnn> {
    slot_map.validate()?;
    if hidden_dims.is_empty() {
        return Err(Error::InvalidSlotMap("hidden_dims must be non-empty".into()));
    }
    if hidden_dims.contains(&0) {
        return Err(Error::InvalidSlotMap("zero-width hidden layer".into()));
    }
    let k_total = slot_map.n_networks();
    let h1 = hidden_dims[0];
    let h_last = *hidden_dims.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let w1_blocks: Vec<_> = (0..k_total)
        .map(|k| {
            let limit = (6.0 / slot_map.in_len[k] as f64).sqrt();
            uniform_block(&mut rng, h1, slot_map.input_increment(k), limit)
        })
        .collect();
    let b1 = DVector::zeros(h1);
    let hidden: Vec<_> = (1..hidden_dims.len())
        .map(|i| {
            let limit = (6.0 / hidden_dims[i - 1] as f64).sqrt();
            let w = uniform_block(&mut rng, hidden_dims[i], hidden_dims[i - 1], limit);
            (w, DVector::zeros(hidden_dims[i]))
        })
        .collect();
    let wo_blocks: Vec<_> = (0..k_total)
        .map(|k| {
            let limit = (6.0 / (h_last + slot_map.out_len[k]) as f64).sqrt();
            uniform_block(&mut rng, slot_map.output_increment(k), h_last, limit)
        })
        .collect();
    let bo_blocks: Vec<_> = (0..k_total)
        .map(|k| DVector::zeros(slot_map.output_increment(k)))
        .collect();

    Ok(ElasticDnn {
        slot_map,
        hidden_dims: hidden_dims.to_vec(),
        w1_blocks,
        b1,
        hidden,
        wo_blocks,
        bo_blocks,
        init_seed: seed,
    })
}

/// Gradients for the blocks active when training network `k`: input and
/// output blocks `0..=k` plus the whole shared trunk. Blocks beyond `k`
/// have no entry at all.
#[derive(Debug, Clone)]
pub struct GradientSet {
    /// Index of the network the batch belonged to.
    pub network: usize,
    pub w1_blocks: Vec<DMatrix<f64>>,
    pub b1: DVector<f64>,
    pub hidden: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub wo_blocks: Vec<DMatrix<f64>>,
    pub bo_blocks: Vec<DVector<f64>>,
}

fn relu_inplace(m: &mut DMatrix<f64>) {
    for v in m.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn sigmoid_inplace(m: &mut DMatrix<f64>) {
    for v in m.iter_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
}

impl ElasticDnn {
    pub fn n_networks(&self) -> usize {
        self.slot_map.n_networks()
    }

    fn check_network(&self, k: usize) -> Result<()> {
        if k >= self.n_networks() {
            return Err(Error::LengthMismatch {
                expected: self.n_networks(),
                got: k + 1,
            });
        }
        Ok(())
    }

    /// Forward pass for a whole batch: `inputs` is `in_len[k] × B`, the
    /// result `out_len[k] × B`. Uses input/output blocks `0..=k` only; every
    /// output component is strictly inside (0,1).
    pub fn forward_batch(&self, k: usize, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_network(k)?;
        if inputs.nrows() != self.slot_map.in_len[k] {
            return Err(Error::LengthMismatch {
                expected: self.slot_map.in_len[k],
                got: inputs.nrows(),
            });
        }
        Ok(self.forward_trace(k, inputs).1)
    }

    /// Forward pass for a single sample.
    pub fn forward(&self, k: usize, input: &[f64]) -> Result<Vec<f64>> {
        let u = DMatrix::from_column_slice(input.len(), 1, input);
        let out = self.forward_batch(k, &u)?;
        Ok(out.column(0).iter().copied().collect())
    }

    /// Runs the trunk keeping every post-activation (needed by backprop).
    /// Returns (per-layer ReLU activations `a_1..a_H`, sigmoid output).
    fn forward_trace(&self, k: usize, inputs: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let batch = inputs.ncols();
        let h1 = self.hidden_dims[0];
        // Layer 1: accumulate the active column blocks against the matching
        // row ranges of the input.
        let mut z1 = DMatrix::from_fn(h1, batch, |r, _| self.b1[r]);
        let mut row = 0;
        for block in &self.w1_blocks[..=k] {
            z1.gemm(1.0, block, &inputs.rows(row, block.ncols()), 1.0);
            row += block.ncols();
        }
        relu_inplace(&mut z1);
        let mut acts = vec![z1];
        for (w, b) in &self.hidden {
            let prev = acts.last().unwrap();
            let mut z = DMatrix::from_fn(w.nrows(), batch, |r, _| b[r]);
            z.gemm(1.0, w, prev, 1.0);
            relu_inplace(&mut z);
            acts.push(z);
        }
        // Output layer: stack the active row blocks.
        let out_rows = self.slot_map.out_len[k];
        let last = acts.last().unwrap();
        let mut zo = DMatrix::zeros(out_rows, batch);
        let mut r0 = 0;
        for (wo, bo) in self.wo_blocks[..=k].iter().zip(&self.bo_blocks[..=k]) {
            let mut rows = zo.rows_mut(r0, wo.nrows());
            rows.gemm(1.0, wo, last, 1.0);
            for c in 0..batch {
                for r in 0..wo.nrows() {
                    rows[(r, c)] += bo[r];
                }
            }
            r0 += wo.nrows();
        }
        sigmoid_inplace(&mut zo);
        (acts, zo)
    }

    /// Batch loss and gradients for network `k`.
    ///
    /// The loss is the batch mean of the per-sample sum of squared errors,
    /// with the angle half of the output weighted by `gamma`:
    /// rows `0..out_len[k]/2` are magnitude slots (weight 1), the rest angle
    /// slots (weight `gamma`). Inputs and targets are in scaled space.
    pub fn loss_and_grads(
        &self,
        k: usize,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        gamma: f64,
    ) -> Result<(f64, GradientSet)> {
        self.check_network(k)?;
        if inputs.nrows() != self.slot_map.in_len[k] {
            return Err(Error::LengthMismatch {
                expected: self.slot_map.in_len[k],
                got: inputs.nrows(),
            });
        }
        if targets.nrows() != self.slot_map.out_len[k] {
            return Err(Error::LengthMismatch {
                expected: self.slot_map.out_len[k],
                got: targets.nrows(),
            });
        }
        if targets.ncols() != inputs.ncols() {
            return Err(Error::LengthMismatch {
                expected: inputs.ncols(),
                got: targets.ncols(),
            });
        }
        let batch = inputs.ncols();
        let n_mag = self.slot_map.out_len[k] / 2;
        let (acts, yhat) = self.forward_trace(k, inputs);

        // Loss and dL/d(pre-sigmoid): weight w_r = 1 for magnitude rows,
        // gamma for angle rows; L = (1/B) Σ_b Σ_r w_r (ŷ - t)².
        let mut loss = 0.0;
        let mut dz = DMatrix::zeros(yhat.nrows(), batch);
        for c in 0..batch {
            for r in 0..yhat.nrows() {
                let w = if r < n_mag { 1.0 } else { gamma };
                let e = yhat[(r, c)] - targets[(r, c)];
                loss += w * e * e;
                let y = yhat[(r, c)];
                dz[(r, c)] = (2.0 / batch as f64) * w * e * y * (1.0 - y);
            }
        }
        loss /= batch as f64;

        // Output blocks: dWo = dZo · a_Hᵀ split by row range.
        let a_last = acts.last().unwrap();
        let mut wo_grads = Vec::with_capacity(k + 1);
        let mut bo_grads = Vec::with_capacity(k + 1);
        let mut r0 = 0;
        for wo in &self.wo_blocks[..=k] {
            let dzo = dz.rows(r0, wo.nrows());
            let mut gw = DMatrix::zeros(wo.nrows(), wo.ncols());
            gw.gemm(1.0, &dzo, &a_last.transpose(), 0.0);
            let gb = DVector::from_fn(wo.nrows(), |r, _| dzo.row(r).sum());
            wo_grads.push(gw);
            bo_grads.push(gb);
            r0 += wo.nrows();
        }
        // Back into the trunk: dA_H = Σ blocks Woᵀ · dZo.
        let mut da = DMatrix::zeros(a_last.nrows(), batch);
        let mut r0 = 0;
        for wo in &self.wo_blocks[..=k] {
            da.gemm(1.0, &wo.transpose(), &dz.rows(r0, wo.nrows()), 1.0);
            r0 += wo.nrows();
        }

        // Hidden layers H..2 (index i into self.hidden, activations acts[i+1]).
        let mut hidden_grads: Vec<(DMatrix<f64>, DVector<f64>)> =
            Vec::with_capacity(self.hidden.len());
        for i in (0..self.hidden.len()).rev() {
            let a_out = &acts[i + 1];
            // ReLU mask: a > 0 (derivative 0 at the kink).
            let mut dzi = da.clone();
            for c in 0..batch {
                for r in 0..dzi.nrows() {
                    if a_out[(r, c)] <= 0.0 {
                        dzi[(r, c)] = 0.0;
                    }
                }
            }
            let (w, _) = &self.hidden[i];
            let mut gw = DMatrix::zeros(w.nrows(), w.ncols());
            gw.gemm(1.0, &dzi, &acts[i].transpose(), 0.0);
            let gb = DVector::from_fn(dzi.nrows(), |r, _| dzi.row(r).sum());
            hidden_grads.push((gw, gb));
            da = DMatrix::zeros(w.ncols(), batch);
            da.gemm(1.0, &w.transpose(), &dzi, 0.0);
        }
        hidden_grads.reverse();

        // Layer 1.
        let a1 = &acts[0];
        let mut dz1 = da;
        for c in 0..batch {
            for r in 0..dz1.nrows() {
                if a1[(r, c)] <= 0.0 {
                    dz1[(r, c)] = 0.0;
                }
            }
        }
        let mut w1_grads = Vec::with_capacity(k + 1);
        let mut row = 0;
        for block in &self.w1_blocks[..=k] {
            let mut gw = DMatrix::zeros(block.nrows(), block.ncols());
            gw.gemm(1.0, &dz1, &inputs.rows(row, block.ncols()).transpose(), 0.0);
            w1_grads.push(gw);
            row += block.ncols();
        }
        let gb1 = DVector::from_fn(dz1.nrows(), |r, _| dz1.row(r).sum());

        Ok((
            loss,
            GradientSet {
                network: k,
                w1_blocks: w1_grads,
                b1: gb1,
                hidden: hidden_grads,
                wo_blocks: wo_grads,
                bo_blocks: bo_grads,
            },
        ))
    }

    /// Batch loss only (no gradients) — used for held-out reporting.
    pub fn loss(
        &self,
        k: usize,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        gamma: f64,
    ) -> Result<f64> {
        self.check_network(k)?;
        let yhat = self.forward_batch(k, inputs)?;
        if targets.nrows() != yhat.nrows() || targets.ncols() != yhat.ncols() {
            return Err(Error::LengthMismatch {
                expected: yhat.nrows() * yhat.ncols(),
                got: targets.nrows() * targets.ncols(),
            });
        }
        let n_mag = self.slot_map.out_len[k] / 2;
        let batch = yhat.ncols();
        let mut loss = 0.0;
        for c in 0..batch {
            for r in 0..yhat.nrows() {
                let w = if r < n_mag { 1.0 } else { gamma };
                let e = yhat[(r, c)] - targets[(r, c)];
                loss += w * e * e;
            }
        }
        Ok(loss / batch as f64)
    }

    /// Total number of parameters in the unified model.
    pub fn param_count(&self) -> usize {
        let blocks = |ms: &[DMatrix<f64>]| ms.iter().map(|m| m.len()).sum::<usize>();
        blocks(&self.w1_blocks)
            + self.b1.len()
            + self.hidden.iter().map(|(w, b)| w.len() + b.len()).sum::<usize>()
            + blocks(&self.wo_blocks)
            + self.bo_blocks.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// Parameter count of one standalone MLP with the given widths.
fn mlp_param_count(input: usize, hidden_dims: &[usize], output: usize) -> usize {
    let mut total = hidden_dims[0] * input + hidden_dims[0];
    for i in 1..hidden_dims.len() {
        total += hidden_dims[i] * hidden_dims[i - 1] + hidden_dims[i];
    }
    total + output * *hidden_dims.last().unwrap() + output
}

/// Parameter count of the unified model, in closed form.
pub fn param_count_unified(slot_map: &SlotMap, hidden_dims: &[usize]) -> usize {
    let k = slot_map.n_networks();
    mlp_param_count(slot_map.in_len[k - 1], hidden_dims, slot_map.out_len[k - 1])
}

/// Combined parameter count of one standalone MLP per network with the same
/// trunk widths — the storage baseline the unified model is compared against.
pub fn param_count_separate(slot_map: &SlotMap, hidden_dims: &[usize]) -> usize {
    (0..slot_map.n_networks())
        .map(|k| mlp_param_count(slot_map.in_len[k], hidden_dims, slot_map.out_len[k]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_map() -> SlotMap {
        SlotMap {
            in_len: vec![2, 4, 5],
            out_len: vec![3, 5, 8],
        }
    }

    fn toy_dnn(seed: u64) -> ElasticDnn {
        init_elastic_dnn(toy_map(), &[4, 3], seed).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = toy_dnn(9);
        let b = toy_dnn(9);
        assert_eq!(a, b);
        let c = toy_dnn(10);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_slot_maps() {
        let flat = SlotMap {
            in_len: vec![4, 4],
            out_len: vec![2, 6],
        };
        assert!(matches!(
            init_elastic_dnn(flat, &[3], 0),
            Err(Error::InvalidSlotMap(_))
        ));
        let empty = SlotMap {
            in_len: vec![],
            out_len: vec![],
        };
        assert!(init_elastic_dnn(empty, &[3], 0).is_err());
        assert!(init_elastic_dnn(toy_map(), &[], 0).is_err());
    }

    #[test]
    fn zero_parameters_give_one_half_everywhere() {
        let mut dnn = toy_dnn(1);
        for b in dnn.w1_blocks.iter_mut().chain(dnn.wo_blocks.iter_mut()) {
            b.fill(0.0);
        }
        for (w, _) in dnn.hidden.iter_mut() {
            w.fill(0.0);
        }
        let out = dnn.forward(2, &[0.3, -1.0, 0.5, 2.0, 0.1]).unwrap();
        assert_eq!(out.len(), 8);
        for v in out {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let dnn = toy_dnn(3);
        let out = dnn.forward(1, &[5.0, -3.0, 2.0, 0.7]).unwrap();
        assert_eq!(out.len(), 5);
        for v in out {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    /// With blocks beyond `k` zeroed, running the largest network on a
    /// zero-padded input and truncating its output must equal running
    /// network `k` directly.
    #[test]
    fn padding_equivalence_when_later_blocks_are_zero() {
        let mut dnn = toy_dnn(4);
        for b in dnn.w1_blocks[1..].iter_mut().chain(dnn.wo_blocks[1..].iter_mut()) {
            b.fill(0.0);
        }
        let u = [0.4, -0.2];
        let small = dnn.forward(0, &u).unwrap();
        let padded = [0.4, -0.2, 0.0, 0.0, 0.0];
        let large = dnn.forward(2, &padded).unwrap();
        for (a, b) in small.iter().zip(&large) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Independent scalar-loop implementation of the same architecture.
    fn naive_forward(dnn: &ElasticDnn, k: usize, u: &[f64]) -> Vec<f64> {
        // Concatenate active blocks into plain row-major weight tables.
        let in_len = dnn.slot_map.in_len[k];
        let out_len = dnn.slot_map.out_len[k];
        let h1 = dnn.hidden_dims[0];
        let mut w1 = vec![vec![0.0; in_len]; h1];
        let mut col = 0;
        for block in &dnn.w1_blocks[..=k] {
            for r in 0..block.nrows() {
                for c in 0..block.ncols() {
                    w1[r][col + c] = block[(r, c)];
                }
            }
            col += block.ncols();
        }
        let mut act: Vec<f64> = (0..h1)
            .map(|r| {
                let z: f64 =
                    (0..in_len).map(|c| w1[r][c] * u[c]).sum::<f64>() + dnn.b1[r];
                z.max(0.0)
            })
            .collect();
        for (w, b) in &dnn.hidden {
            act = (0..w.nrows())
                .map(|r| {
                    let z: f64 = (0..w.ncols()).map(|c| w[(r, c)] * act[c]).sum::<f64>() + b[r];
                    z.max(0.0)
                })
                .collect();
        }
        let mut out = Vec::with_capacity(out_len);
        for (wo, bo) in dnn.wo_blocks[..=k].iter().zip(&dnn.bo_blocks[..=k]) {
            for r in 0..wo.nrows() {
                let z: f64 =
                    (0..wo.ncols()).map(|c| wo[(r, c)] * act[c]).sum::<f64>() + bo[r];
                out.push(1.0 / (1.0 + (-z).exp()));
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_loops() {
        let dnn = toy_dnn(5);
        let inputs = [
            (0usize, vec![0.2, 0.9]),
            (1, vec![0.2, 0.9, -0.4, 0.3]),
            (2, vec![0.2, 0.9, -0.4, 0.3, 1.1]),
        ];
        for (k, u) in inputs {
            let fast = dnn.forward(k, &u).unwrap();
            let slow = naive_forward(&dnn, k, &u);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "network {k}: {a} vs {b}");
            }
        }
    }

    /// A standalone single-network model assembled from the active blocks
    /// must agree with the unified forward exactly.
    #[test]
    fn active_slice_equals_standalone_mlp() {
        let dnn = toy_dnn(8);
        for k in 0..3 {
            let in_len = dnn.slot_map.in_len[k];
            let out_len = dnn.slot_map.out_len[k];
            let h1 = dnn.hidden_dims[0];
            let h_last = *dnn.hidden_dims.last().unwrap();
            let mut w1 = DMatrix::zeros(h1, in_len);
            let mut c0 = 0;
            for b in &dnn.w1_blocks[..=k] {
                w1.view_mut((0, c0), (h1, b.ncols())).copy_from(b);
                c0 += b.ncols();
            }
            let mut wo = DMatrix::zeros(out_len, h_last);
            let mut bo = DVector::zeros(out_len);
            let mut r0 = 0;
            for (w, b) in dnn.wo_blocks[..=k].iter().zip(&dnn.bo_blocks[..=k]) {
                wo.view_mut((r0, 0), (w.nrows(), h_last)).copy_from(w);
                bo.rows_mut(r0, b.len()).copy_from(b);
                r0 += w.nrows();
            }
            let standalone = ElasticDnn {
                slot_map: SlotMap {
                    in_len: vec![in_len],
                    out_len: vec![out_len],
                },
                hidden_dims: dnn.hidden_dims.clone(),
                w1_blocks: vec![w1],
                b1: dnn.b1.clone(),
                hidden: dnn.hidden.clone(),
                wo_blocks: vec![wo],
                bo_blocks: vec![bo],
                init_seed: 0,
            };
            let u: Vec<f64> = (0..in_len).map(|i| 0.1 * i as f64 - 0.2).collect();
            let a = dnn.forward(k, &u).unwrap();
            let b = standalone.forward(0, &u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let dnn = toy_dnn(2);
        assert!(matches!(
            dnn.forward(1, &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 4, got: 2 })
        ));
        assert!(dnn.forward(7, &[1.0]).is_err());
    }

    fn random_batch(dnn: &ElasticDnn, k: usize, n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = DMatrix::from_fn(dnn.slot_map.in_len[k], n, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(dnn.slot_map.out_len[k], n, |_, _| rng.random_range(0.05..0.95));
        (inputs, targets)
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradients() {
        let dnn = toy_dnn(6);
        let (inputs, _) = random_batch(&dnn, 2, 3, 1);
        let targets = dnn.forward_batch(2, &inputs).unwrap();
        let (loss, grads) = dnn.loss_and_grads(2, &inputs, &targets, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        let mut all = grads.w1_blocks.clone();
        all.extend(grads.wo_blocks.clone());
        all.extend(grads.hidden.iter().map(|(w, _)| w.clone()));
        for g in all {
            assert!(g.iter().all(|&v| v == 0.0));
        }
        assert!(grads.b1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gamma_zero_ignores_angle_slots() {
        let dnn = toy_dnn(6);
        let (inputs, mut targets) = random_batch(&dnn, 1, 4, 2);
        let (loss_a, _) = dnn.loss_and_grads(1, &inputs, &targets, 0.0).unwrap();
        // Rows out_len/2.. are angle slots; perturbing them must not matter.
        let n_mag = dnn.slot_map.out_len[1] / 2;
        for r in n_mag..targets.nrows() {
            for c in 0..targets.ncols() {
                targets[(r, c)] += 0.3;
            }
        }
        let (loss_b, _) = dnn.loss_and_grads(1, &inputs, &targets, 0.0).unwrap();
        assert_eq!(loss_a, loss_b);
    }

    #[test]
    fn inactive_blocks_receive_no_gradient_entry() {
        let dnn = toy_dnn(6);
        let (inputs, targets) = random_batch(&dnn, 1, 4, 3);
        let (_, grads) = dnn.loss_and_grads(1, &inputs, &targets, 1.0).unwrap();
        assert_eq!(grads.network, 1);
        assert_eq!(grads.w1_blocks.len(), 2);
        assert_eq!(grads.wo_blocks.len(), 2);
        assert_eq!(grads.bo_blocks.len(), 2);
        assert_eq!(grads.hidden.len(), dnn.hidden.len());
    }

    /// Central-difference check of every active parameter's gradient.
    fn check_gradients(dnn: &mut ElasticDnn, k: usize, seed: u64) {
        // Freshly initialized biases are exactly zero, so a sample whose
        // previous layer dies under ReLU leaves the next pre-activation
        // sitting exactly on the kink, where the one-sided finite difference
        // disagrees with the ReLU'(0)=0 convention. Jitter the biases off
        // zero so every kink is strictly crossed or strictly avoided.
        let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
        for v in dnn.b1.iter_mut() {
            *v += jitter.random_range(-0.3..0.3);
        }
        for (_, b) in dnn.hidden.iter_mut() {
            for v in b.iter_mut() {
                *v += jitter.random_range(-0.3..0.3);
            }
        }
        for b in dnn.bo_blocks.iter_mut() {
            for v in b.iter_mut() {
                *v += jitter.random_range(-0.3..0.3);
            }
        }
        let (inputs, targets) = random_batch(dnn, k, 4, seed);
        let gamma = 0.7;
        let (_, grads) = dnn.loss_and_grads(k, &inputs, &targets, gamma).unwrap();
        let h = 1e-5;
        // Visits every parameter through a closure that returns a mutable
        // reference given (block kind, block index, element index).
        let n_hidden = dnn.hidden.len();
        for kind in 0..5 {
            let block_count = match kind {
                0 | 3 | 4 => k + 1,
                1 => 1,
                _ => n_hidden,
            };
            for bi in 0..block_count {
                let len = match kind {
                    0 => dnn.w1_blocks[bi].len(),
                    1 => dnn.b1.len(),
                    2 => dnn.hidden[bi].0.len() + dnn.hidden[bi].1.len(),
                    3 => dnn.wo_blocks[bi].len(),
                    _ => dnn.bo_blocks[bi].len(),
                };
                for e in 0..len {
                    let read = |d: &mut ElasticDnn, delta: f64| -> f64 {
                        {
                            let p: &mut f64 = match kind {
                                0 => &mut d.w1_blocks[bi][e],
                                1 => &mut d.b1[e],
                                2 => {
                                    let (w, b) = &mut d.hidden[bi];
                                    if e < w.len() {
                                        &mut w[e]
                                    } else {
                                        &mut b[e - w.len()]
                                    }
                                }
                                3 => &mut d.wo_blocks[bi][e],
                                _ => &mut d.bo_blocks[bi][e],
                            };
                            *p += delta;
                        }
                        let (loss, _) = d.loss_and_grads(k, &inputs, &targets, gamma).unwrap();
                        loss
                    };
                    let lp = read(dnn, h);
                    let lm = read(dnn, -2.0 * h);
                    read(dnn, h); // restore
                    let fd = (lp - lm) / (2.0 * h);
                    let an = match kind {
                        0 => grads.w1_blocks[bi][e],
                        1 => grads.b1[e],
                        2 => {
                            let (w, b) = &grads.hidden[bi];
                            if e < w.len() {
                                w[e]
                            } else {
                                b[e - w.len()]
                            }
                        }
                        3 => grads.wo_blocks[bi][e],
                        _ => grads.bo_blocks[bi][e],
                    };
                    let denom = fd.abs().max(an.abs()).max(1e-8);
                    assert!(
                        (fd - an).abs() / denom < 1e-5,
                        "kind {kind} block {bi} elem {e}: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            let mut dnn = toy_dnn(20 + seed);
            for k in 0..3 {
                check_gradients(&mut dnn, k, 100 + seed * 3 + k as u64);
            }
        }
    }

    #[test]
    fn parameter_counts() {
        let map = toy_map();
        let dnn = toy_dnn(0);
        // Hand count: W1 4×5 + b1 4 + W2 3×4 + b2 3 + Wo 8×3 + bo 8 = 71.
        assert_eq!(dnn.param_count(), 71);
        assert_eq!(param_count_unified(&map, &[4, 3]), 71);
        // Separate: per k, 4·in + 4 + 12 + 3 + out·3 + out.
        let sep: usize = [(2, 3), (4, 5), (5, 8)]
            .iter()
            .map(|&(i, o)| 4 * i + 4 + 15 + 4 * o)
            .sum();
        assert_eq!(param_count_separate(&map, &[4, 3]), sep);
        // Single network: both counts agree.
        let one = SlotMap {
            in_len: vec![5],
            out_len: vec![8],
        };
        assert_eq!(param_count_unified(&one, &[4, 3]), param_count_separate(&one, &[4, 3]));
        // The unified model costs no more parameters than one net for the
        // largest member alone — blocks partition the same matrices — while
        // the separate ensemble pays for every member.
        assert_eq!(param_count_unified(&map, &[4, 3]), param_count_unified(&one, &[4, 3]));
        assert!(param_count_separate(&map, &[4, 3]) > param_count_unified(&map, &[4, 3]));
    }

    #[test]
    fn init_limits_respected() {
        let dnn = toy_dnn(13);
        // Input block 1 serves network 1 (fan-in 4): limit sqrt(6/4).
        let lim = (6.0_f64 / 4.0).sqrt();
        for v in dnn.w1_blocks[1].iter() {
            assert!(v.abs() <= lim);
        }
        assert!(dnn.b1.iter().all(|&v| v == 0.0));
        for (_, b) in &dnn.hidden {
            assert!(b.iter().all(|&v| v == 0.0));
        }
        for b in &dnn.bo_blocks {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }
}
