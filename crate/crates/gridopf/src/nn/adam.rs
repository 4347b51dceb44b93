//! Adam optimizer over the block-structured parameter set.
//!
//! Moment accumulators mirror every parameter block of the model. One
//! [`adam_step`] call advances the shared step counter once and updates
//! exactly the blocks present in the gradient set; all other blocks — and
//! their moments — are left bit-identical.

use super::{ElasticDnn, GradientSet};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// First/second moment estimates for every parameter block, plus the shared
/// step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m_w1: Vec<DMatrix<f64>>,
    v_w1: Vec<DMatrix<f64>>,
    m_b1: DVector<f64>,
    v_b1: DVector<f64>,
    m_hidden: Vec<(DMatrix<f64>, DVector<f64>)>,
    v_hidden: Vec<(DMatrix<f64>, DVector<f64>)>,
    m_wo: Vec<DMatrix<f64>>,
    v_wo: Vec<DMatrix<f64>>,
    m_bo: Vec<DVector<f64>>,
    v_bo: Vec<DVector<f64>>,
}

impl AdamState {
    /// Zero-initialized moments shaped like `dnn`'s parameters.
    pub fn new(dnn: &ElasticDnn) -> Self {
        let zeros_like = |ms: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
            ms.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect()
        };
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m_w1: zeros_like(&dnn.w1_blocks),
            v_w1: zeros_like(&dnn.w1_blocks),
            m_b1: DVector::zeros(dnn.b1.len()),
            v_b1: DVector::zeros(dnn.b1.len()),
            m_hidden: dnn
                .hidden
                .iter()
                .map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len())))
                .collect(),
            v_hidden: dnn
                .hidden
                .iter()
                .map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len())))
                .collect(),
            m_wo: zeros_like(&dnn.wo_blocks),
            v_wo: zeros_like(&dnn.wo_blocks),
            m_bo: dnn.bo_blocks.iter().map(|b| DVector::zeros(b.len())).collect(),
            v_bo: dnn.bo_blocks.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }
}

/// Updates one flat parameter slice in place.
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    state: (f64, f64, f64),
    lr_bc: (f64, f64, f64),
) {
    let (beta1, beta2, eps) = state;
    let (lr, bc1, bc2) = lr_bc;
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// One Adam update with learning rate `lr`, touching only the blocks in
/// `grads` (input/output blocks `0..=grads.network` plus the trunk).
pub fn adam_step(
    dnn: &mut ElasticDnn,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let k = grads.network;
    if k >= dnn.n_networks()
        || grads.w1_blocks.len() != k + 1
        || grads.wo_blocks.len() != k + 1
        || grads.bo_blocks.len() != k + 1
        || grads.hidden.len() != dnn.hidden.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "gradient set for network {k} does not match the model layout"
        )));
    }
    for (g, p) in grads.w1_blocks.iter().zip(&dnn.w1_blocks) {
        if g.shape() != p.shape() {
            return Err(Error::ShapeMismatch(format!(
                "input block: {:?} vs {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    for (g, p) in grads.wo_blocks.iter().zip(&dnn.wo_blocks) {
        if g.shape() != p.shape() {
            return Err(Error::ShapeMismatch(format!(
                "output block: {:?} vs {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    for ((gw, gb), (pw, pb)) in grads.hidden.iter().zip(&dnn.hidden) {
        if gw.shape() != pw.shape() || gb.len() != pb.len() {
            return Err(Error::ShapeMismatch("trunk layer".into()));
        }
    }
    if grads.b1.len() != dnn.b1.len() {
        return Err(Error::ShapeMismatch("first-layer bias".into()));
    }

    state.step += 1;
    let consts = (state.beta1, state.beta2, state.epsilon);
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let lr_bc = (lr, bc1, bc2);

    for i in 0..=k {
        update_slice(
            dnn.w1_blocks[i].as_mut_slice(),
            grads.w1_blocks[i].as_slice(),
            state.m_w1[i].as_mut_slice(),
            state.v_w1[i].as_mut_slice(),
            consts,
            lr_bc,
        );
        update_slice(
            dnn.wo_blocks[i].as_mut_slice(),
            grads.wo_blocks[i].as_slice(),
            state.m_wo[i].as_mut_slice(),
            state.v_wo[i].as_mut_slice(),
            consts,
            lr_bc,
        );
        update_slice(
            dnn.bo_blocks[i].as_mut_slice(),
            grads.bo_blocks[i].as_slice(),
            state.m_bo[i].as_mut_slice(),
            state.v_bo[i].as_mut_slice(),
            consts,
            lr_bc,
        );
    }
    update_slice(
        dnn.b1.as_mut_slice(),
        grads.b1.as_slice(),
        state.m_b1.as_mut_slice(),
        state.v_b1.as_mut_slice(),
        consts,
        lr_bc,
    );
    for i in 0..dnn.hidden.len() {
        update_slice(
            dnn.hidden[i].0.as_mut_slice(),
            grads.hidden[i].0.as_slice(),
            state.m_hidden[i].0.as_mut_slice(),
            state.v_hidden[i].0.as_mut_slice(),
            consts,
            lr_bc,
        );
        update_slice(
            dnn.hidden[i].1.as_mut_slice(),
            grads.hidden[i].1.as_slice(),
            state.m_hidden[i].1.as_mut_slice(),
            state.v_hidden[i].1.as_mut_slice(),
            consts,
            lr_bc,
        );
    }
    Ok(())
}
