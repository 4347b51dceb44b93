//! Versioned JSON checkpoints.
//!
//! A checkpoint bundles the model parameters (flattened row-major in
//! declared block order), the data scaler, the network names, and seed/epoch
//! provenance. Serialization uses shortest-round-trip decimal floats, so a
//! save/load cycle reproduces every parameter bit-exactly and identical
//! models produce identical files.

use super::{ElasticDnn, SlotMap};
use crate::dataset::Scaler;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to run or resume a trained model.
#[derive(Debug, Clone)]
pub struct CheckpointBundle {
    pub dnn: ElasticDnn,
    pub scaler: Scaler,
    /// Case names in network registration order.
    pub network_names: Vec<String>,
    /// Seed of the training shuffles (for provenance only).
    pub train_seed: u64,
    /// Total epochs the parameters have been trained for.
    pub epochs_trained: usize,
}

#[derive(Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixData {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::CorruptFile(format!(
                "matrix block claims {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    network_names: Vec<String>,
    slot_map: SlotMap,
    hidden_dims: Vec<usize>,
    init_seed: u64,
    train_seed: u64,
    epochs_trained: usize,
    w1_blocks: Vec<MatrixData>,
    b1: Vec<f64>,
    hidden: Vec<(MatrixData, Vec<f64>)>,
    wo_blocks: Vec<MatrixData>,
    bo_blocks: Vec<Vec<f64>>,
    scaler: Scaler,
}

/// Writes the bundle to `path`; returns the file size in bytes.
pub fn save_checkpoint(bundle: &CheckpointBundle, path: &Path) -> Result<u64> {
    let dnn = &bundle.dnn;
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        network_names: bundle.network_names.clone(),
        slot_map: dnn.slot_map.clone(),
        hidden_dims: dnn.hidden_dims.clone(),
        init_seed: dnn.init_seed,
        train_seed: bundle.train_seed,
        epochs_trained: bundle.epochs_trained,
        w1_blocks: dnn.w1_blocks.iter().map(MatrixData::from_matrix).collect(),
        b1: dnn.b1.as_slice().to_vec(),
        hidden: dnn
            .hidden
            .iter()
            .map(|(w, b)| (MatrixData::from_matrix(w), b.as_slice().to_vec()))
            .collect(),
        wo_blocks: dnn.wo_blocks.iter().map(MatrixData::from_matrix).collect(),
        bo_blocks: dnn.bo_blocks.iter().map(|b| b.as_slice().to_vec()).collect(),
        scaler: bundle.scaler.clone(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &file)
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(std::fs::metadata(path)?.len())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<CheckpointBundle> {
    let f: CheckpointFile =
        serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))
            .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    if f.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: f.format_version,
            supported: CHECKPOINT_VERSION,
        });
    }
    f.slot_map.validate()?;
    let k = f.slot_map.n_networks();
    if f.w1_blocks.len() != k || f.wo_blocks.len() != k || f.bo_blocks.len() != k {
        return Err(Error::CorruptFile(format!(
            "{} networks declared but block counts differ",
            k
        )));
    }
    if f.hidden.len() + 1 != f.hidden_dims.len() {
        return Err(Error::CorruptFile("trunk depth does not match hidden_dims".into()));
    }
    let w1_blocks = f.w1_blocks.iter().map(MatrixData::to_matrix).collect::<Result<Vec<_>>>()?;
    let wo_blocks = f.wo_blocks.iter().map(MatrixData::to_matrix).collect::<Result<Vec<_>>>()?;
    let hidden = f
        .hidden
        .iter()
        .map(|(w, b)| Ok((w.to_matrix()?, DVector::from_column_slice(b))))
        .collect::<Result<Vec<_>>>()?;
    let dnn = ElasticDnn {
        slot_map: f.slot_map,
        hidden_dims: f.hidden_dims,
        w1_blocks,
        b1: DVector::from_column_slice(&f.b1),
        hidden,
        wo_blocks,
        bo_blocks: f.bo_blocks.iter().map(|b| DVector::from_column_slice(b)).collect(),
        init_seed: f.init_seed,
    };
    // Shape audit so a mangled file cannot produce a silently skewed model.
    for (kk, block) in dnn.w1_blocks.iter().enumerate() {
        if block.nrows() != dnn.hidden_dims[0]
            || block.ncols() != dnn.slot_map.input_increment(kk)
        {
            return Err(Error::CorruptFile(format!("input block {kk} has wrong shape")));
        }
    }
    for (kk, block) in dnn.wo_blocks.iter().enumerate() {
        if block.ncols() != *dnn.hidden_dims.last().unwrap()
            || block.nrows() != dnn.slot_map.output_increment(kk)
            || dnn.bo_blocks[kk].len() != block.nrows()
        {
            return Err(Error::CorruptFile(format!("output block {kk} has wrong shape")));
        }
    }
    Ok(CheckpointBundle {
        dnn,
        scaler: f.scaler,
        network_names: f.network_names,
        train_seed: f.train_seed,
        epochs_trained: f.epochs_trained,
    })
}
