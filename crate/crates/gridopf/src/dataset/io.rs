//! On-disk dataset layout.
//!
//! A dataset directory holds one `<name>.train.jsonl` and one
//! `<name>.test.jsonl` per network (one [`SampleRecord`] JSON object per
//! line) plus a `manifest.json` with the network list, scaler, and
//! provenance. Tracking runs add a `schedule.json`. All writers are
//! deterministic: identical datasets serialize to identical bytes.

use super::{Dataset, NetworkData, Provenance, SampleRecord, Scaler, TrackingSchedule};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestNetwork {
    name: String,
    n_train: usize,
    n_test: usize,
    /// Input width (twice the load-bus count).
    in_len: usize,
    /// Output width (twice the bus count).
    out_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    networks: Vec<ManifestNetwork>,
    scaler: Scaler,
    provenance: Provenance,
}

fn record_dims(records: &[SampleRecord]) -> (usize, usize) {
    records
        .first()
        .map(|r| (2 * r.loads_p.len(), 2 * r.vm.len()))
        .unwrap_or((0, 0))
}

fn write_jsonl(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl(path: &Path) -> Result<Vec<SampleRecord>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::CorruptFile(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// Writes the per-network JSONL files and the manifest into `dir`
/// (created if missing).
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut networks = Vec::with_capacity(dataset.networks.len());
    for net in &dataset.networks {
        write_jsonl(&dir.join(format!("{}.train.jsonl", net.name)), &net.train)?;
        write_jsonl(&dir.join(format!("{}.test.jsonl", net.name)), &net.test)?;
        let (in_len, out_len) = record_dims(if net.train.is_empty() { &net.test } else { &net.train });
        networks.push(ManifestNetwork {
            name: net.name.clone(),
            n_train: net.train.len(),
            n_test: net.test.len(),
            in_len,
            out_len,
        });
    }
    let manifest = Manifest {
        networks,
        scaler: dataset.scaler.clone(),
        provenance: dataset.provenance.clone(),
    };
    let mut w = BufWriter::new(std::fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)
        .map_err(|e| Error::CorruptFile(format!("manifest: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_reader(BufReader::new(
        std::fs::File::open(&manifest_path)?,
    ))
    .map_err(|e| Error::CorruptFile(format!("{}: {e}", manifest_path.display())))?;
    let mut networks = Vec::with_capacity(manifest.networks.len());
    for m in &manifest.networks {
        let train = read_jsonl(&dir.join(format!("{}.train.jsonl", m.name)))?;
        let test = read_jsonl(&dir.join(format!("{}.test.jsonl", m.name)))?;
        if train.len() != m.n_train || test.len() != m.n_test {
            return Err(Error::CorruptFile(format!(
                "{}: manifest promises {}/{} samples, files hold {}/{}",
                m.name,
                m.n_train,
                m.n_test,
                train.len(),
                test.len()
            )));
        }
        networks.push(NetworkData {
            name: m.name.clone(),
            train,
            test,
        });
    }
    Ok(Dataset {
        networks,
        scaler: manifest.scaler,
        provenance: manifest.provenance,
    })
}

/// Writes the tracking slot schedule next to the dataset files.
pub fn write_schedule(schedule: &TrackingSchedule, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, schedule)
        .map_err(|e| Error::CorruptFile(format!("schedule: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_schedule(path: &Path) -> Result<TrackingSchedule> {
    serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, GenOptions};
    use crate::grid::parse_case;

    fn case9() -> crate::grid::NetworkCase {
        let path = format!("{}/../../cases/case9.m", env!("CARGO_MANIFEST_DIR"));
        parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let case = case9();
        let opts = GenOptions { timing: false, timestamp: false, ..GenOptions::default() };
        let ds = generate_dataset(&[&case], 8, 0.75, 11, &opts).unwrap();
        let dir = std::env::temp_dir().join(format!("gridopf-io-{}", std::process::id()));
        write_dataset(&ds, &dir).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(ds, back);
        // Writing again produces byte-identical files.
        let bytes_a = std::fs::read(dir.join("case9.train.jsonl")).unwrap();
        let manifest_a = std::fs::read(dir.join("manifest.json")).unwrap();
        write_dataset(&back, &dir).unwrap();
        assert_eq!(bytes_a, std::fs::read(dir.join("case9.train.jsonl")).unwrap());
        assert_eq!(manifest_a, std::fs::read(dir.join("manifest.json")).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncated_manifest_is_a_corrupt_file() {
        let dir = std::env::temp_dir().join(format!("gridopf-io-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("manifest.json"), b"{\"networks\": [").unwrap();
        assert!(matches!(read_dataset(&dir), Err(Error::CorruptFile(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
