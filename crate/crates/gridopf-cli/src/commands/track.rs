//! `gridopf track` — replay the daily schedule against a trained model and
//! write the per-slot cost comparison as `tracking.csv`.
//!
//! Each slot's held-out trajectory point carries its oracle label from
//! generation; the model predicts the same loading, and the row records
//! both costs plus the relative gap.

use crate::config::{CliError, CliResult, RunConfig};
use crate::TrackArgs;
use gridopf::dataset::{read_dataset, read_schedule};
use gridopf::eval::{predict_records, render_tracking_csv, tracking_rows};
use gridopf::grid::build_admittance;
use gridopf::nn::load_checkpoint;

pub fn run(args: TrackArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config)?;
    let data_dir = super::resolve_data(args.data, &cfg.output_dir);
    let out_path = args
        .out
        .unwrap_or_else(|| cfg.output_dir.join("tracking.csv"));
    let schedule_path = args
        .schedule
        .unwrap_or_else(|| data_dir.join("schedule.json"));
    let ckpt = args
        .checkpoint
        .unwrap_or_else(|| cfg.output_dir.join("checkpoint.json"));

    let cases = cfg.load_cases()?;
    let ds = super::with_path("dataset", &data_dir, read_dataset(&data_dir))?;
    let schedule = super::with_path("schedule", &schedule_path, read_schedule(&schedule_path))?;
    let bundle = super::with_path("checkpoint", &ckpt, load_checkpoint(&ckpt))?;
    let names: Vec<String> = ds.networks.iter().map(|n| n.name.clone()).collect();
    if bundle.network_names != names {
        return Err(CliError::Domain(format!(
            "checkpoint networks [{}] do not match dataset networks [{}]",
            bundle.network_names.join(", "),
            names.join(", ")
        )));
    }

    let segments = schedule.segments();
    if segments.len() != names.len() {
        return Err(CliError::Domain(format!(
            "schedule covers {} networks but the dataset has {}",
            segments.len(),
            names.len()
        )));
    }

    // Predict each network's whole segment in one pass, then flatten back
    // to slot order (segments are contiguous and in network order).
    let mut oracle = Vec::with_capacity(schedule.slots.len());
    let mut predicted = Vec::with_capacity(schedule.slots.len());
    for (k, data) in ds.networks.iter().enumerate() {
        if data.test.len() != segments[k].len() {
            return Err(CliError::Domain(format!(
                "network {} holds {} trajectory points but its segment has {} slots",
                data.name,
                data.test.len(),
                segments[k].len()
            )));
        }
        let case = super::case_by_name(&cases, &data.name)?;
        let y = build_admittance(case)?;
        let preds = predict_records(case, &y, &bundle.dnn, &bundle.scaler, k, &data.test, false)?;
        oracle.extend(data.test.iter().map(|r| r.objective));
        predicted.extend(preds.iter().map(|p| p.objective));
    }

    let rows = tracking_rows(&schedule, &names, &oracle, &predicted)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&out_path, render_tracking_csv(&rows))?;

    let n = rows.len() as f64;
    let mean_gap = rows.iter().map(|r| r.gap_percent).sum::<f64>() / n;
    let max_gap = rows.iter().map(|r| r.gap_percent).fold(0.0, f64::max);
    let within = rows.iter().filter(|r| r.gap_percent < 2.0).count();
    println!(
        "{} slots: mean gap {:.3}%, max gap {:.3}%, {:.1}% of slots within 2%",
        rows.len(),
        mean_gap,
        max_gap,
        100.0 * within as f64 / n
    );
    println!("wrote {}", out_path.display());
    Ok(())
}
