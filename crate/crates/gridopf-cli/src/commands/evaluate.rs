//! `gridopf eval` — score predictions against the oracle labels of the
//! test split and write `metrics.json`.
//!
//! The usual path loads a checkpoint and runs the model; the networks are
//! matched to the dataset by name, so a `--separate` checkpoint (one
//! network) scores just its own slice. `--oracle-as-prediction` instead
//! feeds the oracle's own voltages through the same postprocessing — a
//! pipeline self-check whose cost gap should be ~0 and whose constraint
//! satisfaction should be ~100%.

use crate::config::{CliError, CliResult, RunConfig};
use crate::EvalArgs;
use gridopf::dataset::read_dataset;
use gridopf::eval::{
    evaluate_network, postprocess_prediction, predict_records, storage_comparison, MetricsReport,
    NetworkMetrics, PredictionRecord,
};
use gridopf::grid::build_admittance;
use gridopf::nn::load_checkpoint;

const BYTES_PER_PARAM: usize = 8;

pub fn run(args: EvalArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config)?;
    // Unlike gendata/train, --out here names the report file itself.
    let report_path = args
        .out
        .unwrap_or_else(|| cfg.output_dir.join("metrics.json"));
    let data_dir = super::resolve_data(args.data, &cfg.output_dir);
    let cases = cfg.load_cases()?;
    let ds = super::with_path("dataset", &data_dir, read_dataset(&data_dir))?;
    let tol = args.tol.unwrap_or(cfg.eval.tol);
    let timing = !args.no_provenance;

    let mut networks: Vec<NetworkMetrics> = Vec::new();
    let storage;

    if args.oracle_as_prediction {
        // Architecture for the storage comparison comes from the config
        // since no trained model is involved.
        let tcfg = cfg.train()?;
        for data in &ds.networks {
            let case = super::case_by_name(&cases, &data.name)?;
            let y = build_admittance(case)?;
            let preds: Vec<PredictionRecord> = data
                .test
                .iter()
                .map(|r| {
                    postprocess_prediction(case, &y, &r.vm, &r.va, &r.loads_p, &r.loads_q)
                        .map_err(CliError::from)
                })
                .collect::<CliResult<_>>()?;
            networks.push(evaluate_network(case, &data.test, &preds, tol)?);
        }
        storage = storage_comparison(&ds.slot_map()?, &tcfg.hidden_dims, BYTES_PER_PARAM);
    } else {
        let ckpt = args
            .checkpoint
            .unwrap_or_else(|| cfg.output_dir.join("checkpoint.json"));
        let bundle = super::with_path("checkpoint", &ckpt, load_checkpoint(&ckpt))?;
        for (k, name) in bundle.network_names.iter().enumerate() {
            let data = ds
                .networks
                .iter()
                .find(|d| &d.name == name)
                .ok_or_else(|| {
                    CliError::Domain(format!("checkpoint network {name} not in the dataset"))
                })?;
            let case = super::case_by_name(&cases, name)?;
            let y = build_admittance(case)?;
            let preds =
                predict_records(case, &y, &bundle.dnn, &bundle.scaler, k, &data.test, timing)?;
            networks.push(evaluate_network(case, &data.test, &preds, tol)?);
        }
        storage =
            storage_comparison(&bundle.dnn.slot_map, &bundle.dnn.hidden_dims, BYTES_PER_PARAM);
    }

    let report = MetricsReport::new(networks, storage);
    for m in &report.networks {
        println!(
            "{}: cost gap {:.4}% | V {:.2}% Pg {:.2}% Qg {:.2}% Sl {:.2}% | Pd {:.2}% Qd {:.2}%{}",
            m.name,
            m.eta_opt,
            m.eta_v,
            m.eta_pg,
            m.eta_qg,
            m.eta_sl,
            m.eta_pd,
            m.eta_qd,
            m.speedup.map_or(String::new(), |s| format!(" | speedup {s:.0}x")),
        );
    }
    println!(
        "storage: {} unified vs {} separate parameters (ratio {:.4})",
        report.storage.unified_params, report.storage.separate_params, report.storage.ratio
    );
    if let Some(s) = report.speedup {
        println!("overall speedup: {s:.0}x");
    }
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Domain(e.to_string()))?;
    if let Some(parent) = report_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&report_path, json + "\n")?;
    println!("wrote {}", report_path.display());
    Ok(())
}
