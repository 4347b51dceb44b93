//! `gridopf train` — fit the voltage surrogate on a generated dataset.
//!
//! The default mode trains the single shared model over every network in
//! the dataset and writes `checkpoint.json` plus a per-epoch `history.csv`.
//! `--separate` instead fits one standalone model per network (the storage
//! baseline), writing `checkpoint_<name>.json` / `history_<name>.csv` each.
//! `--resume` continues a shared-model run: the learning-rate decay and
//! shuffle streams pick up exactly where the checkpoint stopped. The
//! checkpoint stores weights only, so the optimizer's moment estimates
//! restart fresh — expect a brief warm-up transient, not bit-identity with
//! an uninterrupted run.

use crate::config::{CliError, CliResult, RunConfig, TrainCfg};
use crate::TrainArgs;
use gridopf::dataset::{read_dataset, to_tensors, Scaler};
use gridopf::nn::{
    init_elastic_dnn, load_checkpoint, save_checkpoint, train_incremental, CheckpointBundle,
    SlotMap, TrainConfig, TrainHistory, TrainSet,
};
use std::fmt::Write as _;
use std::path::Path;

fn train_config(cfg: &TrainCfg, seed: u64, epochs: usize, start_epoch: usize) -> TrainConfig {
    TrainConfig {
        alpha: cfg.alpha,
        batch_size: cfg.batch_size,
        epochs,
        gamma: cfg.gamma,
        lr_halving_period: cfg.lr_halving_period,
        seed,
        schedule: cfg.schedule,
        start_epoch,
    }
}

/// Appends history rows as CSV, writing the header only for a new file.
fn write_history(path: &Path, history: &TrainHistory, names: &[String]) -> CliResult<()> {
    let fresh = !path.is_file() || std::fs::metadata(path)?.len() == 0;
    let mut out = String::new();
    if fresh {
        out.push_str("epoch,lr");
        for n in names {
            write!(out, ",train_{n}").unwrap();
        }
        for n in names {
            write!(out, ",test_{n}").unwrap();
        }
        out.push('\n');
    }
    for r in &history.records {
        write!(out, "{},{}", r.epoch, r.lr).unwrap();
        for v in r.train_loss.iter().chain(&r.test_loss) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    use std::io::Write as _;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn print_summary(name: &str, history: &TrainHistory, names: &[String]) {
    if let Some(last) = history.records.last() {
        let tests: Vec<String> = names
            .iter()
            .zip(&last.test_loss)
            .map(|(n, v)| format!("{n}={v:.6}"))
            .collect();
        println!(
            "{name}: epoch {} done, lr {:.2e}, test loss {}",
            last.epoch,
            last.lr,
            tests.join(" ")
        );
    }
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config)?;
    let tcfg = cfg.train()?;
    let out_dir = super::resolve_out(args.out, &cfg.output_dir);
    let data_dir = super::resolve_data(args.data, &out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let ds = super::with_path("dataset", &data_dir, read_dataset(&data_dir))?;
    let map = ds.slot_map()?;
    let tensors = to_tensors(&ds)?;
    let names: Vec<String> = ds.networks.iter().map(|n| n.name.clone()).collect();
    let seed = args.seed.unwrap_or(tcfg.seed);
    let epochs = args.epochs.unwrap_or(tcfg.epochs);

    if args.separate {
        for (k, name) in names.iter().enumerate() {
            let sub_map = SlotMap {
                in_len: vec![map.in_len[k]],
                out_len: vec![map.out_len[k]],
            };
            // Disjoint seeds per network so the runs are independent yet
            // reproducible from the one configured seed.
            let sub_seed = seed.wrapping_add(k as u64);
            let mut dnn = init_elastic_dnn(sub_map, &tcfg.hidden_dims, sub_seed)?;
            let sub = TrainSet { networks: vec![tensors.networks[k].clone()] };
            let tc = train_config(tcfg, sub_seed, epochs, 0);
            let history = train_incremental(&mut dnn, &sub, &tc)?;
            let bundle = CheckpointBundle {
                dnn,
                scaler: Scaler { networks: vec![ds.scaler.networks[k].clone()] },
                network_names: vec![name.clone()],
                train_seed: sub_seed,
                epochs_trained: epochs,
            };
            let ckpt = out_dir.join(format!("checkpoint_{name}.json"));
            let bytes = save_checkpoint(&bundle, &ckpt)?;
            let sub_names = vec![name.clone()];
            write_history(&out_dir.join(format!("history_{name}.csv")), &history, &sub_names)?;
            print_summary(name, &history, &sub_names);
            println!("wrote {} ({bytes} bytes)", ckpt.display());
        }
        return Ok(());
    }

    let (mut dnn, start_epoch) = match &args.resume {
        Some(path) => {
            let bundle = super::with_path("checkpoint", path, load_checkpoint(path))?;
            if bundle.network_names != names {
                return Err(CliError::Domain(format!(
                    "checkpoint networks [{}] do not match dataset networks [{}]",
                    bundle.network_names.join(", "),
                    names.join(", ")
                )));
            }
            if bundle.dnn.hidden_dims != tcfg.hidden_dims {
                return Err(CliError::Domain(format!(
                    "checkpoint hidden widths {:?} do not match train.hidden_dims {:?}",
                    bundle.dnn.hidden_dims, tcfg.hidden_dims
                )));
            }
            (bundle.dnn, bundle.epochs_trained)
        }
        None => (init_elastic_dnn(map, &tcfg.hidden_dims, seed)?, 0),
    };

    let tc = train_config(tcfg, seed, epochs, start_epoch);
    let history = train_incremental(&mut dnn, &tensors, &tc)?;
    let bundle = CheckpointBundle {
        dnn,
        scaler: ds.scaler.clone(),
        network_names: names.clone(),
        train_seed: seed,
        epochs_trained: start_epoch + epochs,
    };
    let ckpt = out_dir.join("checkpoint.json");
    let bytes = save_checkpoint(&bundle, &ckpt)?;
    write_history(&out_dir.join("history.csv"), &history, &names)?;
    print_summary("unified", &history, &names);
    println!("wrote {} ({bytes} bytes)", ckpt.display());
    Ok(())
}
