//! `gridopf gendata` — sample loads, label them with the oracle, and write
//! the train/test dataset (or, with `--tracking`, the daily-trajectory
//! dataset plus its slot schedule).

use crate::config::{CliError, CliResult, RunConfig};
use crate::GendataArgs;
use gridopf::dataset::{
    daily_profile, generate_dataset, generate_tracking_dataset, write_dataset, write_schedule,
    GenOptions,
};
use gridopf::grid::NetworkCase;
use gridopf::opf::OpfOptions;

pub fn run(args: GendataArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config)?;
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        gridopf::par::configure_jobs(jobs);
    }
    let out_dir = super::resolve_out(args.out, &cfg.output_dir);
    let data_dir = out_dir.join("data");
    let cases = cfg.load_cases()?;
    let refs: Vec<&NetworkCase> = cases.iter().collect();
    let sampling = cfg.sampling()?;
    let seed = args.seed.unwrap_or(sampling.seed);
    let opts = GenOptions {
        range: sampling.range,
        opf: OpfOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter },
        timing: !args.no_provenance,
        timestamp: !args.no_provenance,
    };

    let dataset = if args.tracking {
        let tr = &cfg.tracking;
        let profile = daily_profile(tr.swing, tr.slots);
        let (dataset, schedule) =
            generate_tracking_dataset(&refs, &profile, tr.per_slot, seed, &opts)?;
        write_dataset(&dataset, &data_dir)?;
        write_schedule(&schedule, &data_dir.join("schedule.json"))?;
        println!(
            "tracking day: {} slots over {} networks, swing {}",
            tr.slots,
            refs.len(),
            tr.swing
        );
        dataset
    } else {
        let n = args.n.unwrap_or(sampling.n_per_network);
        let dataset = generate_dataset(&refs, n, sampling.split_fraction, seed, &opts)?;
        write_dataset(&dataset, &data_dir)?;
        dataset
    };

    for (net, failures) in dataset.networks.iter().zip(&dataset.provenance.failures) {
        println!(
            "{}: {} train / {} test samples ({} oracle failures dropped)",
            net.name,
            net.train.len(),
            net.test.len(),
            failures
        );
    }
    println!("wrote {}", data_dir.display());
    Ok(())
}
