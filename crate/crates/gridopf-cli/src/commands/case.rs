//! `gridopf case` — validate, dump, or reduce a single case file.

use crate::config::{CliError, CliResult};
use crate::{CaseAction, CaseArgs};
use gridopf::grid::{derive_subnetwork, parse_case, write_case, NetworkCase};
use std::path::Path;

fn load(path: &Path) -> CliResult<NetworkCase> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("case file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    parse_case(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub fn run(args: CaseArgs) -> CliResult<()> {
    match args.action {
        CaseAction::Validate { file } => {
            let case = load(&file)?;
            println!(
                "{}: {} buses, {} generators, {} branches, {} load buses, slack at bus {}",
                case.name,
                case.n_bus(),
                case.n_gen(),
                case.n_branch(),
                case.load_slots().len(),
                case.buses[case.slack()].id,
            );
            Ok(())
        }
        CaseAction::Dump { file, output } => {
            let case = load(&file)?;
            let json = serde_json::to_string_pretty(&case)
                .map_err(|e| CliError::Domain(e.to_string()))?;
            match output {
                Some(path) => {
                    std::fs::write(&path, json + "\n")?;
                    println!("wrote {}", path.display());
                }
                None => println!("{json}"),
            }
            Ok(())
        }
        CaseAction::Derive { file, target, output } => {
            let case = load(&file)?;
            let sub = derive_subnetwork(&case, target)?;
            std::fs::write(&output, write_case(&sub))?;
            println!(
                "wrote {} ({} buses, {} generators, {} branches)",
                output.display(),
                sub.n_bus(),
                sub.n_gen(),
                sub.n_branch(),
            );
            Ok(())
        }
    }
}
