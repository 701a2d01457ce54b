//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//!
//! `GBDSDE_CRITERIA=3,5` restricts the run; `GBDSDE_ACCEPTANCE_OUT` keeps
//! the per-criterion CSVs (a temporary directory is used otherwise).

use std::path::PathBuf;
use std::process::ExitCode;

use gbdsde::acceptance::{run_acceptance, Context};

const SEED: u64 = 20240601;

fn main() -> ExitCode {
    let ids: Vec<u32> = std::env::var("GBDSDE_CRITERIA")
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out_dir = std::env::var_os("GBDSDE_ACCEPTANCE_OUT").map(PathBuf::from).unwrap_or_else(|| tmp.path().into());
    let ctx = Context { seed: SEED, out_dir };

    let mut failed = 0;
    let outcomes = run_acceptance(&ctx, &ids, |o| {
        println!("{}", o.line());
        for r in o.results.iter().filter(|r| !r.pass) {
            println!("    {}", r.line());
        }
    });
    match outcomes {
        Ok(outcomes) => {
            failed += outcomes.iter().filter(|o| !o.pass()).count();
            println!("acceptance: {} of {} criteria passed", outcomes.len() - failed, outcomes.len());
        }
        Err(e) => {
            println!("acceptance: aborted: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
