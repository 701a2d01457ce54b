//! Load the shipped experiment config and run two suites on it, as the
//! command-line tool does.

use gbdsde::config::{ExperimentConfig, SuiteName};
use gbdsde::suite::{run_suite, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml_str(include_str!("../configs/default.toml"))?;
    let out = std::env::temp_dir().join("gbdsde-config-suite");
    for suite in [SuiteName::SolveBdsde, SuiteName::VerifyFlow] {
        let overrides = Overrides {
            suite: Some(suite),
            out_dir: Some(out.join(suite.as_str())),
            scenarios: Some(2_000),
            dt: Some(0.02),
            ..Default::default()
        };
        let outcome = run_suite(&cfg, &overrides)?;
        for r in &outcome.results {
            println!("{}", r.line());
        }
        println!("{}: {} ({})", suite.as_str(), if outcome.pass { "PASS" } else { "FAIL" }, outcome.report.display());
    }
    Ok(())
}
