//! Refinement tables for the discrete Ito and Ito-Ventzell identities,
//! with and without a deliberate sign error.

use gbdsde::acceptance::{min_reduction, residual_studies};
use gbdsde::calculus::Mutation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let studies = residual_studies(5, 200)?;
    for (name, mutation, rows) in &studies {
        let tag = if *mutation == Mutation::None { String::new() } else { format!(" [{mutation:?}]") };
        println!("{name}{tag}");
        for r in rows {
            println!("  dt = {:.2e}  rms = {:.3e}  max = {:.3e}", r.dt, r.rms_residual, r.max_residual);
        }
        println!("  smallest reduction per 4x refinement: {:.2}", min_reduction(rows));
    }
    Ok(())
}
