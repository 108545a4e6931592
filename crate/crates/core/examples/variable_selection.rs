//! Choosing adjustment variables: the pair of weighting variables that moves
//! the estimate most, and forward stepwise selection of MRP covariates.
//!
//! ```text
//! cargo run --release --example variable_selection
//! ```

use pabs_survey::estimators::{select_weighting_variables, stepwise_select, Criterion};
use pabs_survey::sim::{
    generate_population, run, Channel, PopulationSpec, RunConfig, SyntheticPopulation,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let population: SyntheticPopulation = generate_population(&PopulationSpec::default())?;
    let config = RunConfig::default();
    let log = run(&config, &population)?;
    let rnps = config.rnps_program;
    let responses = log.response_set(&population, false, |r| {
        r.channel == Channel::Email && r.program == rnps
    })?;
    let table = population.population_table(false);
    let candidates = ["activity", "job_seeking", "premium", "tenure"];

    for country in responses.countries() {
        let choice = select_weighting_variables(&candidates, &responses, &table, &country, 2)?;
        println!("{country}: unadjusted {:.2}", choice.unadjusted);
        let mut scored = choice.evaluated.clone();
        scored.sort_by(|a, b| b.shift.total_cmp(&a.shift));
        for c in &scored {
            println!(
                "  {:<22} adjusted {:>6.2}  shift {:>5.2}  margin {:.2}",
                c.variables.join(" + "),
                c.adjusted,
                c.shift,
                c.margin
            );
        }
        println!(
            "  -> {} ({})",
            choice.variables.join(" + "),
            if choice.material {
                "shift exceeds the margin"
            } else {
                "shift within the margin"
            }
        );
    }

    for criterion in [Criterion::Aic, Criterion::Bic] {
        let result = stepwise_select(&candidates, &responses, &table, criterion)?;
        let path: Vec<String> = result.path.iter().map(|v| format!("{v:.1}")).collect();
        println!(
            "\nstepwise {criterion:?}: {:?}\n  criterion path {}",
            result.selected,
            path.join(" -> ")
        );
    }
    Ok(())
}
