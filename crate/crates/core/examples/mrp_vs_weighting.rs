//! Weighting adjustment and multilevel regression with post-stratification
//! side by side on simulated rNPS responses.
//!
//! ```text
//! cargo run --release --example mrp_vs_weighting
//! ```

use pabs_survey::estimators::mrp::DEFAULT_LAMBDA_GRID;
use pabs_survey::estimators::{
    build_strata, choose_lambda, fit_propensity, mrp_estimate, weighting_adjust, DesignSpec,
};
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

    let variables = ["activity", "job_seeking", "premium", "tenure"];
    let design = DesignSpec::main_effects(&table, &variables)?;
    let subsets: Vec<_> = responses
        .countries()
        .iter()
        .map(|c| responses.subset(c))
        .collect();
    let refs: Vec<_> = subsets.iter().collect();
    let choice = choose_lambda(&refs, &design, &DEFAULT_LAMBDA_GRID, 5)?;
    println!("5-fold CV deviance by ridge penalty:");
    for (lambda, deviance) in &choice.path {
        println!("  {lambda:>8.0e}  {deviance:.1}");
    }
    println!(
        "chosen {:.0e}; design columns {:?}\n",
        choice.lambda,
        design.labels()
    );

    println!("country  n      truth   weighting        MRP     diff");
    for subset in &subsets {
        let country = &subset.responses[0].country;
        let strata = build_strata(subset, &table, &["activity", "job_seeking"], country)?;
        let w = weighting_adjust(subset, &strata, country)?;
        let model = fit_propensity(subset, &design, choice.lambda)?;
        let m = mrp_estimate(&model, &table, country)?;
        println!(
            "{country:<8} {:<6} {:>6.2}  {:>6.2} +/- {:.2}  {:>6.2}  {:+.2}",
            subset.responses.len(),
            population.true_nps(Some(country), 0.0),
            w.nps,
            w.margin,
            m.nps,
            m.nps - w.nps
        );
    }
    Ok(())
}
