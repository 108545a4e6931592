//! Weekly in-product NPS from the rotating weekly bucket, with a product
//! change that lowers NPS by 15 points from week 26.
//!
//! ```text
//! cargo run --release --example weekly_monitoring
//! ```

use pabs_survey::sim::{
    generate_population, run, weekly_report, NpsStep, PopulationSpec, RunConfig, WeeklyOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let population = generate_population(&PopulationSpec::default())?;
    let config = RunConfig {
        nps_step: Some(NpsStep {
            day: 26 * 7,
            shift: -15.0,
        }),
        ..RunConfig::default()
    };
    let log = run(&config, &population)?;
    let options = WeeklyOptions::default();
    let series = weekly_report(&log, &population, &options)?;

    println!(
        "week  n     NPS     margin  dropped  (weighted on {})",
        options.variables.join(" + ")
    );
    for p in &series {
        let bar = p
            .nps
            .map(|v| "#".repeat(((v + 20.0).max(0.0) / 2.0) as usize))
            .unwrap_or_default();
        match (p.nps, p.margin) {
            (Some(nps), Some(margin)) => println!(
                "{:>4}  {:<5} {nps:>6.1}  {margin:>6.1}  {:>6.1}%  {bar}",
                p.week,
                p.respondents,
                100.0 * p.dropped_fraction
            ),
            _ => println!("{:>4}  {:<5} (no usable responses)", p.week, p.respondents),
        }
    }
    let mean = |lo: u32, hi: u32| {
        let xs: Vec<f64> = series
            .iter()
            .filter(|p| p.week >= lo && p.week < hi)
            .filter_map(|p| p.nps)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    println!(
        "\nmean before week 26 {:.2}, after {:.2}; population truth {:.2} -> {:.2}",
        mean(0, 26),
        mean(26, 52),
        population.true_nps(None, 0.0),
        population.true_nps(None, -15.0)
    );
    Ok(())
}
