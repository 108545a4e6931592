//! A year of surveys on the default synthetic population, then a cool-off
//! audit and a per-country adjustment of the rNPS responses.
//!
//! ```text
//! cargo run --release --example end_to_end_simulation
//! ```

use std::time::Instant;

use pabs_survey::estimators::{adjust, AdjustOptions};
use pabs_survey::sim::{generate_population, run, Channel, PopulationSpec, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let started = Instant::now();
    let population = generate_population(&PopulationSpec::default())?;
    let config = RunConfig::default();
    let log = run(&config, &population)?;
    println!(
        "{} members, {} days: {} sends, {} responses ({:.1?})",
        population.len(),
        config.horizon_days,
        log.sends.len(),
        log.responses.len(),
        started.elapsed()
    );
    let programs = [
        (config.rnps_program, "rNPS"),
        (config.mot.programs[0].program, "MoT 1"),
        (config.mot.programs[1].program, "MoT 2"),
        (config.in_product.program, "in-product"),
    ];
    for (program, label) in programs {
        let sends = log.sends.iter().filter(|s| s.program == program).count();
        let responses = log
            .responses
            .iter()
            .filter(|r| r.program == program)
            .count();
        println!("  {label:<10} sends {sends:>7}  responses {responses:>6}");
    }

    for y in log.mot_yield(&config) {
        println!(
            "  MoT program {}: {:.0} responses a month against {} desired (rate {})",
            y.program.0, y.responses_per_month, y.desired_responses_per_month, y.rate
        );
    }

    for (channel, report) in log.audit(&config.cool_off) {
        println!(
            "audit {:<10} {} sends, {} any-program and {} same-program violations",
            channel.as_str(),
            report.sends_checked,
            report.any_program_violations,
            report.same_program_violations
        );
    }

    let rnps = config.rnps_program;
    let responses = log.response_set(&population, false, |r| {
        r.channel == Channel::Email && r.program == rnps
    })?;
    let report = adjust(
        &responses,
        &population.population_table(false),
        &AdjustOptions::default(),
    )?;
    println!("\ncountry  n      truth   unadj   weight  mrp     margin");
    for c in &report.countries {
        println!(
            "{:<8} {:<6} {:>6.1}  {:>6.1}  {:>6.1}  {:>6.1}  {:>5.1}",
            c.country,
            c.respondents,
            population.true_nps(Some(&c.country), 0.0),
            c.unadjusted,
            c.weighting,
            c.mrp.unwrap_or(f64::NAN),
            c.weighting_margin
        );
    }
    println!(
        "weighting variables: {:?}",
        report
            .countries
            .iter()
            .map(|c| c.weighting_variables.join("+"))
            .collect::<Vec<_>>()
    );
    println!(
        "MRP variables: {:?}, ridge {:?}",
        report.countries[0].mrp_variables, report.lambda
    );
    println!("total {:.1?}", started.elapsed());
    Ok(())
}
