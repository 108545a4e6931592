//! Nonresponse bias when active members answer six times as often, and its
//! removal by post-stratifying on activity.
//!
//! ```text
//! cargo run --release --example nonresponse_weighting
//! ```

use pabs_survey::draw::{keyed_bernoulli, keyed_unit, Stream};
use pabs_survey::estimators::{
    build_strata, nonresponse_bias, unadjusted, weighting_adjust, Population, PopulationCell,
    Response, ResponseSet, Schema,
};
use pabs_survey::hash_alloc::MemberId;

const SEED: u64 = 11;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 400_000u64;
    // (share, response rate, promoter p, detractor p) for active and inactive members
    let segments = [(0.55, 0.0096, 0.55, 0.14), (0.45, 0.0016, 0.45, 0.25)];
    let schema = Schema::categorical(&["active"]);
    let mut counts = [0.0f64; 2];
    let mut coded_sum = [0.0f64; 2];
    let (mut resp_sum, mut resp_n, mut non_sum) = (0.0, 0.0, 0.0);
    let mut responses = Vec::new();
    let mut members = Vec::with_capacity(n as usize);
    for i in 0..n {
        let seg = usize::from(keyed_unit(SEED, Stream::Generic, &[i]) >= segments[0].0);
        let (_, rate, p, q) = segments[seg];
        let u = keyed_unit(SEED, Stream::Score, &[i]);
        let (score, coded) = if u < p {
            (10, 100.0)
        } else if u < p + q {
            (2, -100.0)
        } else {
            (8, 0.0)
        };
        members.push((i, seg, score));
        counts[seg] += 1.0;
        coded_sum[seg] += coded;
        if keyed_bernoulli(SEED, Stream::Response, &[i], rate) {
            resp_sum += coded;
            resp_n += 1.0;
            let active = if seg == 0 { 1.0 } else { 0.0 };
            responses.push(Response::new(MemberId(i), score, "US", vec![active])?);
        } else {
            non_sum += coded;
        }
    }
    let truth = (coded_sum[0] + coded_sum[1]) / n as f64;
    println!(
        "population NPS {truth:.2}: active {:.2}, inactive {:.2}",
        coded_sum[0] / counts[0],
        coded_sum[1] / counts[1]
    );

    let d = nonresponse_bias(
        resp_n / n as f64,
        resp_sum / resp_n,
        non_sum / (n as f64 - resp_n),
    )?;
    println!(
        "response rate {:.3}%: respondent mean {:.2}, nonrespondent mean {:.2}, bias (1-r)(mu_n - mu_r) = {:+.2}",
        100.0 * d.response_rate,
        d.respondent_mean,
        d.nonrespondent_mean,
        d.bias
    );

    let population = Population::new(
        schema.clone(),
        vec![
            PopulationCell {
                country: "US".into(),
                covariates: vec![1.0],
                count: counts[0],
            },
            PopulationCell {
                country: "US".into(),
                covariates: vec![0.0],
                count: counts[1],
            },
        ],
    )?;
    let set = ResponseSet::new(schema.clone(), responses)?;
    let raw = unadjusted(&set.responses)?;
    let strata = build_strata(&set, &population, &["active"], "US")?;
    let adjusted = weighting_adjust(&set, &strata, "US")?;
    println!("\none survey, {} respondents", set.responses.len());
    println!("  unadjusted  {:>6.2} +/- {:.2}", raw.nps, raw.margin);
    println!(
        "  weighted    {:>6.2} +/- {:.2}",
        adjusted.nps, adjusted.margin
    );

    // Repeat the response draw to see bias and interval coverage.
    let reps = 50u64;
    let (mut raw_mean, mut adj_mean, mut raw_cover, mut adj_cover) = (0.0, 0.0, 0, 0);
    for rep in 1..=reps {
        let responses = members
            .iter()
            .filter(|m| keyed_bernoulli(SEED + rep, Stream::Response, &[m.0], segments[m.1].1))
            .map(|m| {
                Response::new(
                    MemberId(m.0),
                    m.2,
                    "US",
                    vec![if m.1 == 0 { 1.0 } else { 0.0 }],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let set = ResponseSet::new(schema.clone(), responses)?;
        let raw = unadjusted(&set.responses)?;
        let adjusted = weighting_adjust(
            &set,
            &build_strata(&set, &population, &["active"], "US")?,
            "US",
        )?;
        raw_mean += raw.nps / reps as f64;
        adj_mean += adjusted.nps / reps as f64;
        raw_cover += usize::from((raw.nps - truth).abs() <= raw.margin);
        adj_cover += usize::from((adjusted.nps - truth).abs() <= adjusted.margin);
    }
    println!("\n{reps} surveys: truth {truth:.2}");
    println!("  unadjusted  mean {raw_mean:>6.2}, interval covers truth {raw_cover}/{reps}");
    println!("  weighted    mean {adj_mean:>6.2}, interval covers truth {adj_cover}/{reps}");
    Ok(())
}
