//! First-time-trigger versus simple random sampling over one month of
//! triggers. Heavy triggerers dominate SRS; FTT gives every triggering
//! member the same chance.
//!
//! ```text
//! cargo run --release --example mot_sampling
//! ```

use pabs_survey::draw::{keyed_u64, Stream};
use pabs_survey::hash_alloc::MemberId;
use pabs_survey::mot::{
    sample_month, srs_selection_probability, ProgramPlan, SamplingMode, SamplingPlan, TriggerEvent,
    TriggerLog,
};
use pabs_survey::ring::{CoolOffLedger, CoolOffPolicy, ProgramId};

const MEMBERS: u64 = 3000;
const RATE: f64 = 0.1;
const REPS: u64 = 200;

/// Member `i` triggers on `(i % 30) + 1` distinct days.
fn triggers() -> TriggerLog {
    let events = (0..MEMBERS).flat_map(|i| {
        let n = (i % 30) as usize + 1;
        let mut days: Vec<u32> = (1..=30).collect();
        days.sort_by_key(|&d| keyed_u64(5, Stream::Trigger, &[i, u64::from(d)]));
        days.truncate(n);
        days.into_iter().map(move |day| TriggerEvent {
            member: MemberId(i + 1),
            program: ProgramId(1),
            day,
        })
    });
    TriggerLog::from_events(0, events).expect("valid triggers")
}

fn selection_rate_by_trigger_count(log: &TriggerLog, mode: SamplingMode) -> Vec<f64> {
    let mut hits = vec![0u64; 31];
    for rep in 0..REPS {
        let plan = SamplingPlan {
            programs: vec![ProgramPlan {
                program: ProgramId(1),
                rate: RATE,
                desired_responses: 100,
            }],
            mode,
            seed: rep,
        };
        let picks = sample_month(
            log,
            &plan,
            &mut CoolOffLedger::new(),
            &CoolOffPolicy::default(),
        )
        .expect("sampling");
        for s in picks {
            hits[((s.member.0 - 1) % 30) as usize + 1] += 1;
        }
    }
    let per_n = (MEMBERS / 30 * REPS) as f64;
    hits.iter().map(|&h| h as f64 / per_n).collect()
}

fn main() {
    let log = triggers();
    println!(
        "{} trigger events from {MEMBERS} members, daily rate {RATE}, {REPS} months",
        log.len()
    );
    let ftt = selection_rate_by_trigger_count(&log, SamplingMode::Ftt);
    let srs = selection_rate_by_trigger_count(&log, SamplingMode::Srs);
    println!("\ntrigger days  FTT     SRS     1-(1-r)^n");
    for n in [1u32, 2, 5, 10, 15, 20, 25, 30] {
        println!(
            "{n:>12}  {:.4}  {:.4}  {:.4}",
            ftt[n as usize],
            srs[n as usize],
            srs_selection_probability(n, RATE)
        );
    }
}
