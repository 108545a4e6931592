//! Members picked by two MoT programs on the same day are surveyed by one of
//! them. Assignment probabilities favour the smaller program, and inverse
//! probability weights undo the selection effect on estimates.
//!
//! ```text
//! cargo run --release --example overlap_weights
//! ```

use std::collections::BTreeMap;

use pabs_survey::draw::{keyed_unit, Stream};
use pabs_survey::hash_alloc::MemberId;
use pabs_survey::mot::{
    assignment_probabilities, overlapped_members, resolve_overlaps, DaySelections, SelectionCounts,
};
use pabs_survey::ring::ProgramId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a, b) = (ProgramId(1), ProgramId(2));
    // A picks 1..=3000, B picks 2501..=3500; the 500 shared members score higher.
    let selections: DaySelections = BTreeMap::from([
        (a, (1..=3000).map(MemberId).collect()),
        (b, (2501..=3500).map(MemberId).collect()),
    ]);
    let counts = SelectionCounts::from_selections(&selections);
    let probs = assignment_probabilities(&[a, b], &counts)?;
    println!(
        "n_A = {}, n_B = {}, shared = {}; a shared member goes to A with p = {:.3}, to B with p = {:.3}",
        counts.n(a),
        counts.n(b),
        overlapped_members(&selections).len(),
        probs[0],
        probs[1]
    );

    let score = |m: MemberId| {
        10.0 + if m.0 > 2500 { 8.0 } else { 0.0 } + 4.0 * keyed_unit(1, Stream::Generic, &[m.0])
    };
    let target = (1..=3000).map(|i| score(MemberId(i))).sum::<f64>() / 3000.0;
    let (mut weighted, mut naive) = (0.0, 0.0);
    let reps = 500u64;
    for day in 0..reps {
        let res = resolve_overlaps(&selections, &counts, 99, day)?;
        let (mut sw, mut swx, mut sx, mut k) = (0.0, 0.0, 0.0, 0.0);
        for (m, r) in res.assigned_to(a) {
            sw += r.weight;
            swx += r.weight * score(m);
            sx += score(m);
            k += 1.0;
        }
        weighted += swx / sw / reps as f64;
        naive += sx / k / reps as f64;
    }
    println!("mean score of A's selections {target:.3}");
    println!(
        "  unweighted over A's surveyed members: {naive:.3} (bias {:+.3})",
        naive - target
    );
    println!(
        "  weighted by 1/(n_p Pr):               {weighted:.3} (bias {:+.3})",
        weighted - target
    );
    Ok(())
}
