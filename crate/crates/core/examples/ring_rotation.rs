//! How the four arcs of the ring move day by day, and how a member cycles
//! through them.
//!
//! ```text
//! cargo run --release --example ring_rotation
//! ```

use pabs_survey::hash_alloc::{HashId, MemberId};
use pabs_survey::ring::{groups_on_tick, Cadence, Group, Ring, RingLayout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = RingLayout::new(5, 1, 1, 1, Cadence::Weekly)?;
    println!(
        "five-bucket weekly ring (R = rNPS, r = rNPS cool-off, M = MoT pool, m = MoT cool-off)"
    );
    for week in 0..6 {
        let row: String = groups_on_tick(&demo, week)
            .to_vec()
            .iter()
            .map(|g| match g {
                Group::Rnps => 'R',
                Group::RnpsCoolOff => 'r',
                Group::Mot => 'M',
                Group::MotCoolOff => 'm',
            })
            .collect();
        println!("  week {week}: {row}");
    }

    let ring = Ring::new(HashId::new("email-ring")?, RingLayout::daily_default());
    let member = MemberId(31_337);
    let bucket = ring.bucket(member);
    println!(
        "\ndaily ring, 120 buckets; member {} sits in bucket {}",
        member.0,
        bucket.get()
    );
    let mut last = None;
    for day in 0..=240u32 {
        let group = ring.assignment_on_day(day).group_of(bucket);
        if last != Some(group) {
            println!("  from day {day:>3}: {group:?}");
            last = Some(group);
        }
    }
    let layout = &ring.layout;
    println!(
        "arc spans: rNPS {}, rNPS cool-off {}, MoT {}, MoT cool-off {}",
        layout.rnps_span(),
        layout.rnps_cooloff_span(),
        layout.mot_span(),
        layout.mot_cooloff_span()
    );
    Ok(())
}
