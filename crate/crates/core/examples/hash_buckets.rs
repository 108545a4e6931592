//! Hash-based bucket allocation: stable per member, uniform across buckets,
//! and independent between hash ids.
//!
//! ```text
//! cargo run --release --example hash_buckets
//! ```

use pabs_survey::hash_alloc::{allocation_key, bucket_of, randomize, HashId, MemberId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let email = HashId::new("email-ring")?;
    let app = HashId::new("in-product-ring")?;

    println!("member  key                   value     bucket/120  app bucket/13");
    for id in [1u64, 2, 3, 42, 1_000_000] {
        let m = MemberId(id);
        println!(
            "{id:<7} {:<21} {:>8.4}  {:>10}  {:>13}",
            allocation_key(&email, m),
            randomize(&email, m).get(),
            bucket_of(&email, m, 120)?.get(),
            bucket_of(&app, m, 13)?.get()
        );
    }

    let n = 120_000u64;
    let mut counts = vec![0u32; 120];
    for id in 1..=n {
        counts[bucket_of(&email, MemberId(id), 120)?.get() as usize - 1] += 1;
    }
    let expected = n as f64 / 120.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (f64::from(c) - expected).powi(2) / expected)
        .sum();
    let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    println!("\n{n} members over 120 buckets: sizes {min}..{max}, chi-square {chi2:.1} on 119 df");

    let same = (1..=n)
        .filter(|&id| {
            bucket_of(&email, MemberId(id), 13).ok() == bucket_of(&app, MemberId(id), 13).ok()
        })
        .count();
    println!(
        "share landing in the same bucket of two 13-bucket rings: {:.4} (1/13 = {:.4})",
        same as f64 / n as f64,
        1.0 / 13.0
    );
    Ok(())
}
