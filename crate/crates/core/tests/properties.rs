//! Property tests for allocation, ring layout, cool-off, sampling and
//! estimation invariants, plus the weekly monitoring series.

use std::collections::{BTreeMap, HashSet};

use pabs_survey::draw::{keyed_unit, Stream};
use pabs_survey::estimators::{
    build_strata, code_response, fit_logistic, nonresponse_bias, nps_of_scores, unadjusted,
    weighting_adjust, Population, PopulationCell, Response, ResponseSet, Schema,
};
use pabs_survey::hash_alloc::{
    bucket_of, bucket_of_value, randomize, AllocationValue, HashId, MemberId,
};
use pabs_survey::mot::{
    assignment_probabilities, resolve_overlaps, resolved_weight, sample_month,
    srs_selection_probability, DaySelections, ProgramPlan, SamplingMode, SamplingPlan,
    SelectionCounts, TriggerEvent, TriggerLog,
};
use pabs_survey::ring::{
    audit_sends, groups_on_tick, mot_pool, Cadence, CoolOffLedger, CoolOffPolicy, Group, ProgramId,
    Ring, RingLayout, SendRecord,
};
use pabs_survey::sim::{
    generate_population, run, weekly_report, NpsStep, PopulationSpec, RunConfig, WeeklyOptions,
};
use proptest::prelude::*;

fn layout() -> impl Strategy<Value = RingLayout> {
    prop_oneof![
        (91u32..400, 1u32..5, 0u32..40, 30u32..50).prop_filter_map("pool empty", |(b, r, c, m)| {
            RingLayout::new(b, r, c, m, Cadence::Daily).ok()
        }),
        (2u32..60, 1u32..3, 0u32..10, 0u32..10).prop_filter_map("pool empty", |(b, r, c, m)| {
            RingLayout::new(b, r, c, m, Cadence::Weekly).ok()
        }),
    ]
}

proptest! {
    #[test]
    fn bucket_is_in_range(label in "[a-z]{1,12}", id in any::<u64>(), b in 1u32..10_000) {
        let h = HashId::new(label).unwrap();
        let k = bucket_of(&h, MemberId(id), b).unwrap().get();
        prop_assert!((1..=b).contains(&k));
        let v = randomize(&h, MemberId(id)).get();
        prop_assert!((0.0..100.0).contains(&v));
    }

    #[test]
    fn bucket_is_monotone_in_value(a in 0.0f64..100.0, c in 0.0f64..100.0, b in 1u32..500) {
        let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
        let blo = bucket_of_value(AllocationValue::new(lo).unwrap(), b).unwrap();
        let bhi = bucket_of_value(AllocationValue::new(hi).unwrap(), b).unwrap();
        prop_assert!(blo <= bhi);
    }

    #[test]
    fn ring_arcs_partition_the_buckets(layout in layout(), t in 0u64..10_000) {
        let g = groups_on_tick(&layout, t);
        let b = layout.buckets();
        let groups = g.to_vec();
        prop_assert_eq!(groups.len(), b as usize);
        let count = |grp| groups.iter().filter(|&&x| x == grp).count() as u32;
        prop_assert_eq!(count(Group::Rnps), layout.rnps_span());
        prop_assert_eq!(count(Group::RnpsCoolOff), layout.rnps_cooloff_span());
        prop_assert_eq!(count(Group::MotCoolOff), layout.mot_cooloff_span());
        prop_assert_eq!(count(Group::Mot), layout.mot_span());
        prop_assert_eq!(g.rnps_bucket().get() as u64, t % b as u64 + 1);
        prop_assert_eq!(groups_on_tick(&layout, t + b as u64).to_vec(), groups);
        let pool = mot_pool(&layout, t);
        prop_assert!(pool.iter().all(|k| g.group_of(*k) == Group::Mot));
    }

    /// Sends admitted by the ledger never produce audit violations.
    #[test]
    fn ledger_admitted_sends_audit_clean(
        attempts in prop::collection::vec((1u64..20, 1u32..4, 0u32..400), 1..300),
    ) {
        let policy = CoolOffPolicy::default();
        let mut attempts = attempts;
        attempts.sort_by_key(|a| a.2);
        let mut ledger = CoolOffLedger::new();
        let mut sent = Vec::new();
        for (m, p, day) in attempts {
            let (m, p) = (MemberId(m), ProgramId(p));
            if ledger.is_clear(m, p, day, &policy) {
                ledger.record_sent(m, p, day).unwrap();
                sent.push(SendRecord { member: m, program: p, day });
            }
        }
        prop_assert!(audit_sends(sent, &policy).is_clean());
    }

    #[test]
    fn overlap_probabilities_and_weights(counts in prop::collection::vec(1u64..5000, 2..6)) {
        let programs: Vec<ProgramId> = (1..=counts.len() as u32).map(ProgramId).collect();
        let counts = SelectionCounts(programs.iter().copied().zip(counts).collect());
        let probs = assignment_probabilities(&programs, &counts).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Expected weight of a member, over its random assignment, for each
        // program: Pr(p) * w_p = 1/n_p.
        for (p, pr) in programs.iter().zip(&probs) {
            let w = resolved_weight(&programs, *p, &counts).unwrap();
            prop_assert!((pr * w - 1.0 / counts.n(*p) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_assigns_to_a_selecting_program(
        picks in prop::collection::vec(prop::collection::btree_set(1u32..4, 1..4), 1..200),
        seed in any::<u64>(),
    ) {
        let mut selections: DaySelections = BTreeMap::new();
        for (i, progs) in picks.iter().enumerate() {
            for &p in progs {
                selections.entry(ProgramId(p)).or_default().insert(MemberId(i as u64));
            }
        }
        let counts = SelectionCounts::from_selections(&selections);
        let res = resolve_overlaps(&selections, &counts, seed, 0).unwrap();
        prop_assert_eq!(res.members.len(), picks.len());
        for (i, progs) in picks.iter().enumerate() {
            let r = &res.members[&MemberId(i as u64)];
            prop_assert!(progs.contains(&r.assigned.0));
            if progs.len() == 1 {
                prop_assert_eq!(r.probability, 1.0);
            }
        }
    }

    #[test]
    fn sampling_respects_cool_off_and_uniqueness(
        events in prop::collection::vec((1u64..80, 1u32..3, 1u32..31), 1..400),
        seed in any::<u64>(),
        srs in any::<bool>(),
    ) {
        let log = TriggerLog::from_events(
            100,
            events.iter().map(|&(m, p, day)| TriggerEvent { member: MemberId(m), program: ProgramId(p), day }),
        )
        .unwrap();
        let plan = SamplingPlan {
            programs: vec![
                ProgramPlan { program: ProgramId(1), rate: 0.3, desired_responses: 5 },
                ProgramPlan { program: ProgramId(2), rate: 0.5, desired_responses: 5 },
            ],
            mode: if srs { SamplingMode::Srs } else { SamplingMode::Ftt },
            seed,
        };
        let mut ledger = CoolOffLedger::new();
        ledger.record_sent(MemberId(1), ProgramId(1), 90).unwrap();
        let policy = CoolOffPolicy::default();
        let picks = sample_month(&log, &plan, &mut ledger, &policy).unwrap();
        let mut members = HashSet::new();
        for s in &picks {
            prop_assert!(members.insert(s.member));
            prop_assert!(s.weight > 0.0);
        }
        let mut records: Vec<SendRecord> = picks
            .iter()
            .map(|s| SendRecord { member: s.member, program: s.program, day: s.day })
            .collect();
        records.push(SendRecord { member: MemberId(1), program: ProgramId(1), day: 90 });
        prop_assert!(audit_sends(records, &policy).is_clean());
    }

    #[test]
    fn nonresponse_decomposition_is_exact(r in 0.001f64..1.0, mu_r in -100.0f64..100.0, mu_n in -100.0f64..100.0) {
        let d = nonresponse_bias(r, mu_r, mu_n).unwrap();
        prop_assert!((d.population_mean - d.respondent_mean - d.bias).abs() < 1e-9);
    }

    #[test]
    fn nps_is_bounded(scores in prop::collection::vec(0u8..=10, 1..200)) {
        let v = nps_of_scores(scores.iter().copied()).unwrap();
        prop_assert!((-100.0..=100.0).contains(&v));
    }

    /// With one stratum the adjustment changes nothing.
    #[test]
    fn single_stratum_weighting_is_unadjusted(scores in prop::collection::vec(0u8..=10, 2..200), count in 1.0f64..1e6) {
        let schema = Schema::categorical(&["x"]);
        let responses: Vec<Response> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| Response::new(MemberId(i as u64), s, "US", vec![0.0]).unwrap())
            .collect();
        let raw = unadjusted(&responses).unwrap();
        let set = ResponseSet::new(schema.clone(), responses).unwrap();
        let pop = Population::new(schema, vec![PopulationCell { country: "US".into(), covariates: vec![0.0], count }]).unwrap();
        let strata = build_strata(&set, &pop, &["x"], "US").unwrap();
        let adj = weighting_adjust(&set, &strata, "US").unwrap();
        prop_assert!((adj.nps - raw.nps).abs() < 1e-9);
    }
}

#[test]
fn ring_channels_are_independent() {
    // Same member ids, different hash ids: the joint bucket table is close to
    // the product of its margins.
    let email = HashId::new("email-ring").unwrap();
    let in_product = HashId::new("in-product-ring").unwrap();
    let n = 50_000u64;
    let mut same = 0u64;
    for i in 1..=n {
        let a = bucket_of(&email, MemberId(i), 13).unwrap();
        let b = bucket_of(&in_product, MemberId(i), 13).unwrap();
        same += u64::from(a == b);
    }
    let expected = n as f64 / 13.0;
    let sd = (n as f64 * (1.0 / 13.0) * (12.0 / 13.0)).sqrt();
    assert!(
        (same as f64 - expected).abs() < 4.0 * sd,
        "{same} members share a bucket, expected {expected:.0}"
    );
}

fn weekly_series(
    step: Option<NpsStep>,
) -> (pabs_survey::sim::SyntheticPopulation, Vec<(u32, f64, f64)>) {
    let pop = generate_population(&PopulationSpec::default()).unwrap();
    let cfg = RunConfig {
        nps_step: step,
        ..RunConfig::default()
    };
    let log = run(&cfg, &pop).unwrap();
    let series = weekly_report(&log, &pop, &WeeklyOptions::default()).unwrap();
    let points = series
        .iter()
        .filter_map(|p| Some((p.week, p.nps?, p.margin?)))
        .collect();
    (pop, points)
}

#[test]
fn weekly_series_is_flat_without_a_shift() {
    let (_, points) = weekly_series(None);
    assert_eq!(points.len(), 52);
    let grand = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let within = points
        .iter()
        .filter(|(_, nps, m)| (nps - grand).abs() <= *m)
        .count();
    assert!(
        within >= 50,
        "{within}/52 weeks within their margin of the grand mean {grand:.2}"
    );
}

#[test]
fn weekly_series_tracks_a_step_change() {
    let shift = -15.0;
    let (pop, points) = weekly_series(Some(NpsStep { day: 26 * 7, shift }));
    assert_eq!(points.len(), 52);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let before: Vec<f64> = points.iter().filter(|p| p.0 < 26).map(|p| p.1).collect();
    let after: Vec<f64> = points.iter().filter(|p| p.0 >= 26).map(|p| p.1).collect();
    let observed = mean(&after) - mean(&before);
    let expected = pop.true_nps(None, shift) - pop.true_nps(None, 0.0);
    // margin of a difference of two 26-week means
    let margin = 1.96
        * points
            .iter()
            .map(|p| (p.2 / 1.96).powi(2))
            .sum::<f64>()
            .sqrt()
        / 26.0;
    assert!(
        (observed - expected).abs() <= margin,
        "observed {observed:.2}, injected {expected:.2}, margin {margin:.2}"
    );
}

proptest! {
    #[test]
    fn srs_probability_increases_with_triggers(n in 1u32..200, r in 0.001f64..0.999) {
        let (p, next) = (srs_selection_probability(n, r), srs_selection_probability(n + 1, r));
        // strict until 1 - p drops below f64 resolution
        if 1.0 - p > 1e-12 {
            prop_assert!(next > p);
        } else {
            prop_assert!(next >= p);
        }
    }

    #[test]
    fn nps_is_the_mean_coded_value(scores in prop::collection::vec(0u8..=10, 1..200)) {
        let coded: Vec<f64> = scores.iter().map(|&s| f64::from(code_response(s).unwrap())).collect();
        let mean = coded.iter().sum::<f64>() / coded.len() as f64;
        prop_assert!((nps_of_scores(scores.iter().copied()).unwrap() - mean).abs() < 1e-9);
    }

    /// Population shares equal to respondent shares leave the estimate unchanged.
    #[test]
    fn proportional_strata_reduce_to_unweighted(
        rows in prop::collection::vec((0u8..=10, 0u8..4), 2..300),
        scale in 1.0f64..1000.0,
    ) {
        let schema = Schema::categorical(&["g"]);
        let responses: Vec<Response> = rows
            .iter()
            .enumerate()
            .map(|(i, &(s, g))| Response::new(MemberId(i as u64), s, "US", vec![f64::from(g)]).unwrap())
            .collect();
        let mut counts = [0.0f64; 4];
        for &(_, g) in &rows {
            counts[g as usize] += scale;
        }
        let cells = (0..4)
            .map(|g| PopulationCell { country: "US".into(), covariates: vec![g as f64], count: counts[g] })
            .collect();
        let pop = Population::new(schema.clone(), cells).unwrap();
        let raw = unadjusted(&responses).unwrap();
        let set = ResponseSet::new(schema, responses).unwrap();
        let adj = weighting_adjust(&set, &build_strata(&set, &pop, &["g"], "US").unwrap(), "US").unwrap();
        prop_assert!((adj.nps - raw.nps).abs() < 1e-9);
    }

    /// Fitted probabilities stay in (0, 1) and move with the sign of the coefficient.
    #[test]
    fn propensity_is_monotone_in_its_covariates(
        data in prop::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 40..200),
        probe in -3.0f64..3.0,
        step in 0.01f64..2.0,
    ) {
        let rows: Vec<Vec<f64>> = data.iter().map(|&(x, _)| vec![1.0, x]).collect();
        let y: Vec<bool> = data.iter().map(|&(x, u)| u < 1.0 / (1.0 + (-x).exp())).collect();
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let fit = fit_logistic(&rows, &y, None, 0.1).unwrap();
        let (lo, hi) = (fit.predict(&[1.0, probe]), fit.predict(&[1.0, probe + step]));
        prop_assert!(lo > 0.0 && lo < 1.0 && hi > 0.0 && hi < 1.0);
        if fit.coefficients[1] > 0.0 {
            prop_assert!(hi >= lo);
        } else {
            prop_assert!(hi <= lo);
        }
    }
}

#[test]
fn rnps_revisits_a_bucket_every_b_days() {
    let layout = RingLayout::daily_default();
    let b = layout.buckets();
    for bucket in 1..=b {
        let days: Vec<u64> = (0..3 * u64::from(b))
            .filter(|&t| groups_on_tick(&layout, t).rnps_bucket().get() == bucket)
            .collect();
        assert_eq!(days.len(), 3);
        assert!(days.windows(2).all(|w| w[1] - w[0] == u64::from(b)));
    }
    assert!(b > CoolOffPolicy::default().same_program_days);
}

/// Two-sample Kolmogorov-Smirnov p-value from the asymptotic distribution.
fn ks_p_value(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = f64::from(k);
            2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn rnps_buckets_are_exchangeable_across_days() {
    let ring = Ring::new(
        HashId::new("email-ring").unwrap(),
        RingLayout::daily_default(),
    );
    let mut by_bucket: Vec<Vec<f64>> = vec![Vec::new(); ring.layout.buckets() as usize];
    for id in 1..=120_000u64 {
        let attribute = -keyed_unit(3, Stream::Generic, &[id]).ln();
        by_bucket[ring.bucket(MemberId(id)).get() as usize - 1].push(attribute);
    }
    let bucket_on = |day: u32| ring.assignment_on_day(day).rnps_bucket().get() as usize - 1;
    let reference = bucket_on(0);
    let mut worst: f64 = 1.0;
    for day in 1..=50 {
        let p = ks_p_value(
            &mut by_bucket[bucket_on(day)].clone(),
            &mut by_bucket[reference].clone(),
        );
        worst = worst.min(p);
    }
    assert!(worst > 0.001, "smallest KS p-value over 50 ticks: {worst}");
}

/// Monthly MoT volume by day for one program, from the default population's
/// trigger behaviour.
fn daily_volume(mode: SamplingMode) -> Vec<usize> {
    let spec = PopulationSpec::default();
    let pop = generate_population(&spec).unwrap();
    let program = ProgramId(1);
    let events = pop.members.iter().flat_map(|m| {
        (1..=30u32)
            .filter(|&d| m.triggered(&spec, program, i64::from(d)))
            .map(|day| TriggerEvent {
                member: m.id,
                program,
                day,
            })
            .collect::<Vec<_>>()
    });
    let log = TriggerLog::from_events(0, events).unwrap();
    let plan = SamplingPlan {
        programs: vec![ProgramPlan {
            program,
            rate: 0.05,
            desired_responses: 1000,
        }],
        mode,
        seed: 17,
    };
    let picks = sample_month(
        &log,
        &plan,
        &mut CoolOffLedger::new(),
        &CoolOffPolicy::default(),
    )
    .unwrap();
    let mut volume = vec![0usize; 32];
    for s in picks {
        volume[s.day as usize] += 1;
    }
    volume
}

/// Share of a month's volume sent in its first ten send days.
fn first_third_share(volume: &[usize], first_send_day: usize) -> f64 {
    let total: usize = volume.iter().sum();
    volume[first_send_day..first_send_day + 10]
        .iter()
        .sum::<usize>() as f64
        / total as f64
}

#[test]
fn ftt_volume_is_front_loaded_and_srs_is_flat() {
    // Thresholds pinned from a first run: FTT 0.625, SRS 0.375. SRS still
    // declines a little because members picked earlier in the month drop out.
    let ftt = first_third_share(&daily_volume(SamplingMode::Ftt), 0);
    let srs = first_third_share(&daily_volume(SamplingMode::Srs), 1);
    assert!(ftt >= 0.55, "FTT share in the first ten days: {ftt:.3}");
    assert!(srs <= 0.42, "SRS share in the first ten days: {srs:.3}");
}
