//! Overlap resolution for members selected by several programs.
//!
//! A member selected by the set of programs `S` is assigned to `p ∈ S` with
//! probability
//!
//! ```text
//!   Pr(p | S) = (1/n_p) / Σ_{q∈S} 1/n_q
//! ```
//!
//! which for two programs is `n_b / (n_a + n_b)` for `A`. The analysis weight
//! of the member in `p` is the base weight `1/n_p` times the inverse assignment
//! probability, `Σ_{q∈S} 1/n_q`; for two programs that is
//! `(n_a + n_b) / (n_a n_b)`, and `1/n_p` for a member selected by `p` alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DaySelections, MotError};
use crate::draw::{keyed_unit, Stream};
use crate::hash_alloc::MemberId;
use crate::ring::ProgramId;

/// Selection count `n_p` per program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts(pub BTreeMap<ProgramId, u64>);

impl SelectionCounts {
    /// Realized counts: how many members each program selected.
    pub fn from_selections(selections: &DaySelections) -> Self {
        SelectionCounts(
            selections
                .iter()
                .map(|(&p, m)| (p, m.len() as u64))
                .collect(),
        )
    }

    pub fn n(&self, program: ProgramId) -> u64 {
        self.0.get(&program).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

/// Number of members selected by both `a` and `b`.
pub fn overlap_count(selections: &DaySelections, a: ProgramId, b: ProgramId) -> usize {
    match (selections.get(&a), selections.get(&b)) {
        (Some(x), Some(y)) => x.intersection(y).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResolution {
    /// Sorted.
    pub selected_by: Vec<ProgramId>,
    pub assigned: ProgramId,
    /// Probability the member had of landing in `assigned`.
    pub probability: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapResolution {
    pub counts: SelectionCounts,
    pub members: BTreeMap<MemberId, MemberResolution>,
}

impl OverlapResolution {
    pub fn assigned_to(
        &self,
        program: ProgramId,
    ) -> impl Iterator<Item = (MemberId, &MemberResolution)> {
        self.members
            .iter()
            .filter(move |(_, r)| r.assigned == program)
            .map(|(&m, r)| (m, r))
    }
}

/// Assignment probabilities over `selected_by`, in the same order.
pub fn assignment_probabilities(
    selected_by: &[ProgramId],
    counts: &SelectionCounts,
) -> Result<Vec<f64>, MotError> {
    if selected_by.is_empty() {
        return Err(MotError::DegenerateCounts(
            "member selected by no program".into(),
        ));
    }
    let mut inv = Vec::with_capacity(selected_by.len());
    for &p in selected_by {
        let n = counts.n(p);
        if n == 0 {
            return Err(MotError::DegenerateCounts(format!(
                "program {p} has selection count 0"
            )));
        }
        inv.push(1.0 / n as f64);
    }
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|x| x / total).collect())
}

/// Weight of a member selected by `selected_by` once assigned to `assigned`.
pub fn resolved_weight(
    selected_by: &[ProgramId],
    assigned: ProgramId,
    counts: &SelectionCounts,
) -> Result<f64, MotError> {
    let probs = assignment_probabilities(selected_by, counts)?;
    let idx = selected_by
        .iter()
        .position(|&p| p == assigned)
        .ok_or_else(|| {
            MotError::DegenerateCounts(format!("program {assigned} did not select the member"))
        })?;
    Ok((1.0 / counts.n(assigned) as f64) / probs[idx])
}

/// Assigns every selected member to exactly one program.
///
/// `draw_key` separates independent resolutions under one seed (the send day in
/// practice). Members selected by one program keep it.
pub fn resolve_overlaps(
    selections: &DaySelections,
    counts: &SelectionCounts,
    seed: u64,
    draw_key: u64,
) -> Result<OverlapResolution, MotError> {
    if counts.total() == 0 {
        return Err(MotError::DegenerateCounts(
            "all selection counts are zero".into(),
        ));
    }
    let mut selected_by: BTreeMap<MemberId, Vec<ProgramId>> = BTreeMap::new();
    for (&p, members) in selections {
        for &m in members {
            selected_by.entry(m).or_default().push(p);
        }
    }
    let mut members = BTreeMap::new();
    for (m, programs) in selected_by {
        let probs = assignment_probabilities(&programs, counts)?;
        let idx = if programs.len() == 1 {
            0
        } else {
            let u = keyed_unit(seed, Stream::Overlap, &[m.0, draw_key]);
            let mut acc = 0.0;
            probs
                .iter()
                .position(|&q| {
                    acc += q;
                    u < acc
                })
                .unwrap_or(probs.len() - 1)
        };
        let assigned = programs[idx];
        let probability = probs[idx];
        let weight = (1.0 / counts.n(assigned) as f64) / probability;
        members.insert(
            m,
            MemberResolution {
                selected_by: programs,
                assigned,
                probability,
                weight,
            },
        );
    }
    Ok(OverlapResolution {
        counts: counts.clone(),
        members,
    })
}

/// Analysis weight per resolved member.
pub fn overlap_weights(resolution: &OverlapResolution) -> BTreeMap<MemberId, f64> {
    resolution
        .members
        .iter()
        .map(|(&m, r)| (m, r.weight))
        .collect()
}

/// Members selected by at least two programs.
pub fn overlapped_members(selections: &DaySelections) -> BTreeSet<MemberId> {
    let mut seen = BTreeSet::new();
    let mut multi = BTreeSet::new();
    for members in selections.values() {
        for &m in members {
            if !seen.insert(m) {
                multi.insert(m);
            }
        }
    }
    multi
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: ProgramId = ProgramId(1);
    const B: ProgramId = ProgramId(2);
    const C: ProgramId = ProgramId(3);

    fn counts(na: u64, nb: u64) -> SelectionCounts {
        SelectionCounts([(A, na), (B, nb)].into_iter().collect())
    }

    #[test]
    fn two_program_probabilities() {
        let p = assignment_probabilities(&[A, B], &counts(3000, 1000)).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
        let p = assignment_probabilities(&[A, B], &counts(700, 700)).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn weights_match_closed_form() {
        let c = counts(2, 2);
        assert!((resolved_weight(&[A, B], A, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((resolved_weight(&[A], A, &c).unwrap() - 0.5).abs() < 1e-15);
        let c = counts(3000, 1000);
        assert!((resolved_weight(&[A, B], A, &c).unwrap() - 1.0 / 750.0).abs() < 1e-18);
        assert!((resolved_weight(&[A], A, &c).unwrap() - 1.0 / 3000.0).abs() < 1e-18);
        // (na + nb) / (na nb)
        assert!((resolved_weight(&[A, B], B, &c).unwrap() - 4000.0 / 3_000_000.0).abs() < 1e-18);
    }

    #[test]
    fn three_program_extension_reduces_to_inverse_counts() {
        let c = SelectionCounts([(A, 100), (B, 200), (C, 400)].into_iter().collect());
        let p = assignment_probabilities(&[A, B, C], &c).unwrap();
        // proportional to 1/100 : 1/200 : 1/400 = 4 : 2 : 1
        assert!((p[0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 7.0).abs() < 1e-15);
        assert!((p[2] - 1.0 / 7.0).abs() < 1e-15);
        let w = resolved_weight(&[A, B, C], C, &c).unwrap();
        assert!((w - (0.01 + 0.005 + 0.0025)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_counts() {
        let sel: DaySelections = BTreeMap::new();
        assert!(matches!(
            resolve_overlaps(&sel, &counts(0, 0), 1, 0),
            Err(MotError::DegenerateCounts(_))
        ));
        assert!(assignment_probabilities(&[A, B], &counts(0, 5)).is_err());
    }

    #[test]
    fn each_member_assigned_once_within_selected_set() {
        let mut sel = DaySelections::new();
        sel.insert(A, (0..300).map(MemberId).collect());
        sel.insert(B, (200..400).map(MemberId).collect());
        let c = SelectionCounts::from_selections(&sel);
        assert_eq!(overlap_count(&sel, A, B), 100);
        assert_eq!(overlapped_members(&sel).len(), 100);
        let res = resolve_overlaps(&sel, &c, 3, 0).unwrap();
        assert_eq!(res.members.len(), 400);
        for (m, r) in &res.members {
            assert!(r.selected_by.contains(&r.assigned));
            assert!(r.weight > 0.0);
            if m.0 < 200 {
                assert_eq!(r.assigned, A);
                assert!((r.weight - 1.0 / 300.0).abs() < 1e-15);
            }
        }
        let weights = overlap_weights(&res);
        assert_eq!(weights.len(), 400);
    }
}
