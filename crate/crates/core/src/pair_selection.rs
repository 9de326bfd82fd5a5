//! Gap statistics and the preference-strength score used to pick one
//! (winning, losing) pair per base prompt.
//!
//! For candidate `i` with local gap `δl_i` and global gap `δg_i`:
//!
//! ```text
//! T_i = (δl_i / max(Δl, ε)) / (max(δg_i, ε) / max(Δg, ε))
//! ```
//!
//! where `Δ` is the maximum gap over the candidates. Candidates whose local
//! gap is not positive are never chosen.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::perturbation::PerturbKind;
use crate::rng;
use crate::vqa_scoring::ScoreCard;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Reason recorded when no candidate has a positive local gap.
pub const NO_POSITIVE_LOCAL_GAP: &str = "no_positive_local_gap";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("every candidate was skipped before scoring")]
    NoCandidates,
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub kind: PerturbKind,
    pub delta_local: f64,
    pub delta_global: f64,
}

impl GapRecord {
    pub fn from_card(kind: PerturbKind, card: &ScoreCard) -> Self {
        Self {
            kind,
            delta_local: card.delta_local(),
            delta_global: card.delta_global(),
        }
    }
}

/// Gap records for the scored candidates; skipped candidates (`None`) get
/// no record.
pub fn compute_gaps(cards: &[(PerturbKind, Option<&ScoreCard>)]) -> Vec<GapRecord> {
    cards
        .iter()
        .filter_map(|(kind, card)| card.map(|c| GapRecord::from_card(*kind, c)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// One slot per perturbation kind (Swap, Replace, Drop); `None` for
    /// skipped or excluded candidates.
    pub t_scores: [Option<f64>; 3],
    pub chosen: Option<PerturbKind>,
    pub delta_max_local: f64,
    pub delta_max_global: f64,
    pub discarded: Option<String>,
}

impl SelectionResult {
    /// 1-based index of the chosen kind in Swap, Replace, Drop order.
    pub fn chosen_index(&self) -> Option<usize> {
        self.chosen.map(slot).map(|s| s + 1)
    }

    pub fn is_discarded(&self) -> bool {
        self.discarded.is_some()
    }
}

fn slot(kind: PerturbKind) -> usize {
    PerturbKind::ALL.iter().position(|k| *k == kind).expect("known kind")
}

/// The score of one candidate given the maxima over all candidates.
pub fn preference_strength(
    delta_local: f64,
    delta_global: f64,
    max_local: f64,
    max_global: f64,
    epsilon: f64,
) -> f64 {
    (delta_local / max_local.max(epsilon)) / (delta_global.max(epsilon) / max_global.max(epsilon))
}

fn maxima(gaps: &[GapRecord]) -> (f64, f64) {
    gaps.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(l, g), r| {
        (l.max(r.delta_local), g.max(r.delta_global))
    })
}

fn check(gaps: &[GapRecord], epsilon: f64) -> Result<(), SelectionError> {
    if gaps.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SelectionError::InvalidEpsilon(epsilon));
    }
    Ok(())
}

pub fn select_pair(gaps: &[GapRecord], epsilon: f64) -> Result<SelectionResult, SelectionError> {
    check(gaps, epsilon)?;
    let (max_local, max_global) = maxima(gaps);
    let mut t_scores = [None; 3];
    for g in gaps.iter().filter(|g| g.delta_local > 0.0) {
        t_scores[slot(g.kind)] = Some(preference_strength(
            g.delta_local,
            g.delta_global,
            max_local,
            max_global,
            epsilon,
        ));
    }
    // Strict `>` while scanning in kind order keeps the earliest kind on ties.
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in t_scores.iter().enumerate() {
        if let Some(t) = *t {
            if best.is_none_or(|(_, b)| t > b) {
                best = Some((i, t));
            }
        }
    }
    Ok(SelectionResult {
        t_scores,
        chosen: best.map(|(i, _)| PerturbKind::ALL[i]),
        delta_max_local: max_local,
        delta_max_global: max_global,
        discarded: best.is_none().then(|| NO_POSITIVE_LOCAL_GAP.to_string()),
    })
}

/// Ablation: the pair is drawn uniformly from the scored candidates,
/// ignoring gaps. Scores are still reported for analysis.
pub fn select_random(gaps: &[GapRecord], epsilon: f64, seed: u64) -> Result<SelectionResult, SelectionError> {
    let mut result = select_pair(gaps, epsilon)?;
    let mut rng = rng::substream(seed, &["random_selection"]);
    let pick = gaps.choose(&mut rng).expect("checked non-empty");
    result.chosen = Some(pick.kind);
    result.discarded = None;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(l: [f64; 3], g: [f64; 3]) -> Vec<GapRecord> {
        PerturbKind::ALL
            .iter()
            .enumerate()
            .map(|(i, k)| GapRecord {
                kind: *k,
                delta_local: l[i],
                delta_global: g[i],
            })
            .collect()
    }

    #[test]
    fn worked_example() {
        let r = select_pair(&triple([0.8, 0.4, 0.2], [0.4, 0.1, 0.2]), DEFAULT_EPSILON).unwrap();
        assert_eq!(r.t_scores, [Some(1.0), Some(2.0), Some(0.5)]);
        assert_eq!(r.chosen_index(), Some(2));
        assert_eq!(r.chosen, Some(PerturbKind::Replace));
    }

    #[test]
    fn ties_prefer_swap() {
        let r = select_pair(&triple([0.5; 3], [0.2; 3]), DEFAULT_EPSILON).unwrap();
        assert_eq!(r.chosen, Some(PerturbKind::Swap));
    }

    #[test]
    fn non_positive_local_gaps_discard() {
        let r = select_pair(&triple([-0.1, -0.3, 0.0], [0.1, 0.1, 0.1]), DEFAULT_EPSILON).unwrap();
        assert_eq!(r.chosen, None);
        assert_eq!(r.discarded.as_deref(), Some(NO_POSITIVE_LOCAL_GAP));
        assert_eq!(r.t_scores, [None; 3]);
    }

    #[test]
    fn skipped_candidates_leave_empty_slots() {
        let gaps = vec![GapRecord {
            kind: PerturbKind::Drop,
            delta_local: 0.3,
            delta_global: -0.5,
        }];
        let r = select_pair(&gaps, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.chosen_index(), Some(3));
        assert!(r.t_scores[0].is_none() && r.t_scores[1].is_none());
        assert!(select_pair(&[], DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn random_selection_is_seeded() {
        let gaps = triple([0.8, 0.4, 0.2], [0.4, 0.1, 0.2]);
        let a = select_random(&gaps, DEFAULT_EPSILON, 9).unwrap();
        let b = select_random(&gaps, DEFAULT_EPSILON, 9).unwrap();
        assert_eq!(a, b);
    }
}
