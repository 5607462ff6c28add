//! Quantitative rules: priorities, harmony scores, coverage averages, axis
//! mappings and bubble encodings.
//!
//! Everything is computed with exact rationals; rounding happens only when a
//! chart is rendered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::model::{CardId, CoverageAssessment, Deck, PrioritizationRound};

/// Total tokens per card for one closed round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityTable {
    pub round_index: u32,
    pub allocation_count: u32,
    pub totals: BTreeMap<CardId, i64>,
}

impl PriorityTable {
    pub fn total(&self, card: CardId) -> Option<i64> {
        self.totals.get(&card).copied()
    }

    pub fn grand_total(&self) -> i64 {
        self.totals.values().sum()
    }

    /// Cards ordered from highest to lowest priority; ties by card number.
    pub fn ranking(&self) -> Vec<(CardId, i64)> {
        let mut rows: Vec<_> = self.totals.iter().map(|(&c, &t)| (c, t)).collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonyEntry {
    pub median_tokens: Fraction,
    /// Stakeholders more than one token away from the median. Lower means
    /// stronger consensus.
    pub deviation_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonyReport {
    pub round_index: u32,
    pub stakeholder_count: u32,
    pub cards: BTreeMap<CardId, HarmonyEntry>,
}

/// Three anchor values of one chart axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisAnchors {
    pub min_value: Fraction,
    pub mid_anchor_value: Fraction,
    pub max_value: Fraction,
    /// Set when the three anchors are not pairwise distinct.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BubbleColor {
    Green,
    Yellow,
    Red,
    /// Target-state or ghost bubbles, which have no coverage scores.
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeCode {
    Small,
    Medium,
    Large,
}

pub fn card_priorities(round: &PrioritizationRound, deck: &Deck) -> Result<PriorityTable> {
    if !round.is_closed() {
        return Err(Error::RoundNotClosed(round.round_index));
    }
    let totals = deck
        .card_ids()
        .map(|card| (card, round.tokens_for(card).iter().sum()))
        .collect();
    Ok(PriorityTable {
        round_index: round.round_index,
        allocation_count: round.allocations.len() as u32,
        totals,
    })
}

/// Standard median; even counts average the two middle values.
pub fn median(values: &[i64]) -> Option<Fraction> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Some(if n % 2 == 1 {
        Fraction::from_int(sorted[n / 2])
    } else {
        Fraction::new(sorted[n / 2 - 1] + sorted[n / 2], 2)
    })
}

/// Number of values further than one token from `center`.
pub fn deviation_count(values: &[i64], center: Fraction) -> u32 {
    values
        .iter()
        .filter(|&&v| (Fraction::from_int(v) - center).abs() > Fraction::ONE)
        .count() as u32
}

/// Median tokens and deviation count for one card of a closed round.
pub fn harmony_score(card: CardId, round: &PrioritizationRound) -> Result<(Fraction, u32)> {
    if !round.is_closed() {
        return Err(Error::RoundNotClosed(round.round_index));
    }
    let values = round.tokens_for(card);
    let med = median(&values).ok_or(Error::EmptyRound(round.round_index))?;
    Ok((med, deviation_count(&values, med)))
}

pub fn harmony_report(round: &PrioritizationRound, deck: &Deck) -> Result<HarmonyReport> {
    let cards = deck
        .card_ids()
        .map(|card| {
            harmony_score(card, round).map(|(median_tokens, deviation_count)| {
                (
                    card,
                    HarmonyEntry {
                        median_tokens,
                        deviation_count,
                    },
                )
            })
        })
        .collect::<Result<_>>()?;
    Ok(HarmonyReport {
        round_index: round.round_index,
        stakeholder_count: round.allocations.len() as u32,
        cards,
    })
}

/// Anchors for a set of per-card values: the minimum, the value of the card
/// nearest the mean, and the maximum.
///
/// Mean ties pick the lower value, then the lower card number.
pub fn axis_anchors(values: &BTreeMap<CardId, Fraction>) -> Option<AxisAnchors> {
    let min_value = *values.values().min()?;
    let max_value = *values.values().max()?;
    let sum = values.values().fold(Fraction::ZERO, |acc, &v| acc + v);
    let mean = sum / Fraction::from_int(values.len() as i64);
    let (_, mid_anchor_value, _) = values
        .iter()
        .map(|(&card, &v)| ((v - mean).abs(), v, card))
        .min()?;
    let degenerate = min_value == max_value
        || mid_anchor_value == min_value
        || mid_anchor_value == max_value;
    Some(AxisAnchors {
        min_value,
        mid_anchor_value,
        max_value,
        degenerate,
    })
}

/// Piecewise-linear position of `value` on an axis: min maps to 0, the mid
/// anchor to 1/2 and max to 1.
///
/// A flat axis puts everything at 1/2; a mid anchor that coincides with an
/// end falls back to plain min-to-max interpolation.
pub fn axis_position(value: Fraction, anchors: &AxisAnchors) -> Fraction {
    let AxisAnchors {
        min_value: lo,
        mid_anchor_value: mid,
        max_value: hi,
        ..
    } = *anchors;
    if lo == hi {
        return Fraction::HALF;
    }
    let pos = if mid == lo || mid == hi {
        (value - lo) / (hi - lo)
    } else if value <= mid {
        Fraction::HALF * (value - lo) / (mid - lo)
    } else {
        Fraction::HALF + Fraction::HALF * (value - mid) / (hi - mid)
    };
    pos.max(Fraction::ZERO).min(Fraction::ONE)
}

fn priority_values(priorities: &PriorityTable) -> BTreeMap<CardId, Fraction> {
    priorities
        .totals
        .iter()
        .map(|(&c, &t)| (c, Fraction::from_int(t)))
        .collect()
}

fn deviation_values(harmony: &HarmonyReport) -> BTreeMap<CardId, Fraction> {
    harmony
        .cards
        .iter()
        .map(|(&c, e)| (c, Fraction::from_int(i64::from(e.deviation_count))))
        .collect()
}

pub fn relevance_anchors(priorities: &PriorityTable) -> Option<AxisAnchors> {
    axis_anchors(&priority_values(priorities))
}

/// Anchors of the consensus axis, expressed in deviation counts.
pub fn consensus_anchors(harmony: &HarmonyReport) -> Option<AxisAnchors> {
    axis_anchors(&deviation_values(harmony))
}

/// Perceived relevance: lowest total at 0, highest at 1.
pub fn relevance_coordinate(card: CardId, priorities: &PriorityTable) -> Result<Fraction> {
    let total = priorities.total(card).ok_or(Error::UnknownCard(card))?;
    let anchors = relevance_anchors(priorities).ok_or(Error::UnknownCard(card))?;
    Ok(axis_position(Fraction::from_int(total), &anchors))
}

/// Valuation consensus: fewest deviations at 1 (top), most at 0 (bottom).
pub fn consensus_coordinate(card: CardId, harmony: &HarmonyReport) -> Result<Fraction> {
    let entry = harmony.cards.get(&card).ok_or(Error::UnknownCard(card))?;
    let anchors = consensus_anchors(harmony).ok_or(Error::UnknownCard(card))?;
    let count = Fraction::from_int(i64::from(entry.deviation_count));
    Ok(Fraction::ONE - axis_position(count, &anchors))
}

/// Mean Likert score for one card over every stakeholder who scored it.
pub fn coverage_average(card: CardId, assessment: &CoverageAssessment) -> Result<Fraction> {
    let scores = assessment.scores_for(card);
    if scores.is_empty() {
        return Err(Error::NoScores(card));
    }
    let sum: i64 = scores.iter().map(|s| i64::from(s.value())).sum();
    Ok(Fraction::new(sum, scores.len() as i64))
}

/// 4 and above is green, 3 up to 4 yellow, below 3 red.
pub fn color_of(avg: Fraction) -> Result<BubbleColor> {
    if avg < Fraction::from_int(1) || avg > Fraction::from_int(5) {
        return Err(Error::OutOfRange(format!("coverage average {avg} outside 1..5")));
    }
    Ok(if avg >= Fraction::from_int(4) {
        BubbleColor::Green
    } else if avg >= Fraction::from_int(3) {
        BubbleColor::Yellow
    } else {
        BubbleColor::Red
    })
}

/// Priority drift between the baseline and current token totals.
pub fn size_of(baseline_total: i64, current_total: i64) -> SizeCode {
    match current_total.cmp(&baseline_total) {
        std::cmp::Ordering::Greater => SizeCode::Large,
        std::cmp::Ordering::Less => SizeCode::Small,
        std::cmp::Ordering::Equal => SizeCode::Medium,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Card, LikertScore, StakeholderId, Theme, TokenAllocation};
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at() -> crate::model::Timestamp {
        chrono::Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
    }

    fn deck(n: u32) -> Deck {
        Deck::new(
            (1..=n)
                .map(|i| Card {
                    card_id: CardId(i),
                    name: format!("card {i}"),
                    theme: Theme::ALL[(i as usize) % 8],
                })
                .collect(),
        )
        .unwrap()
    }

    fn closed_round(allocs: Vec<TokenAllocation>) -> PrioritizationRound {
        let mut round = PrioritizationRound::open(0, at(), None);
        for a in allocs {
            round.allocations.insert(a.stakeholder_id.clone(), a);
        }
        round.status = crate::model::RoundStatus::Closed;
        round.closed_at = Some(at());
        round
    }

    /// Round where stakeholder i puts `card_tokens[i]` on card 1 and the rest
    /// of a 21-token budget on card 2.
    fn round_with_card1(card_tokens: &[i64]) -> PrioritizationRound {
        closed_round(
            card_tokens
                .iter()
                .enumerate()
                .map(|(i, &t)| TokenAllocation::new(format!("s{i}"), [(1, t), (2, 21 - t)]))
                .collect(),
        )
    }

    fn table(totals: &[(u32, i64)]) -> PriorityTable {
        PriorityTable {
            round_index: 0,
            allocation_count: 1,
            totals: totals.iter().map(|&(c, t)| (CardId(c), t)).collect(),
        }
    }

    fn harmony(counts: &[(u32, u32)]) -> HarmonyReport {
        HarmonyReport {
            round_index: 0,
            stakeholder_count: 10,
            cards: counts
                .iter()
                .map(|&(c, d)| {
                    (
                        CardId(c),
                        HarmonyEntry {
                            median_tokens: Fraction::ZERO,
                            deviation_count: d,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn priorities_sum_over_stakeholders() {
        let d = deck(21);
        let round = closed_round(vec![
            TokenAllocation::new("a", [(8, 5), (1, 16)]),
            TokenAllocation::new("b", [(8, 5), (2, 16)]),
        ]);
        let p = card_priorities(&round, &d).unwrap();
        assert_eq!(p.total(CardId(8)), Some(10));
        assert_eq!(p.grand_total(), 42);
    }

    #[test]
    fn single_allocation_priorities_equal_its_tokens() {
        let d = deck(5);
        let alloc = TokenAllocation::new("a", [(1, 2), (3, 3)]);
        let p = card_priorities(&closed_round(vec![alloc.clone()]), &d).unwrap();
        for card in d.card_ids() {
            assert_eq!(p.total(card), Some(alloc.tokens_on(card)));
        }
    }

    #[test]
    fn open_round_has_no_priorities() {
        let round = PrioritizationRound::open(2, at(), None);
        assert_eq!(card_priorities(&round, &deck(3)), Err(Error::RoundNotClosed(2)));
    }

    #[test]
    fn harmony_examples() {
        assert_eq!(
            harmony_score(CardId(1), &round_with_card1(&[2, 2, 2, 2])).unwrap(),
            (Fraction::from_int(2), 0)
        );
        // Hand count: |0-2|=2 and |5-2|=3 exceed one token; |1-2| and |3-2| do not.
        assert_eq!(
            harmony_score(CardId(1), &round_with_card1(&[0, 1, 3, 5])).unwrap(),
            (Fraction::from_int(2), 2)
        );
        assert_eq!(
            harmony_score(CardId(1), &round_with_card1(&[7])).unwrap(),
            (Fraction::from_int(7), 0)
        );
        assert_eq!(
            harmony_score(CardId(1), &closed_round(vec![])),
            Err(Error::EmptyRound(0))
        );
    }

    #[test]
    fn even_median_averages_middle_values() {
        assert_eq!(median(&[5, 0, 1, 4]), Some(Fraction::new(5, 2)));
        assert_eq!(median(&[]), None);
        // Median 5/2: 1 is 3/2 away and deviates, 3 is 1/2 away.
        assert_eq!(deviation_count(&[1, 3], Fraction::new(5, 2)), 1);
    }

    #[test]
    fn relevance_examples() {
        let flat = table(&[(1, 4), (2, 4), (3, 4)]);
        for c in 1..=3 {
            assert_eq!(relevance_coordinate(CardId(c), &flat).unwrap(), Fraction::HALF);
        }
        // mean 11, nearest card total 10
        let t = table(&[(1, 2), (2, 10), (3, 21)]);
        assert_eq!(relevance_coordinate(CardId(1), &t).unwrap(), Fraction::ZERO);
        assert_eq!(relevance_coordinate(CardId(2), &t).unwrap(), Fraction::HALF);
        assert_eq!(relevance_coordinate(CardId(3), &t).unwrap(), Fraction::ONE);
        let anchors = relevance_anchors(&t).unwrap();
        assert_eq!(
            axis_position(Fraction::from_int(6), &anchors),
            Fraction::new(1, 4)
        );
        // upper segment: 10 + (21-10)/2 = 31/2 sits at 3/4
        assert_eq!(
            axis_position(Fraction::new(31, 2), &anchors),
            Fraction::new(3, 4)
        );
    }

    #[test]
    fn consensus_examples() {
        let flat = harmony(&[(1, 0), (2, 0)]);
        assert_eq!(consensus_coordinate(CardId(1), &flat).unwrap(), Fraction::HALF);
        let h = harmony(&[(1, 0), (2, 2), (3, 4)]);
        assert_eq!(consensus_coordinate(CardId(1), &h).unwrap(), Fraction::ONE);
        assert_eq!(consensus_coordinate(CardId(2), &h).unwrap(), Fraction::HALF);
        assert_eq!(consensus_coordinate(CardId(3), &h).unwrap(), Fraction::ZERO);
    }

    #[test]
    fn mean_ties_pick_lower_value() {
        // mean 5; totals 4 and 6 are equally near
        let t = table(&[(1, 0), (2, 4), (3, 6), (4, 10)]);
        let a = relevance_anchors(&t).unwrap();
        assert_eq!(a.mid_anchor_value, Fraction::from_int(4));
        assert!(!a.degenerate);
        let h = harmony(&[(1, 0), (2, 1), (3, 3), (4, 4)]);
        assert_eq!(consensus_anchors(&h).unwrap().mid_anchor_value, Fraction::from_int(1));
    }

    #[test]
    fn mid_anchor_on_an_end_falls_back_to_linear() {
        // mean 7/3 is nearest the minimum 0
        let t = table(&[(1, 0), (2, 0), (3, 7)]);
        let a = relevance_anchors(&t).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.mid_anchor_value, Fraction::ZERO);
        assert_eq!(axis_position(Fraction::from_int(7), &a), Fraction::ONE);
        assert_eq!(axis_position(Fraction::new(7, 2), &a), Fraction::HALF);
    }

    fn assessment(rows: &[(&str, u32, i64)]) -> CoverageAssessment {
        let mut a = CoverageAssessment::new(0, 0, at());
        for &(s, c, v) in rows {
            a.scores
                .entry(StakeholderId::new(s))
                .or_default()
                .insert(CardId(c), LikertScore::new(v).unwrap());
        }
        a
    }

    #[test]
    fn coverage_average_examples() {
        let a = assessment(&[("a", 1, 5), ("b", 1, 5), ("c", 1, 5)]);
        assert_eq!(coverage_average(CardId(1), &a).unwrap(), Fraction::from_int(5));
        let a = assessment(&[("a", 1, 4), ("b", 1, 3), ("c", 1, 5), ("d", 1, 2)]);
        assert_eq!(coverage_average(CardId(1), &a).unwrap(), Fraction::new(7, 2));
        assert_eq!(coverage_average(CardId(2), &a), Err(Error::NoScores(CardId(2))));
    }

    #[test]
    fn color_thresholds() {
        let f = |n, d| color_of(Fraction::new(n, d)).unwrap();
        assert_eq!(f(42, 10), BubbleColor::Green);
        assert_eq!(f(299, 100), BubbleColor::Red);
        assert_eq!(f(3, 1), BubbleColor::Yellow);
        assert_eq!(f(4, 1), BubbleColor::Green);
        assert!(matches!(color_of(Fraction::new(1, 2)), Err(Error::OutOfRange(_))));
        assert!(matches!(color_of(Fraction::new(11, 2)), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn size_codes() {
        assert_eq!(size_of(9, 9), SizeCode::Medium);
        assert_eq!(size_of(9, 14), SizeCode::Large);
        assert_eq!(size_of(9, 3), SizeCode::Small);
    }

    /// Threshold table lookup on hundredths, independent of `color_of`.
    fn color_table(hundredths: i64) -> BubbleColor {
        match hundredths {
            100..=299 => BubbleColor::Red,
            300..=399 => BubbleColor::Yellow,
            400..=500 => BubbleColor::Green,
            _ => unreachable!(),
        }
    }

    #[test]
    fn color_partition_on_fine_grid() {
        for h in 100..=500 {
            assert_eq!(color_of(Fraction::new(h, 100)).unwrap(), color_table(h), "{h}");
        }
    }

    fn random_round(n_cards: u32, allocations: Vec<Vec<u32>>) -> (Deck, PrioritizationRound) {
        let d = deck(n_cards);
        let allocs = allocations
            .into_iter()
            .enumerate()
            .map(|(i, picks)| {
                let mut tokens = BTreeMap::new();
                for p in picks {
                    *tokens.entry(CardId(p % n_cards + 1)).or_insert(0) += 1;
                }
                TokenAllocation {
                    stakeholder_id: StakeholderId::new(format!("s{i}")),
                    tokens,
                    rationale: None,
                }
            })
            .collect();
        (d, closed_round(allocs))
    }

    /// Each stakeholder spends the whole budget by picking a card per token.
    fn round_strategy() -> impl Strategy<Value = (Deck, PrioritizationRound)> {
        (2u32..=21, 1usize..=10).prop_flat_map(|(n, s)| {
            proptest::collection::vec(
                proptest::collection::vec(0u32..1000, n as usize),
                s,
            )
            .prop_map(move |allocs| random_round(n, allocs))
        })
    }

    proptest! {
        #[test]
        fn token_conservation((d, round) in round_strategy()) {
            let p = card_priorities(&round, &d).unwrap();
            prop_assert_eq!(
                p.grand_total(),
                i64::from(d.token_budget) * round.allocations.len() as i64
            );
        }

        #[test]
        fn harmony_bounds((d, round) in round_strategy()) {
            let report = harmony_report(&round, &d).unwrap();
            for (card, entry) in &report.cards {
                prop_assert!(entry.deviation_count <= report.stakeholder_count);
                let values = round.tokens_for(*card);
                let within = values
                    .iter()
                    .all(|&v| (Fraction::from_int(v) - entry.median_tokens).abs() <= Fraction::ONE);
                if within {
                    prop_assert_eq!(entry.deviation_count, 0);
                }
            }
        }

        #[test]
        fn coordinates_are_monotone((d, round) in round_strategy()) {
            let p = card_priorities(&round, &d).unwrap();
            let h = harmony_report(&round, &d).unwrap();
            let mut by_total: Vec<_> = d.card_ids().map(|c| (p.total(c).unwrap(), c)).collect();
            by_total.sort();
            for w in by_total.windows(2) {
                let a = relevance_coordinate(w[0].1, &p).unwrap();
                let b = relevance_coordinate(w[1].1, &p).unwrap();
                prop_assert!(a <= b);
            }
            let mut by_dev: Vec<_> = d
                .card_ids()
                .map(|c| (h.cards[&c].deviation_count, c))
                .collect();
            by_dev.sort();
            for w in by_dev.windows(2) {
                let a = consensus_coordinate(w[0].1, &h).unwrap();
                let b = consensus_coordinate(w[1].1, &h).unwrap();
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn stakeholder_order_does_not_matter((d, round) in round_strategy(), seed in any::<u64>()) {
            // Re-key allocations under shuffled ids.
            let mut allocs: Vec<_> = round.allocations.values().cloned().collect();
            let k = (seed as usize) % allocs.len().max(1);
            allocs.rotate_left(k);
            let renamed = allocs
                .into_iter()
                .enumerate()
                .map(|(i, mut a)| {
                    a.stakeholder_id = StakeholderId::new(format!("z{i}"));
                    a
                })
                .collect();
            let shuffled = closed_round(renamed);
            prop_assert_eq!(
                card_priorities(&round, &d).unwrap().totals,
                card_priorities(&shuffled, &d).unwrap().totals
            );
            prop_assert_eq!(
                harmony_report(&round, &d).unwrap().cards,
                harmony_report(&shuffled, &d).unwrap().cards
            );
        }
    }
}
