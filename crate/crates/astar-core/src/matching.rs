//! Card retrieval: rank cards by embedding similarity and by complexity
//! distance, then pick the five with the best combined rank.

use serde::Serialize;
use thiserror::Error;

use crate::cards::ThoughtCard;
use crate::providers::Embedding;

/// Per-card ranking row, also the `match --explain` output record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardRanking {
    pub card_id: String,
    /// Dot product of the query embedding with the card's average.
    pub tis_score: f64,
    /// Absolute complexity difference between query and card.
    pub pc_distance: f64,
    /// Rank by tis_score, 1 = highest.
    pub r_tis: usize,
    /// Rank by pc_distance, 1 = closest.
    pub r_pc: usize,
    /// r_tis + r_pc; smaller is better.
    pub combined: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("cannot rank an empty card library")]
    Empty,
    #[error("query embedding has {query} dims but cards have {cards}")]
    Dimension { query: usize, cards: usize },
}

fn ranks_from_order(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (position, &index) in order.iter().enumerate() {
        ranks[index] = position + 1;
    }
    ranks
}

/// Assigns ranks 1..n with rank 1 for the largest value; ties broken by
/// id ascending. The result is always a permutation of 1..n.
pub fn rank_descending(scored: &[(f64, &str)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .0
            .total_cmp(&scored[a].0)
            .then_with(|| scored[a].1.cmp(scored[b].1))
    });
    ranks_from_order(&order)
}

/// Assigns ranks 1..n with rank 1 for the smallest value; ties broken by
/// id ascending.
pub fn rank_ascending(scored: &[(f64, &str)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .0
            .total_cmp(&scored[b].0)
            .then_with(|| scored[a].1.cmp(scored[b].1))
    });
    ranks_from_order(&order)
}

/// Ranks cards by query-embedding similarity, best first. Returned ranks
/// align with the input order.
pub fn rank_tis(cards: &[ThoughtCard], query_tis: &Embedding) -> Result<Vec<usize>, MatchError> {
    if cards.is_empty() {
        return Err(MatchError::Empty);
    }
    for card in cards {
        if card.avg_tis.dim() != query_tis.dim() {
            return Err(MatchError::Dimension {
                query: query_tis.dim(),
                cards: card.avg_tis.dim(),
            });
        }
    }
    let scored: Vec<(f64, &str)> = cards
        .iter()
        .map(|c| (query_tis.dot(&c.avg_tis), c.card_id.as_str()))
        .collect();
    Ok(rank_descending(&scored))
}

/// Ranks cards by complexity closeness to the query, exact match first.
pub fn rank_pc(cards: &[ThoughtCard], query_pc: f64) -> Result<Vec<usize>, MatchError> {
    if cards.is_empty() {
        return Err(MatchError::Empty);
    }
    let scored: Vec<(f64, &str)> = cards
        .iter()
        .map(|c| ((query_pc - c.avg_pc).abs(), c.card_id.as_str()))
        .collect();
    Ok(rank_ascending(&scored))
}

/// Full ranking table for a query, sorted by combined rank ascending then
/// card_id.
pub fn rank_cards(
    cards: &[ThoughtCard],
    query_tis: &Embedding,
    query_pc: f64,
) -> Result<Vec<CardRanking>, MatchError> {
    let tis_ranks = rank_tis(cards, query_tis)?;
    let pc_ranks = rank_pc(cards, query_pc)?;
    let mut rows: Vec<CardRanking> = cards
        .iter()
        .zip(tis_ranks.iter().zip(&pc_ranks))
        .map(|(card, (&r_tis, &r_pc))| CardRanking {
            card_id: card.card_id.clone(),
            tis_score: query_tis.dot(&card.avg_tis),
            pc_distance: (query_pc - card.avg_pc).abs(),
            r_tis,
            r_pc,
            combined: r_tis + r_pc,
        })
        .collect();
    rows.sort_by(|a, b| a.combined.cmp(&b.combined).then_with(|| a.card_id.cmp(&b.card_id)));
    Ok(rows)
}

/// The `limit` rankings with the smallest combined rank, ties broken by
/// card_id. Input order does not matter.
pub fn top_by_combined(rankings: &[CardRanking], limit: usize) -> Vec<&CardRanking> {
    let mut rows: Vec<&CardRanking> = rankings.iter().collect();
    rows.sort_by(|a, b| a.combined.cmp(&b.combined).then_with(|| a.card_id.cmp(&b.card_id)));
    rows.truncate(limit);
    rows
}

/// Retrieves up to five cards with the best combined rank, ordered by
/// combined rank then card_id. Because a size-5 subset sum is minimized
/// by the five individually smallest values, this equals the subset that
/// minimizes the total combined rank.
pub fn select_top5(
    cards: &[ThoughtCard],
    query_tis: &Embedding,
    query_pc: f64,
) -> Result<Vec<ThoughtCard>, MatchError> {
    let rows = rank_cards(cards, query_tis, query_pc)?;
    let chosen = top_by_combined(&rows, 5);
    Ok(chosen
        .into_iter()
        .map(|row| {
            cards
                .iter()
                .find(|c| c.card_id == row.card_id)
                .expect("ranking rows come from the card list")
                .clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Action, ActionTemplate, ALL_ACTIONS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(values: Vec<f64>) -> Embedding {
        Embedding::unit_from(values).unwrap()
    }

    fn card(card_id_actions: &[Action], avg_pc: f64, avg_tis: Embedding) -> ThoughtCard {
        let template = ActionTemplate::new(card_id_actions.to_vec()).unwrap();
        ThoughtCard {
            card_id: template.canonical(),
            template,
            avg_pc,
            avg_tis,
            support: 1,
        }
    }

    fn axis(dim: usize, index: usize) -> Embedding {
        let mut values = vec![0.0; dim];
        values[index] = 1.0;
        unit(values)
    }

    #[test]
    fn rank_tis_orders_by_score() {
        let cards = vec![
            card(&[Action::VisualParsing], 1.0, unit(vec![0.9, 0.1, 0.0])),
            card(&[Action::SystemAnalysis], 1.0, unit(vec![0.2, 0.9, 0.0])),
            card(&[Action::OneStepThought], 1.0, unit(vec![0.5, 0.5, 0.2])),
        ];
        let query = axis(3, 0);
        let ranks = rank_tis(&cards, &query).unwrap();
        assert_eq!(ranks, vec![1, 3, 2]);
    }

    #[test]
    fn rank_tis_single_card() {
        let cards = vec![card(&[Action::ChainOfThought], 1.0, axis(2, 0))];
        assert_eq!(rank_tis(&cards, &axis(2, 1)).unwrap(), vec![1]);
    }

    #[test]
    fn rank_tis_ties_break_by_card_id() {
        let shared = axis(2, 0);
        let cards = vec![
            card(&[Action::SystemAnalysis], 1.0, shared.clone()),
            card(&[Action::VisualParsing], 1.0, shared),
        ];
        let ranks = rank_tis(&cards, &axis(2, 0)).unwrap();
        assert_eq!(ranks, vec![2, 1]);
    }

    #[test]
    fn rank_tis_rejects_dimension_mismatch() {
        let cards = vec![card(&[Action::ChainOfThought], 1.0, axis(3, 0))];
        assert_eq!(
            rank_tis(&cards, &axis(2, 0)).unwrap_err(),
            MatchError::Dimension { query: 2, cards: 3 }
        );
    }

    #[test]
    fn rank_pc_exact_match_wins() {
        let cards = vec![
            card(&[Action::VisualParsing], 3.0, axis(2, 0)),
            card(&[Action::SystemAnalysis], 5.0, axis(2, 0)),
            card(&[Action::OneStepThought], 2.0, axis(2, 0)),
        ];
        let ranks = rank_pc(&cards, 3.0).unwrap();
        assert_eq!(ranks, vec![1, 3, 2]);
    }

    #[test]
    fn rank_pc_full_tie_follows_card_id() {
        let cards = vec![
            card(&[Action::OneStepThought], 4.0, axis(2, 0)),
            card(&[Action::VisualParsing], 4.0, axis(2, 0)),
            card(&[Action::SystemAnalysis], 4.0, axis(2, 0)),
        ];
        let ranks = rank_pc(&cards, 1.0).unwrap();
        assert_eq!(ranks, vec![3, 1, 2]);
    }

    #[test]
    fn rank_pc_equidistant_breaks_by_card_id() {
        let cards = vec![
            card(&[Action::SystemAnalysis], 2.0, axis(2, 0)),
            card(&[Action::VisualParsing], 4.0, axis(2, 0)),
        ];
        let ranks = rank_pc(&cards, 3.0).unwrap();
        assert_eq!(ranks, vec![2, 1]);
    }

    #[test]
    fn ranks_are_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..=10);
            let cards: Vec<ThoughtCard> = (0..n)
                .map(|i| {
                    let actions: Vec<Action> = (0..=i).map(|j| ALL_ACTIONS[j % 6]).collect();
                    let raw: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                    card(&actions, rng.random_range(0.0..6.0), unit(raw))
                })
                .collect();
            let query = unit((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let tis = rank_tis(&cards, &query).unwrap();
            let pc = rank_pc(&cards, rng.random_range(0.0..6.0)).unwrap();
            for ranks in [tis, pc] {
                let mut sorted = ranks.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (1..=n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn rank_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(1..=8);
            let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base: Vec<(f64, &str)> = scores
                .iter()
                .zip(&ids)
                .map(|(&s, id)| (s, id.as_str()))
                .collect();
            let transformed: Vec<(f64, &str)> = scores
                .iter()
                .zip(&ids)
                .map(|(&s, id)| (s.exp() * 3.0 + 1.0, id.as_str()))
                .collect();
            assert_eq!(rank_descending(&base), rank_descending(&transformed));
        }
    }

    fn synthetic_ranking(card_id: &str, combined: usize) -> CardRanking {
        CardRanking {
            card_id: card_id.to_string(),
            tis_score: 0.0,
            pc_distance: 0.0,
            r_tis: combined / 2,
            r_pc: combined - combined / 2,
            combined,
        }
    }

    #[test]
    fn top_by_combined_picks_five_smallest_in_order() {
        let rows = vec![
            synthetic_ranking("c1", 4),
            synthetic_ranking("c2", 7),
            synthetic_ranking("c3", 3),
            synthetic_ranking("c4", 9),
            synthetic_ranking("c5", 5),
            synthetic_ranking("c6", 6),
        ];
        let picked: Vec<&str> = top_by_combined(&rows, 5)
            .into_iter()
            .map(|r| r.card_id.as_str())
            .collect();
        assert_eq!(picked, vec!["c3", "c1", "c5", "c6", "c2"]);
        let best_sum: usize = [3, 4, 5, 6, 7].iter().sum();
        let mut exhaustive_best = usize::MAX;
        for skip in 0..rows.len() {
            let sum: usize = rows
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, r)| r.combined)
                .sum();
            exhaustive_best = exhaustive_best.min(sum);
        }
        assert_eq!(best_sum, exhaustive_best);
    }

    fn library(rng: &mut ChaCha8Rng, n: usize) -> Vec<ThoughtCard> {
        (0..n)
            .map(|i| {
                let actions: Vec<Action> = (0..=i).map(|j| ALL_ACTIONS[j % 6]).collect();
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                card(&actions, rng.random_range(0.0..8.0), unit(raw))
            })
            .collect()
    }

    fn subsets_of(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if current.len() == k {
                out.push(current.clone());
                return;
            }
            for i in start..n {
                current.push(i);
                recurse(i + 1, n, k, current, out);
                current.pop();
            }
        }
        recurse(0, n, k, &mut current, &mut out);
        out
    }

    #[test]
    fn top5_matches_exhaustive_subset_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..60 {
            let n = rng.random_range(1..=10);
            let cards = library(&mut rng, n);
            let query = unit((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let query_pc = rng.random_range(0.0..8.0);
            let rows = rank_cards(&cards, &query, query_pc).unwrap();
            let by_id: std::collections::HashMap<&str, usize> = rows
                .iter()
                .map(|r| (r.card_id.as_str(), r.combined))
                .collect();
            let picked = select_top5(&cards, &query, query_pc).unwrap();
            let size = 5.min(n);
            assert_eq!(picked.len(), size);
            let picked_sum: usize = picked.iter().map(|c| by_id[c.card_id.as_str()]).sum();
            let best_sum = subsets_of(n, size)
                .into_iter()
                .map(|subset| {
                    subset
                        .iter()
                        .map(|&i| by_id[cards[i].card_id.as_str()])
                        .sum::<usize>()
                })
                .min()
                .unwrap();
            assert_eq!(picked_sum, best_sum);
        }
    }

    #[test]
    fn top5_returns_all_when_fewer_than_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cards = library(&mut rng, 3);
        let query = axis(4, 0);
        let picked = select_top5(&cards, &query, 1.0).unwrap();
        assert_eq!(picked.len(), 3);
    }

    #[test]
    fn top5_exactly_five_is_ordered_by_combined() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cards = library(&mut rng, 5);
        let query = axis(4, 1);
        let picked = select_top5(&cards, &query, 2.0).unwrap();
        assert_eq!(picked.len(), 5);
        let rows = rank_cards(&cards, &query, 2.0).unwrap();
        let expected: Vec<&str> = rows.iter().map(|r| r.card_id.as_str()).collect();
        let got: Vec<&str> = picked.iter().map(|c| c.card_id.as_str()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn ranking_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cards = library(&mut rng, 7);
        let query = axis(4, 2);
        let first = rank_cards(&cards, &query, 3.0).unwrap();
        let second = rank_cards(&cards, &query, 3.0).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn empty_library_is_an_error() {
        assert_eq!(rank_pc(&[], 1.0).unwrap_err(), MatchError::Empty);
        assert_eq!(
            select_top5(&[], &axis(2, 0), 1.0).unwrap_err(),
            MatchError::Empty
        );
    }
}
