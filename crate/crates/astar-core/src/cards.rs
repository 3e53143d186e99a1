//! Thought cards: distilled reasoning templates with aggregate complexity
//! and embedding annotations.
//!
//! Building a card library runs one search per seed question, keeps the
//! best path by value-of-computation score, records the question's
//! complexity and joint embedding alongside it, then groups the kept
//! paths by template.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionTemplate, TemplateError};
use crate::mcts::{self, MctsConfig, MctsError};
use crate::providers::{
    joint_embedding, ComplexityProvider, Embedding, EmbeddingProvider, GenerationParams,
    PolicyModel, ProviderError,
};
use crate::query::Query;
use crate::seeding::query_seed;
use crate::trajectory::Trajectory;

/// Weight balancing path reward against step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocConfig {
    pub k: f64,
}

impl Default for VocConfig {
    fn default() -> Self {
        VocConfig { k: 0.9 }
    }
}

impl VocConfig {
    pub fn validate(&self) -> Result<(), CardsError> {
        if !(0.0..=1.0).contains(&self.k) {
            return Err(CardsError::InvalidConfig {
                msg: "voc weight k must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

/// Path score k * reward - (1 - k) * cost: higher-reward and shorter
/// paths win.
pub fn voc_score(reward: f64, cost: usize, k: f64) -> f64 {
    k * reward - (1.0 - k) * cost as f64
}

/// One kept question-path pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPathEntry {
    pub query_id: String,
    pub trajectory: Trajectory,
    pub voc_score: f64,
    /// Problem complexity estimate, non-negative.
    pub pc: f64,
    /// Unit-norm joint embedding of the question.
    pub tis: Embedding,
}

/// A distilled reasoning template with its aggregate annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtCard {
    /// Canonical template string; doubles as the stable identifier.
    pub card_id: String,
    pub template: ActionTemplate,
    pub avg_pc: f64,
    pub avg_tis: Embedding,
    /// Number of seed questions that produced this template.
    pub support: usize,
}

#[derive(Debug, Error)]
pub enum CardsError {
    #[error("invalid card config: {msg}")]
    InvalidConfig { msg: &'static str },
    #[error("seed set is empty")]
    EmptySeed,
    #[error("every seed query failed: first failure on {first_id}: {first_error}")]
    AllQueriesFailed { first_id: String, first_error: String },
    #[error("repository is empty, nothing to distill")]
    EmptyRepository,
    #[error("embeddings for template {card_id} cancel to zero, cannot average")]
    DegenerateGroup { card_id: String },
    #[error("search failed: {0}")]
    Search(#[from] MctsError),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
}

/// The trajectory with the highest voc_score; ties go to the lower cost,
/// then the lexicographically smaller canonical template. None only for
/// an empty slice.
pub fn select_best_path(paths: &[Trajectory], k: f64) -> Option<&Trajectory> {
    let mut best: Option<(&Trajectory, f64, usize, String)> = None;
    for path in paths {
        let score = voc_score(path.reward, path.cost(), k);
        let cost = path.cost();
        let template = path.template().canonical();
        let replace = match &best {
            None => true,
            Some((_, best_score, best_cost, best_template)) => {
                score > *best_score
                    || (score == *best_score && cost < *best_cost)
                    || (score == *best_score && cost == *best_cost && template < *best_template)
            }
        };
        if replace {
            best = Some((path, score, cost, template));
        }
    }
    best.map(|(path, _, _, _)| path)
}

/// Everything needed to turn one seed query into a repository entry.
pub struct SeedContext<'a> {
    pub policy: &'a dyn PolicyModel,
    pub embedder: &'a dyn EmbeddingProvider,
    pub complexity: &'a dyn ComplexityProvider,
    pub params: &'a GenerationParams,
    pub mcts: &'a MctsConfig,
    pub voc: &'a VocConfig,
    pub run_seed: u64,
}

/// Searches one seed query and distills its best path into an entry.
/// Returns None when the search finds no answer-bearing trajectory. The
/// search RNG is seeded from (run_seed, query id), so the outcome depends
/// only on those.
pub fn process_seed_query(
    query: &Query,
    ctx: &SeedContext<'_>,
    trace: Option<&mut dyn FnMut(&mcts::TraceRecord)>,
) -> Result<Option<QuestionPathEntry>, CardsError> {
    let config = MctsConfig {
        rng_seed: query_seed(ctx.run_seed, &query.id),
        ..*ctx.mcts
    };
    let outcome = mcts::search(query, ctx.policy, ctx.params, &config, trace)?;
    let best = match select_best_path(&outcome.trajectories, ctx.voc.k) {
        Some(best) => best.clone(),
        None => return Ok(None),
    };
    let pc = ctx.complexity.estimate_complexity(query)?;
    let tis = joint_embedding(ctx.embedder, query.image.as_ref(), &query.text)?;
    let score = voc_score(best.reward, best.cost(), ctx.voc.k);
    Ok(Some(QuestionPathEntry {
        query_id: query.id.clone(),
        trajectory: best,
        voc_score: score,
        pc,
        tis,
    }))
}

/// Per-run accounting for repository construction.
#[derive(Debug, Default)]
pub struct RepositoryOutcome {
    /// Entries sorted by query_id.
    pub entries: Vec<QuestionPathEntry>,
    /// Queries whose search found no answer-bearing path.
    pub unsolved: Vec<String>,
    /// Queries aborted by provider failures, with messages.
    pub failed: Vec<(String, String)>,
}

impl RepositoryOutcome {
    /// Merges per-query results (paired with their query ids) into sorted,
    /// counted form. Fails only when every query failed.
    pub fn assemble(
        results: Vec<(String, Result<Option<QuestionPathEntry>, CardsError>)>,
    ) -> Result<Self, CardsError> {
        let total = results.len();
        let mut outcome = RepositoryOutcome::default();
        for (id, result) in results {
            match result {
                Ok(Some(entry)) => outcome.entries.push(entry),
                Ok(None) => outcome.unsolved.push(id),
                Err(err) => outcome.failed.push((id, err.to_string())),
            }
        }
        if total > 0 && outcome.failed.len() == total {
            let (first_id, first_error) = outcome.failed[0].clone();
            return Err(CardsError::AllQueriesFailed {
                first_id,
                first_error,
            });
        }
        outcome.entries.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        outcome.unsolved.sort();
        outcome.failed.sort();
        Ok(outcome)
    }
}

/// Builds the question-path repository for a seed set, sequentially.
/// Unsolved queries are skipped and counted; provider failures are
/// recorded per query and fail the run only when no query survives.
pub fn build_repository(
    seed: &[Query],
    ctx: &SeedContext<'_>,
) -> Result<RepositoryOutcome, CardsError> {
    if seed.is_empty() {
        return Err(CardsError::EmptySeed);
    }
    ctx.voc.validate()?;
    let results = seed
        .iter()
        .map(|query| (query.id.clone(), process_seed_query(query, ctx, None)))
        .collect();
    RepositoryOutcome::assemble(results)
}

/// Groups repository entries by canonical template and emits one card per
/// group: mean complexity, renormalized mean embedding, group size as
/// support. Output is sorted by card_id.
pub fn distill_cards(repo: &[QuestionPathEntry]) -> Result<Vec<ThoughtCard>, CardsError> {
    if repo.is_empty() {
        return Err(CardsError::EmptyRepository);
    }
    let mut groups: BTreeMap<String, Vec<&QuestionPathEntry>> = BTreeMap::new();
    for entry in repo {
        groups
            .entry(entry.trajectory.template().canonical())
            .or_default()
            .push(entry);
    }
    let mut cards = Vec::with_capacity(groups.len());
    for (card_id, members) in groups {
        let avg_pc = members.iter().map(|m| m.pc).sum::<f64>() / members.len() as f64;
        let avg_tis = Embedding::normalized_mean(members.iter().map(|m| &m.tis)).map_err(|_| {
            CardsError::DegenerateGroup {
                card_id: card_id.clone(),
            }
        })?;
        cards.push(ThoughtCard {
            card_id,
            template: members[0].trajectory.template(),
            avg_pc,
            avg_tis,
            support: members.len(),
        });
    }
    Ok(cards)
}

pub const CARD_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
struct CardFile {
    schema_version: String,
    embedding_dim: usize,
    cards: Vec<StoredCard>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredCard {
    card_id: String,
    template: ActionTemplate,
    avg_pc: f64,
    avg_tis: Vec<f64>,
    support: usize,
}

#[derive(Debug, Error)]
pub enum CardFileError {
    #[error("failed to access card file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed card file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported card schema version {found:?}, expected {expected:?}")]
    Version { found: String, expected: String },
    #[error("card {card_id} has a {actual}-dim embedding in a {expected}-dim library")]
    Dimension {
        card_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid card {card_id}: {msg}")]
    BadCard { card_id: String, msg: String },
    #[error("cannot save an empty card library")]
    Empty,
    #[error("invalid template in card {card_id}: {source}")]
    Template {
        card_id: String,
        #[source]
        source: TemplateError,
    },
}

/// Writes a card library as versioned JSON. Floats serialize in shortest
/// round-trip form, so save/load is value-exact.
pub fn save_cards(cards: &[ThoughtCard], path: &Path) -> Result<(), CardFileError> {
    let first = cards.first().ok_or(CardFileError::Empty)?;
    let embedding_dim = first.avg_tis.dim();
    for card in cards {
        if card.avg_tis.dim() != embedding_dim {
            return Err(CardFileError::Dimension {
                card_id: card.card_id.clone(),
                expected: embedding_dim,
                actual: card.avg_tis.dim(),
            });
        }
    }
    let file = CardFile {
        schema_version: CARD_SCHEMA_VERSION.to_string(),
        embedding_dim,
        cards: cards
            .iter()
            .map(|card| StoredCard {
                card_id: card.card_id.clone(),
                template: card.template.clone(),
                avg_pc: card.avg_pc,
                avg_tis: card.avg_tis.values().to_vec(),
                support: card.support,
            })
            .collect(),
    };
    let mut body = serde_json::to_string_pretty(&file)?;
    body.push('\n');
    std::fs::write(path, body).map_err(|source| CardFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Reads a card library, validating schema version, embedding dimensions,
/// template identity, and per-card invariants. Stored embeddings are kept
/// bit-exact.
pub fn load_cards(path: &Path) -> Result<Vec<ThoughtCard>, CardFileError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CardFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CardFile = serde_json::from_str(&raw)?;
    if file.schema_version != CARD_SCHEMA_VERSION {
        return Err(CardFileError::Version {
            found: file.schema_version,
            expected: CARD_SCHEMA_VERSION.to_string(),
        });
    }
    let mut cards = Vec::with_capacity(file.cards.len());
    for stored in file.cards {
        if stored.avg_tis.len() != file.embedding_dim {
            return Err(CardFileError::Dimension {
                card_id: stored.card_id,
                expected: file.embedding_dim,
                actual: stored.avg_tis.len(),
            });
        }
        if stored.card_id != stored.template.canonical() {
            return Err(CardFileError::BadCard {
                card_id: stored.card_id,
                msg: "card_id does not match its template".to_string(),
            });
        }
        if stored.support == 0 {
            return Err(CardFileError::BadCard {
                card_id: stored.card_id,
                msg: "support must be at least 1".to_string(),
            });
        }
        if !stored.avg_pc.is_finite() || stored.avg_pc < 0.0 {
            return Err(CardFileError::BadCard {
                card_id: stored.card_id,
                msg: "avg_pc must be finite and non-negative".to_string(),
            });
        }
        let avg_tis = Embedding::from_stored(stored.avg_tis).map_err(|e| CardFileError::BadCard {
            card_id: stored.card_id.clone(),
            msg: e.to_string(),
        })?;
        cards.push(ThoughtCard {
            card_id: stored.card_id,
            template: stored.template,
            avg_pc: stored.avg_pc,
            avg_tis,
            support: stored.support,
        });
    }
    Ok(cards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::providers::mock::{MockComplexity, MockEmbedder, ScriptedPolicy};
    use crate::trajectory::ReasoningStep;
    use std::collections::HashMap;

    fn trajectory(actions: &[Action], reward: f64) -> Trajectory {
        let steps: Vec<ReasoningStep> = actions
            .iter()
            .enumerate()
            .map(|(i, &action)| {
                let content = if i + 1 == actions.len() {
                    "FINAL ANSWER: 9".to_string()
                } else {
                    format!("step {i}")
                };
                ReasoningStep::new(action, content).unwrap()
            })
            .collect();
        Trajectory::new("q", steps, reward).unwrap()
    }

    #[test]
    fn voc_score_direct_evaluation() {
        assert!((voc_score(0.9, 3, 0.8) - (0.8 * 0.9 - 0.2 * 3.0)).abs() < 1e-12);
        assert_eq!(voc_score(0.7, 99, 1.0), 0.7);
    }

    #[test]
    fn voc_score_prefers_cheaper_at_equal_reward() {
        for k in [0.0, 0.3, 0.9, 0.99] {
            assert!(voc_score(0.9, 3, k) > voc_score(0.9, 5, k));
        }
    }

    #[test]
    fn best_path_maximizes_score() {
        let paths = vec![
            trajectory(&[Action::VisualParsing, Action::ChainOfThought], 0.8),
            trajectory(
                &[
                    Action::VisualParsing,
                    Action::SystemAnalysis,
                    Action::OneStepThought,
                    Action::DivideAndConquer,
                    Action::ChainOfThought,
                ],
                0.9,
            ),
        ];
        let best = select_best_path(&paths, 0.8).unwrap();
        assert_eq!(best.cost(), 2);
        let s1 = voc_score(0.8, 2, 0.8);
        let s2 = voc_score(0.9, 5, 0.8);
        assert!(s1 > s2);
    }

    #[test]
    fn best_path_single_element() {
        let paths = vec![trajectory(&[Action::ChainOfThought], 0.5)];
        assert_eq!(select_best_path(&paths, 0.9).unwrap(), &paths[0]);
    }

    #[test]
    fn best_path_tie_prefers_lower_cost() {
        let cheap = trajectory(&[Action::OneStepThought, Action::ChainOfThought], 0.5);
        let pricey = trajectory(
            &[
                Action::OneStepThought,
                Action::OneStepThought,
                Action::ChainOfThought,
            ],
            0.5,
        );
        let paths = vec![pricey.clone(), cheap.clone()];
        let best = select_best_path(&paths, 1.0).unwrap();
        assert_eq!(best, &cheap);
        let reversed = vec![cheap.clone(), pricey];
        assert_eq!(select_best_path(&reversed, 1.0).unwrap(), &cheap);
    }

    #[test]
    fn best_path_full_tie_prefers_lexicographic_template() {
        let a = trajectory(&[Action::VisualParsing, Action::ChainOfThought], 0.5);
        let b = trajectory(&[Action::SystemAnalysis, Action::ChainOfThought], 0.5);
        let paths = [b, a.clone()];
        let best = select_best_path(&paths, 1.0).unwrap();
        assert_eq!(best.template().canonical(), a.template().canonical());
    }

    #[test]
    fn best_path_agrees_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let pool = [
            Action::VisualParsing,
            Action::SystemAnalysis,
            Action::OneStepThought,
            Action::DivideAndConquer,
        ];
        for _ in 0..200 {
            let k: f64 = rng.random_range(0.0..=1.0);
            let n = rng.random_range(1..6);
            let paths: Vec<Trajectory> = (0..n)
                .map(|_| {
                    let len = rng.random_range(1..5);
                    let mut actions: Vec<Action> =
                        (0..len - 1).map(|_| pool[rng.random_range(0..4)]).collect();
                    actions.push(Action::ChainOfThought);
                    let reward = (rng.random_range(0..=10) as f64) / 10.0;
                    trajectory(&actions, reward)
                })
                .collect();
            let picked = select_best_path(&paths, k).unwrap();
            let best_score = paths
                .iter()
                .map(|p| voc_score(p.reward, p.cost(), k))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(voc_score(picked.reward, picked.cost(), k), best_score);
        }
    }

    #[test]
    fn empty_paths_give_none() {
        assert!(select_best_path(&[], 0.9).is_none());
    }

    fn entry(query_id: &str, actions: &[Action], pc: f64, text: &str) -> QuestionPathEntry {
        let embedder = MockEmbedder;
        use crate::providers::EmbeddingProvider;
        QuestionPathEntry {
            query_id: query_id.to_string(),
            trajectory: trajectory(actions, 0.75),
            voc_score: 0.5,
            pc,
            tis: embedder.embed_text(text).unwrap(),
        }
    }

    #[test]
    fn distill_groups_by_template_and_averages() {
        let template = [
            Action::VisualParsing,
            Action::SystemAnalysis,
            Action::ChainOfThought,
        ];
        let repo = vec![
            entry("q1", &template, 2.0, "same question"),
            entry("q2", &template, 4.0, "same question"),
        ];
        let cards = distill_cards(&repo).unwrap();
        assert_eq!(cards.len(), 1);
        let card = &cards[0];
        assert_eq!(card.card_id, "a1\u{2192}a2\u{2192}a4");
        assert!((card.avg_pc - 3.0).abs() < 1e-12);
        assert_eq!(card.support, 2);
        assert_embedding_close(&card.avg_tis, &repo[0].tis);
    }

    fn assert_embedding_close(a: &Embedding, b: &Embedding) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn distill_singleton_copies_entry() {
        let repo = vec![entry("q1", &[Action::ChainOfThought], 5.0, "solo")];
        let cards = distill_cards(&repo).unwrap();
        assert_eq!(cards.len(), 1);
        assert_eq!(cards[0].card_id, "a4");
        assert_eq!(cards[0].avg_pc, 5.0);
        assert_embedding_close(&cards[0].avg_tis, &repo[0].tis);
        assert_eq!(cards[0].support, 1);
    }

    #[test]
    fn distill_distinct_templates_make_distinct_cards() {
        let repo = vec![
            entry("q1", &[Action::ChainOfThought], 1.0, "one"),
            entry(
                "q2",
                &[Action::VisualParsing, Action::ChainOfThought],
                2.0,
                "two",
            ),
        ];
        let cards = distill_cards(&repo).unwrap();
        assert_eq!(cards.len(), 2);
        assert_eq!(cards[0].card_id, "a1\u{2192}a4");
        assert_eq!(cards[1].card_id, "a4");
    }

    #[test]
    fn distill_is_permutation_invariant() {
        let template_a = [Action::VisualParsing, Action::ChainOfThought];
        let template_b = [Action::OneStepThought, Action::ChainOfThought];
        let repo = vec![
            entry("q1", &template_a, 1.0, "alpha"),
            entry("q2", &template_b, 2.0, "beta"),
            entry("q3", &template_a, 3.0, "gamma"),
        ];
        let forward = distill_cards(&repo).unwrap();
        let mut shuffled = repo.clone();
        shuffled.reverse();
        let backward = distill_cards(&shuffled).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn distill_support_sums_to_repo_size() {
        let repo = vec![
            entry("q1", &[Action::ChainOfThought], 1.0, "a"),
            entry("q2", &[Action::ChainOfThought], 2.0, "b"),
            entry(
                "q3",
                &[Action::SystemAnalysis, Action::ChainOfThought],
                3.0,
                "c",
            ),
        ];
        let cards = distill_cards(&repo).unwrap();
        let total: usize = cards.iter().map(|c| c.support).sum();
        assert_eq!(total, repo.len());
    }

    #[test]
    fn distill_empty_repo_is_an_error() {
        assert!(matches!(
            distill_cards(&[]),
            Err(CardsError::EmptyRepository)
        ));
    }

    #[test]
    fn distill_reports_degenerate_group() {
        let mut first = entry("q1", &[Action::ChainOfThought], 1.0, "x");
        let mut second = entry("q2", &[Action::ChainOfThought], 1.0, "x");
        first.tis = Embedding::unit_from(vec![1.0, 0.0]).unwrap();
        second.tis = Embedding::unit_from(vec![-1.0, 0.0]).unwrap();
        let err = distill_cards(&[first, second]).unwrap_err();
        match err {
            CardsError::DegenerateGroup { card_id } => assert_eq!(card_id, "a4"),
            other => panic!("expected degenerate group, got {other:?}"),
        }
    }

    fn scripted_ctx<'a>(
        policy: &'a ScriptedPolicy,
        embedder: &'a MockEmbedder,
        complexity: &'a MockComplexity,
        params: &'a GenerationParams,
        mcts: &'a MctsConfig,
        voc: &'a VocConfig,
    ) -> SeedContext<'a> {
        SeedContext {
            policy,
            embedder,
            complexity,
            params,
            mcts,
            voc,
            run_seed: 7,
        }
    }

    fn solvable_entries(query_ids: &[&str]) -> HashMap<String, String> {
        let mut entries = HashMap::new();
        for qid in query_ids {
            for action in crate::action::ALL_ACTIONS {
                let content = if action == Action::ChainOfThought {
                    "FINAL ANSWER: 4".to_string()
                } else {
                    "prep".to_string()
                };
                entries.insert(format!("{qid}|{}", action.short_name()), content);
                for second in crate::action::ALL_ACTIONS {
                    let content = if second == Action::ChainOfThought {
                        "FINAL ANSWER: 4".to_string()
                    } else {
                        "more prep".to_string()
                    };
                    entries.insert(
                        format!("{qid}|{}\u{2192}{}", action.short_name(), second.short_name()),
                        content,
                    );
                }
            }
            for k in 0..4 {
                entries.insert(format!("{qid}|vote:{k}"), "4".to_string());
            }
        }
        entries
    }

    #[test]
    fn repository_solves_scripted_queries_sorted_by_id() {
        let policy = ScriptedPolicy::new(solvable_entries(&["b", "a", "c"]));
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig {
            iterations: 8,
            branching: 6,
            max_depth: 2,
            ..Default::default()
        };
        let voc = VocConfig::default();
        let ctx = scripted_ctx(&policy, &embedder, &complexity, &params, &mcts, &voc);
        let queries = vec![
            Query::new("b", "beta question").unwrap(),
            Query::new("a", "alpha question").unwrap(),
            Query::new("c", "gamma question").unwrap(),
        ];
        let outcome = build_repository(&queries, &ctx).unwrap();
        let ids: Vec<&str> = outcome.entries.iter().map(|e| e.query_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert!(outcome.unsolved.is_empty());
        assert!(outcome.failed.is_empty());
    }

    #[test]
    fn repository_counts_unsolved_queries() {
        let mut entries = solvable_entries(&["a"]);
        for action in crate::action::ALL_ACTIONS {
            entries.insert(format!("dead|{}", action.short_name()), "stuck".to_string());
            for second in crate::action::ALL_ACTIONS {
                entries.insert(
                    format!("dead|{}\u{2192}{}", action.short_name(), second.short_name()),
                    "stuck".to_string(),
                );
            }
        }
        let policy = ScriptedPolicy::new(entries);
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig {
            iterations: 8,
            branching: 6,
            max_depth: 2,
            ..Default::default()
        };
        let voc = VocConfig::default();
        let ctx = scripted_ctx(&policy, &embedder, &complexity, &params, &mcts, &voc);
        let queries = vec![
            Query::new("a", "solvable").unwrap(),
            Query::new("dead", "unsolvable").unwrap(),
        ];
        let outcome = build_repository(&queries, &ctx).unwrap();
        assert_eq!(outcome.entries.len(), 1);
        assert_eq!(outcome.unsolved, vec!["dead".to_string()]);
    }

    #[test]
    fn repository_rejects_empty_seed() {
        let policy = ScriptedPolicy::default();
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig::default();
        let voc = VocConfig::default();
        let ctx = scripted_ctx(&policy, &embedder, &complexity, &params, &mcts, &voc);
        assert!(matches!(
            build_repository(&[], &ctx),
            Err(CardsError::EmptySeed)
        ));
    }

    #[test]
    fn repository_fails_only_when_all_queries_fail() {
        let policy = ScriptedPolicy::default();
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig {
            iterations: 4,
            branching: 2,
            max_depth: 2,
            ..Default::default()
        };
        let voc = VocConfig::default();
        let ctx = scripted_ctx(&policy, &embedder, &complexity, &params, &mcts, &voc);
        let queries = vec![
            Query::new("a", "unscripted").unwrap(),
            Query::new("b", "unscripted too").unwrap(),
        ];
        assert!(matches!(
            build_repository(&queries, &ctx),
            Err(CardsError::AllQueriesFailed { .. })
        ));
    }

    #[test]
    fn partial_failures_are_recorded_not_fatal() {
        let policy = ScriptedPolicy::new(solvable_entries(&["a"]));
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig {
            iterations: 8,
            branching: 6,
            max_depth: 2,
            ..Default::default()
        };
        let voc = VocConfig::default();
        let ctx = scripted_ctx(&policy, &embedder, &complexity, &params, &mcts, &voc);
        let queries = vec![
            Query::new("a", "scripted").unwrap(),
            Query::new("missing", "unscripted").unwrap(),
        ];
        let outcome = build_repository(&queries, &ctx).unwrap();
        assert_eq!(outcome.entries.len(), 1);
        assert_eq!(outcome.failed.len(), 1);
        assert_eq!(outcome.failed[0].0, "missing");
    }

    fn sample_cards() -> Vec<ThoughtCard> {
        use crate::providers::EmbeddingProvider;
        let embedder = MockEmbedder;
        vec![
            ThoughtCard {
                card_id: "a1\u{2192}a4".to_string(),
                template: ActionTemplate::new(vec![Action::VisualParsing, Action::ChainOfThought])
                    .unwrap(),
                avg_pc: 2.5,
                avg_tis: embedder.embed_text("first").unwrap(),
                support: 3,
            },
            ThoughtCard {
                card_id: "a4".to_string(),
                template: ActionTemplate::new(vec![Action::ChainOfThought]).unwrap(),
                avg_pc: 1.0,
                avg_tis: embedder.embed_text("second").unwrap(),
                support: 1,
            },
        ]
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let cards = sample_cards();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        save_cards(&cards, &path).unwrap();
        let loaded = load_cards(&path).unwrap();
        assert_eq!(loaded, cards);
        for (a, b) in loaded.iter().zip(&cards) {
            for (x, y) in a.avg_tis.values().iter().zip(b.avg_tis.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn save_is_byte_stable() {
        let cards = sample_cards();
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("one.json");
        let second = dir.path().join("two.json");
        save_cards(&cards, &first).unwrap();
        save_cards(&cards, &second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn load_rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        std::fs::write(
            &path,
            r#"{"schema_version":"999","embedding_dim":2,"cards":[]}"#,
        )
        .unwrap();
        match load_cards(&path).unwrap_err() {
            CardFileError::Version { found, .. } => assert_eq!(found, "999"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        std::fs::write(
            &path,
            r#"{"schema_version":"1","embedding_dim":3,"cards":[{"card_id":"a4","template":["a4"],"avg_pc":1.0,"avg_tis":[1.0,0.0],"support":1}]}"#,
        )
        .unwrap();
        match load_cards(&path).unwrap_err() {
            CardFileError::Dimension {
                expected, actual, ..
            } => {
                assert_eq!(expected, 3);
                assert_eq!(actual, 2);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_mismatched_card_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        std::fs::write(
            &path,
            r#"{"schema_version":"1","embedding_dim":2,"cards":[{"card_id":"a5","template":["a4"],"avg_pc":1.0,"avg_tis":[1.0,0.0],"support":1}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_cards(&path).unwrap_err(),
            CardFileError::BadCard { .. }
        ));
    }

    #[test]
    fn load_rejects_non_unit_embedding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        std::fs::write(
            &path,
            r#"{"schema_version":"1","embedding_dim":2,"cards":[{"card_id":"a4","template":["a4"],"avg_pc":1.0,"avg_tis":[3.0,4.0],"support":1}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_cards(&path).unwrap_err(),
            CardFileError::BadCard { .. }
        ));
    }

    #[test]
    fn save_rejects_empty_library() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.json");
        assert!(matches!(
            save_cards(&[], &path),
            Err(CardFileError::Empty)
        ));
    }
}
