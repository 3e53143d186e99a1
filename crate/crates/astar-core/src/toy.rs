//! Synthetic arithmetic tasks with a rule-driven mock policy.
//!
//! Each task belongs to a difficulty class 0..3. A class-c task states
//! c + 1 numeric conditions; its gold answer is their sum. The matching
//! policy only commits to the answer on a concluding reasoning step taken
//! after at least c preparatory (non-concluding) steps, so a bare
//! single-step answer attempt succeeds only on class-0 tasks, while a
//! template with enough preparation solves any task of its class. This
//! makes the guided-versus-unguided gap a construction rather than a
//! measurement: roughly a third of generated tasks are class 0.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::dataset::DatasetRecord;
use crate::providers::{GenerationParams, PolicyModel, ProviderError};
use crate::query::Query;
use crate::trajectory::ReasoningStep;

/// Difficulty classes cycle through this pattern: per 20 tasks, seven of
/// class 0, five each of classes 1 and 2, three of class 3.
const CLASS_PATTERN: [usize; 20] = [0, 1, 2, 0, 3, 1, 2, 0, 1, 2, 0, 3, 1, 2, 0, 1, 2, 0, 3, 0];

/// Question text is identical for every task of a class; the numbers live
/// in the conditions. Queries of one class are therefore embedding-
/// identical, which makes retrieval exact under the hash-based mock
/// embedder.
fn class_text(class: usize) -> &'static str {
    match class {
        0 => "Report the single listed value as the final answer.",
        1 => "Combine the two listed values by addition and report the total.",
        2 => "Add the three listed values in order and report the running total.",
        _ => "Sum all four listed values, double-checking each addition, and report the total.",
    }
}

fn class_category(class: usize) -> String {
    format!("class-{class}")
}

/// Per-task behavior table for the toy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    /// The correct answer.
    pub gold: String,
    /// Preparatory steps required before a concluding step may answer.
    pub prep_required: usize,
    /// The answer given by the occasional disagreeing vote sample.
    pub wrong: String,
}

pub const TOY_SCRIPT_VERSION: &str = "1";
pub const TOY_SCRIPT_KIND: &str = "toy-policy";

#[derive(Debug, Serialize, Deserialize)]
struct ToyScriptFile {
    schema_version: String,
    kind: String,
    tasks: BTreeMap<String, ToyTask>,
}

/// Writes the task table as a policy script file.
pub fn save_script(tasks: &BTreeMap<String, ToyTask>, path: &Path) -> std::io::Result<()> {
    let file = ToyScriptFile {
        schema_version: TOY_SCRIPT_VERSION.to_string(),
        kind: TOY_SCRIPT_KIND.to_string(),
        tasks: tasks.clone(),
    };
    let mut body = serde_json::to_string_pretty(&file).expect("script table serializes");
    body.push('\n');
    std::fs::write(path, body)
}

/// Deterministic policy that answers a task only on a concluding step
/// taken after enough preparation.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    tasks: BTreeMap<String, ToyTask>,
}

impl ToyPolicy {
    pub fn new(tasks: BTreeMap<String, ToyTask>) -> Self {
        ToyPolicy { tasks }
    }

    /// Loads a toy policy script, rejecting other schema kinds.
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ProviderError::InvalidConfig {
            message: format!("failed to read policy script {}: {e}", path.display()),
        })?;
        let file: ToyScriptFile =
            serde_json::from_str(&raw).map_err(|e| ProviderError::InvalidConfig {
                message: format!("malformed toy policy script: {e}"),
            })?;
        if file.schema_version != TOY_SCRIPT_VERSION {
            return Err(ProviderError::InvalidConfig {
                message: format!(
                    "unsupported toy script version {:?}, expected {TOY_SCRIPT_VERSION:?}",
                    file.schema_version
                ),
            });
        }
        if file.kind != TOY_SCRIPT_KIND {
            return Err(ProviderError::InvalidConfig {
                message: format!("not a toy policy script: kind {:?}", file.kind),
            });
        }
        Ok(ToyPolicy { tasks: file.tasks })
    }

    fn task(&self, query: &Query) -> Result<&ToyTask, ProviderError> {
        self.tasks.get(&query.id).ok_or_else(|| ProviderError::Unscripted {
            key: query.id.clone(),
        })
    }
}

impl PolicyModel for ToyPolicy {
    fn generate_step(
        &self,
        query: &Query,
        history: &[ReasoningStep],
        action: Action,
        _params: &GenerationParams,
    ) -> Result<ReasoningStep, ProviderError> {
        let task = self.task(query)?;
        let content = if action == Action::ChainOfThought {
            let preps = history
                .iter()
                .filter(|s| s.action != Action::ChainOfThought)
                .count();
            if preps >= task.prep_required {
                format!(
                    "combining {preps} prepared facts into the total\nFINAL ANSWER: {}",
                    task.gold
                )
            } else {
                format!(
                    "cannot conclude yet: {preps} of {} facts prepared",
                    task.prep_required
                )
            }
        } else {
            format!("{} note {}", action.long_name(), history.len() + 1)
        };
        Ok(ReasoningStep::new(action, content).expect("toy step content is non-empty"))
    }

    fn direct_answer(
        &self,
        query: &Query,
        sample_index: u32,
        _params: &GenerationParams,
    ) -> Result<Option<String>, ProviderError> {
        let task = self.task(query)?;
        if sample_index % 3 == 2 {
            Ok(Some(task.wrong.clone()))
        } else {
            Ok(Some(task.gold.clone()))
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone, Copy)]
pub struct ToyGenConfig {
    /// Seed (card-construction) task count.
    pub n: usize,
    /// Held-out (inference) task count.
    pub holdout: usize,
    /// RNG seed for condition values.
    pub seed: u64,
}

impl Default for ToyGenConfig {
    fn default() -> Self {
        ToyGenConfig {
            n: 100,
            holdout: 50,
            seed: 0,
        }
    }
}

/// A generated corpus: two datasets plus the policy table covering both.
#[derive(Debug)]
pub struct ToyCorpus {
    pub seed_records: Vec<DatasetRecord>,
    pub holdout_records: Vec<DatasetRecord>,
    pub tasks: BTreeMap<String, ToyTask>,
}

fn make_task(
    id: String,
    class: usize,
    rng: &mut ChaCha8Rng,
    tasks: &mut BTreeMap<String, ToyTask>,
) -> DatasetRecord {
    let values: Vec<u32> = (0..=class).map(|_| rng.random_range(2..=19)).collect();
    let conditions: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(k, v)| format!("value {} is {v}", k + 1))
        .collect();
    let gold = values.iter().sum::<u32>().to_string();
    let wrong = (values.iter().sum::<u32>() + 1).to_string();
    tasks.insert(
        id.clone(),
        ToyTask {
            gold: gold.clone(),
            prep_required: class,
            wrong,
        },
    );
    DatasetRecord {
        id,
        question: class_text(class).to_string(),
        image_path: None,
        image_base64: None,
        answer: Some(gold),
        category: Some(class_category(class)),
        conditions,
    }
}

/// Generates a corpus deterministically from the config.
pub fn generate(config: &ToyGenConfig) -> ToyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tasks = BTreeMap::new();
    let seed_records: Vec<DatasetRecord> = (0..config.n)
        .map(|i| {
            make_task(
                format!("toy-{:04}", i + 1),
                CLASS_PATTERN[i % CLASS_PATTERN.len()],
                &mut rng,
                &mut tasks,
            )
        })
        .collect();
    let holdout_records: Vec<DatasetRecord> = (0..config.holdout)
        .map(|j| {
            make_task(
                format!("toy-h-{:04}", j + 1),
                CLASS_PATTERN[j % CLASS_PATTERN.len()],
                &mut rng,
                &mut tasks,
            )
        })
        .collect();
    ToyCorpus {
        seed_records,
        holdout_records,
        tasks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::{build_repository, distill_cards, SeedContext, VocConfig};
    use crate::inference::{run_candidate, verify_and_select};
    use crate::matching::select_top5;
    use crate::mcts::MctsConfig;
    use crate::providers::mock::{MockComplexity, MockEmbedder};
    use crate::providers::{joint_embedding, ComplexityProvider};
    use crate::trajectory::ANSWER_MARKER;

    fn to_queries(records: &[DatasetRecord]) -> Vec<Query> {
        records
            .iter()
            .map(|r| r.clone().into_query(Path::new(".")).unwrap())
            .collect()
    }

    #[test]
    fn class_pattern_proportions_hold_per_hundred() {
        let corpus = generate(&ToyGenConfig {
            n: 100,
            holdout: 0,
            seed: 1,
        });
        let mut counts = [0usize; 4];
        for record in &corpus.seed_records {
            let class: usize = record
                .category
                .as_ref()
                .unwrap()
                .strip_prefix("class-")
                .unwrap()
                .parse()
                .unwrap();
            counts[class] += 1;
        }
        assert_eq!(counts, [35, 25, 25, 15]);
    }

    #[test]
    fn conditions_count_tracks_class_and_gold_is_their_sum() {
        let corpus = generate(&ToyGenConfig {
            n: 40,
            holdout: 10,
            seed: 3,
        });
        for record in corpus.seed_records.iter().chain(&corpus.holdout_records) {
            let class: usize = record
                .category
                .as_ref()
                .unwrap()
                .strip_prefix("class-")
                .unwrap()
                .parse()
                .unwrap();
            assert_eq!(record.conditions.len(), class + 1);
            let sum: u32 = record
                .conditions
                .iter()
                .map(|c| c.rsplit(' ').next().unwrap().parse::<u32>().unwrap())
                .sum();
            assert_eq!(record.answer.as_deref(), Some(sum.to_string().as_str()));
            let task = &corpus.tasks[&record.id];
            assert_eq!(task.prep_required, class);
            assert_eq!(task.gold, sum.to_string());
        }
    }

    #[test]
    fn question_text_is_identical_within_a_class() {
        let corpus = generate(&ToyGenConfig {
            n: 60,
            holdout: 0,
            seed: 5,
        });
        for record in &corpus.seed_records {
            assert_eq!(
                record.question,
                class_text(
                    record
                        .category
                        .as_ref()
                        .unwrap()
                        .strip_prefix("class-")
                        .unwrap()
                        .parse()
                        .unwrap()
                )
            );
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate(&ToyGenConfig {
            n: 30,
            holdout: 10,
            seed: 9,
        });
        let b = generate(&ToyGenConfig {
            n: 30,
            holdout: 10,
            seed: 9,
        });
        assert_eq!(a.seed_records, b.seed_records);
        assert_eq!(a.holdout_records, b.holdout_records);
        assert_eq!(a.tasks, b.tasks);
        let c = generate(&ToyGenConfig {
            n: 30,
            holdout: 10,
            seed: 10,
        });
        assert_ne!(a.seed_records, c.seed_records);
    }

    #[test]
    fn larger_n_extends_the_same_prefix() {
        let small = generate(&ToyGenConfig {
            n: 20,
            holdout: 0,
            seed: 4,
        });
        let large = generate(&ToyGenConfig {
            n: 50,
            holdout: 0,
            seed: 4,
        });
        assert_eq!(small.seed_records[..], large.seed_records[..20]);
    }

    fn one_task(class: usize) -> (Query, ToyPolicy) {
        let corpus = generate(&ToyGenConfig {
            n: 20,
            holdout: 0,
            seed: 2,
        });
        let record = corpus
            .seed_records
            .iter()
            .find(|r| r.category.as_deref() == Some(class_category(class).as_str()))
            .unwrap()
            .clone();
        let query = record.into_query(Path::new(".")).unwrap();
        (query, ToyPolicy::new(corpus.tasks))
    }

    #[test]
    fn concluding_step_answers_only_after_enough_preparation() {
        let (query, policy) = one_task(2);
        let params = GenerationParams::default();
        let gold = query.gold_answer.clone().unwrap();

        let bare = policy
            .generate_step(&query, &[], Action::ChainOfThought, &params)
            .unwrap();
        assert!(bare.extracted_answer.is_none());

        let prep1 = policy
            .generate_step(&query, &[], Action::VisualParsing, &params)
            .unwrap();
        assert!(prep1.extracted_answer.is_none());
        let one_prep = [prep1.clone()];
        let still_short = policy
            .generate_step(&query, &one_prep, Action::ChainOfThought, &params)
            .unwrap();
        assert!(still_short.extracted_answer.is_none());

        let prep2 = policy
            .generate_step(&query, &one_prep, Action::SystemAnalysis, &params)
            .unwrap();
        let two_preps = [prep1, prep2];
        let conclude = policy
            .generate_step(&query, &two_preps, Action::ChainOfThought, &params)
            .unwrap();
        assert_eq!(conclude.extracted_answer.as_deref(), Some(gold.as_str()));
    }

    #[test]
    fn failed_concluding_steps_do_not_count_as_preparation() {
        let (query, policy) = one_task(1);
        let params = GenerationParams::default();
        let failed_attempt = policy
            .generate_step(&query, &[], Action::ChainOfThought, &params)
            .unwrap();
        let retry = policy
            .generate_step(&query, &[failed_attempt], Action::ChainOfThought, &params)
            .unwrap();
        assert!(retry.extracted_answer.is_none());
    }

    #[test]
    fn class_zero_answers_on_a_bare_concluding_step() {
        let (query, policy) = one_task(0);
        let step = policy
            .generate_step(&query, &[], Action::ChainOfThought, &GenerationParams::default())
            .unwrap();
        assert_eq!(
            step.extracted_answer,
            query.gold_answer.map(|g| crate::answer::normalize_answer(&g))
        );
    }

    #[test]
    fn preparatory_steps_never_leak_the_marker() {
        let (query, policy) = one_task(3);
        let params = GenerationParams::default();
        for action in crate::action::ALL_ACTIONS {
            if action == Action::ChainOfThought {
                continue;
            }
            let step = policy.generate_step(&query, &[], action, &params).unwrap();
            assert!(!step.content.contains(ANSWER_MARKER));
        }
    }

    #[test]
    fn votes_cycle_two_gold_one_wrong() {
        let (query, policy) = one_task(1);
        let params = GenerationParams::default();
        let task_gold = query.gold_answer.clone().unwrap();
        let samples: Vec<String> = (0..6)
            .map(|k| policy.direct_answer(&query, k, &params).unwrap().unwrap())
            .collect();
        assert_eq!(samples[0], task_gold);
        assert_eq!(samples[1], task_gold);
        assert_ne!(samples[2], task_gold);
        assert_eq!(samples[3], task_gold);
        assert_eq!(samples[5], samples[2]);
    }

    #[test]
    fn unknown_query_id_is_unscripted() {
        let policy = ToyPolicy::new(BTreeMap::new());
        let query = Query::new("ghost", "question").unwrap();
        assert!(matches!(
            policy.generate_step(&query, &[], Action::ChainOfThought, &GenerationParams::default()),
            Err(ProviderError::Unscripted { .. })
        ));
    }

    #[test]
    fn script_round_trips_through_a_file() {
        let corpus = generate(&ToyGenConfig {
            n: 5,
            holdout: 2,
            seed: 6,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        save_script(&corpus.tasks, &path).unwrap();
        let policy = ToyPolicy::load(&path).unwrap();
        assert_eq!(policy.tasks, corpus.tasks);
    }

    #[test]
    fn load_rejects_non_toy_scripts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        std::fs::write(
            &path,
            r#"{"schema_version":"1","kind":"something-else","tasks":{}}"#,
        )
        .unwrap();
        assert!(ToyPolicy::load(&path).is_err());
        std::fs::write(
            &path,
            r#"{"schema_version":"42","kind":"toy-policy","tasks":{}}"#,
        )
        .unwrap();
        assert!(ToyPolicy::load(&path).is_err());
    }

    #[test]
    fn unguided_single_pass_solves_only_class_zero() {
        let corpus = generate(&ToyGenConfig {
            n: 0,
            holdout: 50,
            seed: 0,
        });
        let policy = ToyPolicy::new(corpus.tasks.clone());
        let params = GenerationParams::default();
        let queries = to_queries(&corpus.holdout_records);
        let mut correct = 0;
        for query in &queries {
            let step = policy
                .generate_step(query, &[], Action::ChainOfThought, &params)
                .unwrap();
            let gold = crate::answer::normalize_answer(query.gold_answer.as_ref().unwrap());
            if step.extracted_answer.as_deref() == Some(gold.as_str()) {
                correct += 1;
            }
        }
        assert_eq!(correct, 17);
        assert!((correct as f64 / queries.len() as f64) <= 0.40);
    }

    #[test]
    fn guided_pipeline_beats_the_unguided_baseline() {
        let corpus = generate(&ToyGenConfig {
            n: 20,
            holdout: 10,
            seed: 0,
        });
        let policy = ToyPolicy::new(corpus.tasks.clone());
        let embedder = MockEmbedder;
        let complexity = MockComplexity;
        let params = GenerationParams::default();
        let mcts = MctsConfig::default();
        let voc = VocConfig::default();
        let ctx = SeedContext {
            policy: &policy,
            embedder: &embedder,
            complexity: &complexity,
            params: &params,
            mcts: &mcts,
            voc: &voc,
            run_seed: 7,
        };
        let seed_queries = to_queries(&corpus.seed_records);
        let outcome = build_repository(&seed_queries, &ctx).unwrap();
        assert!(outcome.failed.is_empty());
        let cards = distill_cards(&outcome.entries).unwrap();
        assert!(!cards.is_empty());

        let holdout = to_queries(&corpus.holdout_records);
        let mut correct = 0;
        for query in &holdout {
            let pc = complexity.estimate_complexity(query).unwrap();
            let tis = joint_embedding(&embedder, query.image.as_ref(), &query.text).unwrap();
            let top = select_top5(&cards, &tis, pc).unwrap();
            let candidates: Vec<_> = top
                .iter()
                .map(|card| run_candidate(query, card, &policy, &params))
                .collect();
            let verified = verify_and_select(query, &candidates, None).unwrap();
            let gold = crate::answer::normalize_answer(query.gold_answer.as_ref().unwrap());
            if verified.answer == gold {
                correct += 1;
            }
        }
        assert_eq!(correct, holdout.len());
    }
}
