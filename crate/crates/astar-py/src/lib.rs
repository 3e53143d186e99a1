//! Python bindings: scoring primitives plus a mock-provider pipeline
//! (generate a toy corpus, build cards, infer, evaluate) for scripted use.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use astar_core::action::{Action, ActionTemplate, ALL_ACTIONS};
use astar_core::cards as core_cards;
use astar_core::config::{build_providers, RunConfig};
use astar_core::dataset::{load_dataset, save_dataset};
use astar_core::eval as core_eval;
use astar_core::inference as core_inference;
use astar_core::mcts as core_mcts;
use astar_core::pipeline as core_pipeline;
use astar_core::toy;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_error(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Canonical form of a model answer: trimmed, unquoted, lowercased, with
/// collapsed whitespace and normalized decimals.
#[pyfunction]
fn normalize_answer(text: &str) -> String {
    astar_core::answer::normalize_answer(text)
}

/// Node-selection score: q + w * sqrt(ln(parent_visits) / visits).
/// Unvisited nodes score positive infinity.
#[pyfunction]
fn uct(q: f64, visits: u64, parent_visits: u64, exploration_weight: f64) -> f64 {
    core_mcts::uct(q, visits, parent_visits, exploration_weight)
}

/// Path value: k * reward - (1 - k) * cost.
#[pyfunction]
fn voc_score(reward: f64, cost: usize, k: f64) -> f64 {
    core_cards::voc_score(reward, cost, k)
}

/// Most frequent answer and its agreement fraction; ties go to the
/// answer seen first. None for an empty list.
#[pyfunction]
fn majority_vote(answers: Vec<String>) -> Option<(String, f64)> {
    core_inference::majority_vote(&answers)
}

/// Short names of every reasoning action, in canonical order.
#[pyfunction]
fn action_names() -> Vec<String> {
    ALL_ACTIONS.iter().map(|a| a.short_name().to_string()).collect()
}

/// Canonical template string for a sequence of action short names.
#[pyfunction]
fn canonical_template(actions: Vec<String>) -> PyResult<String> {
    let parsed: Vec<Action> = actions
        .iter()
        .map(|name| {
            ALL_ACTIONS
                .iter()
                .copied()
                .find(|a| a.short_name() == name)
                .ok_or_else(|| value_error(format!("unknown action {name:?}")))
        })
        .collect::<PyResult<_>>()?;
    let template = ActionTemplate::new(parsed).map_err(value_error)?;
    Ok(template.canonical())
}

#[pyclass(frozen, get_all)]
struct BuildSummary {
    queries: usize,
    solved: usize,
    skipped: usize,
    failed: usize,
    cards: usize,
    wall_time_secs: f64,
}

#[pymethods]
impl BuildSummary {
    fn __repr__(&self) -> String {
        format!(
            "BuildSummary(queries={}, solved={}, skipped={}, failed={}, cards={})",
            self.queries, self.solved, self.skipped, self.failed, self.cards
        )
    }
}

#[pyclass(frozen, get_all)]
struct InferSummary {
    records: usize,
    answered: usize,
    unanswered: usize,
    failed: usize,
    wall_time_secs: f64,
}

#[pymethods]
impl InferSummary {
    fn __repr__(&self) -> String {
        format!(
            "InferSummary(records={}, answered={}, unanswered={}, failed={})",
            self.records, self.answered, self.unanswered, self.failed
        )
    }
}

#[pyclass(frozen, get_all)]
struct EvalReport {
    total: usize,
    correct: usize,
    unanswered: usize,
    accuracy: f64,
    categories: BTreeMap<String, (usize, usize)>,
}

#[pymethods]
impl EvalReport {
    fn __repr__(&self) -> String {
        format!(
            "EvalReport(total={}, correct={}, accuracy={:.4})",
            self.total, self.correct, self.accuracy
        )
    }
}

#[pyclass(frozen, get_all)]
struct Card {
    card_id: String,
    template: Vec<String>,
    avg_pc: f64,
    support: usize,
}

#[pymethods]
impl Card {
    fn __repr__(&self) -> String {
        format!(
            "Card(card_id={:?}, avg_pc={}, support={})",
            self.card_id, self.avg_pc, self.support
        )
    }
}

fn mock_config(script: &Path, run_seed: u64, seed_limit: Option<usize>) -> RunConfig {
    let mut config = RunConfig::default();
    config.run_seed = run_seed;
    config.seed_limit = seed_limit;
    config.providers.mock.script = Some(script.to_path_buf());
    config
}

/// Writes seed.jsonl, holdout.jsonl, and policy.json for a generated toy
/// corpus; returns (seed_records, holdout_records, tasks).
#[pyfunction]
#[pyo3(signature = (out_dir, n=100, holdout=50, seed=0))]
fn gen_toy(out_dir: PathBuf, n: usize, holdout: usize, seed: u64) -> PyResult<(usize, usize, usize)> {
    std::fs::create_dir_all(&out_dir).map_err(io_error)?;
    let corpus = toy::generate(&toy::ToyGenConfig { n, holdout, seed });
    save_dataset(&corpus.seed_records, &out_dir.join("seed.jsonl")).map_err(io_error)?;
    save_dataset(&corpus.holdout_records, &out_dir.join("holdout.jsonl")).map_err(io_error)?;
    toy::save_script(&corpus.tasks, &out_dir.join("policy.json")).map_err(io_error)?;
    Ok((
        corpus.seed_records.len(),
        corpus.holdout_records.len(),
        corpus.tasks.len(),
    ))
}

/// Searches each seed question with the mock policy, distills the solved
/// paths into cards, and saves the library.
#[pyfunction]
#[pyo3(signature = (seed_path, script_path, out_path, run_seed=0, jobs=1, seed_limit=None))]
fn build_cards(
    py: Python<'_>,
    seed_path: PathBuf,
    script_path: PathBuf,
    out_path: PathBuf,
    run_seed: u64,
    jobs: usize,
    seed_limit: Option<usize>,
) -> PyResult<BuildSummary> {
    let config = mock_config(&script_path, run_seed, seed_limit);
    let providers = build_providers(&config, None).map_err(value_error)?;
    let seed = load_dataset(&seed_path).map_err(value_error)?;
    let (summary, _) = py
        .detach(|| core_pipeline::build_cards_run(&seed, &providers, &config, jobs, &out_path, None))
        .map_err(value_error)?;
    Ok(BuildSummary {
        queries: summary.queries,
        solved: summary.solved,
        skipped: summary.skipped,
        failed: summary.failed,
        cards: summary.cards,
        wall_time_secs: summary.wall_time_secs,
    })
}

/// Answers each question with retrieved cards (or a single unguided pass)
/// and writes one JSON Lines record per query.
#[pyfunction]
#[pyo3(signature = (dataset_path, cards_path, script_path, out_path, run_seed=0, jobs=1, unguided=false))]
fn infer(
    py: Python<'_>,
    dataset_path: PathBuf,
    cards_path: Option<PathBuf>,
    script_path: PathBuf,
    out_path: PathBuf,
    run_seed: u64,
    jobs: usize,
    unguided: bool,
) -> PyResult<InferSummary> {
    let config = mock_config(&script_path, run_seed, None);
    let providers = build_providers(&config, None).map_err(value_error)?;
    let queries = load_dataset(&dataset_path).map_err(value_error)?;
    let cards = match (&cards_path, unguided) {
        (_, true) => Vec::new(),
        (Some(path), false) => core_cards::load_cards(path).map_err(value_error)?,
        (None, false) => {
            return Err(value_error("cards_path is required unless unguided=True"));
        }
    };
    let (summary, _) = py
        .detach(|| {
            core_pipeline::infer_run(&queries, &cards, &providers, &config, jobs, unguided, &out_path)
        })
        .map_err(value_error)?;
    Ok(InferSummary {
        records: summary.records,
        answered: summary.answered,
        unanswered: summary.unanswered,
        failed: summary.failed,
        wall_time_secs: summary.wall_time_secs,
    })
}

/// Scores a results file against a dataset's gold answers.
#[pyfunction]
fn evaluate(results_path: PathBuf, dataset_path: PathBuf) -> PyResult<EvalReport> {
    let results = core_pipeline::read_results(&results_path).map_err(value_error)?;
    let queries = load_dataset(&dataset_path).map_err(value_error)?;
    let report = core_eval::evaluate(&results, &queries).map_err(value_error)?;
    Ok(EvalReport {
        total: report.total,
        correct: report.correct,
        unanswered: report.unanswered,
        accuracy: report.accuracy,
        categories: report
            .categories
            .iter()
            .map(|(k, v)| (k.clone(), (v.correct, v.total)))
            .collect(),
    })
}

/// Loads a card library and returns its cards with template short names.
#[pyfunction]
fn load_cards(path: PathBuf) -> PyResult<Vec<Card>> {
    let cards = core_cards::load_cards(&path).map_err(value_error)?;
    Ok(cards
        .into_iter()
        .map(|c| Card {
            card_id: c.card_id,
            template: c
                .template
                .actions()
                .iter()
                .map(|a| a.short_name().to_string())
                .collect(),
            avg_pc: c.avg_pc,
            support: c.support,
        })
        .collect())
}

#[pymodule]
fn astar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(uct, m)?)?;
    m.add_function(wrap_pyfunction!(voc_score, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(action_names, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_template, m)?)?;
    m.add_function(wrap_pyfunction!(gen_toy, m)?)?;
    m.add_function(wrap_pyfunction!(build_cards, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(load_cards, m)?)?;
    m.add_class::<BuildSummary>()?;
    m.add_class::<InferSummary>()?;
    m.add_class::<EvalReport>()?;
    m.add_class::<Card>()?;
    Ok(())
}
