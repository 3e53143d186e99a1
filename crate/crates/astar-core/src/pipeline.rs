//! End-to-end runs over datasets: card construction and guided or
//! unguided inference, fanned out over a small worker pool. Output order
//! always follows input order, and every per-query computation is seeded
//! from (run_seed, query id), so results are independent of scheduling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::action::Action;
use crate::cards::{
    distill_cards, process_seed_query, save_cards, CardFileError, CardsError, RepositoryOutcome,
    SeedContext, ThoughtCard,
};
use crate::config::{ProviderSet, RunConfig};
use crate::dataset::DatasetError;
use crate::inference::{
    run_candidate, verify_and_select, ResultRecord, ResultStatus, VerifyError,
};
use crate::matching::{rank_cards, select_top5, CardRanking};
use crate::mcts::TraceRecord;
use crate::providers::{joint_embedding, GenerationParams};
use crate::query::Query;
use crate::seeding::query_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{message}")]
    Usage { message: String },
    #[error(transparent)]
    Cards(#[from] CardsError),
    #[error(transparent)]
    CardFile(#[from] CardFileError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("results line {line}: {source}")]
    ResultsParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Runs `work` over every query on up to `jobs` workers, returning values
/// in input order regardless of completion order.
fn run_indexed<T, F>(items: &[Query], jobs: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &Query) -> T + Sync,
{
    let worker_count = jobs.max(1).min(items.len().max(1));
    let cursor = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let value = work(index, &items[index]);
                *slots[index].lock().expect("result slot is never poisoned") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot is never poisoned")
                .expect("every slot is filled before the pool exits")
        })
        .collect()
}

/// Serializes out-of-order completions into an append-only stream. Each
/// line is written and flushed as soon as every earlier line has been, so
/// an interrupted run leaves a valid prefix of the output on disk.
struct OrderedSink<W: Write> {
    next: usize,
    pending: BTreeMap<usize, String>,
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> OrderedSink<W> {
    fn new(out: W) -> Self {
        OrderedSink {
            next: 0,
            pending: BTreeMap::new(),
            out,
            error: None,
        }
    }

    fn push(&mut self, index: usize, line: String) {
        self.pending.insert(index, line);
        while let Some(line) = self.pending.remove(&self.next) {
            if self.error.is_none() {
                let attempt = self
                    .out
                    .write_all(line.as_bytes())
                    .and_then(|_| self.out.flush());
                if let Err(e) = attempt {
                    self.error = Some(e);
                }
            }
            self.next += 1;
        }
    }

    fn finish(mut self) -> std::io::Result<()> {
        debug_assert!(self.pending.is_empty());
        match self.error.take() {
            Some(e) => Err(e),
            None => self.out.flush(),
        }
    }
}

/// Per-query decoding params: the configured settings plus a stable seed
/// derived from the run seed and the query id.
fn params_for(config: &RunConfig, query: &Query) -> GenerationParams {
    GenerationParams {
        seed: Some(query_seed(config.run_seed, &query.id)),
        ..config.generation
    }
}

/// One trace line: a search iteration tagged with its query.
#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    query_id: &'a str,
    #[serde(flatten)]
    record: TraceRecord,
}

#[derive(Debug, Serialize)]
pub struct BuildSummary {
    pub queries: usize,
    pub solved: usize,
    pub skipped: usize,
    pub failed: usize,
    pub cards: usize,
    pub wall_time_secs: f64,
}

/// Builds a card library from seed queries and saves it. Honors
/// config.seed_limit, fans out across `jobs` workers, and optionally
/// writes one trace record per search iteration. When no query yields a
/// card the library file is not written and the summary reports zero
/// cards.
pub fn build_cards_run(
    seed: &[Query],
    providers: &ProviderSet,
    config: &RunConfig,
    jobs: usize,
    cards_out: &Path,
    trace_out: Option<&Path>,
) -> Result<(BuildSummary, Vec<ThoughtCard>), PipelineError> {
    let started = Instant::now();
    let seed = match config.seed_limit {
        Some(limit) => {
            if limit > seed.len() {
                return Err(PipelineError::Usage {
                    message: format!(
                        "seed limit {limit} exceeds the {} available records",
                        seed.len()
                    ),
                });
            }
            &seed[..limit]
        }
        None => seed,
    };
    if seed.is_empty() {
        return Err(PipelineError::Usage {
            message: "seed dataset is empty".to_string(),
        });
    }

    let tracing = trace_out.is_some();
    let per_query = run_indexed(seed, jobs, |_, query| {
        let ctx = SeedContext {
            policy: providers.policy.as_ref(),
            embedder: providers.embedder.as_ref(),
            complexity: providers.complexity.as_ref(),
            params: &params_for(config, query),
            mcts: &config.mcts,
            voc: &config.voc,
            run_seed: config.run_seed,
        };
        let mut trace_buffer: Vec<TraceRecord> = Vec::new();
        let result = if tracing {
            let mut sink = |record: &TraceRecord| trace_buffer.push(record.clone());
            process_seed_query(query, &ctx, Some(&mut sink))
        } else {
            process_seed_query(query, &ctx, None)
        };
        (query.id.clone(), result, trace_buffer)
    });

    if let Some(trace_path) = trace_out {
        let mut body = String::new();
        for (query_id, _, records) in &per_query {
            for record in records {
                let line = TraceLine {
                    query_id,
                    record: record.clone(),
                };
                body.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
                body.push('\n');
            }
        }
        std::fs::write(trace_path, body).map_err(|source| PipelineError::Io {
            path: trace_path.display().to_string(),
            source,
        })?;
    }

    let outcome = RepositoryOutcome::assemble(
        per_query
            .into_iter()
            .map(|(id, result, _)| (id, result))
            .collect(),
    )?;
    let cards = if outcome.entries.is_empty() {
        Vec::new()
    } else {
        let cards = distill_cards(&outcome.entries)?;
        save_cards(&cards, cards_out)?;
        cards
    };
    let summary = BuildSummary {
        queries: seed.len(),
        solved: outcome.entries.len(),
        skipped: outcome.unsolved.len(),
        failed: outcome.failed.len(),
        cards: cards.len(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((summary, cards))
}

#[derive(Debug, Serialize)]
pub struct InferSummary {
    pub records: usize,
    pub answered: usize,
    pub unanswered: usize,
    pub failed: usize,
    pub wall_time_secs: f64,
}

fn infer_one(
    query: &Query,
    cards: &[ThoughtCard],
    providers: &ProviderSet,
    config: &RunConfig,
) -> ResultRecord {
    let params = params_for(config, query);
    let pc = match providers.complexity.estimate_complexity(query) {
        Ok(pc) => pc,
        Err(e) => return ResultRecord::failed(&query.id, e.to_string()),
    };
    let tis = match joint_embedding(providers.embedder.as_ref(), query.image.as_ref(), &query.text)
    {
        Ok(tis) => tis,
        Err(e) => return ResultRecord::failed(&query.id, e.to_string()),
    };
    let top = match select_top5(cards, &tis, pc) {
        Ok(top) => top,
        Err(e) => return ResultRecord::failed(&query.id, e.to_string()),
    };
    let candidates: Vec<_> = top
        .iter()
        .map(|card| run_candidate(query, card, providers.policy.as_ref(), &params))
        .collect();
    match verify_and_select(query, &candidates, providers.reward.as_deref()) {
        Ok(verified) => ResultRecord::from_verified(&verified),
        Err(VerifyError::AllAnswerless) | Err(VerifyError::NoCandidates) => {
            ResultRecord::unanswered(&query.id, &candidates)
        }
        Err(VerifyError::Orm(e)) => ResultRecord::failed(&query.id, e.to_string()),
    }
}

fn unguided_one(query: &Query, providers: &ProviderSet, config: &RunConfig) -> ResultRecord {
    let params = params_for(config, query);
    match providers
        .policy
        .generate_step(query, &[], Action::ChainOfThought, &params)
    {
        Ok(step) => match step.extracted_answer {
            Some(answer) => ResultRecord {
                query_id: query.id.clone(),
                answer: Some(answer),
                vote_confidence: None,
                selected_card: None,
                status: ResultStatus::Answered,
                candidates: Vec::new(),
                error: None,
            },
            None => ResultRecord::unanswered(&query.id, &[]),
        },
        Err(e) => ResultRecord::failed(&query.id, e.to_string()),
    }
}

/// Runs inference over a dataset and writes one JSON Lines record per
/// query, in input order. Guided mode retrieves cards and verifies the
/// instantiated candidates; unguided mode takes a single concluding
/// reasoning step per query as a baseline. Per-record failures are folded
/// into their records; the run continues.
pub fn infer_run(
    queries: &[Query],
    cards: &[ThoughtCard],
    providers: &ProviderSet,
    config: &RunConfig,
    jobs: usize,
    unguided: bool,
    out: &Path,
) -> Result<(InferSummary, Vec<ResultRecord>), PipelineError> {
    let started = Instant::now();
    if queries.is_empty() {
        return Err(PipelineError::Usage {
            message: "inference dataset is empty".to_string(),
        });
    }
    let file = std::fs::File::create(out).map_err(|source| PipelineError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let sink = Mutex::new(OrderedSink::new(std::io::BufWriter::new(file)));
    let records = run_indexed(queries, jobs, |index, query| {
        let record = if unguided {
            unguided_one(query, providers, config)
        } else {
            infer_one(query, cards, providers, config)
        };
        let mut line = serde_json::to_string(&record).expect("result record serializes");
        line.push('\n');
        sink.lock().expect("sink lock").push(index, line);
        record
    });
    sink.into_inner()
        .expect("sink lock")
        .finish()
        .map_err(|source| PipelineError::Io {
            path: out.display().to_string(),
            source,
        })?;
    let summary = InferSummary {
        records: records.len(),
        answered: records
            .iter()
            .filter(|r| r.status == ResultStatus::Answered)
            .count(),
        unanswered: records
            .iter()
            .filter(|r| r.status == ResultStatus::Unanswered)
            .count(),
        failed: records
            .iter()
            .filter(|r| r.status == ResultStatus::Failed)
            .count(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((summary, records))
}

/// Reads a results file written by infer_run.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (index, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(line).map_err(|source| PipelineError::ResultsParse {
                line: index + 1,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// One `match` output line: the retrieved cards for a query, optionally
/// with the full ranking table.
#[derive(Debug, Serialize)]
pub struct MatchLine {
    pub query_id: String,
    pub top: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<Vec<CardRanking>>,
}

/// Ranks the card library against each query.
pub fn match_run(
    queries: &[Query],
    cards: &[ThoughtCard],
    providers: &ProviderSet,
    explain: bool,
) -> Result<Vec<MatchLine>, PipelineError> {
    let mut lines = Vec::with_capacity(queries.len());
    for query in queries {
        let pc = providers
            .complexity
            .estimate_complexity(query)
            .map_err(CardsError::from)?;
        let tis = joint_embedding(providers.embedder.as_ref(), query.image.as_ref(), &query.text)
            .map_err(CardsError::from)?;
        let top = select_top5(cards, &tis, pc).map_err(|e| PipelineError::Usage {
            message: e.to_string(),
        })?;
        let rankings = if explain {
            Some(rank_cards(cards, &tis, pc).map_err(|e| PipelineError::Usage {
                message: e.to_string(),
            })?)
        } else {
            None
        };
        lines.push(MatchLine {
            query_id: query.id.clone(),
            top: top.into_iter().map(|c| c.card_id).collect(),
            rankings,
        });
    }
    Ok(lines)
}
