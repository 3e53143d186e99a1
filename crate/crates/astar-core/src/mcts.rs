//! Seeded Monte Carlo tree search over reasoning actions.
//!
//! Each iteration selects a leaf by UCT, expands it with a handful of
//! sampled actions, rolls out single sampled children until an answer or
//! the depth cutoff, scores the endpoint by self-consistency vote, and
//! backpropagates along the full root-to-endpoint path. Rollout nodes stay
//! in the tree. Everything is driven by one seeded RNG, so a (query,
//! seed) pair always reproduces the same tree.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ALL_ACTIONS};
use crate::answer::normalize_answer;
use crate::providers::{GenerationParams, PolicyModel, ProviderError};
use crate::query::Query;
use crate::trajectory::{ReasoningStep, Trajectory};

pub type NodeId = usize;

/// Search hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    /// Number of select/expand/simulate/backpropagate rounds.
    pub iterations: u32,
    /// Distinct actions sampled per expansion (n), between 1 and 6.
    pub branching: usize,
    /// Maximum node depth (d_max); rollouts cut off here with reward 0.
    pub max_depth: usize,
    /// UCT exploration weight (w).
    pub exploration_weight: f64,
    /// Q-update blend toward the child value during backpropagation (alpha).
    pub q_update_weight: f64,
    /// Extra direct-answer samples in the terminal vote (m).
    pub vote_samples: u32,
    /// Seed for the search RNG.
    pub rng_seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            iterations: 32,
            branching: 3,
            max_depth: 6,
            exploration_weight: 1.0,
            q_update_weight: 0.5,
            vote_samples: 3,
            rng_seed: 0,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), MctsError> {
        if self.iterations == 0 {
            return Err(MctsError::InvalidConfig {
                msg: "iterations must be at least 1",
            });
        }
        if self.branching == 0 || self.branching > ALL_ACTIONS.len() {
            return Err(MctsError::InvalidConfig {
                msg: "branching must be between 1 and 6",
            });
        }
        if self.max_depth == 0 {
            return Err(MctsError::InvalidConfig {
                msg: "max_depth must be at least 1",
            });
        }
        if !self.exploration_weight.is_finite() || self.exploration_weight < 0.0 {
            return Err(MctsError::InvalidConfig {
                msg: "exploration_weight must be finite and non-negative",
            });
        }
        if !(0.0..=1.0).contains(&self.q_update_weight) {
            return Err(MctsError::InvalidConfig {
                msg: "q_update_weight must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MctsError {
    #[error("invalid search config: {msg}")]
    InvalidConfig { msg: &'static str },
    #[error("provider failure at node {node:?}: {source}")]
    Provider {
        node: Option<NodeId>,
        #[source]
        source: ProviderError,
    },
}

/// One node in the search tree. The root carries no step.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub step: Option<ReasoningStep>,
    pub depth: usize,
    pub q_value: f64,
    pub visits: u64,
    /// True when the node's step committed to an answer.
    pub terminal: bool,
}

/// Arena-allocated search tree; ids are creation order, parents always
/// precede children.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new() -> Self {
        SearchTree {
            nodes: vec![SearchNode {
                id: 0,
                parent: None,
                children: Vec::new(),
                step: None,
                depth: 0,
                q_value: 0.0,
                visits: 0,
                terminal: false,
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends a child under `parent` and returns its id. The child is
    /// terminal when its step carries an answer.
    pub fn add_child(&mut self, parent: NodeId, step: ReasoningStep) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        let terminal = step.extracted_answer.is_some();
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            step: Some(step),
            depth,
            q_value: 0.0,
            visits: 0,
            terminal,
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn child_with_action(&self, parent: NodeId, action: Action) -> Option<NodeId> {
        self.nodes[parent]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].step.as_ref().map(|s| s.action) == Some(action))
    }

    /// Node ids from the root down to `node`, inclusive.
    pub fn path_from_root(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut current = Some(node);
        while let Some(id) = current {
            path.push(id);
            current = self.nodes[id].parent;
        }
        path.reverse();
        path
    }

    /// Steps along the root-to-node path.
    pub fn steps_to(&self, node: NodeId) -> Vec<ReasoningStep> {
        self.path_from_root(node)
            .into_iter()
            .filter_map(|id| self.nodes[id].step.clone())
            .collect()
    }
}

impl Default for SearchTree {
    fn default() -> Self {
        SearchTree::new()
    }
}

/// UCT value of a node: q + w * sqrt(ln(parent_visits) / visits).
/// Unvisited nodes score positive infinity so they are tried first.
pub fn uct(q: f64, visits: u64, parent_visits: u64, exploration_weight: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    debug_assert!(parent_visits >= 1, "a visited child implies a visited parent");
    q + exploration_weight * ((parent_visits as f64).ln() / visits as f64).sqrt()
}

/// Descends from the root, following the maximal-UCT child (ties to the
/// smallest node id) until a childless or terminal node.
pub fn select(tree: &SearchTree, config: &MctsConfig) -> Vec<NodeId> {
    let mut path = vec![tree.root()];
    loop {
        let node = tree.node(*path.last().expect("path is never empty"));
        if node.terminal || node.children.is_empty() {
            return path;
        }
        let mut best = node.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &child_id in &node.children {
            let child = tree.node(child_id);
            let score = uct(child.q_value, child.visits, node.visits, config.exploration_weight);
            if score > best_score {
                best = child_id;
                best_score = score;
            }
        }
        path.push(best);
    }
}

/// Expands a non-terminal node below the depth cutoff with `branching`
/// children of distinct sampled actions. On a provider failure the error
/// carries the node id and any children already created stay in the tree.
pub fn expand(
    tree: &mut SearchTree,
    node: NodeId,
    query: &Query,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
    config: &MctsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NodeId>, MctsError> {
    debug_assert!(!tree.node(node).terminal, "expand requires a non-terminal node");
    debug_assert!(
        tree.node(node).depth < config.max_depth,
        "expand requires depth below the cutoff"
    );
    let mut pool = ALL_ACTIONS;
    let (sampled, _) = pool.partial_shuffle(rng, config.branching);
    let history = tree.steps_to(node);
    let mut created = Vec::with_capacity(sampled.len());
    for &action in sampled.iter() {
        let step = policy
            .generate_step(query, &history, action, params)
            .map_err(|source| MctsError::Provider {
                node: Some(node),
                source,
            })?;
        created.push(tree.add_child(node, step));
    }
    Ok(created)
}

/// Rolls out from `node`: at each level one action is sampled uniformly;
/// an existing child with that action is descended into, otherwise a new
/// child is generated. Stops at a terminal node or the depth cutoff and
/// returns the endpoint.
pub fn simulate(
    tree: &mut SearchTree,
    node: NodeId,
    query: &Query,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
    config: &MctsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, MctsError> {
    let mut current = node;
    loop {
        let n = tree.node(current);
        if n.terminal || n.depth >= config.max_depth {
            return Ok(current);
        }
        let action = ALL_ACTIONS[rng.random_range(0..ALL_ACTIONS.len())];
        current = match tree.child_with_action(current, action) {
            Some(existing) => existing,
            None => {
                let history = tree.steps_to(current);
                let step = policy
                    .generate_step(query, &history, action, params)
                    .map_err(|source| MctsError::Provider {
                        node: Some(current),
                        source,
                    })?;
                tree.add_child(current, step)
            }
        };
    }
}

/// Terminal reward by self-consistency: the fraction of m extra direct
/// answers (plus the node's own) agreeing with the node's answer. A
/// depth-cutoff endpoint without an answer scores 0.
pub fn terminal_reward(
    tree: &SearchTree,
    node: NodeId,
    query: &Query,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
    config: &MctsConfig,
) -> Result<f64, MctsError> {
    let n = tree.node(node);
    let answer = match n.step.as_ref().and_then(|s| s.extracted_answer.as_ref()) {
        Some(answer) => answer,
        None => return Ok(0.0),
    };
    let mut agreeing = 1u32;
    for k in 0..config.vote_samples {
        let sample = policy
            .direct_answer(query, k, params)
            .map_err(|source| MctsError::Provider {
                node: Some(node),
                source,
            })?;
        if let Some(raw) = sample {
            if normalize_answer(&raw) == *answer {
                agreeing += 1;
            }
        }
    }
    Ok(f64::from(agreeing) / f64::from(config.vote_samples + 1))
}

/// Sets the leaf's q to the reward, then walks to the root applying
/// q(parent) = (1 - alpha) * q(parent) + alpha * q(child) with the child's
/// post-update value, incrementing visits along the whole path.
pub fn backpropagate(tree: &mut SearchTree, leaf: NodeId, reward: f64, q_update_weight: f64) {
    debug_assert!((0.0..=1.0).contains(&reward));
    tree.nodes[leaf].q_value = reward;
    tree.nodes[leaf].visits += 1;
    let mut child = leaf;
    while let Some(parent) = tree.nodes[child].parent {
        let child_q = tree.nodes[child].q_value;
        let node = &mut tree.nodes[parent];
        node.q_value = (1.0 - q_update_weight) * node.q_value + q_update_weight * child_q;
        node.visits += 1;
        child = parent;
    }
}

/// One iteration's trace record.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub iteration: u32,
    /// Actions along the selected path (root excluded).
    pub selected_path: Vec<String>,
    /// Actions of the children created by expansion this iteration.
    pub expanded: Vec<String>,
    /// Depth of the simulated endpoint.
    pub endpoint_depth: usize,
    pub terminal: bool,
    pub reward: f64,
}

/// Completed search: the full tree plus every answer-bearing trajectory.
#[derive(Debug)]
pub struct SearchOutcome {
    pub tree: SearchTree,
    pub trajectories: Vec<Trajectory>,
}

/// Runs the configured number of iterations for one query and returns
/// every distinct terminal node's trajectory (reward = that leaf's final
/// q-value). A provider failure aborts the whole search for this query.
pub fn search(
    query: &Query,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
    config: &MctsConfig,
    mut trace: Option<&mut dyn FnMut(&TraceRecord)>,
) -> Result<SearchOutcome, MctsError> {
    config.validate()?;
    params
        .validate()
        .map_err(|source| MctsError::Provider { node: None, source })?;
    let mut tree = SearchTree::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    for iteration in 0..config.iterations {
        let path = select(&tree, config);
        let leaf = *path.last().expect("selection path is never empty");
        let leaf_node = tree.node(leaf);
        let expandable = !leaf_node.terminal && leaf_node.depth < config.max_depth;
        let mut expanded_actions = Vec::new();
        let endpoint = if expandable {
            let created = expand(&mut tree, leaf, query, policy, params, config, &mut rng)?;
            expanded_actions = created
                .iter()
                .map(|&id| {
                    tree.node(id)
                        .step
                        .as_ref()
                        .expect("expanded nodes carry steps")
                        .action
                        .short_name()
                        .to_string()
                })
                .collect();
            simulate(&mut tree, leaf, query, policy, params, config, &mut rng)?
        } else {
            leaf
        };
        let reward = terminal_reward(&tree, endpoint, query, policy, params, config)?;
        backpropagate(&mut tree, endpoint, reward, config.q_update_weight);

        if let Some(sink) = trace.as_deref_mut() {
            let selected_path = path
                .iter()
                .filter_map(|&id| tree.node(id).step.as_ref())
                .map(|s| s.action.short_name().to_string())
                .collect();
            sink(&TraceRecord {
                iteration,
                selected_path,
                expanded: expanded_actions,
                endpoint_depth: tree.node(endpoint).depth,
                terminal: tree.node(endpoint).terminal,
                reward,
            });
        }
    }

    let trajectories = collect_trajectories(&tree, &query.id);
    Ok(SearchOutcome { tree, trajectories })
}

/// Trajectories of all answer-bearing terminal nodes, in node-id order.
/// Each reward is the leaf's final q-value (0 for never-visited leaves).
pub fn collect_trajectories(tree: &SearchTree, query_id: &str) -> Vec<Trajectory> {
    tree.nodes()
        .iter()
        .filter(|n| n.terminal)
        .filter_map(|n| {
            Trajectory::new(query_id, tree.steps_to(n.id), n.q_value.clamp(0.0, 1.0)).ok()
        })
        .collect()
}
