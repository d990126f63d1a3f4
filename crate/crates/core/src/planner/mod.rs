//! Transition-chain planning by breadth-first search over scene graphs.

mod chain;
mod order;
mod schemas;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GoalPredicate, GraphError, NodeId, SceneGraph, StepEffect, Violation};

pub use chain::{validate_chain, ChainIssue, ChainReport};
pub use order::expand_flexible;
pub use schemas::{applicable_actions, successors, ActionInstance, Schema};
pub use search::{final_goals, plan, plan_groups, plan_with, PlanOptions};

/// How goal groups may be ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum Ordering {
    /// Groups in the listed order.
    Sequential,
    /// Any order.
    Flexible,
    /// Any order respecting `before` pairs `(i, j)`: group i precedes group j.
    Partial { before: Vec<(usize, usize)> },
}

/// Ordered goal groups plus their ordering mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default)]
    pub description: String,
    pub goals: Vec<Vec<GoalPredicate>>,
    pub ordering: Ordering,
    /// Selects among the admissible group orders (0 = the default order).
    #[serde(default)]
    pub order_seed: u64,
}

impl TaskSpec {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.goals.iter().flatten().flat_map(|p| p.nodes())
    }
}

/// One chain step: the grounded action and the change it makes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub schema: Schema,
    pub params: Vec<NodeId>,
    pub effect: StepEffect,
}

impl ChainStep {
    pub fn action(&self) -> ActionInstance {
        ActionInstance { schema: self.schema, params: self.params.clone() }
    }
}

/// Graphs `G_0..G_N` and the `N` steps between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionChain {
    pub graphs: Vec<SceneGraph>,
    pub steps: Vec<ChainStep>,
    /// Indices into `graphs` at which a goal group was completed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub milestones: Vec<usize>,
}

impl TransitionChain {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start(&self) -> &SceneGraph {
        &self.graphs[0]
    }

    pub fn last(&self) -> &SceneGraph {
        self.graphs.last().expect("chain holds at least its start graph")
    }

    /// Keeps only the first `n` steps.
    pub fn truncated(&self, n: usize) -> TransitionChain {
        let n = n.min(self.steps.len());
        TransitionChain {
            graphs: self.graphs[..=n].to_vec(),
            steps: self.steps[..n].to_vec(),
            milestones: self.milestones.iter().copied().filter(|m| *m <= n).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no chain reaches goal group {group} (explored {explored} states)")]
    Unsolvable { group: usize, explored: usize },
    #[error("goal groups are mutually inconsistent: {0}")]
    GoalConflict(String),
    #[error("partial ordering contains a cycle")]
    CyclicOrdering,
    #[error("ordering references group {0}, which does not exist")]
    BadGroupIndex(usize),
    #[error("task references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("start graph is invalid: {0:?}")]
    InvalidStart(Vec<Violation>),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
