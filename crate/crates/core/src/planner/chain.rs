use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::graph::{apply_effect, canonical_hash, step_change, validate, Violation};

use super::schemas::applicable_actions;
use super::TransitionChain;

/// One problem found in a transition chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ChainIssue {
    /// `graphs.len()` is not `steps.len() + 1`.
    LengthMismatch { graphs: usize, steps: usize },
    InvalidGraph { index: usize, violations: Vec<Violation> },
    /// Consecutive graphs differ by `len` changes instead of exactly one.
    DiffLength { step: usize, len: usize },
    /// The recorded action is not applicable, or does not produce the next graph.
    Precondition { step: usize, action: String },
    RepeatedState { first: usize, again: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub issues: Vec<ChainIssue>,
}

impl ChainReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks every graph, every step's single change and precondition, and
/// that no state repeats without a goal group being completed in between.
pub fn validate_chain(chain: &TransitionChain) -> ChainReport {
    let mut issues = Vec::new();
    if chain.graphs.len() != chain.steps.len() + 1 {
        issues.push(ChainIssue::LengthMismatch { graphs: chain.graphs.len(), steps: chain.steps.len() });
    }
    for (index, g) in chain.graphs.iter().enumerate() {
        let violations = validate(g);
        if !violations.is_empty() {
            issues.push(ChainIssue::InvalidGraph { index, violations });
        }
    }
    for (step, pair) in chain.graphs.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let changes = match step_change(a, b) {
            Ok(Some(_)) => 1,
            Ok(None) => 0,
            Err(crate::graph::GraphError::MultipleChanges { edges, toggles }) => edges + toggles,
            Err(_) => usize::MAX,
        };
        if changes != 1 {
            issues.push(ChainIssue::DiffLength { step, len: changes });
        }
        let Some(s) = chain.steps.get(step) else { continue };
        let action = s.action();
        let ok = applicable_actions(a).iter().any(|(x, e)| *x == action && *e == s.effect)
            && apply_effect(a, &s.effect).is_ok_and(|n| n == *b);
        if !ok {
            issues.push(ChainIssue::Precondition { step, action: action.to_string() });
        }
    }
    let mut seen = HashMap::new();
    for (i, g) in chain.graphs.iter().enumerate() {
        let h = canonical_hash(g);
        if let Some(&first) = seen.get(&h) {
            let progressed = chain.milestones.iter().any(|m| first < *m && *m <= i);
            if !progressed {
                issues.push(ChainIssue::RepeatedState { first, again: i });
                continue;
            }
        }
        seen.insert(h, i);
    }
    ChainReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, ObjectNode, Relation, SceneGraph};
    use crate::planner::{plan, Ordering, TaskSpec};

    fn start() -> SceneGraph {
        let mut g = SceneGraph::with_nodes([
            ObjectNode::gripper(0),
            ObjectNode::surface(1, "table"),
            ObjectNode::object(2, "a"),
            ObjectNode::object(3, "b"),
        ])
        .unwrap();
        g.insert_edge(Edge::ids(2, Relation::On, 1));
        g.insert_edge(Edge::ids(3, Relation::On, 1));
        g
    }

    fn chain() -> TransitionChain {
        let t = TaskSpec {
            description: String::new(),
            goals: vec![vec![Edge::ids(2, Relation::On, 3).into()]],
            ordering: Ordering::Sequential,
            order_seed: 0,
        };
        plan(&start(), &t).unwrap()
    }

    #[test]
    fn planned_chain_is_valid() {
        assert!(validate_chain(&chain()).is_valid());
    }

    #[test]
    fn dropped_graph_is_reported() {
        let mut c = chain();
        c.graphs.remove(3);
        let r = validate_chain(&c);
        assert!(r.issues.iter().any(|i| matches!(i, ChainIssue::LengthMismatch { .. })));
        assert!(r.issues.iter().any(|i| matches!(i, ChainIssue::DiffLength { .. })));
    }

    #[test]
    fn wrong_action_is_reported() {
        let mut c = chain();
        c.steps[1].params = vec![crate::graph::NodeId(3)];
        let r = validate_chain(&c);
        assert_eq!(r.issues, vec![ChainIssue::Precondition { step: 1, action: "GraspObj(#3)".into() }]);
    }

    #[test]
    fn repeated_state_is_reported() {
        let mut c = chain();
        let g0 = c.graphs[0].clone();
        c.graphs.push(g0);
        let r = validate_chain(&c);
        // a goal group completed at state 6, so returning to the start is progress
        assert!(!r.issues.iter().any(|i| matches!(i, ChainIssue::RepeatedState { .. })));
        c.milestones.clear();
        let r = validate_chain(&c);
        assert!(r.issues.iter().any(|i| matches!(i, ChainIssue::RepeatedState { first: 0, again: 7 })));
    }
}
