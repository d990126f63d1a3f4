use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{canonical_hash, holds, validate, GoalPredicate, SceneGraph, StepEffect};

use super::order::{admissible_orders, supersede};
use super::schemas::{successors, ActionInstance};
use super::{ChainStep, Ordering, PlanError, TaskSpec, TransitionChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// States a single group search may expand before giving up.
    pub max_states: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { max_states: 500_000 }
    }
}

/// True when the gripper holds nothing and hovers over nothing.
fn gripper_idle(g: &SceneGraph) -> bool {
    g.gripper().is_some_and(|gid| g.out_edges(gid).next().is_none())
}

/// Goal test for one group: every required predicate (the group plus the
/// earlier ones it does not supersede), and an idle gripper unless the group
/// itself constrains the gripper.
fn group_done(g: &SceneGraph, group: &[GoalPredicate], required: &[GoalPredicate]) -> bool {
    let mentions_gripper = g
        .gripper()
        .is_some_and(|gid| group.iter().any(|p| p.nodes().contains(&gid)));
    required.iter().all(|p| holds(g, p)) && (mentions_gripper || gripper_idle(g))
}

struct SearchNode {
    graph: SceneGraph,
    parent: usize,
    via: Option<(ActionInstance, StepEffect)>,
}

/// Breadth-first search; returns the steps of a shortest path to a goal state.
fn bfs(
    start: &SceneGraph,
    done: impl Fn(&SceneGraph) -> bool,
    max_states: usize,
) -> Result<Vec<(ActionInstance, StepEffect, SceneGraph)>, usize> {
    if done(start) {
        return Ok(Vec::new());
    }
    let mut nodes = vec![SearchNode { graph: start.clone(), parent: usize::MAX, via: None }];
    let mut closed = HashSet::new();
    closed.insert(canonical_hash(start));
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        if nodes.len() > max_states {
            break;
        }
        for (a, e, next) in successors(&nodes[i].graph) {
            if !closed.insert(canonical_hash(&next)) {
                continue;
            }
            let hit = done(&next);
            nodes.push(SearchNode { graph: next, parent: i, via: Some((a, e)) });
            let j = nodes.len() - 1;
            if hit {
                let mut path = Vec::new();
                let mut k = j;
                while k != 0 {
                    let (a, e) = nodes[k].via.clone().expect("non-root node has an action");
                    path.push((a, e, nodes[k].graph.clone()));
                    k = nodes[k].parent;
                }
                path.reverse();
                return Ok(path);
            }
            queue.push_back(j);
        }
    }
    Err(nodes.len())
}

/// Plans goal groups in the given order, one breadth-first search per group.
/// Predicates achieved by earlier groups stay required until a later group
/// states something new about the same subject.
pub fn plan_groups(
    g0: &SceneGraph,
    task: &TaskSpec,
    order: &[usize],
    opts: &PlanOptions,
) -> Result<TransitionChain, PlanError> {
    let mut chain = TransitionChain { graphs: vec![g0.clone()], steps: Vec::new(), milestones: Vec::new() };
    let mut protected: Vec<GoalPredicate> = Vec::new();
    for &gi in order {
        let group = task.goals.get(gi).ok_or(PlanError::BadGroupIndex(gi))?;
        let required = supersede(&protected, group);
        let current = chain.last().clone();
        let path = bfs(&current, |g| group_done(g, group, &required), opts.max_states)
            .map_err(|explored| PlanError::Unsolvable { group: gi, explored })?;
        for (a, effect, g) in path {
            chain.steps.push(ChainStep { schema: a.schema, params: a.params, effect });
            chain.graphs.push(g);
        }
        chain.milestones.push(chain.graphs.len() - 1);
        protected = required;
    }
    Ok(chain)
}

/// Shortest-per-group chain from `g0` satisfying every goal group in the
/// order selected by `task.order_seed`.
pub fn plan(g0: &SceneGraph, task: &TaskSpec) -> Result<TransitionChain, PlanError> {
    plan_with(g0, task, &PlanOptions::default())
}

pub fn plan_with(g0: &SceneGraph, task: &TaskSpec, opts: &PlanOptions) -> Result<TransitionChain, PlanError> {
    let v = validate(g0);
    if !v.is_empty() {
        return Err(PlanError::InvalidStart(v));
    }
    if let Some(id) = task.nodes().find(|id| !g0.contains_node(*id)) {
        return Err(PlanError::UnknownNode(id));
    }
    if task.goals.is_empty() {
        return Ok(TransitionChain { graphs: vec![g0.clone()], steps: Vec::new(), milestones: Vec::new() });
    }
    let order = chosen_order(task, g0)?;
    plan_groups(g0, task, &order, opts)
}

fn chosen_order(task: &TaskSpec, g0: &SceneGraph) -> Result<Vec<usize>, PlanError> {
    let orders = admissible_orders(task, g0)?;
    Ok(match task.ordering {
        Ordering::Sequential => orders[0].clone(),
        _ => orders[(task.order_seed % orders.len() as u64) as usize].clone(),
    })
}

/// Predicates that must hold once every group of `task` is done, in the
/// order `plan` would pick.
pub fn final_goals(g0: &SceneGraph, task: &TaskSpec) -> Result<Vec<GoalPredicate>, PlanError> {
    if task.goals.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for gi in chosen_order(task, g0)? {
        out = supersede(&out, task.goals.get(gi).ok_or(PlanError::BadGroupIndex(gi))?);
    }
    Ok(out)
}
