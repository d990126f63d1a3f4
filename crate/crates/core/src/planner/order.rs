use std::collections::BTreeMap;

use crate::graph::{validate, Edge, GoalPredicate, NodeId, Relation, SceneGraph};

use super::{Ordering, PlanError, TaskSpec};

/// Upper bound on enumerated group orders.
const MAX_ORDERS: usize = 50_000;

/// Predicates still required once `group` is achieved on top of `active`:
/// a group's predicates replace older ones about the same subject.
pub(crate) fn supersede(active: &[GoalPredicate], group: &[GoalPredicate]) -> Vec<GoalPredicate> {
    let same_kind = |a: &GoalPredicate, b: &GoalPredicate| {
        matches!(
            (a, b),
            (GoalPredicate::Edge(_), GoalPredicate::Edge(_))
                | (GoalPredicate::Accessible { .. }, GoalPredicate::Accessible { .. })
        )
    };
    let mut out: Vec<GoalPredicate> = active
        .iter()
        .filter(|p| !group.iter().any(|q| q.subject() == p.subject() && same_kind(p, q)))
        .copied()
        .collect();
    for q in group {
        if !out.contains(q) {
            out.push(*q);
        }
    }
    out
}

/// A static node with nothing under it holds any number of objects; every
/// other node holds at most one object On it.
fn is_ground(g0: &SceneGraph, id: NodeId) -> bool {
    g0.node(id).is_some_and(|n| n.is_static) && g0.support_of(id).is_none()
}

/// Checks that a set of predicates can hold at once in a graph over `g0`'s nodes.
pub(crate) fn consistent(g0: &SceneGraph, preds: &[GoalPredicate]) -> Result<(), String> {
    let mut g = SceneGraph::with_nodes(g0.nodes().cloned()).map_err(|e| e.to_string())?;
    let mut flags: BTreeMap<NodeId, bool> = BTreeMap::new();
    let mut on_count: BTreeMap<NodeId, usize> = BTreeMap::new();
    for p in preds {
        match p {
            GoalPredicate::Edge(e) => {
                let e = Edge::new(e.src, e.relation, e.dst);
                if !g.insert_edge(e) {
                    continue;
                }
                if e.relation == Relation::On && !is_ground(g0, e.dst) {
                    *on_count.entry(e.dst).or_default() += 1;
                }
            }
            GoalPredicate::Accessible { node, accessible } => {
                let n = g0.node(*node).ok_or_else(|| format!("unknown node {node}"))?;
                if !n.is_container {
                    return Err(format!("{} is not a container", n.label));
                }
                if flags.insert(*node, *accessible).is_some_and(|old| old != *accessible) {
                    return Err(format!("{} must be both open and closed", n.label));
                }
                g.set_accessible(*node, *accessible).map_err(|e| e.to_string())?;
            }
        }
    }
    if let Some((d, _)) = on_count.iter().find(|(_, c)| **c > 1) {
        return Err(format!("several objects must rest On {}", g0.label(*d)));
    }
    let v = validate(&g);
    if let Some(first) = v.first() {
        return Err(first.to_string());
    }
    Ok(())
}

fn describe(g0: &SceneGraph, p: &GoalPredicate) -> String {
    match p {
        GoalPredicate::Edge(e) => format!("{}-{}-{}", g0.label(e.src), e.relation, g0.label(e.dst)),
        GoalPredicate::Accessible { node, accessible } => {
            format!("{}.accessible={accessible}", g0.label(*node))
        }
    }
}

fn group_key(g0: &SceneGraph, group: &[GoalPredicate]) -> String {
    let mut parts: Vec<String> = group.iter().map(|p| describe(g0, p)).collect();
    parts.sort();
    parts.join("+")
}

/// `before[j]` lists the groups that must precede group `j`.
fn precedence(task: &TaskSpec) -> Result<Vec<Vec<usize>>, PlanError> {
    let n = task.goals.len();
    let mut before = vec![Vec::new(); n];
    match &task.ordering {
        Ordering::Sequential => {
            for j in 1..n {
                before[j].push(j - 1);
            }
        }
        Ordering::Flexible => {}
        Ordering::Partial { before: pairs } => {
            for (i, j) in pairs {
                for k in [i, j] {
                    if *k >= n {
                        return Err(PlanError::BadGroupIndex(*k));
                    }
                }
                before[*j].push(*i);
            }
            // Kahn's algorithm to reject cycles
            let mut indeg: Vec<usize> = before.iter().map(|b| b.len()).collect();
            let mut ready: Vec<usize> = (0..n).filter(|j| indeg[*j] == 0).collect();
            let mut seen = 0;
            while let Some(i) = ready.pop() {
                seen += 1;
                for j in 0..n {
                    for _ in before[j].iter().filter(|p| **p == i) {
                        indeg[j] -= 1;
                        if indeg[j] == 0 {
                            ready.push(j);
                        }
                    }
                }
            }
            if seen != n {
                return Err(PlanError::CyclicOrdering);
            }
        }
    }
    Ok(before)
}

struct Enumerator<'a> {
    g0: &'a SceneGraph,
    task: &'a TaskSpec,
    before: Vec<Vec<usize>>,
    orders: Vec<Vec<usize>>,
    first_conflict: Option<String>,
}

impl Enumerator<'_> {
    fn walk(&mut self, prefix: &mut Vec<usize>, used: &mut Vec<bool>, active: &[GoalPredicate]) {
        if self.orders.len() >= MAX_ORDERS {
            return;
        }
        let n = self.task.goals.len();
        if prefix.len() == n {
            self.orders.push(prefix.clone());
            return;
        }
        for j in 0..n {
            if used[j] || self.before[j].iter().any(|p| !used[*p]) {
                continue;
            }
            let next = supersede(active, &self.task.goals[j]);
            if let Err(msg) = consistent(self.g0, &next) {
                self.first_conflict.get_or_insert(msg);
                continue;
            }
            used[j] = true;
            prefix.push(j);
            self.walk(prefix, used, &next);
            prefix.pop();
            used[j] = false;
        }
    }
}

/// All admissible group orders, sorted by their goal labels.
pub(crate) fn admissible_orders(task: &TaskSpec, g0: &SceneGraph) -> Result<Vec<Vec<usize>>, PlanError> {
    let before = precedence(task)?;
    for group in &task.goals {
        consistent(g0, group).map_err(PlanError::GoalConflict)?;
    }
    let mut e = Enumerator { g0, task, before, orders: Vec::new(), first_conflict: None };
    e.walk(&mut Vec::new(), &mut vec![false; task.goals.len()], &[]);
    if e.orders.is_empty() {
        return Err(PlanError::GoalConflict(
            e.first_conflict.unwrap_or_else(|| "no admissible group order".into()),
        ));
    }
    let keys: Vec<String> = task.goals.iter().map(|grp| group_key(g0, grp)).collect();
    let mut orders = e.orders;
    orders.sort_by(|a, b| {
        let ka: Vec<&String> = a.iter().map(|i| &keys[*i]).collect();
        let kb: Vec<&String> = b.iter().map(|i| &keys[*i]).collect();
        ka.cmp(&kb).then(a.cmp(b))
    });
    Ok(orders)
}

/// Group order for a task: among admissible topological orders sorted by
/// goal labels, the one at `seed` modulo their count. Orders in which two
/// objects would have to rest On the same non-ground node at once are not
/// admissible. Sequential tasks have exactly one order.
pub fn expand_flexible(task: &TaskSpec, g0: &SceneGraph, seed: u64) -> Result<Vec<usize>, PlanError> {
    let orders = admissible_orders(task, g0)?;
    let i = (seed % orders.len() as u64) as usize;
    Ok(orders[i].clone())
}
