use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Edge, NodeId, Relation, SceneGraph};

/// One broken structural invariant. A valid graph yields none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    GripperCount { count: usize },
    ContainerGripper { node: NodeId },
    AccessibilityFlag { node: NodeId },
    MissingEndpoint { edge: Edge },
    SelfLoop { edge: Edge },
    DuplicatePair { src: NodeId, dst: NodeId },
    NonCanonicalNextTo { edge: Edge },
    GraspFromNonGripper { edge: Edge },
    GraspOfStatic { edge: Edge },
    MultiGrasp { held: Vec<NodeId> },
    GripperAsTarget { edge: Edge },
    GripperRelation { edge: Edge },
    MultipleAbove { node: NodeId },
    MultipleSupports { node: NodeId },
    InNonContainer { edge: Edge },
    Cycle { nodes: Vec<NodeId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GripperCount { count } => write!(f, "expected one gripper, found {count}"),
            Violation::ContainerGripper { node } => {
                write!(f, "{node} is flagged both container and gripper")
            }
            Violation::AccessibilityFlag { node } => {
                write!(f, "{node} has an accessibility flag inconsistent with its container flag")
            }
            Violation::MissingEndpoint { edge } => write!(f, "{edge} references a missing node"),
            Violation::SelfLoop { edge } => write!(f, "{edge} is a self loop"),
            Violation::DuplicatePair { src, dst } => {
                write!(f, "more than one relation from {src} to {dst}")
            }
            Violation::NonCanonicalNextTo { edge } => write!(f, "{edge} is not stored src<dst"),
            Violation::GraspFromNonGripper { edge } => write!(f, "{edge} grasps without the gripper"),
            Violation::GraspOfStatic { edge } => write!(f, "{edge} grasps a static node"),
            Violation::MultiGrasp { held } => write!(f, "gripper holds several objects {held:?}"),
            Violation::GripperAsTarget { edge } => write!(f, "{edge} points at the gripper"),
            Violation::GripperRelation { edge } => {
                write!(f, "{edge} gives the gripper a relation other than Above/Grasp")
            }
            Violation::MultipleAbove { node } => write!(f, "{node} is Above several nodes"),
            Violation::MultipleSupports { node } => write!(f, "{node} rests on several nodes"),
            Violation::InNonContainer { edge } => write!(f, "{edge} targets a non-container"),
            Violation::Cycle { nodes } => write!(f, "Above/On/In cycle through {nodes:?}"),
        }
    }
}

/// Lists every violated invariant; an empty list means the graph is valid.
///
/// A grasped object may still carry its On/In edge: grasping and placing
/// both happen while the support edge is held (see the planner schemas).
pub fn validate(g: &SceneGraph) -> Vec<Violation> {
    let mut out = Vec::new();

    let grippers: Vec<NodeId> = g.nodes().filter(|n| n.is_gripper).map(|n| n.id).collect();
    if grippers.len() != 1 {
        out.push(Violation::GripperCount { count: grippers.len() });
    }
    for n in g.nodes() {
        if n.is_gripper && n.is_container {
            out.push(Violation::ContainerGripper { node: n.id });
        }
        if n.is_container != n.accessible.is_some() {
            out.push(Violation::AccessibilityFlag { node: n.id });
        }
    }

    let mut pairs: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    let mut held = Vec::new();
    let mut above_count: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut support_count: BTreeMap<NodeId, usize> = BTreeMap::new();

    for e in g.edges() {
        let (Some(src), Some(dst)) = (g.node(e.src), g.node(e.dst)) else {
            out.push(Violation::MissingEndpoint { edge: *e });
            continue;
        };
        if e.src == e.dst {
            out.push(Violation::SelfLoop { edge: *e });
            continue;
        }
        if e.relation == Relation::NextTo && e.src > e.dst {
            out.push(Violation::NonCanonicalNextTo { edge: *e });
        }
        *pairs.entry((e.src, e.dst)).or_default() += 1;
        // NextTo is symmetric: it also occupies the reversed pair.
        if e.relation == Relation::NextTo {
            *pairs.entry((e.dst, e.src)).or_default() += 1;
        }
        if dst.is_gripper {
            out.push(Violation::GripperAsTarget { edge: *e });
        }
        match e.relation {
            Relation::Grasp => {
                if !src.is_gripper {
                    out.push(Violation::GraspFromNonGripper { edge: *e });
                } else {
                    held.push(e.dst);
                }
                if dst.is_static {
                    out.push(Violation::GraspOfStatic { edge: *e });
                }
            }
            Relation::Above => *above_count.entry(e.src).or_default() += 1,
            Relation::On | Relation::In => {
                *support_count.entry(e.src).or_default() += 1;
                if e.relation == Relation::In && !dst.is_container {
                    out.push(Violation::InNonContainer { edge: *e });
                }
            }
            Relation::NextTo => {}
        }
        if src.is_gripper && !matches!(e.relation, Relation::Above | Relation::Grasp) {
            out.push(Violation::GripperRelation { edge: *e });
        }
    }

    for ((src, dst), n) in &pairs {
        if *n > 1 {
            out.push(Violation::DuplicatePair { src: *src, dst: *dst });
        }
    }

    if held.len() > 1 {
        out.push(Violation::MultiGrasp { held });
    }
    for (node, n) in above_count {
        if n > 1 {
            out.push(Violation::MultipleAbove { node });
        }
    }
    for (node, n) in support_count {
        if n > 1 {
            out.push(Violation::MultipleSupports { node });
        }
    }
    if let Some(cycle) = find_cycle(g) {
        out.push(Violation::Cycle { nodes: cycle });
    }
    out
}

/// Finds one cycle through Above/On/In edges, reported from its smallest node.
fn find_cycle(g: &SceneGraph) -> Option<Vec<NodeId>> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in g.edges() {
        if matches!(e.relation, Relation::Above | Relation::On | Relation::In) && e.src != e.dst {
            adj.entry(e.src).or_default().push(e.dst);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<NodeId, Mark> = BTreeMap::new();
    let starts: BTreeSet<NodeId> = adj.keys().copied().collect();

    for start in starts {
        if marks.contains_key(&start) {
            continue;
        }
        // iterative DFS with an explicit path
        let mut path: Vec<(NodeId, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Open);
        while let Some((node, idx)) = path.last().copied() {
            let next = adj.get(&node).and_then(|v| v.get(idx)).copied();
            match next {
                Some(n) => {
                    path.last_mut().unwrap().1 += 1;
                    match marks.get(&n) {
                        Some(Mark::Open) => {
                            let pos = path.iter().position(|(p, _)| *p == n).unwrap();
                            let mut cycle: Vec<NodeId> = path[pos..].iter().map(|(p, _)| *p).collect();
                            let min_pos = cycle
                                .iter()
                                .enumerate()
                                .min_by_key(|(_, v)| **v)
                                .map(|(i, _)| i)
                                .unwrap();
                            cycle.rotate_left(min_pos);
                            return Some(cycle);
                        }
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(n, Mark::Open);
                            path.push((n, 0));
                        }
                    }
                }
                None => {
                    marks.insert(node, Mark::Done);
                    path.pop();
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ObjectNode;

    fn tabletop() -> SceneGraph {
        let mut g = SceneGraph::with_nodes([
            ObjectNode::gripper(0),
            ObjectNode::surface(1, "table"),
            ObjectNode::object(2, "a"),
            ObjectNode::object(3, "b"),
            ObjectNode::object(4, "c"),
        ])
        .unwrap();
        for id in 2..=4 {
            g.insert_edge(Edge::ids(id, Relation::On, 1));
        }
        g
    }

    #[test]
    fn tabletop_is_valid() {
        assert!(validate(&tabletop()).is_empty());
    }

    #[test]
    fn two_cycle_is_reported() {
        let mut g = tabletop();
        g.remove_edge(&Edge::ids(2, Relation::On, 1));
        g.remove_edge(&Edge::ids(3, Relation::On, 1));
        g.insert_edge(Edge::ids(2, Relation::On, 3));
        g.insert_edge(Edge::ids(3, Relation::On, 2));
        let v = validate(&g);
        assert!(v.contains(&Violation::Cycle { nodes: vec![NodeId(2), NodeId(3)] }), "{v:?}");
    }

    #[test]
    fn multi_grasp_is_reported() {
        let mut g = tabletop();
        g.insert_edge(Edge::ids(0, Relation::Grasp, 2));
        g.insert_edge(Edge::ids(0, Relation::Grasp, 3));
        let v = validate(&g);
        assert!(v.iter().any(|x| matches!(x, Violation::MultiGrasp { .. })), "{v:?}");
    }

    #[test]
    fn grasp_while_resting_is_allowed() {
        let mut g = tabletop();
        g.insert_edge(Edge::ids(0, Relation::Grasp, 2));
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn structural_violations() {
        let mut g = tabletop();
        g.insert_edge(Edge::ids(2, Relation::NextTo, 1)); // canonicalized to (1,NextTo,2), clashes with (2,On,1)
        g.insert_edge(Edge::ids(3, Relation::Grasp, 4));
        g.insert_edge(Edge::ids(4, Relation::In, 2));
        g.insert_edge(Edge::ids(2, Relation::Above, 0));
        let v = validate(&g);
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicatePair { .. })), "{v:?}");
        assert!(v.iter().any(|x| matches!(x, Violation::GraspFromNonGripper { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::InNonContainer { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::MultipleSupports { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::GripperAsTarget { .. })));
    }

    #[test]
    fn gripper_count_and_flags() {
        let mut g = SceneGraph::with_nodes([
            ObjectNode::object(1, "a"),
            ObjectNode { accessible: Some(true), ..ObjectNode::object(2, "b") },
        ])
        .unwrap();
        g.insert_edge(Edge::ids(1, Relation::On, 7));
        let v = validate(&g);
        assert!(v.contains(&Violation::GripperCount { count: 0 }));
        assert!(v.contains(&Violation::AccessibilityFlag { node: NodeId(2) }));
        assert!(v.iter().any(|x| matches!(x, Violation::MissingEndpoint { .. })));
    }
}
