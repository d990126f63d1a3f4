use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{
    validate, Edge, EdgeDelta, GoalPredicate, GraphError, NodeId, Relation, SceneGraph, StepEffect,
};

/// SHA-256 digest of a canonical graph encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] =
            bytes.try_into().map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Digest(arr))
    }
}

/// Applies a delta, checking only that it is applicable (no invariant check).
pub fn apply_delta_unchecked(g: &SceneGraph, d: &EdgeDelta) -> Result<SceneGraph, GraphError> {
    let mut out = g.clone();
    if let Some(before) = d.before {
        if !out.remove_edge(&before) {
            return Err(GraphError::InapplicableDelta(format!("{before} is not in the graph")));
        }
    }
    if let Some(after) = d.after {
        for id in [after.src, after.dst] {
            if !out.contains_node(id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
        if !out.insert_edge(after) {
            return Err(GraphError::InapplicableDelta(format!("{after} is already present")));
        }
    }
    Ok(out)
}

/// Applies one delta and rejects results that break a graph invariant.
pub fn apply_delta(g: &SceneGraph, d: &EdgeDelta) -> Result<SceneGraph, GraphError> {
    let out = apply_delta_unchecked(g, d)?;
    let violations = validate(&out);
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(GraphError::InvariantViolation(violations))
    }
}

/// Minimal ordered delta list turning `a` into `b`.
///
/// A relation change on the same ordered pair is one `Relabeled` delta.
/// Node accessibility flags are attributes and are not reported here.
pub fn diff(a: &SceneGraph, b: &SceneGraph) -> Result<Vec<EdgeDelta>, GraphError> {
    let same_nodes = a.node_count() == b.node_count()
        && a.nodes().zip(b.nodes()).all(|(x, y)| {
            x.id == y.id
                && x.label == y.label
                && x.is_container == y.is_container
                && x.is_gripper == y.is_gripper
                && x.is_static == y.is_static
        });
    if !same_nodes {
        return Err(GraphError::NodeSetMismatch);
    }

    let by_pair = |g: &SceneGraph| {
        let mut m: BTreeMap<(NodeId, NodeId), BTreeSet<Relation>> = BTreeMap::new();
        for e in g.edges() {
            m.entry(e.pair()).or_default().insert(e.relation);
        }
        m
    };
    let pa = by_pair(a);
    let pb = by_pair(b);
    let pairs: BTreeSet<(NodeId, NodeId)> = pa.keys().chain(pb.keys()).copied().collect();

    let empty = BTreeSet::new();
    let mut out = Vec::new();
    for (src, dst) in pairs {
        let ra = pa.get(&(src, dst)).unwrap_or(&empty);
        let rb = pb.get(&(src, dst)).unwrap_or(&empty);
        if ra == rb {
            continue;
        }
        if ra.len() == 1 && rb.len() == 1 {
            let before = Edge { src, relation: *ra.first().unwrap(), dst };
            let after = Edge { src, relation: *rb.first().unwrap(), dst };
            out.push(EdgeDelta::relabeled(before, after)?);
            continue;
        }
        for r in ra.difference(rb) {
            out.push(EdgeDelta::removed(Edge { src, relation: *r, dst }));
        }
        for r in rb.difference(ra) {
            out.push(EdgeDelta::added(Edge { src, relation: *r, dst }));
        }
    }
    out.sort_by_key(|d| d.sort_edge());
    Ok(out)
}

/// Applies a step effect; toggles require a container and flip nothing else.
pub fn apply_effect(g: &SceneGraph, e: &StepEffect) -> Result<SceneGraph, GraphError> {
    match e {
        StepEffect::Delta(d) => apply_delta(g, d),
        StepEffect::Toggle { node, accessible } => {
            let n = g.node(*node).ok_or(GraphError::UnknownNode(*node))?;
            if !n.is_container {
                return Err(GraphError::NotAContainer(*node));
            }
            if n.accessible == Some(*accessible) {
                return Err(GraphError::InapplicableDelta(format!(
                    "{node} is already accessible={accessible}"
                )));
            }
            let mut out = g.clone();
            out.set_accessible(*node, *accessible)?;
            Ok(out)
        }
    }
}

/// The single change turning `a` into `b`, or `None` when they are equal.
pub fn step_change(a: &SceneGraph, b: &SceneGraph) -> Result<Option<StepEffect>, GraphError> {
    let deltas = diff(a, b)?;
    let toggles: Vec<StepEffect> = a
        .nodes()
        .zip(b.nodes())
        .filter(|(x, y)| x.accessible != y.accessible)
        .map(|(_, y)| StepEffect::Toggle { node: y.id, accessible: y.accessible.unwrap_or(false) })
        .collect();
    match (deltas.len(), toggles.len()) {
        (0, 0) => Ok(None),
        (1, 0) => Ok(Some(StepEffect::Delta(deltas[0]))),
        (0, 1) => Ok(Some(toggles[0])),
        (edges, toggles) => Err(GraphError::MultipleChanges { edges, toggles }),
    }
}

/// Order-independent digest over nodes (with flags) and the canonical edge set.
pub fn canonical_hash(g: &SceneGraph) -> Digest {
    let mut h = Sha256::new();
    h.update(b"sg1");
    h.update((g.node_count() as u32).to_le_bytes());
    for n in g.nodes() {
        h.update(n.id.0.to_le_bytes());
        h.update((n.label.len() as u32).to_le_bytes());
        h.update(n.label.as_bytes());
        let flags = (n.is_container as u8)
            | (n.is_gripper as u8) << 1
            | (n.is_static as u8) << 2
            | match n.accessible {
                None => 0,
                Some(false) => 1 << 3,
                Some(true) => 1 << 4,
            };
        h.update([flags]);
    }
    h.update((g.edge_count() as u32).to_le_bytes());
    // edges iterate in (src, dst, relation) order regardless of insertion order
    for e in g.edges() {
        h.update(e.src.0.to_le_bytes());
        h.update([e.relation.code()]);
        h.update(e.dst.0.to_le_bytes());
    }
    Digest(h.finalize().into())
}

/// True iff every predicate holds in `g`.
pub fn satisfies(g: &SceneGraph, goal: &[GoalPredicate]) -> Result<bool, GraphError> {
    for p in goal {
        for id in p.nodes() {
            if !g.contains_node(id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
    }
    Ok(goal.iter().all(|p| holds(g, p)))
}

/// True when one goal predicate holds in `g`.
pub fn holds(g: &SceneGraph, p: &GoalPredicate) -> bool {
    match p {
        GoalPredicate::Edge(e) => g.has_edge(e),
        GoalPredicate::Accessible { node, accessible } => g.accessible(*node) == Some(*accessible),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DeltaKind, ObjectNode};

    fn three_blocks() -> SceneGraph {
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
    fn add_and_relabel() {
        let g = three_blocks();
        let above = Edge::ids(0, Relation::Above, 2);
        let g1 = apply_delta(&g, &EdgeDelta::added(above)).unwrap();
        assert!(g1.has_edge(&above));
        let grasp = Edge::ids(0, Relation::Grasp, 2);
        let g2 = apply_delta(&g1, &EdgeDelta::relabeled(above, grasp).unwrap()).unwrap();
        assert!(g2.has_edge(&grasp) && !g2.has_edge(&above));
        assert_eq!(g2.edge_count(), g1.edge_count());
    }

    #[test]
    fn second_grasp_is_rejected() {
        let g = three_blocks().with_edge(Edge::ids(0, Relation::Grasp, 2));
        let err = apply_delta(&g, &EdgeDelta::added(Edge::ids(0, Relation::Grasp, 3))).unwrap_err();
        assert!(matches!(err, GraphError::InvariantViolation(_)));
    }

    #[test]
    fn inapplicable_deltas() {
        let g = three_blocks();
        let present = Edge::ids(2, Relation::On, 1);
        assert!(matches!(
            apply_delta(&g, &EdgeDelta::added(present)),
            Err(GraphError::InapplicableDelta(_))
        ));
        assert!(matches!(
            apply_delta(&g, &EdgeDelta::removed(Edge::ids(2, Relation::On, 3))),
            Err(GraphError::InapplicableDelta(_))
        ));
        assert!(matches!(
            apply_delta(&g, &EdgeDelta::added(Edge::ids(2, Relation::Above, 9))),
            Err(GraphError::UnknownNode(NodeId(9)))
        ));
    }

    #[test]
    fn diff_identity_and_relabel() {
        let g = three_blocks();
        assert!(diff(&g, &g).unwrap().is_empty());
        let mut h = g.clone();
        h.remove_edge(&Edge::ids(2, Relation::On, 1));
        h.insert_edge(Edge::ids(2, Relation::Above, 1));
        let d = diff(&g, &h).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DeltaKind::Relabeled);
    }

    #[test]
    fn diff_rejects_other_node_sets() {
        let g = three_blocks();
        let mut h = SceneGraph::with_nodes(g.nodes().cloned()).unwrap();
        h.add_node(ObjectNode::object(9, "z")).unwrap();
        assert_eq!(diff(&g, &h), Err(GraphError::NodeSetMismatch));
    }

    #[test]
    fn hash_ignores_insertion_order() {
        let g = three_blocks();
        let mut r = SceneGraph::with_nodes(g.nodes().cloned()).unwrap();
        let edges: Vec<Edge> = g.edges().copied().collect();
        for e in edges.iter().rev() {
            r.insert_edge(*e);
        }
        assert_eq!(canonical_hash(&g), canonical_hash(&r));
        assert_eq!(canonical_hash(&g), canonical_hash(&g.clone()));
        let n = g.clone().with_edge(Edge::ids(3, Relation::NextTo, 2));
        let m = g.clone().with_edge(Edge::ids(2, Relation::NextTo, 3));
        assert_eq!(canonical_hash(&n), canonical_hash(&m));
        assert_ne!(canonical_hash(&n), canonical_hash(&g));
    }

    #[test]
    fn satisfies_cases() {
        let mut g = three_blocks();
        g.add_node(ObjectNode::container(5, "box", true)).unwrap();
        g.insert_edge(Edge::ids(5, Relation::On, 1));
        assert!(satisfies(&g, &[]).unwrap());
        assert!(satisfies(&g, &[Edge::ids(2, Relation::On, 1).into()]).unwrap());
        let g2 = {
            let mut x = g.clone();
            x.remove_edge(&Edge::ids(2, Relation::On, 1));
            x.insert_edge(Edge::ids(2, Relation::On, 5));
            x
        };
        assert!(!satisfies(&g2, &[Edge::ids(2, Relation::In, 5).into()]).unwrap());
        assert_eq!(
            satisfies(&g, &[Edge::ids(2, Relation::On, 42).into()]),
            Err(GraphError::UnknownNode(NodeId(42)))
        );
        let acc = GoalPredicate::Accessible { node: NodeId(5), accessible: true };
        assert!(satisfies(&g, &[acc]).unwrap());
    }
}
