//! Typed semantic scene graphs: object nodes (gripper included) joined by
//! directed spatial relations.
//!
//! Graphs are values. Every mutation returns a new graph, so a graph can be
//! shared freely between planner workers.

mod ops;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ops::{
    apply_delta, apply_delta_unchecked, apply_effect, canonical_hash, diff, holds, satisfies,
    step_change,
    Digest,
};
pub use validate::{validate, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Closed set of spatial relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    Above,
    On,
    In,
    Grasp,
    NextTo,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Above,
        Relation::On,
        Relation::In,
        Relation::Grasp,
        Relation::NextTo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Above => "Above",
            Relation::On => "On",
            Relation::In => "In",
            Relation::Grasp => "Grasp",
            Relation::NextTo => "NextTo",
        }
    }

    /// On and In: the relations that say what an object rests on.
    pub fn is_support(self) -> bool {
        matches!(self, Relation::On | Relation::In)
    }

    fn code(self) -> u8 {
        match self {
            Relation::Above => 0,
            Relation::On => 1,
            Relation::In => 2,
            Relation::Grasp => 3,
            Relation::NextTo => 4,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Relation {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| GraphError::UnknownRelation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: NodeId,
    pub label: String,
    #[serde(default)]
    pub is_container: bool,
    #[serde(default)]
    pub is_gripper: bool,
    /// Fixed scene furniture (table, grill, plate...): never grasped, may
    /// support any number of objects.
    #[serde(default)]
    pub is_static: bool,
    /// Only meaningful for containers; drawers toggle it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessible: Option<bool>,
}

impl ObjectNode {
    pub fn object(id: u32, label: &str) -> Self {
        Self {
            id: NodeId(id),
            label: label.to_string(),
            is_container: false,
            is_gripper: false,
            is_static: false,
            accessible: None,
        }
    }

    pub fn gripper(id: u32) -> Self {
        Self {
            is_gripper: true,
            ..Self::object(id, "gripper")
        }
    }

    pub fn surface(id: u32, label: &str) -> Self {
        Self {
            is_static: true,
            ..Self::object(id, label)
        }
    }

    pub fn container(id: u32, label: &str, accessible: bool) -> Self {
        Self {
            is_container: true,
            accessible: Some(accessible),
            ..Self::object(id, label)
        }
    }

    pub fn is_accessible(&self) -> bool {
        self.is_container && self.accessible.unwrap_or(false)
    }
}

/// Directed relation `src --relation--> dst`.
///
/// `NextTo` is symmetric and always stored with `src < dst`; use
/// [`Edge::new`] to get the canonical form. Edges order by
/// `(src, dst, relation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawEdge")]
pub struct Edge {
    pub src: NodeId,
    pub relation: Relation,
    pub dst: NodeId,
}

#[derive(Deserialize)]
struct RawEdge {
    src: NodeId,
    relation: Relation,
    dst: NodeId,
}

impl From<RawEdge> for Edge {
    fn from(raw: RawEdge) -> Self {
        Edge::new(raw.src, raw.relation, raw.dst)
    }
}

impl Edge {
    pub fn new(src: NodeId, relation: Relation, dst: NodeId) -> Self {
        if relation == Relation::NextTo && dst < src {
            Self { src: dst, relation, dst: src }
        } else {
            Self { src, relation, dst }
        }
    }

    pub fn ids(src: u32, relation: Relation, dst: u32) -> Self {
        Self::new(NodeId(src), relation, NodeId(dst))
    }

    pub fn pair(&self) -> (NodeId, NodeId) {
        (self.src, self.dst)
    }

    pub fn touches(&self, id: NodeId) -> bool {
        self.src == id || self.dst == id
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.src, self.dst, self.relation).cmp(&(other.src, other.dst, other.relation))
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.src, self.relation, self.dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeltaKind {
    Added,
    Removed,
    Relabeled,
}

/// A single edge change between consecutive graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDelta")]
pub struct EdgeDelta {
    pub kind: DeltaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Edge>,
}

#[derive(Deserialize)]
struct RawDelta {
    kind: DeltaKind,
    #[serde(default)]
    before: Option<Edge>,
    #[serde(default)]
    after: Option<Edge>,
}

impl TryFrom<RawDelta> for EdgeDelta {
    type Error = GraphError;

    fn try_from(raw: RawDelta) -> Result<Self, Self::Error> {
        match (raw.kind, raw.before, raw.after) {
            (DeltaKind::Added, None, Some(e)) => Ok(EdgeDelta::added(e)),
            (DeltaKind::Removed, Some(e), None) => Ok(EdgeDelta::removed(e)),
            (DeltaKind::Relabeled, Some(b), Some(a)) => EdgeDelta::relabeled(b, a),
            (kind, ..) => Err(GraphError::MalformedDelta(format!(
                "{kind:?} delta with wrong before/after fields"
            ))),
        }
    }
}

impl EdgeDelta {
    pub fn added(edge: Edge) -> Self {
        Self { kind: DeltaKind::Added, before: None, after: Some(edge) }
    }

    pub fn removed(edge: Edge) -> Self {
        Self { kind: DeltaKind::Removed, before: Some(edge), after: None }
    }

    pub fn relabeled(before: Edge, after: Edge) -> Result<Self, GraphError> {
        if before.pair() != after.pair() || before.relation == after.relation {
            return Err(GraphError::MalformedDelta(format!(
                "relabel {before} -> {after} must keep the pair and change the relation"
            )));
        }
        Ok(Self { kind: DeltaKind::Relabeled, before: Some(before), after: Some(after) })
    }

    /// The edge that decides this delta's position in a sorted diff.
    pub fn sort_edge(&self) -> Edge {
        self.before.or(self.after).expect("delta carries an edge")
    }

    /// Source node of the changed edge.
    pub fn subject(&self) -> NodeId {
        self.sort_edge().src
    }
}

impl fmt::Display for EdgeDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.before, self.after) {
            (None, Some(a)) => write!(f, "+{a}"),
            (Some(b), None) => write!(f, "-{b}"),
            (Some(b), Some(a)) => write!(f, "{b} => {a}"),
            (None, None) => f.write_str("<empty>"),
        }
    }
}

/// What one chain step changes: a single edge, or one container's
/// accessibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEffect {
    Delta(EdgeDelta),
    Toggle { node: NodeId, accessible: bool },
}

impl StepEffect {
    /// Node whose relations or attributes the step changes.
    pub fn subject(&self) -> NodeId {
        match self {
            StepEffect::Delta(d) => d.subject(),
            StepEffect::Toggle { node, .. } => *node,
        }
    }
}

impl fmt::Display for StepEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepEffect::Delta(d) => write!(f, "{d}"),
            StepEffect::Toggle { node, accessible } => write!(f, "{node}.accessible:={accessible}"),
        }
    }
}

/// Goal condition over a scene graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalPredicate {
    Edge(Edge),
    Accessible { node: NodeId, accessible: bool },
}

impl GoalPredicate {
    pub fn nodes(&self) -> Vec<NodeId> {
        match self {
            GoalPredicate::Edge(e) => vec![e.src, e.dst],
            GoalPredicate::Accessible { node, .. } => vec![*node],
        }
    }

    /// The node whose state this predicate constrains.
    pub fn subject(&self) -> NodeId {
        match self {
            GoalPredicate::Edge(e) => e.src,
            GoalPredicate::Accessible { node, .. } => *node,
        }
    }
}

impl From<Edge> for GoalPredicate {
    fn from(e: Edge) -> Self {
        GoalPredicate::Edge(e)
    }
}

impl fmt::Display for GoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalPredicate::Edge(e) => write!(f, "{e}"),
            GoalPredicate::Accessible { node, accessible } => {
                write!(f, "{node}.accessible={accessible}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("inapplicable delta: {0}")]
    InapplicableDelta(String),
    #[error("delta would violate graph invariants: {}", format_violations(.0))]
    InvariantViolation(Vec<Violation>),
    #[error("graphs do not share the same node set")]
    NodeSetMismatch,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("malformed delta: {0}")]
    MalformedDelta(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("graphs differ by {edges} edge changes and {toggles} flag changes, expected one")]
    MultipleChanges { edges: usize, toggles: usize },
    #[error("{0} is not a container")]
    NotAContainer(NodeId),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Scene graph: node set plus edge set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "GraphDoc", try_from = "GraphDoc")]
pub struct SceneGraph {
    nodes: BTreeMap<NodeId, ObjectNode>,
    edges: BTreeSet<Edge>,
}

/// Interchange form: node and edge arrays, edges sorted by `(src, dst, relation)`.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<ObjectNode>,
    edges: Vec<Edge>,
}

impl From<SceneGraph> for GraphDoc {
    fn from(g: SceneGraph) -> Self {
        GraphDoc {
            nodes: g.nodes.into_values().collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl TryFrom<GraphDoc> for SceneGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, Self::Error> {
        let mut g = SceneGraph::new();
        for n in doc.nodes {
            g.add_node(n)?;
        }
        for e in doc.edges {
            g.insert_edge(e);
        }
        Ok(g)
    }
}

impl SceneGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes(nodes: impl IntoIterator<Item = ObjectNode>) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for n in nodes {
            g.add_node(n)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, node: ObjectNode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id, node);
        Ok(())
    }

    /// Inserts without any invariant checks; returns false if already present.
    pub fn insert_edge(&mut self, edge: Edge) -> bool {
        self.edges.insert(Edge::new(edge.src, edge.relation, edge.dst))
    }

    pub fn remove_edge(&mut self, edge: &Edge) -> bool {
        self.edges.remove(edge)
    }

    pub fn with_edge(mut self, edge: Edge) -> Self {
        self.insert_edge(edge);
        self
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ObjectNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&ObjectNode> {
        self.nodes.get(&id)
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node_by_label(&self, label: &str) -> Option<&ObjectNode> {
        self.nodes.values().find(|n| n.label == label)
    }

    pub fn label(&self, id: NodeId) -> &str {
        self.nodes.get(&id).map(|n| n.label.as_str()).unwrap_or("?")
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(&Edge::new(edge.src, edge.relation, edge.dst))
    }

    /// Edge between an ordered pair, if any (first by relation order).
    pub fn edge_between(&self, src: NodeId, dst: NodeId) -> Option<Edge> {
        let lo = Edge { src, relation: Relation::Above, dst };
        self.edges.range(lo..).next().filter(|e| e.src == src && e.dst == dst).copied()
    }

    pub fn out_edges(&self, src: NodeId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == src)
    }

    pub fn in_edges(&self, dst: NodeId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.dst == dst)
    }

    pub fn gripper(&self) -> Option<NodeId> {
        self.nodes.values().find(|n| n.is_gripper).map(|n| n.id)
    }

    /// Object currently held by the gripper.
    pub fn grasped(&self) -> Option<NodeId> {
        let g = self.gripper()?;
        self.out_edges(g).find(|e| e.relation == Relation::Grasp).map(|e| e.dst)
    }

    pub fn is_grasped(&self, id: NodeId) -> bool {
        self.grasped() == Some(id)
    }

    /// The On/In edge leaving `id`, if the object rests on something.
    pub fn support_of(&self, id: NodeId) -> Option<Edge> {
        self.out_edges(id).find(|e| e.relation.is_support()).copied()
    }

    pub fn above_of(&self, id: NodeId) -> Option<Edge> {
        self.out_edges(id).find(|e| e.relation == Relation::Above).copied()
    }

    /// True when nothing rests On `id`.
    pub fn is_clear(&self, id: NodeId) -> bool {
        !self.in_edges(id).any(|e| e.relation == Relation::On)
    }

    pub fn set_accessible(&mut self, id: NodeId, accessible: bool) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        node.accessible = Some(accessible);
        Ok(())
    }

    pub fn accessible(&self, id: NodeId) -> Option<bool> {
        self.nodes.get(&id).and_then(|n| n.accessible)
    }

    /// Label-level signature: identical for graphs that differ only in node ids.
    /// Used to match library keyframes across demos.
    pub fn label_signature(&self) -> String {
        let mut parts: Vec<String> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = if e.relation == Relation::NextTo {
                    let (x, y) = (self.label(e.src), self.label(e.dst));
                    if x <= y { (x, y) } else { (y, x) }
                } else {
                    (self.label(e.src), self.label(e.dst))
                };
                format!("{a}-{}-{b}", e.relation)
            })
            .collect();
        parts.extend(
            self.nodes
                .values()
                .filter_map(|n| n.accessible.map(|a| format!("{}.acc={a}", n.label))),
        );
        parts.sort();
        parts.join(",")
    }
}

impl fmt::Display for SceneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|e| format!("({} {} {})", self.label(e.src), e.relation, self.label(e.dst)))
            .collect();
        write!(f, "{{{}}}", edges.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_to_is_canonicalized() {
        let e = Edge::ids(5, Relation::NextTo, 2);
        assert_eq!((e.src, e.dst), (NodeId(2), NodeId(5)));
        let parsed: Edge =
            serde_json::from_str(r#"{"src":5,"relation":"NextTo","dst":2}"#).unwrap();
        assert_eq!(parsed, e);
    }

    #[test]
    fn relation_names_round_trip() {
        for r in Relation::ALL {
            assert_eq!(r.name().parse::<Relation>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.name()));
        }
        assert!("Under".parse::<Relation>().is_err());
        assert!(serde_json::from_str::<Relation>("\"Near\"").is_err());
    }

    #[test]
    fn relabel_requires_same_pair() {
        let a = Edge::ids(0, Relation::Above, 1);
        assert!(EdgeDelta::relabeled(a, Edge::ids(0, Relation::Grasp, 1)).is_ok());
        assert!(EdgeDelta::relabeled(a, Edge::ids(0, Relation::Grasp, 2)).is_err());
        assert!(EdgeDelta::relabeled(a, a).is_err());
        let bad = r#"{"kind":"Relabeled","before":{"src":0,"relation":"On","dst":1}}"#;
        assert!(serde_json::from_str::<EdgeDelta>(bad).is_err());
    }

    #[test]
    fn serialized_edges_are_sorted() {
        let mut g = SceneGraph::with_nodes([
            ObjectNode::gripper(0),
            ObjectNode::surface(1, "table"),
            ObjectNode::object(2, "a"),
            ObjectNode::object(3, "b"),
        ])
        .unwrap();
        g.insert_edge(Edge::ids(3, Relation::On, 1));
        g.insert_edge(Edge::ids(2, Relation::On, 1));
        g.insert_edge(Edge::ids(0, Relation::Above, 3));
        let doc: serde_json::Value = serde_json::to_value(&g).unwrap();
        let srcs: Vec<u64> =
            doc["edges"].as_array().unwrap().iter().map(|e| e["src"].as_u64().unwrap()).collect();
        assert_eq!(srcs, vec![0, 2, 3]);
        let back: SceneGraph = serde_json::from_value(doc).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn goal_predicate_forms_parse() {
        let e: GoalPredicate =
            serde_json::from_str(r#"{"src":1,"relation":"On","dst":2}"#).unwrap();
        assert_eq!(e, GoalPredicate::Edge(Edge::ids(1, Relation::On, 2)));
        let a: GoalPredicate = serde_json::from_str(r#"{"node":4,"accessible":true}"#).unwrap();
        assert_eq!(a, GoalPredicate::Accessible { node: NodeId(4), accessible: true });
    }
}
