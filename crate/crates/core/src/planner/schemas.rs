use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{apply_effect, Edge, EdgeDelta, NodeId, Relation, SceneGraph, StepEffect};

/// High-level action schemas. Declared in name order so the derived
/// ordering matches the planner's tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Schema {
    ApproachFree,
    GraspObj,
    Lift,
    Place,
    PullOpen,
    PushClosed,
    Release,
    Transport,
}

impl Schema {
    pub fn name(self) -> &'static str {
        match self {
            Schema::ApproachFree => "ApproachFree",
            Schema::GraspObj => "GraspObj",
            Schema::Lift => "Lift",
            Schema::Place => "Place",
            Schema::PullOpen => "PullOpen",
            Schema::PushClosed => "PushClosed",
            Schema::Release => "Release",
            Schema::Transport => "Transport",
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A grounded schema with its single effect.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionInstance {
    pub schema: Schema,
    pub params: Vec<NodeId>,
}

impl fmt::Display for ActionInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ps: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        write!(f, "{}({})", self.schema, ps.join(","))
    }
}

fn inst(schema: Schema, params: &[NodeId]) -> ActionInstance {
    ActionInstance { schema, params: params.to_vec() }
}

/// Object sealed inside a closed container.
fn enclosed(g: &SceneGraph, o: NodeId) -> bool {
    g.support_of(o)
        .is_some_and(|e| e.relation == Relation::In && g.accessible(e.dst) == Some(false))
}

/// Candidate instances with their effects, before the invariant filter.
fn candidates(g: &SceneGraph) -> Vec<(ActionInstance, StepEffect)> {
    let mut out = Vec::new();
    let Some(gid) = g.gripper() else { return out };
    let held = g.grasped();
    let hover = g.above_of(gid);
    let movable = |o: NodeId| g.node(o).is_some_and(|n| !n.is_gripper && !n.is_static);

    if held.is_none() && hover.is_none() {
        for o in g.node_ids().filter(|o| movable(*o) && !enclosed(g, *o)) {
            out.push((
                inst(Schema::ApproachFree, &[o]),
                StepEffect::Delta(EdgeDelta::added(Edge::new(gid, Relation::Above, o))),
            ));
        }
    }

    if let Some(h) = hover {
        if g.is_clear(h.dst) && movable(h.dst) {
            let grasp = Edge::new(gid, Relation::Grasp, h.dst);
            if let Ok(d) = EdgeDelta::relabeled(h, grasp) {
                out.push((inst(Schema::GraspObj, &[h.dst]), StepEffect::Delta(d)));
            }
        }
    }

    let Some(o) = held else { return out };
    let node = g.node(o).expect("held node exists");
    let support = g.support_of(o);
    let above = g.above_of(o);

    if node.is_container {
        // grasped containers are slid open or shut, never carried
        let open = node.accessible == Some(true);
        let schema = if open { Schema::PushClosed } else { Schema::PullOpen };
        out.push((inst(schema, &[o]), StepEffect::Toggle { node: o, accessible: !open }));
    } else if let Some(s) = support {
        out.push((inst(Schema::Lift, &[o]), StepEffect::Delta(EdgeDelta::removed(s))));
    }

    if support.is_none() && above.is_none() && !node.is_container {
        for t in g.node_ids().filter(|t| *t != o && *t != gid && !enclosed(g, *t)) {
            out.push((
                inst(Schema::Transport, &[o, t]),
                StepEffect::Delta(EdgeDelta::added(Edge::new(o, Relation::Above, t))),
            ));
        }
    }

    if let Some(a) = above {
        let t = g.node(a.dst).expect("edge endpoint exists");
        let into = t.is_container && t.accessible == Some(true);
        if into || t.is_static || g.is_clear(t.id) {
            let rel = if into { Relation::In } else { Relation::On };
            if let Ok(d) = EdgeDelta::relabeled(a, Edge::new(o, rel, t.id)) {
                out.push((inst(Schema::Place, &[o, t.id]), StepEffect::Delta(d)));
            }
        }
    }

    if support.is_some() {
        out.push((
            inst(Schema::Release, &[o]),
            StepEffect::Delta(EdgeDelta::removed(Edge::new(gid, Relation::Grasp, o))),
        ));
    }
    out
}

/// Every schema instance whose precondition holds in `g` and whose effect
/// keeps the graph valid, ordered by (schema name, parameters).
pub fn applicable_actions(g: &SceneGraph) -> Vec<(ActionInstance, StepEffect)> {
    let mut out: Vec<(ActionInstance, StepEffect)> =
        candidates(g).into_iter().filter(|(_, e)| apply_effect(g, e).is_ok()).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Same as [`applicable_actions`] with the successor graphs attached.
pub fn successors(g: &SceneGraph) -> Vec<(ActionInstance, StepEffect, SceneGraph)> {
    let mut out: Vec<_> = candidates(g)
        .into_iter()
        .filter_map(|(a, e)| apply_effect(g, &e).ok().map(|n| (a, e, n)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
