//! Scene graphs from ground-truth world state via geometric predicates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, Edge, GraphError, NodeId, Relation, SceneGraph, Violation};
use crate::sim::catalog::nodes_of;
use crate::sim::{Body, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeomThresholds {
    /// Vertical contact tolerance, px.
    pub contact_eps: f64,
    /// Minimum horizontal overlap for On, as a fraction of the narrower width.
    pub overlap_tau: f64,
    /// Maximum horizontal gap for NextTo, px.
    pub near_dist: f64,
    /// Maximum vertical gap for Above, px.
    pub above_max: f64,
}

impl Default for GeomThresholds {
    fn default() -> Self {
        Self { contact_eps: 3.0, overlap_tau: 0.5, near_dist: 40.0, above_max: 50.0 }
    }
}

impl GeomThresholds {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            contact_eps: self.contact_eps * s,
            overlap_tau: self.overlap_tau,
            near_dist: self.near_dist * s,
            above_max: self.above_max * s,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.contact_eps > 0.0) {
            return Err("contact_eps must be positive".into());
        }
        if !(self.overlap_tau > 0.0 && self.overlap_tau <= 1.0) {
            return Err("overlap_tau must lie in (0, 1]".into());
        }
        if !(self.near_dist > 0.0) {
            return Err("near_dist must be positive".into());
        }
        if !(self.above_max > self.contact_eps) {
            return Err("above_max must exceed contact_eps".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{0} is neither supported nor held")]
    UnsettledWorld(NodeId),
    #[error("parsed graph is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Container holding `b`, preferring the tightest interior.
fn container_of<'a>(w: &'a WorldState, b: &Body) -> Option<&'a Body> {
    w.objects
        .iter()
        .filter(|c| w.is_inside(b, c))
        .min_by(|x, y| {
            let (ax, ay) = (w.interior(x).unwrap().area(), w.interior(y).unwrap().area());
            ax.total_cmp(&ay).then(x.id.cmp(&y.id))
        })
}

/// Body `b` rests on: contact within eps and enough horizontal overlap;
/// the largest overlap wins, then the lowest id.
fn support_of<'a>(w: &'a WorldState, b: &Body, th: &GeomThresholds) -> Option<&'a Body> {
    let r = b.rect();
    w.objects
        .iter()
        .filter(|t| t.id != b.id && !t.attached)
        .filter(|t| (t.top() - b.bottom()).abs() <= th.contact_eps)
        .filter(|t| r.horizontal_overlap(&t.rect()) >= th.overlap_tau * b.w.min(t.w))
        .max_by(|x, y| {
            let (ox, oy) = (r.horizontal_overlap(&x.rect()), r.horizontal_overlap(&y.rect()));
            ox.total_cmp(&oy).then(y.id.cmp(&x.id))
        })
}

/// Topmost body under the point `(cx, bottom)`, if its top is more than eps
/// and at most `above_max` below.
fn above_target(w: &WorldState, skip: Option<NodeId>, cx: f64, bottom: f64, th: &GeomThresholds) -> Option<NodeId> {
    let nearest = w
        .objects
        .iter()
        .filter(|t| Some(t.id) != skip && !t.attached)
        .filter(|t| cx >= t.x && cx <= t.x + t.w)
        .filter(|t| t.top() - bottom >= -th.contact_eps)
        .min_by(|x, y| x.top().total_cmp(&y.top()).then(x.id.cmp(&y.id)))?;
    let gap = nearest.top() - bottom;
    (gap > th.contact_eps && gap <= th.above_max).then_some(nearest.id)
}

/// Builds the scene graph of `w`.
///
/// Priority per object: In, then On, then (only while carried) Above.
/// NextTo links two objects resting On the same support that are less than
/// `near_dist` apart with overlapping vertical extents.
pub fn parse(w: &WorldState, th: &GeomThresholds) -> Result<SceneGraph, ParseError> {
    let mut g = SceneGraph::with_nodes(nodes_of(w))?;
    let frame_bottom = w.height as f64;
    let gid = w.gripper.id;

    let mut resting_on: Vec<(NodeId, NodeId)> = Vec::new();
    for b in &w.objects {
        if let Some(c) = container_of(w, b) {
            g.insert_edge(Edge::new(b.id, Relation::In, c.id));
        } else if let Some(t) = support_of(w, b, th) {
            g.insert_edge(Edge::new(b.id, Relation::On, t.id));
            resting_on.push((b.id, t.id));
        } else if b.attached {
            if let Some(t) = above_target(w, Some(b.id), b.center_x(), b.bottom(), th) {
                g.insert_edge(Edge::new(b.id, Relation::Above, t));
            }
        } else if (b.bottom() - frame_bottom).abs() > th.contact_eps {
            return Err(ParseError::UnsettledWorld(b.id));
        }
    }

    match w.attached() {
        Some(b) => {
            g.insert_edge(Edge::new(gid, Relation::Grasp, b.id));
        }
        None => {
            let gr = &w.gripper;
            if let Some(t) = above_target(w, None, gr.center_x(), gr.bottom(), th) {
                g.insert_edge(Edge::new(gid, Relation::Above, t));
            }
        }
    }

    for (i, (a, sa)) in resting_on.iter().enumerate() {
        for (b, sb) in &resting_on[i + 1..] {
            if sa != sb || g.edge_between(*a, *b).is_some() || g.edge_between(*b, *a).is_some() {
                continue;
            }
            let (ra, rb) = (w.body(*a).unwrap().rect(), w.body(*b).unwrap().rect());
            let gap = -ra.horizontal_overlap(&rb);
            if gap < th.near_dist && ra.vertical_overlap(&rb) > 0.0 {
                g.insert_edge(Edge::new(*a, Relation::NextTo, *b));
            }
        }
    }

    let v = validate(&g);
    if v.is_empty() {
        Ok(g)
    } else {
        Err(ParseError::Invalid(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::catalog::{Kind, SceneBuilder};
    use crate::sim::testing::two_block_world;

    fn id(w: &WorldState, label: &str) -> NodeId {
        w.body_by_label(label).unwrap().id
    }

    #[test]
    fn resting_block_is_on_table() {
        let w = two_block_world();
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        assert!(g.has_edge(&Edge::new(id(&w, "a"), Relation::On, id(&w, "table"))));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn carried_block_thirty_above_is_above() {
        let mut w = two_block_world();
        let (a, b) = (id(&w, "a"), id(&w, "b"));
        let bb = w.body(b).unwrap().clone();
        {
            let body = w.body_mut(a).unwrap();
            body.x = bb.x;
            body.y = bb.y - 30.0 - body.h;
            body.attached = true;
        }
        w.gripper.closed = true;
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        assert!(g.has_edge(&Edge::new(a, Relation::Above, b)));
        assert!(g.has_edge(&Edge::new(w.gripper.id, Relation::Grasp, a)));
    }

    #[test]
    fn floating_free_block_is_unsettled() {
        let mut w = two_block_world();
        let a = id(&w, "a");
        w.body_mut(a).unwrap().y -= 30.0;
        assert_eq!(parse(&w, &GeomThresholds::default()), Err(ParseError::UnsettledWorld(a)));
    }

    #[test]
    fn close_neighbours_are_next_to() {
        let mut b = SceneBuilder::new(640, 360);
        let x = b.add("red_block", Kind::Block, 100.0);
        let y = b.add("blue_block", Kind::Block, 160.0);
        let w = b.build();
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        assert!(g.has_edge(&Edge::new(y, Relation::NextTo, x)));
    }

    #[test]
    fn contents_of_box_are_in() {
        let mut b = SceneBuilder::new(640, 360);
        let bx = b.add("box", Kind::Box, 100.0);
        let f = b.add("apple", Kind::Apple, 400.0);
        let mut w = b.build();
        let floor = w.floor_y(w.body(bx).unwrap());
        let body = w.body_mut(f).unwrap();
        body.x = 150.0;
        body.y = floor - body.h;
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        assert!(g.has_edge(&Edge::new(f, Relation::In, bx)));
        assert!(g.support_of(f).unwrap().relation == Relation::In);
    }

    #[test]
    fn hovering_gripper_is_above_block() {
        let mut w = two_block_world();
        let a = w.body_by_label("a").unwrap().clone();
        w.gripper.x = a.center_x() - w.gripper.w / 2.0;
        w.gripper.y = a.y - 20.0 - w.gripper.h;
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        assert!(g.has_edge(&Edge::new(w.gripper.id, Relation::Above, a.id)));
    }
}
