//! Object layouts (per-node boxes) and next-layout prediction with
//! per-relation linear models.

mod ols;
mod predictor;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::graph::{NodeId, Relation, SceneGraph, StepEffect};
use crate::scalar::Scalar;
use crate::sim::WorldState;

pub use ols::{lstsq, LstsqSolution, OlsError};
pub use predictor::{
    fit, ModelKey, ModelStats, Predictor, PredictorError, RelationModel, TransitionExample,
    MIN_EXAMPLES,
};

/// Node id to box, plus the set of nodes hidden inside closed containers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(
    into = "Vec<LayoutEntry<T>>",
    try_from = "Vec<LayoutEntry<T>>",
    bound = "T: Scalar + Serialize + serde::de::DeserializeOwned"
)]
pub struct LayoutMap<T: Scalar> {
    boxes: BTreeMap<NodeId, Rect<T>>,
    occluded: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
struct LayoutEntry<T: Scalar> {
    id: NodeId,
    #[serde(rename = "box")]
    rect: Rect<T>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    occluded: bool,
}

impl<T: Scalar> From<LayoutMap<T>> for Vec<LayoutEntry<T>> {
    fn from(l: LayoutMap<T>) -> Self {
        l.boxes
            .iter()
            .map(|(id, r)| LayoutEntry { id: *id, rect: *r, occluded: l.occluded.contains(id) })
            .collect()
    }
}

impl<T: Scalar> TryFrom<Vec<LayoutEntry<T>>> for LayoutMap<T> {
    type Error = String;

    fn try_from(v: Vec<LayoutEntry<T>>) -> Result<Self, Self::Error> {
        let mut l = LayoutMap::new();
        for e in v {
            if l.boxes.insert(e.id, e.rect).is_some() {
                return Err(format!("duplicate layout entry for {}", e.id));
            }
            if e.occluded {
                l.occluded.insert(e.id);
            }
        }
        Ok(l)
    }
}

impl<T: Scalar> LayoutMap<T> {
    pub fn new() -> Self {
        Self { boxes: BTreeMap::new(), occluded: BTreeSet::new() }
    }

    pub fn insert(&mut self, id: NodeId, r: Rect<T>) {
        self.boxes.insert(id, r);
    }

    pub fn get(&self, id: NodeId) -> Option<&Rect<T>> {
        self.boxes.get(&id)
    }

    pub fn set_occluded(&mut self, id: NodeId, hidden: bool) {
        if hidden {
            self.occluded.insert(id);
        } else {
            self.occluded.remove(&id);
        }
    }

    pub fn is_occluded(&self, id: NodeId) -> bool {
        self.occluded.contains(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.boxes.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Rect<T>)> {
        self.boxes.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> LayoutMap<U> {
        LayoutMap {
            boxes: self.boxes.iter().map(|(k, v)| (*k, v.cast())).collect(),
            occluded: self.occluded.clone(),
        }
    }
}

/// Ground-truth layout: every body and the gripper. Objects inside a closed
/// container are flagged occluded and get the container's interior box.
pub fn extract_layout(w: &WorldState) -> LayoutMap<f64> {
    let mut l = LayoutMap::new();
    for b in &w.objects {
        let hidden_in = w
            .objects
            .iter()
            .find(|c| c.is_container && !c.is_accessible() && w.is_inside(b, c));
        match hidden_in {
            Some(c) => {
                l.insert(b.id, w.interior(c).expect("container interior"));
                l.set_occluded(b.id, true);
            }
            None => l.insert(b.id, b.rect()),
        }
    }
    l.insert(w.gripper.id, w.gripper.rect());
    l
}

/// Nodes whose boxes may change in a step: the subject, the gripper when it
/// carries the subject, and the contents of a toggled container.
pub fn moved_set(g_k: &SceneGraph, g_next: &SceneGraph, effect: Option<&StepEffect>) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let Some(effect) = effect else { return out };
    let subject = effect.subject();
    out.insert(subject);
    if let Some(g) = g_next.gripper() {
        if g_next.is_grasped(subject) {
            out.insert(g);
        }
    }
    if let StepEffect::Toggle { node, .. } = effect {
        out.extend(
            g_k.in_edges(*node)
                .filter(|e| e.relation == Relation::In)
                .map(|e| e.src),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::catalog::{Kind, SceneBuilder};

    #[test]
    fn extract_reads_sprite_boxes() {
        let mut b = SceneBuilder::new(640, 360);
        let a = b.add("red_block", Kind::Block, 100.0);
        let w = b.build();
        let l = extract_layout(&w);
        assert_eq!(l.get(a), Some(&Rect::new(100.0, 260.0, 40.0, 40.0)));
        assert_eq!(l.len(), 3);
        assert!(!l.is_occluded(a));
    }

    #[test]
    fn closed_drawer_hides_contents() {
        let mut b = SceneBuilder::new(640, 360);
        let d = b.add_drawer("drawer", 20.0, 160.0);
        let a = b.add("red_block", Kind::Block, 400.0);
        let mut w = b.build();
        let floor = w.floor_y(w.body(d).unwrap());
        let body = w.body_mut(a).unwrap();
        body.x = 60.0;
        body.y = floor - 40.0;
        let l = extract_layout(&w);
        assert!(l.is_occluded(a));
        assert_eq!(l.get(a), Some(&Rect::new(24.0, 240.0, 122.0, 54.0)));
    }

    #[test]
    fn layout_json_round_trip() {
        let mut l: LayoutMap<f64> = LayoutMap::new();
        l.insert(NodeId(3), Rect::new(1.0, 2.0, 3.0, 4.0));
        l.insert(NodeId(1), Rect::new(5.0, 6.0, 7.0, 8.0));
        l.set_occluded(NodeId(3), true);
        let s = serde_json::to_string(&l).unwrap();
        assert!(s.starts_with("[{\"id\":1"));
        let back: LayoutMap<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }
}
