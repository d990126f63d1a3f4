use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::geom::Rect;
use crate::graph::{step_change, GraphError, NodeId, Relation, SceneGraph, StepEffect};
use crate::scalar::Scalar;

use super::ols::{lstsq, OlsError};
use super::{moved_set, LayoutMap};

/// Fewest training examples a model may be fitted from.
pub const MIN_EXAMPLES: usize = 20;

const FEATURES: usize = 6;

/// Which linear model handles a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKey {
    /// An edge to a target appears (Added or Relabeled); anchored on the target.
    Attach { relation: Relation, gripper: bool },
    /// An edge disappears; anchored on the subject's own box.
    Detach { relation: Relation, gripper: bool },
    /// A container's accessibility flips; anchored on the container's box.
    Toggle { open: bool },
    /// Gripper box from the box of the object it carries.
    GripperOffset,
}

impl std::fmt::Display for ModelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let who = |g: &bool| if *g { "gripper" } else { "object" };
        match self {
            ModelKey::Attach { relation, gripper } => write!(f, "attach-{relation}-{}", who(gripper)),
            ModelKey::Detach { relation, gripper } => write!(f, "detach-{relation}-{}", who(gripper)),
            ModelKey::Toggle { open } => write!(f, "toggle-{}", if *open { "open" } else { "closed" }),
            ModelKey::GripperOffset => f.write_str("gripper-offset"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("model {key} has {count} examples, needs at least {min}")]
    InsufficientData { key: String, count: usize, min: usize },
    #[error("no model for {0}")]
    NoModelForRelation(String),
    #[error("layout has no box for {0}")]
    MissingBox(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("least squares failed for {key}: {source}")]
    Fit { key: String, source: OlsError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub examples: usize,
    pub rank: usize,
    /// Root-mean-square training residual per output (x, y, w, h).
    pub rmse: [f64; 4],
    pub max_abs_residual: f64,
}

/// Affine map from `[anchor x, y, w, h, subject w, h]` to a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct RelationModel<T: Scalar> {
    /// One row per output (x, y, w, h), one column per feature.
    pub weights: Vec<Vec<T>>,
    pub intercept: Vec<T>,
    pub stats: ModelStats,
}

impl<T: Scalar> RelationModel<T> {
    pub fn apply(&self, features: &[T; FEATURES]) -> Rect<T> {
        let out: Vec<T> = (0..4)
            .map(|o| {
                self.weights[o]
                    .iter()
                    .zip(features)
                    .fold(self.intercept[o], |s, (w, x)| s + *w * *x)
            })
            .collect();
        Rect::new(out[0], out[1], out[2], out[3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
struct ModelDoc<T: Scalar> {
    key: ModelKey,
    #[serde(flatten)]
    model: RelationModel<T>,
}

/// Set of fitted models plus the frame their outputs are clamped to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Predictor<T: Scalar> {
    pub frame: (u32, u32),
    #[serde(with = "model_list")]
    pub models: BTreeMap<ModelKey, RelationModel<T>>,
    pub training_digest: String,
}

mod model_list {
    use super::*;

    pub fn serialize<S, T>(m: &BTreeMap<ModelKey, RelationModel<T>>, s: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
        T: Scalar + Serialize + serde::de::DeserializeOwned,
    {
        let docs: Vec<ModelDoc<T>> =
            m.iter().map(|(k, v)| ModelDoc { key: *k, model: v.clone() }).collect();
        docs.serialize(s)
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<BTreeMap<ModelKey, RelationModel<T>>, D::Error>
    where
        D: serde::Deserializer<'de>,
        T: Scalar + Serialize + serde::de::DeserializeOwned,
    {
        let docs: Vec<ModelDoc<T>> = Vec::deserialize(d)?;
        Ok(docs.into_iter().map(|d| (d.key, d.model)).collect())
    }
}

/// One recorded transition with layouts before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionExample<T: Scalar> {
    pub g_k: SceneGraph,
    pub g_next: SceneGraph,
    pub l_k: LayoutMap<T>,
    pub l_next: LayoutMap<T>,
}

fn features<T: Scalar>(anchor: &Rect<T>, subject: &Rect<T>) -> [T; FEATURES] {
    [anchor.x, anchor.y, anchor.w, anchor.h, subject.w, subject.h]
}

fn get<T: Scalar>(l: &LayoutMap<T>, id: NodeId) -> Result<Rect<T>, PredictorError> {
    l.get(id).copied().ok_or(PredictorError::MissingBox(id))
}

/// Model key, anchor node and subject node for a step.
fn route(g_k: &SceneGraph, effect: &StepEffect) -> (ModelKey, NodeId, NodeId) {
    let is_gripper = |id: NodeId| g_k.node(id).is_some_and(|n| n.is_gripper);
    match effect {
        StepEffect::Delta(d) => match d.after {
            Some(after) => (
                ModelKey::Attach { relation: after.relation, gripper: is_gripper(after.src) },
                after.dst,
                after.src,
            ),
            None => {
                let before = d.before.expect("delta carries an edge");
                (
                    ModelKey::Detach { relation: before.relation, gripper: is_gripper(before.src) },
                    before.src,
                    before.src,
                )
            }
        },
        StepEffect::Toggle { node, accessible } => (ModelKey::Toggle { open: *accessible }, *node, *node),
    }
}

type Sample<T> = (ModelKey, [T; FEATURES], [T; 4]);

fn samples<T: Scalar>(ex: &TransitionExample<T>) -> Result<Vec<Sample<T>>, PredictorError> {
    let Some(effect) = step_change(&ex.g_k, &ex.g_next)? else { return Ok(Vec::new()) };
    let (key, anchor, subject) = route(&ex.g_k, &effect);
    let before = get(&ex.l_k, subject)?;
    let after = get(&ex.l_next, subject)?;
    let mut out = vec![(key, features(&get(&ex.l_k, anchor)?, &before), [after.x, after.y, after.w, after.h])];
    if let Some(g) = ex.g_next.gripper() {
        if subject != g && ex.g_next.is_grasped(subject) {
            let gb = get(&ex.l_k, g)?;
            let ga = get(&ex.l_next, g)?;
            out.push((ModelKey::GripperOffset, features(&after, &gb), [ga.x, ga.y, ga.w, ga.h]));
        }
    }
    Ok(out)
}

/// Fits one least-squares model per key present in the examples.
pub fn fit<T: Scalar>(examples: &[TransitionExample<T>], frame: (u32, u32)) -> Result<Predictor<T>, PredictorError> {
    let mut grouped: BTreeMap<ModelKey, Vec<([T; FEATURES], [T; 4])>> = BTreeMap::new();
    for ex in examples {
        for (k, f, t) in samples(ex)? {
            grouped.entry(k).or_default().push((f, t));
        }
    }
    if grouped.is_empty() {
        return Err(PredictorError::InsufficientData { key: "any".into(), count: 0, min: MIN_EXAMPLES });
    }

    let mut hasher = Sha256::new();
    let mut models = BTreeMap::new();
    for (key, rows) in grouped {
        if rows.len() < MIN_EXAMPLES {
            return Err(PredictorError::InsufficientData {
                key: key.to_string(),
                count: rows.len(),
                min: MIN_EXAMPLES,
            });
        }
        hasher.update(key.to_string().as_bytes());
        for (f, t) in &rows {
            for v in f.iter().chain(t.iter()) {
                hasher.update(v.as_f64().to_le_bytes());
            }
        }
        let a: Vec<Vec<T>> = rows
            .iter()
            .map(|(f, _)| f.iter().copied().chain(std::iter::once(T::one())).collect())
            .collect();
        let b: Vec<Vec<T>> = rows.iter().map(|(_, t)| t.to_vec()).collect();
        let sol = lstsq(&a, &b).map_err(|source| PredictorError::Fit { key: key.to_string(), source })?;
        let weights: Vec<Vec<T>> = (0..4).map(|o| (0..FEATURES).map(|j| sol.coef[j][o]).collect()).collect();
        let intercept: Vec<T> = (0..4).map(|o| sol.coef[FEATURES][o]).collect();
        let mut model = RelationModel {
            weights,
            intercept,
            stats: ModelStats { examples: rows.len(), rank: sol.rank, rmse: [0.0; 4], max_abs_residual: 0.0 },
        };
        let mut sq = [0.0f64; 4];
        let mut worst = 0.0f64;
        for (f, t) in &rows {
            let p = model.apply(f);
            for (o, (pv, tv)) in [p.x, p.y, p.w, p.h].iter().zip(t).enumerate() {
                let r = (*pv - *tv).as_f64();
                sq[o] += r * r;
                worst = worst.max(r.abs());
            }
        }
        let n = rows.len() as f64;
        model.stats.rmse = sq.map(|s| (s / n).sqrt());
        model.stats.max_abs_residual = worst;
        models.insert(key, model);
    }
    Ok(Predictor { frame, models, training_digest: hex::encode(hasher.finalize()) })
}

impl<T: Scalar> Predictor<T> {
    fn model(&self, key: ModelKey) -> Result<&RelationModel<T>, PredictorError> {
        self.models.get(&key).ok_or_else(|| PredictorError::NoModelForRelation(key.to_string()))
    }

    fn clamp(&self, r: Rect<T>) -> Rect<T> {
        r.clamp_to_frame(T::lit(self.frame.0 as f64), T::lit(self.frame.1 as f64))
    }

    /// Next layout for the transition `g_k -> g_next`. Boxes outside the
    /// moved set are copied unchanged.
    pub fn predict(
        &self,
        g_k: &SceneGraph,
        l_k: &LayoutMap<T>,
        g_next: &SceneGraph,
    ) -> Result<LayoutMap<T>, PredictorError> {
        for id in g_k.node_ids() {
            get(l_k, id)?;
        }
        let Some(effect) = step_change(g_k, g_next)? else { return Ok(l_k.clone()) };
        let (key, anchor, subject) = route(g_k, &effect);
        let before = get(l_k, subject)?;
        let predicted = self.clamp(self.model(key)?.apply(&features(&get(l_k, anchor)?, &before)));

        let mut out = l_k.clone();
        out.insert(subject, predicted);
        let moved = moved_set(g_k, g_next, Some(&effect));
        if let Some(g) = g_next.gripper() {
            if subject != g && moved.contains(&g) {
                let gb = get(l_k, g)?;
                let gbox = self.model(ModelKey::GripperOffset)?.apply(&features(&predicted, &gb));
                out.insert(g, self.clamp(gbox));
            }
        }
        if let StepEffect::Toggle { accessible, .. } = effect {
            out.set_occluded(subject, false);
            let (dx, dy) = (predicted.x - before.x, predicted.y - before.y);
            for id in moved.iter().filter(|id| **id != subject && Some(**id) != g_next.gripper()) {
                let r = get(l_k, *id)?;
                out.insert(*id, self.clamp(r.translated(dx, dy)));
                out.set_occluded(*id, !accessible);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeDelta, ObjectNode};

    fn graph() -> SceneGraph {
        let mut g = SceneGraph::with_nodes([
            ObjectNode::gripper(0),
            ObjectNode::surface(1, "table"),
            ObjectNode::object(2, "a"),
            ObjectNode::object(3, "b"),
        ])
        .unwrap();
        g.insert_edge(Edge::ids(2, Relation::On, 1));
        g.insert_edge(Edge::ids(3, Relation::On, 1));
        g.insert_edge(Edge::ids(0, Relation::Grasp, 2));
        g.insert_edge(Edge::ids(2, Relation::Above, 3));
        g
    }

    /// Subject always lands centered on the target's top.
    fn centered_examples(n: usize) -> Vec<TransitionExample<f64>> {
        let g_k = {
            let mut g = graph();
            g.remove_edge(&Edge::ids(2, Relation::On, 1));
            g
        };
        let d = EdgeDelta::relabeled(Edge::ids(2, Relation::Above, 3), Edge::ids(2, Relation::On, 3)).unwrap();
        let g_next = crate::graph::apply_delta(&g_k, &d).unwrap();
        (0..n)
            .map(|i| {
                let bx = 50.0 + 17.0 * i as f64;
                let bw = 30.0 + (i % 5) as f64 * 4.0;
                let bh = 20.0 + (i % 3) as f64 * 6.0;
                let target = Rect::new(bx, 300.0 - bh, bw, bh);
                let sub = Rect::new(10.0 + i as f64, 100.0, 40.0, 40.0);
                let placed = Rect::new(bx + bw / 2.0 - 20.0, 300.0 - bh - 40.0, 40.0, 40.0);
                let grip_k = Rect::new(sub.x + 5.0, 80.0, 30.0, 20.0);
                let grip_n = Rect::new(placed.x + 5.0, placed.y - 20.0, 30.0, 20.0);
                let mut l_k = LayoutMap::new();
                let mut l_n = LayoutMap::new();
                for (id, r) in [(1, Rect::new(0.0, 300.0, 640.0, 60.0)), (3, target)] {
                    l_k.insert(NodeId(id), r);
                    l_n.insert(NodeId(id), r);
                }
                l_k.insert(NodeId(2), sub);
                l_n.insert(NodeId(2), placed);
                l_k.insert(NodeId(0), grip_k);
                l_n.insert(NodeId(0), grip_n);
                TransitionExample { g_k: g_k.clone(), g_next: g_next.clone(), l_k, l_next: l_n }
            })
            .collect()
    }

    #[test]
    fn exact_data_fits_with_zero_residual() {
        let ex = centered_examples(25);
        let p = fit(&ex, (640, 360)).unwrap();
        let on = &p.models[&ModelKey::Attach { relation: Relation::On, gripper: false }];
        assert!(on.stats.max_abs_residual < 1e-9, "{:?}", on.stats);
        // x depends on target x with unit weight and on target width by one half
        assert!((on.weights[0][0] - 1.0).abs() < 1e-9);
        assert!((on.weights[0][2] - 0.5).abs() < 1e-9);
        let pred = p.predict(&ex[3].g_k, &ex[3].l_k, &ex[3].g_next).unwrap();
        let want = ex[3].l_next.get(NodeId(2)).unwrap();
        assert!(pred.get(NodeId(2)).unwrap().iou(want) > 0.999);
        assert_eq!(pred.get(NodeId(3)), ex[3].l_k.get(NodeId(3)));
    }

    #[test]
    fn too_few_examples_are_refused() {
        assert!(matches!(fit::<f64>(&[], (640, 360)), Err(PredictorError::InsufficientData { .. })));
        let ex = centered_examples(MIN_EXAMPLES - 1);
        assert!(matches!(fit(&ex, (640, 360)), Err(PredictorError::InsufficientData { .. })));
    }

    #[test]
    fn identity_transition_copies_layout() {
        let ex = centered_examples(25);
        let p = fit(&ex, (640, 360)).unwrap();
        let same = p.predict(&ex[0].g_k, &ex[0].l_k, &ex[0].g_k).unwrap();
        assert_eq!(same, ex[0].l_k);
    }

    #[test]
    fn unknown_relation_has_no_model() {
        let ex = centered_examples(25);
        let p = fit(&ex, (640, 360)).unwrap();
        let g = &ex[0].g_k;
        let g_next = crate::graph::apply_delta(g, &EdgeDelta::removed(Edge::ids(3, Relation::On, 1))).unwrap();
        assert!(matches!(p.predict(g, &ex[0].l_k, &g_next), Err(PredictorError::NoModelForRelation(_))));
    }

    #[test]
    fn predictor_json_round_trip() {
        let p = fit(&centered_examples(25), (640, 360)).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: Predictor<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
