use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GoalPredicate, NodeId, Relation};
use crate::planner::{Ordering, TaskSpec};
use crate::sim::catalog::{Kind, SceneBuilder, BASE_WIDTH};
use crate::sim::WorldState;

/// Task families of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    SequentialStack,
    FlexiblePlace,
    HybridGrill,
    HybridDrawer,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::SequentialStack, Family::FlexiblePlace, Family::HybridGrill, Family::HybridDrawer];

    pub fn name(self) -> &'static str {
        match self {
            Family::SequentialStack => "SequentialStack",
            Family::FlexiblePlace => "FlexiblePlace",
            Family::HybridGrill => "HybridGrill",
            Family::HybridDrawer => "HybridDrawer",
        }
    }

    /// Distinct execution orders the family admits.
    pub fn order_count(self) -> u64 {
        match self {
            Family::HybridDrawer => 2,
            _ => 6,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown family {s}"))
    }
}

/// Seen tasks use the demonstrated order; unseen ones any other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Seen,
    Unseen,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Seen => "seen",
            Mode::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub family: Family,
    pub placement_seed: u64,
    /// 0 is the demonstrated order.
    pub order_seed: u64,
    pub width: u32,
    pub height: u32,
}

impl ScenarioConfig {
    pub fn new(family: Family, placement_seed: u64, order_seed: u64) -> Self {
        Self { family, placement_seed, order_seed, width: 640, height: 360 }
    }

    pub fn mode(&self) -> Mode {
        if self.order_seed % self.family.order_count() == 0 {
            Mode::Seen
        } else {
            Mode::Unseen
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("objects need {need:.0} px of table but only {have:.0} px are free")]
    PlacementInfeasible { need: f64, have: f64 },
    #[error("resolution {0}x{1} is not 16:9")]
    BadResolution(u32, u32),
}

/// Horizontal gap kept between objects so none start out NextTo another.
pub const PLACEMENT_GAP: f64 = 48.0;
const EDGE_MARGIN: f64 = 10.0;
/// Drawer rail at the reference resolution.
pub const DRAWER_CLOSED_X: f64 = 20.0;
pub const DRAWER_OPEN_X: f64 = 160.0;

/// Left edges for objects of the given widths inside `[lo, hi]`, in a random
/// left-to-right order, at least `PLACEMENT_GAP` apart.
fn place(rng: &mut ChaCha8Rng, widths: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>, ScenarioError> {
    let n = widths.len();
    let need = widths.iter().sum::<f64>() + PLACEMENT_GAP * n.saturating_sub(1) as f64;
    let have = hi - lo;
    if need > have {
        return Err(ScenarioError::PlacementInfeasible { need, have });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // split the slack into n + 1 random shares, whole pixels only
    let slack = (have - need).floor() as u64;
    let mut cuts: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut xs = vec![0.0; n];
    let mut x = lo;
    let mut prev = 0;
    for (k, i) in order.iter().enumerate() {
        x += (cuts[k] - prev) as f64;
        prev = cuts[k];
        xs[*i] = x;
        x += widths[*i] + PLACEMENT_GAP;
    }
    Ok(xs)
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn on(a: NodeId, b: NodeId) -> GoalPredicate {
    Edge::new(a, Relation::On, b).into()
}

fn into(a: NodeId, b: NodeId) -> GoalPredicate {
    Edge::new(a, Relation::In, b).into()
}

/// Settled start world and task for a scenario.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(WorldState, TaskSpec), ScenarioError> {
    if cfg.width * 9 != cfg.height * 16 {
        return Err(ScenarioError::BadResolution(cfg.width, cfg.height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.placement_seed);
    let mut b = SceneBuilder::new(cfg.width, cfg.height);
    let right = BASE_WIDTH - EDGE_MARGIN;
    let width = |k: Kind| k.size().0;
    let (goals, ordering, description, order_seed) = match cfg.family {
        Family::SequentialStack => {
            let kinds = [Kind::Block, Kind::Block, Kind::Block, Kind::Plate];
            let xs = place(&mut rng, &kinds.map(width), EDGE_MARGIN, right)?;
            let names = ["red_block", "green_block", "blue_block"];
            let ids: Vec<NodeId> = (0..3).map(|i| b.add(names[i], Kind::Block, xs[i])).collect();
            let plate = b.add("plate", Kind::Plate, xs[3]);
            let p = PERMS[(cfg.order_seed % 6) as usize];
            let (x, y, z) = (ids[p[0]], ids[p[1]], ids[p[2]]);
            let desc = format!("stack {}, {}, {} on the plate", names[p[0]], names[p[1]], names[p[2]]);
            (vec![vec![on(x, plate)], vec![on(y, x)], vec![on(z, y)]], Ordering::Sequential, desc, 0)
        }
        Family::FlexiblePlace => {
            let kinds = [Kind::Apple, Kind::Orange, Kind::Banana, Kind::Box];
            let xs = place(&mut rng, &kinds.map(width), EDGE_MARGIN, right)?;
            let ids: Vec<NodeId> =
                ["apple", "orange", "banana"].iter().zip(&kinds).zip(&xs).map(|((n, k), x)| b.add(n, *k, *x)).collect();
            let bx = b.add("box", Kind::Box, xs[3]);
            let goals = ids.iter().map(|f| vec![into(*f, bx)]).collect();
            (goals, Ordering::Flexible, "put every fruit in the box".to_string(), cfg.order_seed)
        }
        Family::HybridGrill => {
            let kinds = [Kind::Corn, Kind::Pepper, Kind::Mushroom, Kind::Grill, Kind::Pan];
            let xs = place(&mut rng, &kinds.map(width), EDGE_MARGIN, right)?;
            let ids: Vec<NodeId> = ["corn", "pepper", "mushroom"]
                .iter()
                .zip(&kinds)
                .zip(&xs)
                .map(|((n, k), x)| b.add(n, *k, *x))
                .collect();
            let grill = b.add("grill", Kind::Grill, xs[3]);
            let pan = b.add("pan", Kind::Pan, xs[4]);
            let mut goals = Vec::new();
            let mut before = Vec::new();
            for (i, v) in ids.iter().enumerate() {
                goals.push(vec![on(*v, grill)]);
                goals.push(vec![into(*v, pan)]);
                before.push((2 * i, 2 * i + 1));
            }
            let desc = "grill each vegetable, then move it to the pan".to_string();
            (goals, Ordering::Partial { before }, desc, cfg.order_seed)
        }
        Family::HybridDrawer => {
            let drawer = b.add_drawer("drawer", DRAWER_CLOSED_X, DRAWER_OPEN_X);
            let lo = DRAWER_OPEN_X + width(Kind::Drawer) + PLACEMENT_GAP + 2.0;
            let xs = place(&mut rng, &[width(Kind::Block); 2], lo, right)?;
            let ids: Vec<NodeId> =
                ["red_block", "blue_block"].iter().zip(&xs).map(|(n, x)| b.add(n, Kind::Block, *x)).collect();
            let goals = vec![
                vec![GoalPredicate::Accessible { node: drawer, accessible: true }],
                vec![into(ids[0], drawer)],
                vec![into(ids[1], drawer)],
                vec![GoalPredicate::Accessible { node: drawer, accessible: false }],
            ];
            let before = vec![(0, 1), (0, 2), (1, 3), (2, 3)];
            let desc = "open the drawer, put both blocks inside, close it".to_string();
            (goals, Ordering::Partial { before }, desc, cfg.order_seed)
        }
    };
    let task = TaskSpec { description, goals, ordering, order_seed };
    Ok((b.build(), task))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, GeomThresholds};
    use crate::planner::expand_flexible;

    #[test]
    fn same_seed_same_world() {
        let c = ScenarioConfig::new(Family::SequentialStack, 7, 0);
        assert_eq!(generate_scenario(&c).unwrap(), generate_scenario(&c).unwrap());
    }

    #[test]
    fn every_start_is_flat_and_free_of_neighbours() {
        for f in Family::ALL {
            for seed in 0..40 {
                let (w, _) = generate_scenario(&ScenarioConfig::new(f, seed, 0)).unwrap();
                let g = parse(&w, &GeomThresholds::default()).unwrap();
                let table = w.body_by_label("table").unwrap().id;
                for b in w.objects.iter().filter(|b| b.id != table) {
                    assert_eq!(g.support_of(b.id), Some(Edge::new(b.id, Relation::On, table)), "{f} {seed}");
                }
                assert!(g.edges().all(|e| e.relation == Relation::On), "{f} {seed}: {g}");
            }
        }
    }

    #[test]
    fn flexible_unseen_seeds_give_six_orders() {
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..6 {
            let (w, t) = generate_scenario(&ScenarioConfig::new(Family::FlexiblePlace, 3, s)).unwrap();
            let g = parse(&w, &GeomThresholds::default()).unwrap();
            seen.insert(expand_flexible(&t, &g, t.order_seed).unwrap());
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn drawer_is_opened_first_and_closed_last() {
        let (w, t) = generate_scenario(&ScenarioConfig::new(Family::HybridDrawer, 1, 1)).unwrap();
        let g = parse(&w, &GeomThresholds::default()).unwrap();
        let o = expand_flexible(&t, &g, 1).unwrap();
        assert_eq!((o[0], o[3]), (0, 3));
    }

    #[test]
    fn other_resolutions_scale() {
        let mut c = ScenarioConfig::new(Family::HybridGrill, 2, 0);
        c.width = 1280;
        c.height = 720;
        let (w, _) = generate_scenario(&c).unwrap();
        assert_eq!(w.body_by_label("grill").unwrap().w, 240.0);
        c.height = 700;
        assert!(generate_scenario(&c).is_err());
    }
}
