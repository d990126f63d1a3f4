//! Deterministic 2D side-view kinematic world with rendering, a
//! layout-following controller and the FIFO goal-achievement test.

mod buffer;
pub mod catalog;
mod controller;
pub mod episode;
mod render;
pub mod script;
mod world;

use serde::{Deserialize, Serialize};

pub use buffer::{first_trigger, ActionBuffer, BufferError};
pub use controller::{controller, ControllerError, ControllerParams};
pub use render::{render, render_full, render_static, Rendered, BACKGROUND};
pub use world::{step, Body, Gripper, Shape, Slide, Sprite, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grip {
    Open,
    Close,
    Hold,
}

/// One low-level command: gripper translation plus a grip change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub grip: Grip,
}

impl Action {
    pub fn new(dx: f64, dy: f64, grip: Grip) -> Self {
        Self { dx, dy, grip }
    }

    pub fn hold() -> Self {
        Self::new(0.0, 0.0, Grip::Hold)
    }
}

/// Geometry of the kinematic rules, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub max_step: f64,
    /// Vertical reach within which Close attaches an object.
    pub grasp_range: f64,
    /// Gap between gripper (or carried object) and target when hovering.
    pub hover_gap: f64,
    /// Bottom edge of a lifted object.
    pub travel_bottom: f64,
    /// Height the gripper backs off after releasing.
    pub release_lift: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            max_step: 10.0,
            grasp_range: 4.0,
            hover_gap: 20.0,
            travel_bottom: 100.0,
            release_lift: 8.0,
        }
    }
}

impl SimParams {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            max_step: self.max_step * s,
            grasp_range: self.grasp_range * s,
            hover_gap: self.hover_gap * s,
            travel_bottom: self.travel_bottom * s,
            release_lift: self.release_lift * s,
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::catalog::{Kind, SceneBuilder};
    use super::WorldState;

    /// Table with blocks "a" at x=100 and "b" at x=300.
    pub fn two_block_world() -> WorldState {
        let mut b = SceneBuilder::new(640, 360);
        b.add("a", Kind::Block, 100.0);
        b.add("b", Kind::Block, 300.0);
        b.build()
    }
}
