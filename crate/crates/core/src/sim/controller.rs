use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::layout::LayoutMap;
use crate::BoundingBox;

use super::{Action, Grip, SimParams, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    /// Proportional gain on the box position error.
    pub gain: f64,
    /// Position error (L-infinity, px) counted as aligned.
    pub align_tol: f64,
    /// FIFO capacity used for the arrival test.
    pub buffer: usize,
    /// Arrival threshold on the buffered actions' spread.
    pub delta: f64,
    /// Steps allowed per phase before it is declared failed.
    pub phase_timeout: usize,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { gain: 1.0, align_tol: 0.5, buffer: 10, delta: 0.5, phase_timeout: 1000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("target box for {0} lies outside the frame")]
    UnreachableTarget(NodeId),
    #[error("target layout has no box for the gripper")]
    MissingGripperTarget,
}

fn inside_frame(r: &BoundingBox, w: &WorldState) -> bool {
    let (fw, fh) = w.frame();
    r.is_finite() && r.x >= -1e-6 && r.y >= -1e-6 && r.right() <= fw + 1e-6 && r.bottom() <= fh + 1e-6
}

/// Whether the target asks for a closed gripper: its bottom edge rests on
/// top of some object's target box.
fn wants_closed(w: &WorldState, target: &LayoutMap<f64>, gbox: &BoundingBox, sim: &SimParams) -> bool {
    target.iter().any(|(id, r)| {
        id != w.gripper.id
            && !target.is_occluded(id)
            && (gbox.bottom() - r.y).abs() <= sim.grasp_range / 2.0
            && gbox.horizontal_overlap(r) > 0.0
    })
}

/// One proportional step toward the target layout.
///
/// A carried object is steered to its own target box; otherwise the gripper
/// is steered to its box. Grip changes are issued once aligned. `closed` is
/// the gripper state the sub-goal shows; without it the state is inferred
/// from whether the gripper box rests on an object box.
pub fn controller(
    w: &WorldState,
    target: &LayoutMap<f64>,
    closed: Option<bool>,
    sim: &SimParams,
    cp: &ControllerParams,
) -> Result<Action, ControllerError> {
    let gbox = *target.get(w.gripper.id).ok_or(ControllerError::MissingGripperTarget)?;
    for (id, r) in target.iter() {
        if !target.is_occluded(id) && !inside_frame(r, w) {
            return Err(ControllerError::UnreachableTarget(id));
        }
    }
    let want_closed = closed.unwrap_or_else(|| wants_closed(w, target, &gbox, sim));
    let held = w.attached();

    if !want_closed && (held.is_some() || w.gripper.closed) {
        return Ok(Action::new(0.0, 0.0, Grip::Open));
    }

    let (ex, ey) = match held.and_then(|b| target.get(b.id).map(|t| (b, t))) {
        Some((b, t)) => (t.x - b.x, t.y - b.y),
        None => (gbox.x - w.gripper.x, gbox.y - w.gripper.y),
    };
    let cap = sim.max_step;
    let dx = (cp.gain * ex).clamp(-cap, cap);
    let dy = (cp.gain * ey).clamp(-cap, cap);
    let aligned = ex.abs().max(ey.abs()) <= cp.align_tol;
    if aligned && want_closed && !w.gripper.closed {
        return Ok(Action::new(dx, dy, Grip::Close));
    }
    Ok(Action::new(dx, dy, Grip::Hold))
}
