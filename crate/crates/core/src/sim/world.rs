//! Ground-truth side-view kinematic scene and its stepping rule.

use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::graph::NodeId;
use crate::BoundingBox;

use super::catalog::{BASE_WIDTH, CONTAINER_FLOOR, CONTAINER_WALL};
use super::{Action, Grip, SimParams};

/// Vertical slack used when deciding contact in the simulator itself.
pub(crate) const CONTACT_SLACK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    /// Filled rectangle.
    Rect,
    /// Filled ellipse inscribed in the box (fruit, vegetables).
    Ellipse,
    /// Open-topped container: side walls and a floor.
    Tray,
    /// Sliding drawer: a tray when open, a solid front panel when closed.
    Drawer,
    /// Striped cooking surface.
    Grill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sprite {
    pub shape: Shape,
    pub color: [u8; 3],
}

/// Horizontal rail for sliding containers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slide {
    pub closed_x: f64,
    pub open_x: f64,
}

impl Slide {
    fn bounds(&self) -> (f64, f64) {
        (self.closed_x.min(self.open_x), self.closed_x.max(self.open_x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: NodeId,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub sprite: Sprite,
    #[serde(default)]
    pub is_container: bool,
    #[serde(default)]
    pub is_static: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessible: Option<bool>,
    #[serde(default)]
    pub attached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide: Option<Slide>,
}

impl Body {
    pub fn rect(&self) -> BoundingBox {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn top(&self) -> f64 {
        self.y
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + self.w / 2.0
    }

    /// Region an item must lie in to count as contained.
    pub fn interior(&self, wall: f64, floor: f64) -> Option<BoundingBox> {
        self.is_container
            .then(|| Rect::new(self.x + wall, self.y, self.w - 2.0 * wall, self.h - floor))
    }

    pub fn is_accessible(&self) -> bool {
        self.is_container && self.accessible.unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub closed: bool,
    /// Offset of the held body's corner relative to the gripper corner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_offset: Option<(f64, f64)>,
}

impl Gripper {
    pub fn rect(&self) -> BoundingBox {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + self.w / 2.0
    }
}

/// Full ground-truth scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub width: u32,
    pub height: u32,
    /// Sorted by id.
    pub objects: Vec<Body>,
    pub gripper: Gripper,
}

impl WorldState {
    pub fn body(&self, id: NodeId) -> Option<&Body> {
        self.objects.iter().find(|b| b.id == id)
    }

    pub fn body_mut(&mut self, id: NodeId) -> Option<&mut Body> {
        self.objects.iter_mut().find(|b| b.id == id)
    }

    pub fn body_by_label(&self, label: &str) -> Option<&Body> {
        self.objects.iter().find(|b| b.label == label)
    }

    pub fn attached(&self) -> Option<&Body> {
        self.objects.iter().find(|b| b.attached)
    }

    pub fn frame(&self) -> (f64, f64) {
        (self.width as f64, self.height as f64)
    }

    /// Size factor relative to the reference 640-pixel-wide frame.
    pub fn scale(&self) -> f64 {
        self.width as f64 / BASE_WIDTH
    }

    /// Container side-wall thickness.
    pub fn wall(&self) -> f64 {
        CONTAINER_WALL * self.scale()
    }

    /// Container floor thickness.
    pub fn floor(&self) -> f64 {
        CONTAINER_FLOOR * self.scale()
    }

    pub fn interior(&self, b: &Body) -> Option<BoundingBox> {
        b.interior(self.wall(), self.floor())
    }

    pub fn floor_y(&self, b: &Body) -> f64 {
        b.bottom() - self.floor()
    }

    /// True when `inner` sits inside container `outer`'s interior.
    pub fn is_inside(&self, inner: &Body, outer: &Body) -> bool {
        inner.id != outer.id
            && self
                .interior(outer)
                .is_some_and(|r| r.contains_rect(&inner.rect(), CONTACT_SLACK))
    }

    pub fn contents_of(&self, container: NodeId) -> Vec<NodeId> {
        let Some(c) = self.body(container) else { return Vec::new() };
        self.objects
            .iter()
            .filter(|b| !b.attached && self.is_inside(b, c))
            .map(|b| b.id)
            .collect()
    }

    /// Keeps drawer accessibility in sync with the rail position.
    fn refresh_accessibility(&mut self) {
        for b in &mut self.objects {
            if let Some(s) = b.slide {
                b.accessible = Some((b.x - s.open_x).abs() <= CONTACT_SLACK);
            }
        }
    }

    /// Topmost clear, movable body the gripper can close on.
    fn grasp_candidate(&self, params: &SimParams) -> Option<NodeId> {
        let g = &self.gripper;
        let cx = g.center_x();
        self.objects
            .iter()
            .filter(|b| !b.is_static && !b.attached)
            .filter(|b| cx >= b.x && cx <= b.x + b.w)
            .filter(|b| (b.top() - g.bottom()).abs() <= params.grasp_range)
            .filter(|b| self.is_clear(b))
            .min_by(|a, b| a.top().total_cmp(&b.top()).then(a.id.cmp(&b.id)))
            .map(|b| b.id)
    }

    /// Nothing rests on top of `b` (contents of a container do not count).
    pub fn is_clear(&self, b: &Body) -> bool {
        !self.objects.iter().any(|o| {
            o.id != b.id
                && !o.attached
                && (o.bottom() - b.top()).abs() <= CONTACT_SLACK
                && o.rect().horizontal_overlap(&b.rect()) > 0.0
                && !self.is_inside(o, b)
        })
    }

    /// Drops a released body straight down onto the first thing below it.
    fn settle(&mut self, id: NodeId) {
        let Some(body) = self.body(id).cloned() else { return };
        if body.slide.is_some() || body.is_static {
            return;
        }
        let rect = body.rect();

        // Accessible containers whose opening the body fits through.
        let container = self
            .objects
            .iter()
            .filter(|c| c.id != id && c.is_accessible())
            .filter(|c| {
                let inner = self.interior(c).unwrap();
                rect.x >= inner.x - CONTACT_SLACK
                    && rect.right() <= inner.right() + CONTACT_SLACK
                    && body.bottom() <= self.floor_y(c) + CONTACT_SLACK
            })
            .min_by(|a, b| self.floor_y(a).total_cmp(&self.floor_y(b)))
            .map(|c| (c.id, self.floor_y(c)));

        let landing = if let Some((cid, floor)) = container {
            // Items inside the same container sit side by side in depth.
            let cbody = self.body(cid).unwrap().clone();
            let blocker = self
                .objects
                .iter()
                .filter(|o| o.id != id && o.id != cid && !o.attached)
                .filter(|o| !self.is_inside(o, &cbody))
                .filter(|o| o.rect().horizontal_overlap(&rect) > 0.0)
                .filter(|o| o.top() >= body.bottom() - CONTACT_SLACK && o.top() < floor)
                .map(|o| o.top())
                .fold(f64::INFINITY, f64::min);
            floor.min(blocker)
        } else {
            self.objects
                .iter()
                .filter(|o| o.id != id && !o.attached)
                .filter(|o| o.rect().horizontal_overlap(&rect) > 0.0)
                .filter(|o| o.top() >= body.bottom() - CONTACT_SLACK)
                .map(|o| o.top())
                .fold(self.height as f64, f64::min)
        };
        if let Some(b) = self.body_mut(id) {
            b.y = landing - b.h;
        }
    }
}

/// Advances the world by one action. Infeasible motion is clamped.
pub fn step(w: &WorldState, a: &Action, params: &SimParams) -> WorldState {
    let mut next = w.clone();
    let cap = params.max_step;
    let mut dx = a.dx.clamp(-cap, cap);
    let mut dy = a.dy.clamp(-cap, cap);
    if !dx.is_finite() {
        dx = 0.0;
    }
    if !dy.is_finite() {
        dy = 0.0;
    }
    let (fw, fh) = next.frame();

    if dx != 0.0 || dy != 0.0 {
        let g = next.gripper.clone();
        // Feasible gripper translation range inside the frame.
        let mut lo_x = -g.x;
        let mut hi_x = fw - g.x - g.w;
        let mut lo_y = -g.y;
        let mut hi_y = fh - g.y - g.h;
        let held = next.attached().cloned();
        if let Some(b) = &held {
            if let Some(s) = b.slide {
                let (min_x, max_x) = s.bounds();
                lo_x = lo_x.max(min_x - b.x);
                hi_x = hi_x.min(max_x - b.x);
                lo_y = 0.0;
                hi_y = 0.0;
            } else {
                lo_x = lo_x.max(-b.x);
                hi_x = hi_x.min(fw - b.x - b.w);
                lo_y = lo_y.max(-b.y);
                hi_y = hi_y.min(fh - b.y - b.h);
            }
        }
        let mx = dx.clamp(lo_x.min(0.0), hi_x.max(0.0));
        let my = dy.clamp(lo_y.min(0.0), hi_y.max(0.0));
        next.gripper.x += mx;
        next.gripper.y += my;
        if let Some(b) = held {
            let riders = if b.slide.is_some() { next.contents_of(b.id) } else { Vec::new() };
            if let Some(hb) = next.body_mut(b.id) {
                hb.x += mx;
                hb.y += my;
            }
            for r in riders {
                if let Some(rb) = next.body_mut(r) {
                    rb.x += mx;
                    rb.y += my;
                }
            }
        }
    }

    match a.grip {
        Grip::Hold => {}
        Grip::Close => {
            if next.attached().is_none() {
                if let Some(id) = next.grasp_candidate(params) {
                    let (gx, gy) = (next.gripper.x, next.gripper.y);
                    let b = next.body_mut(id).unwrap();
                    b.attached = true;
                    let off = (b.x - gx, b.y - gy);
                    next.gripper.hold_offset = Some(off);
                }
            }
            next.gripper.closed = true;
        }
        Grip::Open => {
            next.gripper.closed = false;
            next.gripper.hold_offset = None;
            if let Some(id) = next.attached().map(|b| b.id) {
                next.body_mut(id).unwrap().attached = false;
                next.settle(id);
            }
        }
    }
    next.refresh_accessibility();
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::testing::two_block_world;

    #[test]
    fn zero_action_is_identity() {
        let p = SimParams::default();
        let w = two_block_world();
        assert_eq!(step(&w, &Action::hold(), &p), w);
    }

    #[test]
    fn motion_is_capped() {
        let p = SimParams::default();
        let w = two_block_world();
        let n = step(&w, &Action::new(100.0, -3.0, Grip::Hold), &p);
        assert_eq!(n.gripper.x, w.gripper.x + p.max_step);
        assert_eq!(n.gripper.y, w.gripper.y - 3.0);
    }

    #[test]
    fn close_far_from_objects_attaches_nothing() {
        let p = SimParams::default();
        let w = two_block_world();
        let n = step(&w, &Action::new(0.0, 0.0, Grip::Close), &p);
        assert!(n.gripper.closed);
        assert!(n.attached().is_none());
    }

    #[test]
    fn release_over_gap_settles_on_table() {
        let p = SimParams::default();
        let mut w = two_block_world();
        // hold block a in mid air over empty table
        let table_top = w.body_by_label("table").unwrap().top();
        let a = w.body_by_label("a").unwrap().id;
        {
            let b = w.body_mut(a).unwrap();
            b.x = 500.0;
            b.y = 100.0;
            b.attached = true;
        }
        w.gripper.x = 505.0;
        w.gripper.y = 80.0;
        w.gripper.closed = true;
        let n = step(&w, &Action::new(0.0, 0.0, Grip::Open), &p);
        let b = n.body(a).unwrap();
        assert!(!b.attached);
        assert_eq!(b.y, table_top - b.h);
    }

    #[test]
    fn grasp_then_carry() {
        let p = SimParams::default();
        let mut w = two_block_world();
        let a = w.body_by_label("a").unwrap().clone();
        w.gripper.x = a.center_x() - w.gripper.w / 2.0;
        w.gripper.y = a.top() - w.gripper.h;
        let n = step(&w, &Action::new(0.0, 0.0, Grip::Close), &p);
        assert!(n.body(a.id).unwrap().attached);
        let n = step(&n, &Action::new(0.0, -10.0, Grip::Hold), &p);
        assert_eq!(n.body(a.id).unwrap().y, a.y - 10.0);
    }
}
