//! Object kinds, their sprites and sizes, and a builder for settled scenes.

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, ObjectNode};

use super::{Body, Gripper, Shape, Slide, Sprite, WorldState};

/// Reference frame the sizes below are expressed in.
pub const BASE_WIDTH: f64 = 640.0;
pub const BASE_HEIGHT: f64 = 360.0;
pub const TABLE_HEIGHT: f64 = 60.0;
pub const GRIPPER_SIZE: (f64, f64) = (30.0, 20.0);
pub const GRIPPER_HOME: (f64, f64) = (305.0, 20.0);
pub const CONTAINER_WALL: f64 = 4.0;
pub const CONTAINER_FLOOR: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Block,
    Apple,
    Orange,
    Banana,
    Corn,
    Pepper,
    Mushroom,
    Box,
    Grill,
    Pan,
    Drawer,
    Plate,
}

impl Kind {
    /// Width and height at the reference resolution.
    pub fn size(self) -> (f64, f64) {
        match self {
            Kind::Block => (40.0, 40.0),
            Kind::Apple => (36.0, 36.0),
            Kind::Orange => (34.0, 34.0),
            Kind::Banana => (48.0, 24.0),
            Kind::Corn => (44.0, 22.0),
            Kind::Pepper => (30.0, 30.0),
            Kind::Mushroom => (32.0, 28.0),
            Kind::Box => (150.0, 60.0),
            Kind::Grill => (120.0, 20.0),
            Kind::Pan => (110.0, 40.0),
            Kind::Drawer => (130.0, 60.0),
            Kind::Plate => (100.0, 10.0),
        }
    }

    pub fn shape(self) -> Shape {
        match self {
            Kind::Block | Kind::Plate => Shape::Rect,
            Kind::Apple | Kind::Orange | Kind::Banana | Kind::Corn | Kind::Pepper | Kind::Mushroom => {
                Shape::Ellipse
            }
            Kind::Box | Kind::Pan => Shape::Tray,
            Kind::Grill => Shape::Grill,
            Kind::Drawer => Shape::Drawer,
        }
    }

    pub fn is_container(self) -> bool {
        matches!(self, Kind::Box | Kind::Pan | Kind::Drawer)
    }

    pub fn is_static(self) -> bool {
        matches!(self, Kind::Box | Kind::Pan | Kind::Grill | Kind::Plate)
    }

    fn default_color(self) -> [u8; 3] {
        match self {
            Kind::Block => [128, 128, 128],
            Kind::Apple => [200, 30, 40],
            Kind::Orange => [245, 150, 20],
            Kind::Banana => [240, 220, 60],
            Kind::Corn => [250, 200, 70],
            Kind::Pepper => [40, 160, 60],
            Kind::Mushroom => [170, 130, 100],
            Kind::Box => [150, 110, 60],
            Kind::Grill => [60, 60, 65],
            Kind::Pan => [90, 90, 100],
            Kind::Drawer => [120, 80, 50],
            Kind::Plate => [230, 230, 240],
        }
    }
}

/// Color for a label, with block colors read from their name.
pub fn color_for(label: &str, kind: Kind) -> [u8; 3] {
    if kind == Kind::Block {
        let named = [
            ("red", [210, 40, 40]),
            ("green", [40, 170, 70]),
            ("blue", [40, 80, 210]),
            ("yellow", [230, 200, 30]),
            ("purple", [140, 60, 170]),
        ];
        for (name, c) in named {
            if label.starts_with(name) {
                return c;
            }
        }
    }
    kind.default_color()
}

pub const TABLE_COLOR: [u8; 3] = [160, 120, 80];
pub const GRIPPER_OPEN_COLOR: [u8; 3] = [70, 70, 70];
pub const GRIPPER_CLOSED_COLOR: [u8; 3] = [30, 30, 30];

/// Builds a settled scene: table (id 1), gripper (id 0), then objects in
/// insertion order. All sizes are scaled by `width / 640`.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    width: u32,
    height: u32,
    scale: f64,
    objects: Vec<Body>,
}

impl SceneBuilder {
    pub fn new(width: u32, height: u32) -> Self {
        let scale = width as f64 / BASE_WIDTH;
        let table_h = TABLE_HEIGHT * scale;
        let table = Body {
            id: NodeId(1),
            label: "table".into(),
            x: 0.0,
            y: height as f64 - table_h,
            w: width as f64,
            h: table_h,
            sprite: Sprite { shape: Shape::Rect, color: TABLE_COLOR },
            is_container: false,
            is_static: true,
            accessible: None,
            attached: false,
            slide: None,
        };
        Self { width, height, scale, objects: vec![table] }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn table_top(&self) -> f64 {
        self.objects[0].y
    }

    fn next_id(&self) -> NodeId {
        NodeId(self.objects.len() as u32 + 1)
    }

    /// Adds an object resting on the table with its left edge at `x`
    /// (given at the reference resolution).
    pub fn add(&mut self, label: &str, kind: Kind, x: f64) -> NodeId {
        let (w, h) = kind.size();
        let (w, h) = (w * self.scale, h * self.scale);
        let id = self.next_id();
        self.objects.push(Body {
            id,
            label: label.to_string(),
            x: x * self.scale,
            y: self.table_top() - h,
            w,
            h,
            sprite: Sprite { shape: kind.shape(), color: color_for(label, kind) },
            is_container: kind.is_container(),
            is_static: kind.is_static(),
            accessible: kind.is_container().then_some(true),
            attached: false,
            slide: None,
        });
        id
    }

    /// Adds a closed drawer that slides between `closed_x` and `open_x`.
    pub fn add_drawer(&mut self, label: &str, closed_x: f64, open_x: f64) -> NodeId {
        let id = self.add(label, Kind::Drawer, closed_x);
        let s = self.scale;
        let b = self.objects.last_mut().unwrap();
        b.slide = Some(Slide { closed_x: closed_x * s, open_x: open_x * s });
        b.accessible = Some(false);
        id
    }

    /// Places `item` on top of the object `base` with left edges aligned.
    pub fn stack_on(&mut self, item: NodeId, base: NodeId) {
        let top = self.objects.iter().find(|b| b.id == base).expect("base exists").y;
        let bx = self.objects.iter().find(|b| b.id == base).unwrap().x;
        let b = self.objects.iter_mut().find(|b| b.id == item).expect("item exists");
        b.x = bx;
        b.y = top - b.h;
    }

    pub fn build(self) -> WorldState {
        let s = self.scale;
        WorldState {
            width: self.width,
            height: self.height,
            objects: self.objects,
            gripper: Gripper {
                id: NodeId(0),
                x: GRIPPER_HOME.0 * s,
                y: GRIPPER_HOME.1 * s,
                w: GRIPPER_SIZE.0 * s,
                h: GRIPPER_SIZE.1 * s,
                closed: false,
                hold_offset: None,
            },
        }
    }
}

/// Graph nodes (with flags) for every body of a world plus the gripper.
pub fn nodes_of(w: &WorldState) -> Vec<ObjectNode> {
    let mut out = vec![ObjectNode::gripper(w.gripper.id.0)];
    for b in &w.objects {
        out.push(ObjectNode {
            id: b.id,
            label: b.label.clone(),
            is_container: b.is_container,
            is_gripper: false,
            is_static: b.is_static,
            accessible: if b.is_container { Some(b.accessible.unwrap_or(false)) } else { None },
        });
    }
    out
}
