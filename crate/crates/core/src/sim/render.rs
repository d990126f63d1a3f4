use crate::geom::PixelRect;
use crate::graph::NodeId;
use crate::image::{FrameMask, Image, Mask};

use super::catalog::{GRIPPER_CLOSED_COLOR, GRIPPER_OPEN_COLOR};
use super::{Body, Shape, WorldState};

pub const BACKGROUND: [u8; 3] = [225, 232, 240];

/// A raster plus the per-pixel owner of every drawn pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Image,
    /// 0 for background, otherwise node id + 1.
    pub ids: Vec<u32>,
    /// Node ids in the order they were painted.
    pub order: Vec<NodeId>,
}

impl Rendered {
    pub fn owner(&self, x: u32, y: u32) -> Option<NodeId> {
        match self.ids[(y * self.image.width + x) as usize] {
            0 => None,
            v => Some(NodeId(v - 1)),
        }
    }

    /// Visible pixels of `id` as a frame-sized mask.
    pub fn frame_mask(&self, id: NodeId) -> FrameMask {
        let mut m = FrameMask::new(self.image.width, self.image.height);
        let tag = id.0 + 1;
        for (i, v) in self.ids.iter().enumerate() {
            if *v == tag {
                m.bits[i] = true;
            }
        }
        m
    }

    /// Visible pixels of `id` inside the box `r`.
    pub fn mask_in(&self, id: NodeId, r: PixelRect) -> Mask {
        let mut m = Mask::new(r.w, r.h);
        let tag = id.0 + 1;
        for j in 0..r.h {
            for i in 0..r.w {
                let (x, y) = (r.x as i64 + i as i64, r.y as i64 + j as i64);
                if self.image.in_bounds(x, y) && self.ids[(y as u32 * self.image.width + x as u32) as usize] == tag {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    /// Paint depth of `id` (0 = painted first), if drawn.
    pub fn depth(&self, id: NodeId) -> Option<usize> {
        self.order.iter().position(|n| *n == id)
    }
}

fn draws_closed(b: &Body) -> bool {
    b.sprite.shape == Shape::Drawer && !b.is_accessible()
}

/// Paint order: static surfaces, open containers, loose objects by height,
/// the carried object, closed drawers (which hide their contents), gripper.
fn paint_rank(b: &Body) -> (u8, i64, u32) {
    let rank = if draws_closed(b) {
        4
    } else if b.attached {
        3
    } else if b.is_container {
        1
    } else if b.is_static {
        0
    } else {
        2
    };
    let key = if rank == 2 { (b.y * 1000.0).round() as i64 } else { 0 };
    (rank, key, b.id.0)
}

fn covers(b: &Body, px: i64, py: i64, wall: f64, floor: f64) -> bool {
    let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
    match b.sprite.shape {
        Shape::Rect | Shape::Grill => true,
        Shape::Ellipse => {
            let (rx, ry) = (b.w / 2.0, b.h / 2.0);
            let (cx, cy) = (b.x + rx, b.y + ry);
            let (u, v) = ((x - cx) / rx, (y - cy) / ry);
            u * u + v * v <= 1.0
        }
        Shape::Tray => x < b.x + wall || x > b.x + b.w - wall || y > b.y + b.h - floor,
        Shape::Drawer => {
            draws_closed(b) || x < b.x + wall || x > b.x + b.w - wall || y > b.y + b.h - floor
        }
    }
}

fn shade(b: &Body, px: i64, py: i64) -> [u8; 3] {
    let c = b.sprite.color;
    let darker = |c: [u8; 3]| c.map(|v| (v as u16 * 3 / 5) as u8);
    match b.sprite.shape {
        Shape::Grill if (px.div_euclid(8)) % 2 == 1 => darker(c),
        Shape::Drawer if draws_closed(b) => {
            // handle strip across the middle of the closed front
            let mid = (b.y + b.h / 2.0).round() as i64;
            if (py - mid).abs() <= 1 {
                darker(c)
            } else {
                c
            }
        }
        _ => c,
    }
}

fn paint(img: &mut Image, ids: &mut [u32], b: &Body, wall: f64, floor: f64) {
    let r = b.rect().to_pixels();
    for py in r.y as i64..r.y as i64 + r.h as i64 {
        for px in r.x as i64..r.x as i64 + r.w as i64 {
            if img.in_bounds(px, py) && covers(b, px, py, wall, floor) {
                img.put(px as u32, py as u32, shade(b, px, py));
                ids[(py as u32 * img.width + px as u32) as usize] = b.id.0 + 1;
            }
        }
    }
}

fn render_bodies(w: &WorldState, bodies: Vec<&Body>, with_gripper: bool) -> Rendered {
    let mut image = Image::new(w.width, w.height, BACKGROUND);
    let mut ids = vec![0u32; (w.width * w.height) as usize];
    let (wall, floor) = (w.wall(), w.floor());
    let mut sorted = bodies;
    sorted.sort_by_key(|b| paint_rank(b));
    let mut order = Vec::with_capacity(sorted.len() + 1);
    for b in sorted {
        paint(&mut image, &mut ids, b, wall, floor);
        order.push(b.id);
    }
    if with_gripper {
        let g = &w.gripper;
        let color = if g.closed { GRIPPER_CLOSED_COLOR } else { GRIPPER_OPEN_COLOR };
        let r = g.rect().to_pixels();
        for py in r.y as i64..r.y as i64 + r.h as i64 {
            for px in r.x as i64..r.x as i64 + r.w as i64 {
                if image.in_bounds(px, py) {
                    image.put(px as u32, py as u32, color);
                    ids[(py as u32 * image.width + px as u32) as usize] = g.id.0 + 1;
                }
            }
        }
        order.push(g.id);
    }
    Rendered { image, ids, order }
}

/// Full scene render with its owner buffer.
pub fn render_full(w: &WorldState) -> Rendered {
    render_bodies(w, w.objects.iter().collect(), true)
}

pub fn render(w: &WorldState) -> Image {
    render_full(w).image
}

/// Background plate: the scene with only its static furniture.
pub fn render_static(w: &WorldState) -> Rendered {
    render_bodies(w, w.objects.iter().filter(|b| b.is_static).collect(), false)
}
