//! Sub-goal image synthesis: segment the moving objects, erase and inpaint
//! them, then paste library crops at their predicted boxes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{PixelRect, Rect};
use crate::graph::{step_change, GraphError, NodeId, SceneGraph};
use crate::image::{FrameMask, Image, Mask};
use crate::layout::{moved_set, LayoutMap};
use crate::library::{Library, LibraryEntry};
use crate::sim::Rendered;

/// Pixels added around every erased object.
pub const ERASE_DILATION: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("library has no entry labelled {0}")]
    EmptyLabelSubset(String),
    #[error("box of {0} has no area")]
    DegenerateBox(NodeId),
    #[error("mask is {mask:?} but its crop is {crop:?}")]
    MaskMismatch { crop: (u32, u32), mask: (u32, u32) },
    #[error("no background plate to inpaint from")]
    MissingBackgroundPlate,
    #[error("plate is {plate:?} but the frame is {frame:?}")]
    PlateSize { plate: (u32, u32), frame: (u32, u32) },
    #[error("layout has no box for {0}")]
    MissingBox(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Visible pixels of one object inside its box.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    pub rect: PixelRect,
    pub mask: Mask,
}

/// Masks of every visible object in `l`. Occluded objects are skipped.
pub fn segment(frame: &Rendered, l: &LayoutMap<f64>) -> BTreeMap<NodeId, ObjectMask> {
    l.iter()
        .filter(|(id, _)| !l.is_occluded(*id))
        .map(|(id, r)| {
            let rect = r.to_pixels();
            (id, ObjectMask { rect, mask: frame.mask_in(id, rect) })
        })
        .collect()
}

/// Objects redrawn for the step `g_k -> g_next`: the moved set without
/// static furniture.
pub fn target_set(g_k: &SceneGraph, g_next: &SceneGraph) -> Result<BTreeSet<NodeId>, EditError> {
    let effect = step_change(g_k, g_next)?;
    Ok(moved_set(g_k, g_next, effect.as_ref())
        .into_iter()
        .filter(|id| g_k.node(*id).is_some_and(|n| !n.is_static))
        .collect())
}

/// Target pixels dilated by `ERASE_DILATION`, kept only where the frame shows
/// background, static furniture or a target.
pub fn erase_region(
    frame: &Rendered,
    masks: &BTreeMap<NodeId, ObjectMask>,
    targets: &BTreeSet<NodeId>,
    statics: &BTreeSet<NodeId>,
) -> FrameMask {
    let (w, h) = (frame.image.width, frame.image.height);
    let mut m = FrameMask::new(w, h);
    for id in targets {
        if let Some(om) = masks.get(id) {
            m.paint(&om.mask, om.rect);
        }
    }
    let mut region = m.dilate(ERASE_DILATION);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if region.bits[i] {
                region.bits[i] = match frame.owner(x, y) {
                    None => true,
                    Some(o) => statics.contains(&o) || targets.contains(&o),
                };
            }
        }
    }
    region
}

/// Blanks the region to black.
pub fn erase(img: &Image, region: &FrameMask) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if region.get(x, y) {
                out.put(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

/// Fills the region from the background plate.
pub fn inpaint(img: &Image, region: &FrameMask, plate: Option<&Image>) -> Result<Image, EditError> {
    let plate = plate.ok_or(EditError::MissingBackgroundPlate)?;
    if (plate.width, plate.height) != (img.width, img.height) {
        return Err(EditError::PlateSize { plate: (plate.width, plate.height), frame: (img.width, img.height) });
    }
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if region.get(x, y) {
                out.put(x, y, plate.get(x, y));
            }
        }
    }
    Ok(out)
}

/// Entry of `label` whose box best matches `target`: the largest IoU, or
/// when no entry overlaps, the nearest centroid. Ties keep the lowest id.
pub fn retrieve<'a>(lib: &'a Library, label: &str, target: &Rect<f64>) -> Result<&'a LibraryEntry, EditError> {
    let subset = lib.subset_by_label(label);
    let by_iou = subset
        .iter()
        .map(|e| (e, e.bbox().iou(target)))
        .fold(None::<(&&LibraryEntry, f64)>, |best, (e, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((e, v)),
        });
    match by_iou {
        None => Err(EditError::EmptyLabelSubset(label.to_string())),
        Some((e, v)) if v > 0.0 => Ok(e),
        Some(_) => Ok(subset
            .iter()
            .map(|e| (e, e.bbox().center_distance(target)))
            .fold(None::<(&&LibraryEntry, f64)>, |best, (e, d)| match best {
                Some((_, b)) if b <= d => best,
                _ => Some((e, d)),
            })
            .unwrap()
            .0),
    }
}

/// The entry mask resampled to the target box.
pub fn gen_bg_mask(mask: &Mask, id: NodeId, rect: PixelRect) -> Result<Mask, EditError> {
    if rect.is_empty() {
        return Err(EditError::DegenerateBox(id));
    }
    Ok(mask.resize_nearest(rect.w, rect.h))
}

/// One object to paste: a crop, its mask and the destination box.
#[derive(Debug, Clone, PartialEq)]
pub struct Paste {
    pub id: NodeId,
    pub rect: PixelRect,
    pub crop: Image,
    pub mask: Mask,
}

/// Pastes in order; later pastes cover earlier ones. Returns the image and
/// the frame mask each paste ended up owning.
pub fn compose(base: &Image, pastes: &[Paste]) -> Result<(Image, BTreeMap<NodeId, FrameMask>), EditError> {
    let (w, h) = (base.width, base.height);
    let mut out = base.clone();
    let mut owner: Vec<Option<NodeId>> = vec![None; (w * h) as usize];
    for p in pastes {
        let dims = (p.crop.width, p.crop.height);
        if dims != (p.mask.width, p.mask.height) || dims != (p.rect.w, p.rect.h) {
            return Err(EditError::MaskMismatch { crop: dims, mask: (p.mask.width, p.mask.height) });
        }
        for j in 0..p.rect.h {
            for i in 0..p.rect.w {
                let (x, y) = (p.rect.x as i64 + i as i64, p.rect.y as i64 + j as i64);
                if p.mask.get(i, j) && out.in_bounds(x, y) {
                    out.put(x as u32, y as u32, p.crop.get(i, j));
                    owner[(y as u32 * w + x as u32) as usize] = Some(p.id);
                }
            }
        }
    }
    let mut masks: BTreeMap<NodeId, FrameMask> = pastes.iter().map(|p| (p.id, FrameMask::new(w, h))).collect();
    for (i, o) in owner.iter().enumerate() {
        if let Some(id) = o {
            masks.get_mut(id).unwrap().bits[i] = true;
        }
    }
    Ok((out, masks))
}

/// Paste order matching the renderer: open containers, loose objects from
/// top to bottom, the held object, closed drawers, then the gripper.
fn paste_rank(g: &SceneGraph, id: NodeId, r: &Rect<f64>) -> (u8, i64, u32) {
    let n = g.node(id).expect("target node");
    let rank = if n.is_gripper {
        5
    } else if n.is_container && n.accessible == Some(false) {
        4
    } else if g.is_grasped(id) {
        3
    } else if n.is_container {
        1
    } else {
        2
    };
    let key = if rank == 2 { (r.y * 1000.0).round() as i64 } else { 0 };
    (rank, key, id.0)
}

/// Intermediate rasters kept when frames are dumped.
#[derive(Debug, Clone, PartialEq)]
pub struct EditStages {
    pub erased: Image,
    pub inpainted: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgoal {
    pub image: Image,
    pub layout: LayoutMap<f64>,
    pub region: FrameMask,
    /// Pixels each pasted target covers in the final image.
    pub masks: BTreeMap<NodeId, FrameMask>,
    /// Library entry used per target.
    pub sources: BTreeMap<NodeId, usize>,
    pub stages: Option<EditStages>,
}

impl Subgoal {
    /// Every pixel the edit may have changed: the erase region plus the
    /// pasted footprints.
    pub fn edit_region(&self) -> FrameMask {
        let mut m = self.region.clone();
        for p in self.masks.values() {
            m.union(p);
        }
        m
    }
}

/// Inputs of one sub-goal synthesis.
pub struct EditRequest<'a> {
    pub frame: &'a Rendered,
    pub l_k: &'a LayoutMap<f64>,
    pub g_k: &'a SceneGraph,
    pub g_next: &'a SceneGraph,
    pub l_next: &'a LayoutMap<f64>,
    pub plate: Option<&'a Image>,
    pub keep_stages: bool,
}

/// Image of the scene after the step, edited from the current frame.
pub fn synthesize_subgoal(req: &EditRequest, lib: &Library) -> Result<Subgoal, EditError> {
    let targets = target_set(req.g_k, req.g_next)?;
    let statics: BTreeSet<NodeId> = req.g_k.nodes().filter(|n| n.is_static).map(|n| n.id).collect();
    let masks = segment(req.frame, req.l_k);
    let region = erase_region(req.frame, &masks, &targets, &statics);
    let erased = erase(&req.frame.image, &region);
    let inpainted = inpaint(&erased, &region, req.plate)?;

    let mut order: Vec<(NodeId, Rect<f64>)> = Vec::new();
    for id in &targets {
        if req.l_next.is_occluded(*id) {
            continue;
        }
        let r = *req.l_next.get(*id).ok_or(EditError::MissingBox(*id))?;
        order.push((*id, r));
    }
    order.sort_by_key(|(id, r)| paste_rank(req.g_next, *id, r));

    let mut pastes = Vec::with_capacity(order.len());
    let mut sources = BTreeMap::new();
    for (id, r) in order {
        let e = retrieve(lib, req.g_next.label(id), &r)?;
        let rect = r.to_pixels();
        let mask = gen_bg_mask(lib.mask(e.entry_id), id, rect)?;
        let crop = lib.crop(e.entry_id).resize_bilinear(rect.w, rect.h);
        sources.insert(id, e.entry_id);
        pastes.push(Paste { id, rect, crop, mask });
    }
    let (image, masks) = compose(&inpainted, &pastes)?;
    Ok(Subgoal {
        image,
        layout: req.l_next.clone(),
        region,
        masks,
        sources,
        stages: req.keep_stages.then_some(EditStages { erased, inpainted }),
    })
}

/// Agreement between a synthesized sub-goal and a render of the world it
/// stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// Mean squared channel error over the edit region and pasted pixels.
    pub masked_mse: f64,
    pub pixels: usize,
    /// Mask IoU per pasted object label.
    pub mask_iou: BTreeMap<String, f64>,
}

impl Fidelity {
    pub fn mean_iou(&self) -> Option<f64> {
        (!self.mask_iou.is_empty()).then(|| self.mask_iou.values().sum::<f64>() / self.mask_iou.len() as f64)
    }
}

pub fn fidelity(sub: &Subgoal, truth: &Rendered, g: &SceneGraph) -> Fidelity {
    let area = sub.edit_region();
    let mut sum = 0.0;
    let mut pixels = 0;
    for y in 0..area.height {
        for x in 0..area.width {
            if area.get(x, y) {
                let (a, b) = (sub.image.get(x, y), truth.image.get(x, y));
                sum += (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum::<f64>() / 3.0;
                pixels += 1;
            }
        }
    }
    let mask_iou = sub
        .masks
        .iter()
        .map(|(id, m)| (g.label(*id).to_string(), crate::image::mask_iou(m, &truth.frame_mask(*id))))
        .collect();
    Fidelity { masked_mse: if pixels == 0 { 0.0 } else { sum / pixels as f64 }, pixels, mask_iou }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_scenario, Family, ScenarioConfig};
    use crate::config::RunConfig;
    use crate::layout::extract_layout;
    use crate::parser::parse;
    use crate::planner::plan;
    use crate::sim::script::run_scripted;
    use crate::sim::{render_full, render_static, ControllerParams, SimParams};

    fn tiny_lib() -> Library {
        Library::build(&[Family::SequentialStack], 2, 3, &RunConfig::default()).unwrap()
    }

    #[test]
    fn erase_then_inpaint_matches_render_without_targets() {
        let (w, _) = generate_scenario(&ScenarioConfig::new(Family::SequentialStack, 4, 0)).unwrap();
        let frame = render_full(&w);
        let l = extract_layout(&w);
        let red = w.body_by_label("red_block").unwrap().id;
        let targets = BTreeSet::from([red]);
        let statics: BTreeSet<NodeId> = w.objects.iter().filter(|b| b.is_static).map(|b| b.id).collect();
        let region = erase_region(&frame, &segment(&frame, &l), &targets, &statics);
        let plate = render_static(&w).image;
        let out = inpaint(&erase(&frame.image, &region), &region, Some(&plate)).unwrap();
        // independent oracle: render the world with the block removed
        let mut gone = w.clone();
        gone.objects.retain(|b| b.id != red);
        assert_eq!(out, render_full(&gone).image);
        // nothing outside the region changed
        for y in 0..w.height {
            for x in 0..w.width {
                if !region.get(x, y) {
                    assert_eq!(out.get(x, y), frame.image.get(x, y));
                }
            }
        }
        assert!(matches!(inpaint(&frame.image, &region, None), Err(EditError::MissingBackgroundPlate)));
    }

    #[test]
    fn erase_spares_other_dynamic_objects() {
        let (mut w, _) = generate_scenario(&ScenarioConfig::new(Family::SequentialStack, 2, 0)).unwrap();
        let red = w.body_by_label("red_block").unwrap().clone();
        let blue = w.body_by_label("blue_block").unwrap().id;
        // blue sits flush against red's right side
        w.body_mut(blue).unwrap().x = red.x + red.w;
        let frame = render_full(&w);
        let l = extract_layout(&w);
        let region = erase_region(&frame, &segment(&frame, &l), &BTreeSet::from([red.id]), &BTreeSet::new());
        assert!(frame.frame_mask(blue).bits.iter().zip(&region.bits).all(|(b, r)| !(*b && *r)));
    }

    #[test]
    fn retrieval_matches_brute_force() {
        let lib = tiny_lib();
        let probes = [Rect::new(100.0, 260.0, 40.0, 40.0), Rect::new(5000.0, 5000.0, 40.0, 40.0), Rect::new(300.0, 50.0, 40.0, 40.0)];
        for t in probes {
            let subset = lib.subset_by_label("green_block");
            let best_iou = subset.iter().map(|e| e.bbox().iou(&t)).fold(0.0, f64::max);
            let want = if best_iou > 0.0 {
                subset.iter().find(|e| e.bbox().iou(&t) == best_iou).unwrap().entry_id
            } else {
                let d = subset.iter().map(|e| e.bbox().center_distance(&t)).fold(f64::INFINITY, f64::min);
                subset.iter().find(|e| e.bbox().center_distance(&t) == d).unwrap().entry_id
            };
            assert_eq!(retrieve(&lib, "green_block", &t).unwrap().entry_id, want);
        }
        assert!(matches!(retrieve(&lib, "dragon", &probes[0]), Err(EditError::EmptyLabelSubset(_))));
    }

    #[test]
    fn resampled_mask_follows_nearest_source_pixel() {
        let mut m = Mask::new(4, 2);
        m.set(1, 0, true);
        m.set(3, 1, true);
        let r = gen_bg_mask(&m, NodeId(1), PixelRect::new(0, 0, 8, 6)).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(r.get(x, y), m.get(x / 2, y / 3), "{x},{y}");
            }
        }
        assert!(matches!(gen_bg_mask(&m, NodeId(1), PixelRect::new(0, 0, 0, 3)), Err(EditError::DegenerateBox(_))));
    }

    #[test]
    fn compose_rejects_mismatched_masks_and_tracks_owners() {
        let base = Image::new(10, 10, [1, 2, 3]);
        let p = Paste { id: NodeId(4), rect: PixelRect::new(2, 2, 3, 3), crop: Image::new(3, 3, [9, 9, 9]), mask: Mask::full(3, 3) };
        let (img, masks) = compose(&base, std::slice::from_ref(&p)).unwrap();
        assert_eq!(img.get(3, 3), [9, 9, 9]);
        assert_eq!(img.get(5, 5), [1, 2, 3]);
        assert_eq!(masks[&NodeId(4)].count(), 9);
        let bad = Paste { mask: Mask::full(2, 3), ..p };
        assert!(matches!(compose(&base, &[bad]), Err(EditError::MaskMismatch { .. })));
    }

    #[test]
    fn synthesized_subgoal_is_close_to_ground_truth() {
        let lib = tiny_lib();
        let cfg = RunConfig::default();
        let (w0, task) = generate_scenario(&ScenarioConfig::new(Family::SequentialStack, 77, 0)).unwrap();
        let g0 = parse(&w0, &cfg.thresholds).unwrap();
        let chain = plan(&g0, &task).unwrap();
        let demo = run_scripted(&w0, &chain, &SimParams::default(), &ControllerParams::default()).unwrap();
        let plate = render_static(&w0).image;
        for k in 0..chain.len() {
            let frame = render_full(&demo.keyframes[k]);
            let l_k = extract_layout(&demo.keyframes[k]);
            let l_next = extract_layout(&demo.keyframes[k + 1]);
            let req = EditRequest {
                frame: &frame,
                l_k: &l_k,
                g_k: &chain.graphs[k],
                g_next: &chain.graphs[k + 1],
                l_next: &l_next,
                plate: Some(&plate),
                keep_stages: false,
            };
            let sub = synthesize_subgoal(&req, &lib).unwrap();
            let truth = render_full(&demo.keyframes[k + 1]);
            let f = fidelity(&sub, &truth, &chain.graphs[k + 1]);
            assert!(f.mean_iou().unwrap() > 0.8, "step {k}: {f:?}");
        }
    }
}
