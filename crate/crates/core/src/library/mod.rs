//! Demonstration library: keyframes, per-object crops and masks, and the
//! transition records the layout predictor is fitted on.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::bench::{generate_scenario, Family, ScenarioConfig};
use crate::config::RunConfig;
use crate::geom::{PixelRect, Rect};
use crate::graph::SceneGraph;
use crate::image::{Image, Mask};
use crate::layout::{extract_layout, LayoutMap, TransitionExample};
use crate::parser::parse;
use crate::planner::{plan, ChainStep};
use crate::sim::script::run_scripted;
use crate::sim::{render_full, render_static};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ASSET_DIR: &str = "assets";
const FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("scenario is invalid: {0}")]
    ScenarioInvalid(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest is corrupt: {0}")]
    CorruptManifest(String),
    #[error("asset {0} is missing or damaged")]
    MissingAsset(String),
}

/// A content-addressed raster file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub id: usize,
    pub family: Family,
    pub placement_seed: u64,
    /// Empty-scene render: the static furniture only.
    pub plate: AssetRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySource {
    pub demo: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub entry_id: usize,
    pub label: String,
    #[serde(rename = "box")]
    pub rect: PixelRect,
    pub crop: AssetRef,
    pub mask: AssetRef,
    pub source: EntrySource,
}

impl LibraryEntry {
    pub fn bbox(&self) -> Rect<f64> {
        self.rect.to_rect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub demo: usize,
    pub frame: usize,
    pub image: AssetRef,
    pub graph: SceneGraph,
    pub layout: LayoutMap<f64>,
    pub signature: String,
}

/// One chain step between two keyframes (indices into `keyframes`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub demo: usize,
    pub from: usize,
    pub to: usize,
    pub step: ChainStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub width: u32,
    pub height: u32,
    pub demos: Vec<DemoRecord>,
    pub entries: Vec<LibraryEntry>,
    pub keyframes: Vec<KeyframeRecord>,
    pub transitions: Vec<TransitionRecord>,
}

/// A manifest with its rasters in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    pub manifest: Manifest,
    blobs: BTreeMap<String, Vec<u8>>,
    crops: Vec<Image>,
    masks: Vec<Mask>,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn store(blobs: &mut BTreeMap<String, Vec<u8>>, png: Vec<u8>) -> AssetRef {
    let sha256 = sha_hex(&png);
    let file = format!("{ASSET_DIR}/{sha256}.png");
    blobs.entry(sha256.clone()).or_insert(png);
    AssetRef { file, sha256 }
}

/// Everything one scripted demonstration contributes, before assembly.
struct DemoCapture {
    family: Family,
    placement_seed: u64,
    plate: Vec<u8>,
    frames: Vec<(Vec<u8>, SceneGraph, LayoutMap<f64>)>,
    objects: Vec<Vec<(String, PixelRect, Image, Mask)>>,
    steps: Vec<ChainStep>,
}

fn capture(family: Family, placement_seed: u64, cfg: &RunConfig) -> Result<DemoCapture, LibraryError> {
    let sc = ScenarioConfig { family, placement_seed, order_seed: 0, width: cfg.width, height: cfg.height };
    let bad = |e: String| LibraryError::ScenarioInvalid(format!("{family} seed {placement_seed}: {e}"));
    let (w0, task) = generate_scenario(&sc).map_err(|e| bad(e.to_string()))?;
    let g0 = parse(&w0, &cfg.thresholds_scaled()).map_err(|e| bad(e.to_string()))?;
    let chain = plan(&g0, &task).map_err(|e| bad(e.to_string()))?;
    let demo = run_scripted(&w0, &chain, &cfg.sim_scaled(), &cfg.controller_scaled()).map_err(|e| bad(e.to_string()))?;

    let mut frames = Vec::new();
    let mut objects = Vec::new();
    for (k, w) in demo.keyframes.iter().enumerate() {
        let r = render_full(w);
        let layout = extract_layout(w);
        let mut objs = Vec::new();
        for (id, b) in layout.iter() {
            let node = chain.graphs[k].node(id).expect("layout node in graph");
            if node.is_static || layout.is_occluded(id) {
                continue;
            }
            let rect = b.to_pixels();
            let mask = r.mask_in(id, rect);
            if mask.is_empty() {
                continue;
            }
            objs.push((node.label.clone(), rect, r.image.crop(rect), mask));
        }
        frames.push((r.image.to_png(), chain.graphs[k].clone(), layout));
        objects.push(objs);
    }
    Ok(DemoCapture {
        family,
        placement_seed,
        plate: render_static(&w0).image.to_png(),
        frames,
        objects,
        steps: chain.steps.clone(),
    })
}

impl Library {
    pub fn empty(width: u32, height: u32) -> Self {
        Library {
            manifest: Manifest {
                format: FORMAT,
                width,
                height,
                demos: Vec::new(),
                entries: Vec::new(),
                keyframes: Vec::new(),
                transitions: Vec::new(),
            },
            blobs: BTreeMap::new(),
            crops: Vec::new(),
            masks: Vec::new(),
        }
    }

    /// Runs `n_demos` scripted demonstrations per family (demonstrated order,
    /// seeded placements) and records every chain state.
    pub fn build(families: &[Family], n_demos: usize, seed: u64, cfg: &RunConfig) -> Result<Library, LibraryError> {
        cfg.check().map_err(LibraryError::ScenarioInvalid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jobs: Vec<(Family, u64)> = families
            .iter()
            .flat_map(|f| (0..n_demos).map(move |_| *f))
            .map(|f| (f, rng.next_u64()))
            .collect();
        let captures: Vec<DemoCapture> = jobs
            .par_iter()
            .map(|(f, s)| capture(*f, *s, cfg))
            .collect::<Result<_, _>>()?;

        let mut lib = Library::empty(cfg.width, cfg.height);
        let mut seen: BTreeSet<(String, PixelRect, String, String)> = BTreeSet::new();
        for (demo, cap) in captures.into_iter().enumerate() {
            let plate = store(&mut lib.blobs, cap.plate);
            lib.manifest.demos.push(DemoRecord {
                id: demo,
                family: cap.family,
                placement_seed: cap.placement_seed,
                plate,
            });
            let base = lib.manifest.keyframes.len();
            for (frame, ((png, graph, layout), objs)) in cap.frames.into_iter().zip(cap.objects).enumerate() {
                let image = store(&mut lib.blobs, png);
                let signature = graph.label_signature();
                lib.manifest.keyframes.push(KeyframeRecord { demo, frame, image, graph, layout, signature });
                for (label, rect, crop, mask) in objs {
                    let crop_ref = store(&mut lib.blobs, crop.to_png());
                    let mask_ref = store(&mut lib.blobs, mask.to_png());
                    let key = (label.clone(), rect, crop_ref.sha256.clone(), mask_ref.sha256.clone());
                    if !seen.insert(key) {
                        continue;
                    }
                    lib.manifest.entries.push(LibraryEntry {
                        entry_id: lib.manifest.entries.len(),
                        label,
                        rect,
                        crop: crop_ref,
                        mask: mask_ref,
                        source: EntrySource { demo, frame },
                    });
                    lib.crops.push(crop);
                    lib.masks.push(mask);
                }
            }
            for (k, step) in cap.steps.into_iter().enumerate() {
                lib.manifest.transitions.push(TransitionRecord { demo, from: base + k, to: base + k + 1, step });
            }
        }
        Ok(lib)
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.manifest.entries
    }

    pub fn crop(&self, entry_id: usize) -> &Image {
        &self.crops[entry_id]
    }

    pub fn mask(&self, entry_id: usize) -> &Mask {
        &self.masks[entry_id]
    }

    /// Entries carrying `label`, in ascending id.
    pub fn subset_by_label(&self, label: &str) -> Vec<&LibraryEntry> {
        self.manifest.entries.iter().filter(|e| e.label == label).collect()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.manifest.entries.iter().map(|e| e.label.as_str()).collect()
    }

    fn decode(&self, a: &AssetRef) -> Result<Image, LibraryError> {
        let bytes = self.blobs.get(&a.sha256).ok_or_else(|| LibraryError::MissingAsset(a.file.clone()))?;
        Image::from_png(bytes).map_err(|_| LibraryError::MissingAsset(a.file.clone()))
    }

    pub fn frame(&self, keyframe: usize) -> Result<Image, LibraryError> {
        self.decode(&self.manifest.keyframes[keyframe].image)
    }

    pub fn plate(&self, demo: usize) -> Result<Image, LibraryError> {
        self.decode(&self.manifest.demos[demo].plate)
    }

    /// Predictor training examples: one per recorded transition.
    pub fn examples(&self) -> Vec<TransitionExample<f64>> {
        let k = &self.manifest.keyframes;
        self.manifest
            .transitions
            .iter()
            .map(|t| TransitionExample {
                g_k: k[t.from].graph.clone(),
                g_next: k[t.to].graph.clone(),
                l_k: k[t.from].layout.clone(),
                l_next: k[t.to].layout.clone(),
            })
            .collect()
    }

    /// Transitions of the given demos only.
    pub fn examples_of(&self, demos: &BTreeSet<usize>) -> Vec<TransitionExample<f64>> {
        self.manifest
            .transitions
            .iter()
            .zip(self.examples())
            .filter(|(t, _)| demos.contains(&t.demo))
            .map(|(_, e)| e)
            .collect()
    }

    /// Keyframe whose graph has the same labelled relations as `g` and whose
    /// boxes best match `layout`: the largest summed box IoU over shared
    /// labels, or when every IoU is zero the smallest summed centroid
    /// distance. Ties go to the lowest index.
    pub fn retrieve_frame(&self, g: &SceneGraph, layout: &LayoutMap<f64>) -> Option<usize> {
        let sig = g.label_signature();
        let query: Vec<(&str, &Rect<f64>)> =
            layout.iter().filter_map(|(id, r)| g.node(id).map(|n| (n.label.as_str(), r))).collect();
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, kf) in self.manifest.keyframes.iter().enumerate().filter(|(_, k)| k.signature == sig) {
            let mut iou = 0.0;
            let mut dist = 0.0;
            for (label, r) in &query {
                let Some(n) = kf.graph.node_by_label(label) else { continue };
                let Some(b) = kf.layout.get(n.id) else { continue };
                iou += r.iou(b);
                dist += r.center_distance(b);
            }
            let better = match best {
                None => true,
                Some((_, bi, bd)) => {
                    if bi > 0.0 || iou > 0.0 {
                        iou > bi
                    } else {
                        dist < bd
                    }
                }
            };
            if better {
                best = Some((i, iou, dist));
            }
        }
        best.map(|b| b.0)
    }

    pub fn save(&self, dir: &Path) -> Result<(), LibraryError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| LibraryError::Io { path, source }
        };
        let assets = dir.join(ASSET_DIR);
        std::fs::create_dir_all(&assets).map_err(io(&assets))?;
        for (sha, bytes) in &self.blobs {
            let p = assets.join(format!("{sha}.png"));
            std::fs::write(&p, bytes).map_err(io(&p))?;
        }
        let p = dir.join(MANIFEST_FILE);
        let json = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        std::fs::write(&p, json).map_err(io(&p))
    }

    pub fn load(dir: &Path) -> Result<Library, LibraryError> {
        let p = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&p).map_err(|source| LibraryError::Io { path: p.display().to_string(), source })?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| LibraryError::CorruptManifest(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(LibraryError::CorruptManifest(format!("unknown format {}", manifest.format)));
        }
        let refs = manifest
            .demos
            .iter()
            .map(|d| &d.plate)
            .chain(manifest.keyframes.iter().map(|k| &k.image))
            .chain(manifest.entries.iter().flat_map(|e| [&e.crop, &e.mask]));
        let mut blobs = BTreeMap::new();
        for a in refs {
            if a.file != format!("{ASSET_DIR}/{}.png", a.sha256) {
                return Err(LibraryError::CorruptManifest(format!("{} does not match its hash {}", a.file, a.sha256)));
            }
            if blobs.contains_key(&a.sha256) {
                continue;
            }
            let bytes = std::fs::read(dir.join(&a.file)).map_err(|_| LibraryError::MissingAsset(a.file.clone()))?;
            if sha_hex(&bytes) != a.sha256 {
                return Err(LibraryError::MissingAsset(a.file.clone()));
            }
            blobs.insert(a.sha256.clone(), bytes);
        }
        let mut lib = Library { manifest, blobs, crops: Vec::new(), masks: Vec::new() };
        for (i, e) in lib.manifest.entries.iter().enumerate() {
            if e.entry_id != i {
                return Err(LibraryError::CorruptManifest(format!("entry {i} has id {}", e.entry_id)));
            }
            let crop = lib.decode(&e.crop)?;
            let mask = Mask::from_png(&lib.blobs[&e.mask.sha256]).map_err(|_| LibraryError::MissingAsset(e.mask.file.clone()))?;
            let dims = (e.rect.w, e.rect.h);
            if (crop.width, crop.height) != dims || (mask.width, mask.height) != dims {
                return Err(LibraryError::CorruptManifest(format!("entry {i} raster size differs from its box")));
            }
            lib.crops.push(crop);
            lib.masks.push(mask);
        }
        for t in &lib.manifest.transitions {
            if t.from >= lib.manifest.keyframes.len() || t.to >= lib.manifest.keyframes.len() {
                return Err(LibraryError::CorruptManifest("transition references a missing keyframe".into()));
            }
        }
        Ok(lib)
    }

    /// Hash of the manifest document, identical for identical builds.
    pub fn digest(&self) -> String {
        sha_hex(&serde_json::to_vec(&self.manifest).expect("manifest serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Library {
        let cfg = RunConfig::default();
        Library::build(&[Family::SequentialStack], 2, 5, &cfg).unwrap()
    }

    #[test]
    fn zero_demos_is_empty_but_valid() {
        let lib = Library::build(&[Family::FlexiblePlace], 0, 1, &RunConfig::default()).unwrap();
        assert!(lib.entries().is_empty());
        let dir = tempfile::tempdir().unwrap();
        lib.save(dir.path()).unwrap();
        assert_eq!(Library::load(dir.path()).unwrap(), lib);
    }

    #[test]
    fn build_is_deterministic_and_round_trips() {
        let a = small();
        let b = small();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.manifest.transitions.len(), 36);
        assert_eq!(a.manifest.keyframes.len(), 38);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        assert_eq!(Library::load(dir.path()).unwrap(), a);
    }

    #[test]
    fn labels_partition_entries() {
        let lib = small();
        let total: usize = lib.labels().iter().map(|l| lib.subset_by_label(l).len()).sum();
        assert_eq!(total, lib.entries().len());
        assert!(lib.subset_by_label("unicorn").is_empty());
        assert!(!lib.labels().contains("table") && !lib.labels().contains("plate"));
        let ids: Vec<usize> = lib.subset_by_label("red_block").iter().map(|e| e.entry_id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn damaged_assets_are_reported() {
        let lib = small();
        let dir = tempfile::tempdir().unwrap();
        lib.save(dir.path()).unwrap();
        let victim = dir.path().join(&lib.entries()[0].crop.file);
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Library::load(dir.path()), Err(LibraryError::MissingAsset(_))));
        std::fs::write(&victim, &bytes).unwrap();

        let mp = dir.path().join(MANIFEST_FILE);
        let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&mp).unwrap()).unwrap();
        m["entries"][0]["mask"]["sha256"] = "00".repeat(32).into();
        std::fs::write(&mp, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(Library::load(dir.path()), Err(LibraryError::CorruptManifest(_))));
    }

    #[test]
    fn seen_frame_retrieval_prefers_matching_layout() {
        let lib = small();
        let k = &lib.manifest.keyframes[5];
        assert_eq!(lib.retrieve_frame(&k.graph, &k.layout), Some(5));
    }
}
