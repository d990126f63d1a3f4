use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::layout::Predictor;
use crate::library::Library;
use crate::sim::episode::{run_episode, EpisodeResult, PhaseVerdict};

use super::{generate_scenario, Family, Mode, ScenarioConfig};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const EPISODE_FILE: &str = "episode.json";

const PHASE_COUNTING: &str = "a phase passes when the parsed world matches the next chain graph after the \
action buffer settles; the first failed phase ends the episode and every later phase counts as not attempted";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("run configuration is invalid: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(p: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: p.display().to_string(), source }
}

/// One benchmark episode before it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub family: Family,
    pub mode: Mode,
    pub index: usize,
    pub placement_seed: u64,
    pub order_seed: u64,
}

impl EpisodeSpec {
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.family, self.mode.name(), self.placement_seed)
    }

    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(self.family.name()).join(self.mode.name()).join(self.placement_seed.to_string())
    }
}

/// Seen episodes use the demonstrated order; unseen ones cycle through the
/// other orders the family admits. Placements come from a per-family,
/// per-mode stream of the run seed.
pub fn episode_specs(cfg: &RunConfig, seed: u64) -> Vec<EpisodeSpec> {
    let mut out = Vec::new();
    for family in &cfg.families {
        let fi = Family::ALL.iter().position(|f| f == family).unwrap() as u64;
        for (mi, mode, n) in [(0, Mode::Seen, cfg.seen_episodes), (1, Mode::Unseen, cfg.unseen_episodes)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + fi * 2 + mi);
            for index in 0..n {
                let order_seed = match mode {
                    Mode::Seen => 0,
                    Mode::Unseen => 1 + index as u64 % (family.order_count() - 1),
                };
                out.push(EpisodeSpec { family: *family, mode, index, placement_seed: rng.next_u64(), order_seed });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: String,
    pub family: Family,
    pub mode: Mode,
    pub placement_seed: u64,
    pub order_seed: u64,
    pub phases: usize,
    pub passed: usize,
    pub success: bool,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Per synthesized phase: masked MSE and mean mask IoU.
    pub fidelity: Vec<(f64, f64)>,
}

impl EpisodeSummary {
    fn new(spec: &EpisodeSpec, r: Result<&EpisodeResult, String>) -> Self {
        let mut s = EpisodeSummary {
            id: spec.id(),
            family: spec.family,
            mode: spec.mode,
            placement_seed: spec.placement_seed,
            order_seed: spec.order_seed,
            phases: 0,
            passed: 0,
            success: false,
            steps: 0,
            error: None,
            fidelity: Vec::new(),
        };
        match r {
            Ok(r) => {
                s.phases = r.phases.len();
                s.passed = r.passed_phases();
                s.success = r.success;
                s.steps = r.total_steps;
                s.fidelity = r
                    .phases
                    .iter()
                    .filter_map(|p| p.fidelity.as_ref())
                    .filter_map(|f| f.mean_iou().map(|iou| (f.masked_mse, iou)))
                    .collect();
            }
            Err(e) => s.error = Some(e),
        }
        s
    }
}

/// Rates are `None` when their denominator is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub episodes: usize,
    pub successes: usize,
    pub phases: usize,
    pub passed_phases: usize,
    pub task_success: Option<f64>,
    pub phase_success: Option<f64>,
    pub fidelity_steps: usize,
    pub mean_masked_mse: Option<f64>,
    pub mean_mask_iou: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl GroupMetrics {
    fn from_episodes<'a>(eps: impl IntoIterator<Item = &'a EpisodeSummary>) -> Self {
        let mut m = GroupMetrics::default();
        let (mut mse, mut iou) = (0.0, 0.0);
        for e in eps {
            m.episodes += 1;
            m.successes += e.success as usize;
            m.phases += e.phases;
            m.passed_phases += e.passed;
            for (a, b) in &e.fidelity {
                mse += a;
                iou += b;
                m.fidelity_steps += 1;
            }
        }
        m.task_success = rate(m.successes, m.episodes);
        m.phase_success = rate(m.passed_phases, m.phases);
        if m.fidelity_steps > 0 {
            m.mean_masked_mse = Some(mse / m.fidelity_steps as f64);
            m.mean_mask_iou = Some(iou / m.fidelity_steps as f64);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub phase_counting: String,
    pub overall: GroupMetrics,
    pub families: BTreeMap<Family, BTreeMap<Mode, GroupMetrics>>,
    pub episodes: Vec<EpisodeSummary>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl MetricsReport {
    /// Aggregates episode summaries; the result does not depend on their order.
    pub fn aggregate(seed: u64, cfg: &RunConfig, mut episodes: Vec<EpisodeSummary>) -> Self {
        episodes.sort_by(|a, b| (a.family, a.mode, &a.id).cmp(&(b.family, b.mode, &b.id)));
        let mut families: BTreeMap<Family, BTreeMap<Mode, GroupMetrics>> = BTreeMap::new();
        for f in &cfg.families {
            for m in [Mode::Seen, Mode::Unseen] {
                let g = GroupMetrics::from_episodes(episodes.iter().filter(|e| e.family == *f && e.mode == m));
                families.entry(*f).or_default().insert(m, g);
            }
        }
        MetricsReport {
            seed,
            width: cfg.width,
            height: cfg.height,
            phase_counting: PHASE_COUNTING.to_string(),
            overall: GroupMetrics::from_episodes(&episodes),
            families,
            episodes,
        }
    }

    /// One row per family and mode plus an overall row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "family,mode,episodes,successes,task_success,phases,passed_phases,phase_success,mean_masked_mse,mean_mask_iou\n",
        );
        let mut row = |f: &str, m: &str, g: &GroupMetrics| {
            s.push_str(&format!(
                "{f},{m},{},{},{},{},{},{},{},{}\n",
                g.episodes,
                g.successes,
                fmt_opt(g.task_success),
                g.phases,
                g.passed_phases,
                fmt_opt(g.phase_success),
                fmt_opt(g.mean_masked_mse),
                fmt_opt(g.mean_mask_iou)
            ));
        };
        for (f, modes) in &self.families {
            for (m, g) in modes {
                row(f.name(), m.name(), g);
            }
        }
        row("all", "all", &self.overall);
        s
    }

    pub fn write(&self, out: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let p = out.join(REPORT_JSON);
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&p, json).map_err(io_err(&p))?;
        let p = out.join(REPORT_CSV);
        std::fs::write(&p, self.to_csv()).map_err(io_err(&p))
    }
}

/// Writes `episode.json` and, when frames were kept, the phase images.
pub fn write_episode(dir: &Path, r: &EpisodeResult) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(EPISODE_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(r).expect("episode serializes")).map_err(io_err(&p))?;
    for (k, f) in r.frames.iter().enumerate() {
        let mut images = vec![("subgoal", &f.subgoal), ("achieved", &f.achieved)];
        if let Some(s) = &f.stages {
            images.push(("erased", &s.erased));
            images.push(("inpainted", &s.inpainted));
        }
        for (name, img) in images {
            let p = dir.join(format!("phase_{k:03}_{name}.png"));
            std::fs::write(&p, img.to_png()).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

/// Runs every episode of the configured matrix in parallel. With `out`, each
/// episode is written under `<out>/<family>/<mode>/<placement seed>/` and the
/// report to `<out>/report.json` and `<out>/report.csv`.
pub fn run_benchmark(
    cfg: &RunConfig,
    predictor: &Predictor<f64>,
    library: &Library,
    seed: u64,
    out: Option<&Path>,
) -> Result<MetricsReport, BenchError> {
    cfg.check().map_err(BenchError::Config)?;
    let specs = episode_specs(cfg, seed);
    let summaries: Vec<EpisodeSummary> = specs
        .par_iter()
        .map(|spec| {
            let sc = ScenarioConfig {
                family: spec.family,
                placement_seed: spec.placement_seed,
                order_seed: spec.order_seed,
                width: cfg.width,
                height: cfg.height,
            };
            let result = generate_scenario(&sc)
                .map_err(|e| e.to_string())
                .and_then(|(w, task)| {
                    run_episode(&w, &task, spec.mode, predictor, library, cfg).map_err(|e| e.to_string())
                });
            if let (Some(out), Ok(r)) = (out, &result) {
                write_episode(&spec.dir(out), r)?;
            }
            Ok(EpisodeSummary::new(spec, result.as_ref().map_err(|e| e.clone())))
        })
        .collect::<Result<_, BenchError>>()?;
    let report = MetricsReport::aggregate(seed, cfg, summaries);
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(report)
}

/// Phase verdict counts of one result, for consistency checks.
pub fn verdict_counts(r: &EpisodeResult) -> (usize, usize, usize) {
    let count = |v: PhaseVerdict| r.phases.iter().filter(|p| p.verdict == v).count();
    (count(PhaseVerdict::Passed), count(PhaseVerdict::Failed), count(PhaseVerdict::NotAttempted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(family: Family, mode: Mode, phases: usize, passed: usize, success: bool) -> EpisodeSummary {
        EpisodeSummary {
            id: format!("{family}/{}/{phases}{passed}", mode.name()),
            family,
            mode,
            placement_seed: 0,
            order_seed: 0,
            phases,
            passed,
            success,
            steps: 0,
            error: None,
            fidelity: Vec::new(),
        }
    }

    #[test]
    fn empty_report_has_undefined_rates() {
        let cfg = RunConfig { seen_episodes: 0, unseen_episodes: 0, ..RunConfig::default() };
        assert!(episode_specs(&cfg, 0).is_empty());
        let r = MetricsReport::aggregate(0, &cfg, Vec::new());
        assert_eq!(r.overall.task_success, None);
        assert_eq!(r.overall.phase_success, None);
        assert!(r.to_csv().lines().last().unwrap().contains("NA"));
    }

    #[test]
    fn hand_counted_rates() {
        let cfg = RunConfig::default();
        let eps = vec![
            summary(Family::SequentialStack, Mode::Seen, 18, 18, true),
            summary(Family::SequentialStack, Mode::Seen, 16, 16, false),
            summary(Family::SequentialStack, Mode::Unseen, 18, 5, false),
        ];
        let mut rev = eps.clone();
        rev.reverse();
        let r = MetricsReport::aggregate(0, &cfg, eps);
        assert_eq!(r, MetricsReport::aggregate(0, &cfg, rev));
        assert_eq!(r.overall.task_success, Some(1.0 / 3.0));
        assert_eq!(r.overall.phase_success, Some(39.0 / 52.0));
        let seen = &r.families[&Family::SequentialStack][&Mode::Seen];
        assert_eq!((seen.task_success, seen.phase_success), (Some(0.5), Some(1.0)));
    }

    #[test]
    fn specs_are_seeded_and_cover_the_matrix() {
        let cfg = RunConfig::default();
        let a = episode_specs(&cfg, 0);
        assert_eq!(a.len(), 4 * 40);
        assert_eq!(a, episode_specs(&cfg, 0));
        assert_ne!(a, episode_specs(&cfg, 1));
        assert!(a.iter().all(|s| (s.mode == Mode::Seen) == (s.order_seed == 0)));
        let drawer: Vec<u64> =
            a.iter().filter(|s| s.family == Family::HybridDrawer && s.mode == Mode::Unseen).map(|s| s.order_seed).collect();
        assert!(drawer.iter().all(|o| *o == 1));
    }
}
