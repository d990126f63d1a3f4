//! Run configuration shared by the library builder, episodes and the CLI.

use serde::{Deserialize, Serialize};

use crate::bench::Family;
use crate::parser::GeomThresholds;
use crate::sim::catalog::BASE_WIDTH;
use crate::sim::{ControllerParams, SimParams};

/// Every tunable of a run. Pixel values are given at 640x360 and scaled by
/// `width / 640` before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub width: u32,
    pub height: u32,
    pub sim: SimParams,
    pub controller: ControllerParams,
    pub thresholds: GeomThresholds,
    /// Scripted demonstrations per family in the library.
    pub n_demos: usize,
    pub seen_episodes: usize,
    pub unseen_episodes: usize,
    pub families: Vec<Family>,
    /// Keep every sub-goal image and stage output of an episode.
    pub dump_frames: bool,
    /// Plan steps dropped from the end of every chain (fault injection).
    pub truncate_chain: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            sim: SimParams::default(),
            controller: ControllerParams::default(),
            thresholds: GeomThresholds::default(),
            n_demos: 30,
            seen_episodes: 10,
            unseen_episodes: 30,
            families: Family::ALL.to_vec(),
            dump_frames: false,
            truncate_chain: 0,
        }
    }
}

impl RunConfig {
    pub fn scale(&self) -> f64 {
        self.width as f64 / BASE_WIDTH
    }

    pub fn sim_scaled(&self) -> SimParams {
        self.sim.scaled(self.scale())
    }

    pub fn thresholds_scaled(&self) -> GeomThresholds {
        self.thresholds.scaled(self.scale())
    }

    pub fn controller_scaled(&self) -> ControllerParams {
        let s = self.scale();
        ControllerParams { align_tol: self.controller.align_tol * s, delta: self.controller.delta * s, ..self.controller }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.width == 0 || self.width * 9 != self.height * 16 {
            return Err(format!("resolution {}x{} is not 16:9", self.width, self.height));
        }
        self.thresholds.check()?;
        let c = &self.controller;
        if c.buffer == 0 || c.phase_timeout == 0 || !(c.delta > 0.0) || !(c.gain > 0.0) {
            return Err("controller buffer, timeout, delta and gain must be positive".into());
        }
        if !(self.sim.max_step > 0.0) {
            return Err("max_step must be positive".into());
        }
        Ok(())
    }

    /// Parses `WxH`.
    pub fn set_resolution(&mut self, s: &str) -> Result<(), String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("resolution {s} is not WxH"))?;
        self.width = w.trim().parse().map_err(|_| format!("bad width in {s}"))?;
        self.height = h.trim().parse().map_err(|_| format!("bad height in {s}"))?;
        self.check()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = RunConfig::default();
        c.check().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"n_demos": 3}"#).unwrap();
        assert_eq!(partial.n_demos, 3);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn resolution_must_be_wide() {
        let mut c = RunConfig::default();
        c.set_resolution("1280x720").unwrap();
        assert_eq!(c.sim_scaled().max_step, 20.0);
        assert!(c.set_resolution("640x480").is_err());
    }
}
