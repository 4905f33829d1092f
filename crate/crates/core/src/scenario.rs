//! Scenario files: deployment, UE trajectories, episode plan and seeds.
//!
//! Scenarios are TOML. Every field except `format_version` and the BS list
//! has a default; loading reports which defaults were filled in. UEs come
//! from explicit `[[ue]]` waypoint paths and from `[[hotspot]]` groups whose
//! members are placed from the scenario seed.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::net::{dbm_to_watts, seed_of, BsConfig, BsKind, ChannelParams, Network, PowerParams, UeState};
use crate::rl::LearnerConfig;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Placement of generated UEs and the large-scale propagation map.
    pub scenario: u64,
    /// Per-episode channel realizations.
    pub channel: u64,
    pub learner: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { scenario: 1, channel: 1, learner: 1 }
    }
}

/// One pass visits every batch once; UEs move `gap_s` seconds between batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Plan {
    pub batches: usize,
    pub passes: usize,
    pub gap_s: f64,
}

impl Default for Plan {
    fn default() -> Self {
        Self { batches: 15, passes: 60, gap_s: 1.0 }
    }
}

/// How episodes-to-converge is read off a reward trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceRule {
    /// Moving-average window K.
    pub window: usize,
    /// Allowed relative deviation from the final mean.
    pub tolerance: f64,
    /// Number of trailing samples averaged into the final mean.
    pub final_window: usize,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self { window: 5, tolerance: 0.05, final_window: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub pathloss_exponent: f64,
    pub reference_loss_db: f64,
    pub shadowing_sigma_db: f64,
    pub spatial_sigma_db: f64,
    pub decorrelation_m: f64,
    pub noise_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub max_spectral_efficiency: f64,
    pub array_gain_exponent: f64,
    pub interference_leakage: f64,
    pub perturbation_sigma_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        Self {
            pathloss_exponent: p.pathloss_exponent,
            reference_loss_db: p.reference_loss_db,
            shadowing_sigma_db: p.shadowing_sigma_db,
            spatial_sigma_db: p.spatial_sigma_db,
            decorrelation_m: p.decorrelation_m,
            noise_power_dbm: -125.0,
            bandwidth_hz: p.bandwidth,
            max_spectral_efficiency: p.max_spectral_efficiency,
            array_gain_exponent: p.array_gain_exponent,
            interference_leakage: p.interference_leakage,
            perturbation_sigma_db: p.perturbation_sigma_db,
        }
    }
}

impl ChannelConfig {
    pub fn to_params(&self) -> ChannelParams {
        ChannelParams {
            pathloss_exponent: self.pathloss_exponent,
            reference_loss_db: self.reference_loss_db,
            shadowing_sigma_db: self.shadowing_sigma_db,
            spatial_sigma_db: self.spatial_sigma_db,
            decorrelation_m: self.decorrelation_m,
            noise_power: dbm_to_watts(self.noise_power_dbm),
            bandwidth: self.bandwidth_hz,
            max_spectral_efficiency: self.max_spectral_efficiency,
            array_gain_exponent: self.array_gain_exponent,
            interference_leakage: self.interference_leakage,
            perturbation_sigma_db: self.perturbation_sigma_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsEntry {
    pub kind: BsKind,
    pub x: f64,
    pub y: f64,
    /// Defaults to 128 for the macro and 32 for picos.
    pub antennas: Option<u32>,
    /// Defaults to 46 dBm for the macro and 30 dBm for picos.
    pub tx_power_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEntry {
    /// Path as `[[x, y], ...]`; a single point makes a static UE.
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub speed_mps: f64,
}

/// A group of UEs scattered uniformly in a disk. The first `walkers` of
/// them wander between random points of the disk; the rest stay put.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub x: f64,
    pub y: f64,
    pub radius_m: f64,
    pub ues: usize,
    #[serde(default)]
    pub walkers: usize,
    #[serde(default = "default_walk_speed")]
    pub speed_mps: f64,
    #[serde(default = "default_walk_points")]
    pub waypoints: usize,
}

fn default_walk_speed() -> f64 {
    1.0
}

fn default_walk_points() -> usize {
    4
}

/// The on-disk scenario schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    #[serde(default = "default_grid")]
    pub grid_m: f64,
    #[serde(default = "default_threshold")]
    pub rss_threshold_dbm: f64,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub plan: Plan,
    #[serde(default)]
    pub convergence: ConvergenceRule,
    #[serde(default)]
    pub power: PowerParams,
    #[serde(default)]
    pub channel: ChannelConfig,
    /// UE ids left out of the run (ids of the remaining UEs are kept).
    #[serde(default)]
    pub exclude_ues: Vec<usize>,
    #[serde(default)]
    pub learner: LearnerConfig,
    pub bs: Vec<BsEntry>,
    #[serde(default)]
    pub ue: Vec<UeEntry>,
    #[serde(default)]
    pub hotspot: Vec<Hotspot>,
}

fn default_grid() -> f64 {
    3.0
}

fn default_threshold() -> f64 {
    -120.0
}

impl ScenarioConfig {
    fn fill_defaults(&mut self) {
        for b in &mut self.bs {
            let (m, p) = match b.kind {
                BsKind::Macro => (128, 46.0),
                BsKind::Pico => (32, 30.0),
            };
            b.antennas.get_or_insert(m);
            b.tx_power_dbm.get_or_insert(p);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                supported: SCENARIO_FORMAT_VERSION,
            });
        }
        let bad = |p: String, why: &str| Err(Error::validation(p, why));
        if !(self.grid_m.is_finite() && self.grid_m > 0.0) {
            return bad("grid_m".into(), "must be positive");
        }
        if !self.rss_threshold_dbm.is_finite() {
            return bad("rss_threshold_dbm".into(), "must be finite");
        }
        if self.plan.batches == 0 {
            return bad("plan.batches".into(), "must be at least 1");
        }
        if self.plan.passes == 0 {
            return bad("plan.passes".into(), "must be at least 1");
        }
        if !(self.plan.gap_s.is_finite() && self.plan.gap_s >= 0.0) {
            return bad("plan.gap_s".into(), "must be non-negative");
        }
        let c = &self.convergence;
        if c.window == 0 {
            return bad("convergence.window".into(), "must be at least 1");
        }
        if c.final_window == 0 {
            return bad("convergence.final_window".into(), "must be at least 1");
        }
        if !(c.tolerance.is_finite() && c.tolerance > 0.0) {
            return bad("convergence.tolerance".into(), "must be positive");
        }
        for (i, u) in self.ue.iter().enumerate() {
            if u.waypoints.is_empty() {
                return bad(format!("ue[{i}].waypoints"), "at least one point is required");
            }
            if u.waypoints.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("ue[{i}].waypoints"), "coordinates must be finite");
            }
            if !(u.speed_mps.is_finite() && u.speed_mps >= 0.0) {
                return bad(format!("ue[{i}].speed_mps"), "must be non-negative");
            }
        }
        for (i, h) in self.hotspot.iter().enumerate() {
            if !(h.x.is_finite() && h.y.is_finite()) {
                return bad(format!("hotspot[{i}]"), "centre must be finite");
            }
            if !(h.radius_m.is_finite() && h.radius_m >= 0.0) {
                return bad(format!("hotspot[{i}].radius_m"), "must be non-negative");
            }
            if h.walkers > h.ues {
                return bad(format!("hotspot[{i}].walkers"), "cannot exceed ues");
            }
            if !(h.speed_mps.is_finite() && h.speed_mps >= 0.0) {
                return bad(format!("hotspot[{i}].speed_mps"), "must be non-negative");
            }
            if h.waypoints == 0 {
                return bad(format!("hotspot[{i}].waypoints"), "must be at least 1");
            }
        }
        let total = self.ue.len() + self.hotspot.iter().map(|h| h.ues).sum::<usize>();
        for (i, &id) in self.exclude_ues.iter().enumerate() {
            if id >= total {
                return bad(format!("exclude_ues[{i}]"), "no UE with this id");
            }
        }
        let mut ex = self.exclude_ues.clone();
        ex.sort_unstable();
        ex.dedup();
        if total == ex.len() {
            return bad("ue".into(), "at least one UE is required");
        }
        self.learner.validate()
    }
}

/// A UE moving along a polyline at constant speed, stopping at its end.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub waypoints: Vec<Point>,
    pub speed: f64,
}

impl Trajectory {
    pub fn position_at(&self, t: f64) -> Point {
        let mut left = self.speed * t;
        for w in self.waypoints.windows(2) {
            let seg = w[0].distance(&w[1]);
            if left <= seg {
                if seg == 0.0 {
                    return w[0];
                }
                let f = left / seg;
                return Point::new(w[0].x + f * (w[1].x - w[0].x), w[0].y + f * (w[1].y - w[0].y));
            }
            left -= seg;
        }
        *self.waypoints.last().expect("trajectory has waypoints")
    }
}

const TAG_HOTSPOT: u64 = 0x4853;

fn disk_point(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64) -> Point {
    let rho = r * rng.random::<f64>().sqrt();
    let th = std::f64::consts::TAU * rng.random::<f64>();
    Point::new(cx + rho * th.cos(), cy + rho * th.sin())
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    config: ScenarioConfig,
    pub network: Network,
    pub ues: Vec<Trajectory>,
    pub plan: Plan,
    pub grid: f64,
    pub seeds: Seeds,
    pub convergence: ConvergenceRule,
    /// Learner settings carried by the file; command-line flags override them.
    pub learner: LearnerConfig,
}

/// A loaded scenario plus the `(path, value)` pairs filled in by default.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: NetworkScenario,
    pub defaults: Vec<(String, String)>,
}

impl NetworkScenario {
    pub fn from_config(mut config: ScenarioConfig) -> Result<Self> {
        config.fill_defaults();
        config.validate()?;
        let mut bs = Vec::with_capacity(config.bs.len());
        for (i, b) in config.bs.iter().enumerate() {
            bs.push(BsConfig {
                id: i,
                kind: b.kind,
                position: Point::new(b.x, b.y),
                antennas: b.antennas.expect("filled"),
                tx_power: dbm_to_watts(b.tx_power_dbm.expect("filled")),
            });
        }
        let network = Network {
            bs,
            power: config.power,
            channel: config.channel.to_params(),
            rss_threshold: dbm_to_watts(config.rss_threshold_dbm),
            map_seed: config.seeds.scenario,
        };
        network.validate()?;

        let mut ues = Vec::new();
        for u in &config.ue {
            ues.push(Trajectory {
                id: ues.len(),
                waypoints: u.waypoints.iter().map(|p| Point::new(p[0], p[1])).collect(),
                speed: u.speed_mps,
            });
        }
        for (h_idx, h) in config.hotspot.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_of(&[TAG_HOTSPOT, config.seeds.scenario, h_idx as u64]));
            for k in 0..h.ues {
                let start = disk_point(&mut rng, h.x, h.y, h.radius_m);
                let (waypoints, speed) = if k < h.walkers {
                    let mut w = vec![start];
                    for _ in 1..h.waypoints {
                        w.push(disk_point(&mut rng, h.x, h.y, h.radius_m));
                    }
                    (w, h.speed_mps)
                } else {
                    (vec![start], 0.0)
                };
                ues.push(Trajectory { id: ues.len(), waypoints, speed });
            }
        }
        ues.retain(|t| !config.exclude_ues.contains(&t.id));

        Ok(Self {
            network,
            ues,
            plan: config.plan,
            grid: config.grid_m,
            seeds: config.seeds,
            convergence: config.convergence,
            learner: config.learner.clone(),
            config,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Loaded> {
        let input: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::validation("(toml)", e.to_string().trim_end()))?;
        let config: ScenarioConfig = serde_path_to_error::deserialize(input.clone()).map_err(|e| {
            let mut path = e.path().to_string();
            let reason = e.inner().to_string();
            if let Some(field) = reason.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
            Error::validation(path, reason)
        })?;
        let scenario = Self::from_config(config)?;
        let resolved = toml::Value::try_from(&scenario.config)
            .map_err(|e| Error::validation("(toml)", e.to_string()))?;
        let mut defaults = Vec::new();
        missing_leaves(&toml::Value::Table(input), &resolved, "", &mut defaults);
        Ok(Loaded { scenario, defaults })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Loaded> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The bundled desk-scale scenario: one macro and five picos.
    pub fn default_scenario() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO)
            .expect("bundled scenario is valid")
            .scenario
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_SCENARIO
    }

    /// Fully resolved configuration; loading it yields this scenario again.
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.config).map_err(|e| Error::validation("(toml)", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds the scenario after editing its configuration.
    pub fn modified(&self, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Self> {
        let mut cfg = self.config.clone();
        edit(&mut cfg);
        Self::from_config(cfg)
    }

    pub fn n_ue(&self) -> usize {
        self.ues.len()
    }

    pub fn batch_time(&self, batch: usize) -> f64 {
        batch as f64 * self.plan.gap_s
    }

    pub fn ues_at(&self, t: f64) -> Vec<UeState> {
        self.ues
            .iter()
            .map(|tr| UeState { id: tr.id, position: tr.position_at(t), speed: tr.speed })
            .collect()
    }

    pub fn episode_seed(&self, pass: usize, batch: usize) -> u64 {
        seed_of(&[self.seeds.channel, pass as u64, batch as u64])
    }
}

fn leaf_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Collects leaves of `resolved` that have no counterpart in `input`.
fn missing_leaves(input: &toml::Value, resolved: &toml::Value, path: &str, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match (input, resolved) {
        (toml::Value::Table(i), toml::Value::Table(r)) => {
            for (k, rv) in r {
                match i.get(k) {
                    Some(iv) => missing_leaves(iv, rv, &join(k), out),
                    None => all_leaves(rv, &join(k), out),
                }
            }
        }
        (toml::Value::Array(i), toml::Value::Array(r)) => {
            for (n, (iv, rv)) in i.iter().zip(r).enumerate() {
                missing_leaves(iv, rv, &format!("{path}[{n}]"), out);
            }
        }
        _ => {}
    }
}

fn all_leaves(v: &toml::Value, path: &str, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, x) in t {
                all_leaves(x, &format!("{path}.{k}"), out);
            }
        }
        other => out.push((path.to_string(), leaf_text(other))),
    }
}
