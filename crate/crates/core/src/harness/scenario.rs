use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintConfig;
use crate::dynamics::{ModelKind, Scheme, TireParams, VehicleParams};
use crate::planner::{CostWeights, Goal, PlannerConfig};
use crate::terrain::{
    build_sdist_map, gaussian_smooth, read_heightmap, synth_terrain, GridSpec, Heightmap,
    Perimeter, PerimeterKind, SignedDistanceMap, TerrainSpec,
};
use crate::{Error, Result};

/// Which terrain level of detail the plant and each formulation see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setup {
    /// Plant on raw terrain, each formulation on its own LOD.
    One,
    /// Plant on the SRB LOD, each formulation on its own LOD.
    Two,
    /// Everything on the EST LOD.
    Three,
}

impl TryFrom<u8> for Setup {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Setup::One),
            2 => Ok(Setup::Two),
            3 => Ok(Setup::Three),
            _ => Err(format!("setup must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Setup> for u8 {
    fn from(s: Setup) -> u8 {
        match s {
            Setup::One => 1,
            Setup::Two => 2,
            Setup::Three => 3,
        }
    }
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Layers {
    One(TerrainSpec),
    Many(Vec<TerrainSpec>),
}

impl Layers {
    pub fn as_slice(&self) -> &[TerrainSpec] {
        match self {
            Layers::One(s) => std::slice::from_ref(s),
            Layers::Many(v) => v,
        }
    }
}

/// Terrain from a heightmap file, or a sum of synthetic layers on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSource {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<Layers>,
    #[serde(default)]
    pub grid: Option<GridSpec<f64>>,
}

impl TerrainSource {
    /// Reads the heightmap file, or sums the synthetic layers on the grid.
    pub fn build(&self) -> Result<Heightmap<f64>> {
        if let Some(path) = &self.file {
            let f = File::open(path)
                .map_err(|e| Error::config(format!("terrain file {}: {e}", path.display())))?;
            return read_heightmap(BufReader::new(f));
        }
        let grid = self
            .grid
            .ok_or_else(|| Error::config("terrain.grid is required"))?;
        let layers = self.synth.as_ref().map(|l| l.as_slice()).unwrap_or(&[]);
        let mut heights = vec![0.0; grid.len()];
        for l in layers {
            let m = synth_terrain(l, grid)?;
            for (h, v) in heights.iter_mut().zip(m.heights()) {
                *h += v;
            }
        }
        Heightmap::new(grid, heights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub psi: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_goal_radius")]
    pub radius: f64,
}

fn default_goal_radius() -> f64 {
    Goal::<f64>::DEFAULT_RADIUS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSpec {
    pub a_by_bar: f64,
    pub eps_dist: f64,
    pub sigma: f64,
    pub safety_factor: f64,
    pub distance: bool,
    pub rollover: bool,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            a_by_bar: ConstraintConfig::<f64>::DEFAULT_A_BY_BAR,
            eps_dist: ConstraintConfig::<f64>::DEFAULT_EPS_DIST,
            sigma: ConstraintConfig::<f64>::DEFAULT_SIGMA,
            safety_factor: ConstraintConfig::<f64>::DEFAULT_SAFETY_FACTOR,
            distance: true,
            rollover: true,
        }
    }
}

impl ConstraintSpec {
    pub fn build(&self, vp: &VehicleParams<f64>) -> Result<ConstraintConfig<f64>> {
        let cfg = ConstraintConfig {
            a_by_bar: self.a_by_bar,
            eps_dist: self.eps_dist,
            sigma: self.sigma,
            safety_factor: self.safety_factor,
            enable_distance: self.distance,
            enable_rollover: self.rollover,
            ..ConstraintConfig::for_vehicle(vp)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSpec {
    pub w_t: f64,
    pub w_c: f64,
    pub w_g: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        let w = CostWeights::<f64>::default();
        Self {
            w_t: w.w_t,
            w_c: w.w_c,
            w_g: w.w_g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSpec {
    pub model: ModelKind,
    pub n_samples: usize,
    pub dt_int: f64,
    pub scheme: Scheme,
    pub n_t: usize,
    pub dt_zoh: f64,
    pub delta_rate_max: f64,
    pub workers: usize,
    pub weights: WeightSpec,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        let d = PlannerConfig::<f64>::default();
        Self {
            model: d.model,
            n_samples: d.n_samples,
            dt_int: d.dt_int,
            scheme: d.scheme,
            n_t: d.n_t,
            dt_zoh: d.dt_zoh,
            delta_rate_max: d.delta_rate_max,
            workers: d.workers,
            weights: WeightSpec::default(),
        }
    }
}

impl PlannerSpec {
    pub fn build(&self, model: ModelKind, seed: u64) -> Result<PlannerConfig<f64>> {
        let cfg = PlannerConfig {
            n_samples: self.n_samples,
            seed,
            model,
            dt_int: self.dt_int,
            scheme: self.scheme,
            n_t: self.n_t,
            dt_zoh: self.dt_zoh,
            delta_rate_max: self.delta_rate_max,
            workers: self.workers,
            weights: CostWeights::new(self.weights.w_t, self.weights.w_c, self.weights.w_g)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSpec {
    /// Prescribed speeds for batches; empty means the start speed only.
    pub speeds: Vec<f64>,
    pub setup: Setup,
    pub n_trials: usize,
    pub seed: u64,
    pub formulations: Vec<ModelKind>,
    pub timeout: f64,
    pub plan_period: f64,
    pub plant_dt: f64,
    pub plant_substep: f64,
    pub rollover_angle_deg: f64,
    pub perturb_lateral: f64,
    pub perturb_heading: f64,
    pub lod_sigma_srb: f64,
    pub lod_sigma_est: f64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            speeds: vec![],
            setup: Setup::One,
            n_trials: 1,
            seed: 0,
            formulations: vec![ModelKind::Est, ModelKind::Srb],
            timeout: 60.0,
            plan_period: 0.04,
            plant_dt: 0.01,
            plant_substep: 0.001,
            rollover_angle_deg: 72.0,
            perturb_lateral: 0.5,
            perturb_heading: 0.05,
            lod_sigma_srb: 0.3,
            lod_sigma_est: 1.5,
        }
    }
}

/// A navigation task and everything needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub terrain: TerrainSource,
    #[serde(default)]
    pub perimeters: Vec<Perimeter<f64>>,
    pub start: StartSpec,
    pub goal: GoalSpec,
    #[serde(default)]
    pub vehicle: VehicleParams<f64>,
    #[serde(default)]
    pub tires: TireParams<f64>,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub trial: TrialSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario file; a relative terrain path resolves against the
    /// scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        if let Some(f) = s.terrain.file.as_mut() {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.terrain.file, &self.terrain.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "terrain: give either `file` or `synth`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "terrain: one of `file` or `synth` is required",
                ))
            }
            (None, Some(layers)) => {
                if self.terrain.grid.is_none() {
                    return Err(Error::config("terrain.grid is required with `synth`"));
                }
                for l in layers.as_slice() {
                    l.validate()?;
                }
            }
            _ => {}
        }
        if let Some(g) = &self.terrain.grid {
            g.validate()?;
        }
        for p in &self.perimeters {
            p.validate()?;
        }
        let st = &self.start;
        if ![st.x, st.y, st.psi].iter().all(|v| v.is_finite()) {
            return Err(Error::config("start: position and heading must be finite"));
        }
        if !(st.speed > 0.0 && st.speed.is_finite()) {
            return Err(Error::config(format!(
                "start.speed must be positive, got {}",
                st.speed
            )));
        }
        for p in &self.perimeters {
            if p.kind == PerimeterKind::Obstacle && p.contains([st.x, st.y]) {
                return Err(Error::config("start lies inside an obstacle"));
            }
        }
        Goal::new(self.goal.x, self.goal.y, self.goal.radius)?;
        self.vehicle.validate()?;
        self.tires.validate()?;
        self.constraints.build(&self.vehicle)?;
        self.planner.build(self.planner.model, 0)?;
        let t = &self.trial;
        if t.speeds.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("trial.speeds must be positive"));
        }
        if t.formulations.is_empty() {
            return Err(Error::config("trial.formulations must not be empty"));
        }
        for (name, v) in [
            ("timeout", t.timeout),
            ("plan_period", t.plan_period),
            ("plant_dt", t.plant_dt),
            ("plant_substep", t.plant_substep),
            ("rollover_angle_deg", t.rollover_angle_deg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "trial.{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("perturb_lateral", t.perturb_lateral),
            ("perturb_heading", t.perturb_heading),
            ("lod_sigma_srb", t.lod_sigma_srb),
            ("lod_sigma_est", t.lod_sigma_est),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "trial.{name} must be non-negative, got {v}"
                )));
            }
        }
        crate::dynamics::steps_per_segment(t.plan_period, t.plant_dt)
            .map_err(|e| Error::config(format!("trial.plant_dt: {e}")))?;
        crate::dynamics::steps_per_segment(t.plant_dt, t.plant_substep)
            .map_err(|e| Error::config(format!("trial.plant_substep: {e}")))?;
        crate::dynamics::steps_per_segment(t.plan_period, self.planner.dt_int)
            .map_err(|e| Error::config(format!("planner.dt_int vs trial.plan_period: {e}")))?;
        Ok(())
    }

    pub fn goal(&self) -> Goal<f64> {
        Goal {
            x: self.goal.x,
            y: self.goal.y,
            radius: self.goal.radius,
        }
    }

    pub fn speeds(&self) -> Vec<f64> {
        if self.trial.speeds.is_empty() {
            vec![self.start.speed]
        } else {
            self.trial.speeds.clone()
        }
    }

    /// Loads or synthesizes the raw (plant LOD) terrain.
    pub fn raw_terrain(&self) -> Result<Heightmap<f64>> {
        self.terrain.build()
    }
}

/// Terrain levels of detail and the feature map for one scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub raw: Heightmap<f64>,
    pub srb_lod: Heightmap<f64>,
    pub est_lod: Heightmap<f64>,
    pub sdist: SignedDistanceMap<f64>,
}

impl World {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let raw = scenario.raw_terrain()?;
        Self::from_terrain(
            raw,
            &scenario.perimeters,
            scenario.trial.lod_sigma_srb,
            scenario.trial.lod_sigma_est,
        )
    }

    pub fn from_terrain(
        raw: Heightmap<f64>,
        perimeters: &[Perimeter<f64>],
        sigma_srb: f64,
        sigma_est: f64,
    ) -> Result<Self> {
        let srb_lod = gaussian_smooth(&raw, sigma_srb);
        let est_lod = gaussian_smooth(&raw, sigma_est);
        let sdist = build_sdist_map(*raw.spec(), perimeters)?;
        Ok(Self {
            raw,
            srb_lod,
            est_lod,
            sdist,
        })
    }

    pub fn plant_terrain(&self, setup: Setup) -> &Heightmap<f64> {
        match setup {
            Setup::One => &self.raw,
            Setup::Two => &self.srb_lod,
            Setup::Three => &self.est_lod,
        }
    }

    pub fn planner_terrain(&self, setup: Setup, model: ModelKind) -> &Heightmap<f64> {
        match (setup, model) {
            (Setup::Three, _) | (_, ModelKind::Est) => &self.est_lod,
            (_, ModelKind::Srb) => &self.srb_lod,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "terrain": {"synth": {"kind": "flat"}, "grid": {"origin_x": -5, "origin_y": -5, "resolution": 0.5, "nx": 61, "ny": 21}},
        "start": {"x": 0, "y": 0, "speed": 5},
        "goal": {"x": 20, "y": 0}
    }"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.goal.radius, 2.5);
        assert_eq!(s.trial.setup, Setup::One);
        assert_eq!(s.trial.timeout, 60.0);
        assert_eq!(s.vehicle, VehicleParams::mrzr_d4());
        assert_eq!(s.planner.n_t, 16);
        assert_eq!(s.speeds(), vec![5.0]);
        let w = World::build(&s).unwrap();
        assert!(w.sdist.is_featureless());
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        let bad = MINIMAL.replace("\"speed\": 5", "\"sped\": 5");
        let e = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("sped"), "{e}");
        let bad = MINIMAL.replace("\"speed\": 5", "\"speed\": -1");
        let e = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("start.speed"), "{e}");
        let bad = MINIMAL.replace(
            "\"goal\": {\"x\": 20, \"y\": 0}",
            "\"goal\": {\"x\": 20, \"y\": 0}, \"trial\": {\"setup\": 4}",
        );
        let e = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("setup"), "{e}");
    }

    #[test]
    fn start_inside_obstacle_is_rejected() {
        let bad = MINIMAL.replace(
            "\"start\"",
            "\"perimeters\": [{\"kind\": \"obstacle\", \"vertices\": [[-1,-1],[1,-1],[1,1],[-1,1]]}], \"start\"",
        );
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn lod_assignment() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let w = World::build(&s).unwrap();
        assert!(std::ptr::eq(w.plant_terrain(Setup::One), &w.raw));
        assert!(std::ptr::eq(w.plant_terrain(Setup::Two), &w.srb_lod));
        assert!(std::ptr::eq(w.plant_terrain(Setup::Three), &w.est_lod));
        assert!(std::ptr::eq(
            w.planner_terrain(Setup::One, ModelKind::Srb),
            &w.srb_lod
        ));
        assert!(std::ptr::eq(
            w.planner_terrain(Setup::Two, ModelKind::Est),
            &w.est_lod
        ));
        assert!(std::ptr::eq(
            w.planner_terrain(Setup::Three, ModelKind::Srb),
            &w.est_lod
        ));
    }

    #[test]
    fn layers_sum() {
        let text = MINIMAL.replace(
            "{\"kind\": \"flat\"}",
            "[{\"kind\": \"flat\", \"height\": 1.0}, {\"kind\": \"ramp\", \"slope_x\": 0.1}]",
        );
        let s = Scenario::from_json(&text).unwrap();
        let t = s.raw_terrain().unwrap();
        assert!((t.height_at(10.0, 0.0) - 2.0).abs() < 1e-12);
    }
}
