use std::io::{BufRead, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Setup, World};
use crate::constraints::{
    constraint_set_cost, esm, wheel_footprint, ConstraintConfig, RolloverMeasure,
};
use crate::dynamics::{
    step, Control, ModelKind, Scheme, SrbModel, SrbState, TireParams, VehicleParams,
};
use crate::planner::{
    derive_seed, CostWeights, Goal, OcpProblem, Planner, PlannerConfig, PlannerState, SolverStats,
};
use crate::terrain::{Heightmap, SignedDistanceMap};
use crate::{Error, Result};

/// How a closed-loop trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// Goal reached after at least one wheel crossed a perimeter.
    Collision,
    Rollover,
    Timeout,
    /// The planner failed (every rollout diverged) or the plant left its domain.
    Aborted,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::Collision,
        Outcome::Rollover,
        Outcome::Timeout,
        Outcome::Aborted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Rollover => "rollover",
            Outcome::Timeout => "timeout",
            Outcome::Aborted => "aborted",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s.trim())
            .ok_or_else(|| Error::parse(0, format!("unknown outcome `{s}`")))
    }
}

/// Plant timing and rollover detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConfig {
    /// Plant step between recorded states, s.
    pub dt: f64,
    /// RK4 substep, s.
    pub substep: f64,
    pub rollover_angle: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            substep: 0.001,
            rollover_angle: 72f64.to_radians(),
        }
    }
}

/// Advances the plant by `dt` with RK4 substeps; the prescribed speed follows
/// `u.v_bx_rate` exactly.
pub fn plant_step(
    s: &SrbState<f64>,
    u: &Control<f64>,
    terrain: &Heightmap<f64>,
    vp: &VehicleParams<f64>,
    tp: &TireParams<f64>,
    dt: f64,
    substep: f64,
) -> Result<SrbState<f64>> {
    let n = crate::dynamics::steps_per_segment(dt, substep)?;
    let model = SrbModel::new(terrain, vp, tp);
    let mut s = *s;
    for k in 0..n {
        let (next, _) = step(&model, &s, u, substep, Scheme::Rk4)?;
        if !crate::dynamics::OdeState::is_finite(&next) {
            return Err(Error::Diverged { step: k + 1 });
        }
        s = next;
    }
    Ok(s)
}

/// One logged plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub t: f64,
    pub state: SrbState<f64>,
    pub delta_rate_cmd: f64,
    pub cost_rate: f64,
    pub min_sdist: f64,
    pub esm: f64,
}

pub const TRIAL_COLUMNS: [&str; 18] = [
    "t",
    "x",
    "y",
    "z",
    "psi",
    "theta",
    "phi",
    "v_bx",
    "v_by",
    "v_bz",
    "omega_bx",
    "omega_by",
    "omega_bz",
    "delta",
    "delta_rate_cmd",
    "cost_rate",
    "min_sdist",
    "esm",
];

/// Per-iteration solver statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub t: f64,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub model: ModelKind,
    pub setup: Setup,
    pub speed: f64,
    pub rows: Vec<TrialRow>,
    /// Steering rate applied during each planning period.
    pub controls: Vec<Control<f64>>,
    pub outcome: Outcome,
    pub end_time: f64,
    pub goal_time: Option<f64>,
    /// Integral of the instantaneous cost rate.
    pub total_cost: f64,
    pub first_collision: Option<f64>,
    /// Time spent with a wheel across a perimeter.
    pub collision_time: f64,
    pub message: Option<String>,
    pub iterations: Vec<IterationStats>,
    pub wall_clock_s: f64,
}

impl TrialRecord {
    /// Writes the trajectory CSV. Output depends only on the simulated data.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", TRIAL_COLUMNS.join(","))?;
        for r in &self.rows {
            let s = r.state.to_array();
            write!(w, "{}", r.t)?;
            for v in s {
                write!(w, ",{v}")?;
            }
            writeln!(
                w,
                ",{},{},{},{}",
                r.delta_rate_cmd, r.cost_rate, r.min_sdist, r.esm
            )?;
        }
        Ok(())
    }

    pub fn write_stats_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,t,best_cost,mean_cost,rollouts_per_s")?;
        for it in &self.iterations {
            writeln!(
                w,
                "{},{},{},{},{}",
                it.iteration, it.t, it.stats.best_cost, it.stats.mean_cost, it.stats.rollouts_per_s
            )?;
        }
        Ok(())
    }

    pub fn max_abs_attitude(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.state.phi.abs().max(r.state.theta.abs()))
            .fold(0.0, f64::max)
    }
}

/// Parses a trajectory CSV written by [`TrialRecord::write_csv`].
pub fn read_trial_csv<R: BufRead>(r: R) -> Result<Vec<TrialRow>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty trial log"))??;
    if header.trim() != TRIAL_COLUMNS.join(",") {
        return Err(Error::parse(1, "unexpected trial log header"));
    }
    let mut rows = vec![];
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(i + 2, e.to_string()))?;
        if v.len() != TRIAL_COLUMNS.len() {
            return Err(Error::parse(
                i + 2,
                format!("expected {} fields, got {}", TRIAL_COLUMNS.len(), v.len()),
            ));
        }
        let mut st = [0.0; 13];
        st.copy_from_slice(&v[1..14]);
        rows.push(TrialRow {
            t: v[0],
            state: SrbState::from_array(st),
            delta_rate_cmd: v[14],
            cost_rate: v[15],
            min_sdist: v[16],
            esm: v[17],
        });
    }
    Ok(rows)
}

/// Settings for one closed-loop trial.
#[derive(Debug, Clone)]
pub struct TrialSettings {
    pub setup: Setup,
    pub model: ModelKind,
    pub speed: f64,
    pub seed: u64,
    pub planner: PlannerConfig<f64>,
    pub plant: PlantConfig,
    pub plan_period: f64,
    pub timeout: f64,
    pub perturb_lateral: f64,
    pub perturb_heading: f64,
    /// Keep per-iteration solver statistics.
    pub keep_stats: bool,
}

impl TrialSettings {
    /// Settings from a scenario for one formulation, speed and seed.
    pub fn from_scenario(sc: &Scenario, model: ModelKind, speed: f64, seed: u64) -> Result<Self> {
        let t = &sc.trial;
        Ok(Self {
            setup: t.setup,
            model,
            speed,
            seed,
            planner: sc.planner.build(model, seed)?,
            plant: PlantConfig {
                dt: t.plant_dt,
                substep: t.plant_substep,
                rollover_angle: t.rollover_angle_deg.to_radians(),
            },
            plan_period: t.plan_period,
            timeout: t.timeout,
            perturb_lateral: t.perturb_lateral,
            perturb_heading: t.perturb_heading,
            keep_stats: false,
        })
    }
}

/// Start pose after the seed-determined perturbation: a lateral offset
/// (perpendicular to the heading) and a heading offset, both uniform.
pub fn perturbed_start(
    x: f64,
    y: f64,
    psi: f64,
    seed: u64,
    lateral: f64,
    heading: f64,
) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let dl = if lateral > 0.0 {
        rng.gen_range(-lateral..=lateral)
    } else {
        0.0
    };
    let dh = if heading > 0.0 {
        rng.gen_range(-heading..=heading)
    } else {
        0.0
    };
    (x - psi.sin() * dl, y + psi.cos() * dl, psi + dh)
}

/// Immutable inputs shared by a trial's components.
#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub world: &'a World,
    pub vehicle: &'a VehicleParams<f64>,
    pub tire: &'a TireParams<f64>,
    pub constraints: &'a ConstraintConfig<f64>,
    pub goal: &'a Goal<f64>,
}

/// Planner view of a plant state on the planner's terrain. For the SRB the
/// chassis is shifted vertically by the LOD height difference under the CoM.
pub fn planner_state(
    plant: &SrbState<f64>,
    model: ModelKind,
    plant_terrain: &Heightmap<f64>,
    planner_terrain: &Heightmap<f64>,
) -> PlannerState<f64> {
    match model {
        ModelKind::Est => PlannerState::Est(plant.to_est()),
        ModelKind::Srb => {
            let mut s = *plant;
            if !std::ptr::eq(plant_terrain, planner_terrain) {
                s.z += planner_terrain.height_at(s.x, s.y) - plant_terrain.height_at(s.x, s.y);
            }
            PlannerState::Srb(s)
        }
    }
}

/// Instantaneous cost rate of a plant state under the formulation's cost.
fn cost_rate(
    s: &SrbState<f64>,
    u: &Control<f64>,
    lateral_specific_force: f64,
    model: ModelKind,
    ctx: &TrialContext<'_>,
    weights: &CostWeights<f64>,
    sdist: &[f64; 4],
) -> f64 {
    let rollover = match model {
        ModelKind::Est => RolloverMeasure::LateralAccel {
            a_by: lateral_specific_force,
            g_by: 0.0,
        },
        ModelKind::Srb => RolloverMeasure::Esm(esm(s.phi, s.theta, ctx.vehicle)),
    };
    let c = constraint_set_cost(sdist, rollover, ctx.constraints);
    weights.w_t + weights.w_c * u.delta_rate * u.delta_rate + c.total()
}

fn wheel_sdists(
    s: &SrbState<f64>,
    vp: &VehicleParams<f64>,
    sdist: &SignedDistanceMap<f64>,
) -> [f64; 4] {
    if sdist.is_featureless() {
        return [f64::INFINITY; 4];
    }
    wheel_footprint(s.x, s.y, s.psi, vp).map(|p| sdist.sdist_at(p[0], p[1]))
}

/// Runs one closed-loop trial: plan every `plan_period`, advance the plant in
/// `plant.dt` steps, and classify the outcome.
pub fn run_trial(
    ctx: &TrialContext<'_>,
    start: (f64, f64, f64),
    settings: &TrialSettings,
) -> Result<TrialRecord> {
    let wall = Instant::now();
    let plant_terrain = ctx.world.plant_terrain(settings.setup);
    let planner_terrain = ctx.world.planner_terrain(settings.setup, settings.model);
    let plan_steps = crate::dynamics::steps_per_segment(settings.plan_period, settings.plant.dt)?;
    let mut planner_cfg = settings.planner;
    planner_cfg.model = settings.model;
    let mut planner = Planner::new(planner_cfg)?;
    let problem = OcpProblem {
        terrain: planner_terrain,
        sdist: &ctx.world.sdist,
        vehicle: ctx.vehicle,
        tire: ctx.tire,
        constraints: ctx.constraints,
        goal: ctx.goal,
    };
    let plant_model = SrbModel::new(plant_terrain, ctx.vehicle, ctx.tire);
    let weights = planner_cfg.weights;

    let (x0, y0, psi0) = perturbed_start(
        start.0,
        start.1,
        start.2,
        settings.seed,
        settings.perturb_lateral,
        settings.perturb_heading,
    );
    let mut s = SrbState::resting_on(plant_terrain, ctx.vehicle, x0, y0, psi0, settings.speed);
    let mut rec = TrialRecord {
        seed: settings.seed,
        model: settings.model,
        setup: settings.setup,
        speed: settings.speed,
        rows: vec![],
        controls: vec![],
        outcome: Outcome::Timeout,
        end_time: 0.0,
        goal_time: None,
        total_cost: 0.0,
        first_collision: None,
        collision_time: 0.0,
        message: None,
        iterations: vec![],
        wall_clock_s: 0.0,
    };
    let dt = settings.plant.dt;
    let limit = settings.plant.rollover_angle;
    let mut u = Control::zero();
    let mut k: usize = 0;

    let log =
        |rec: &mut TrialRecord, k: usize, s: &SrbState<f64>, u: &Control<f64>| -> Result<()> {
            let t = k as f64 * dt;
            let sd = wheel_sdists(s, ctx.vehicle, &ctx.world.sdist);
            let (_, aux) = plant_model.eval(s, u)?;
            let rate = cost_rate(
                s,
                u,
                aux.lateral_specific_force(),
                settings.model,
                ctx,
                &weights,
                &sd,
            );
            let min_sdist = sd.iter().copied().fold(f64::INFINITY, f64::min);
            rec.rows.push(TrialRow {
                t,
                state: *s,
                delta_rate_cmd: u.delta_rate,
                cost_rate: rate,
                min_sdist,
                esm: esm(s.phi, s.theta, ctx.vehicle),
            });
            if min_sdist < 0.0 {
                rec.first_collision.get_or_insert(t);
            }
            Ok(())
        };

    loop {
        let t = k as f64 * dt;
        if ctx.goal.reached(s.x, s.y) {
            log(&mut rec, k, &s, &u).ok();
            rec.goal_time = Some(t);
            rec.outcome = if rec.first_collision.is_some() {
                Outcome::Collision
            } else {
                Outcome::Success
            };
            break;
        }
        if s.phi.abs() > limit || s.theta.abs() > limit {
            log(&mut rec, k, &s, &u).ok();
            rec.outcome = Outcome::Rollover;
            break;
        }
        if t >= settings.timeout - 1e-9 {
            log(&mut rec, k, &s, &u).ok();
            rec.outcome = Outcome::Timeout;
            break;
        }
        if k.is_multiple_of(plan_steps) {
            let iteration = k / plan_steps;
            planner.cfg.seed = derive_seed(settings.seed, iteration as u64);
            let state = planner_state(&s, settings.model, plant_terrain, planner_terrain);
            match planner.plan_step(&problem, &state) {
                Ok((c, sol)) => {
                    u = c;
                    if settings.keep_stats {
                        rec.iterations.push(IterationStats {
                            iteration,
                            t,
                            stats: sol.stats,
                        });
                    }
                }
                Err(e @ Error::Solver(_)) => {
                    // no finite rollout: hold the previous command
                    rec.message.get_or_insert_with(|| format!("t={t:.2}: {e}"));
                }
                Err(e) => return Err(e),
            }
            rec.controls.push(u);
        }
        if let Err(e) = log(&mut rec, k, &s, &u) {
            rec.message = Some(e.to_string());
            rec.outcome = Outcome::Aborted;
            break;
        }
        let row = rec.rows.last().expect("row just logged");
        rec.total_cost += row.cost_rate * dt;
        if row.min_sdist < 0.0 {
            rec.collision_time += dt;
        }
        match plant_step(
            &s,
            &u,
            plant_terrain,
            ctx.vehicle,
            ctx.tire,
            dt,
            settings.plant.substep,
        ) {
            Ok(next) => s = next,
            Err(e @ (Error::Domain(_) | Error::Diverged { .. })) => {
                // the chassis left the Euler-angle domain: it has turned over
                rec.message = Some(e.to_string());
                rec.outcome = if s.phi.abs() > limit * 0.5 || s.theta.abs() > limit * 0.5 {
                    Outcome::Rollover
                } else {
                    Outcome::Aborted
                };
                break;
            }
            Err(e) => return Err(e),
        }
        k += 1;
    }
    rec.end_time = rec.rows.last().map_or(0.0, |r| r.t);
    rec.wall_clock_s = wall.elapsed().as_secs_f64();
    Ok(rec)
}

/// Builds the shared context pieces and runs one trial of `scenario`.
pub fn run_scenario_trial(
    scenario: &Scenario,
    world: &World,
    model: ModelKind,
    speed: f64,
    seed: u64,
    workers: Option<usize>,
) -> Result<TrialRecord> {
    let vp = scenario.vehicle;
    let tp = scenario.tires;
    let cc = scenario.constraints.build(&vp)?;
    let goal = scenario.goal();
    let ctx = TrialContext {
        world,
        vehicle: &vp,
        tire: &tp,
        constraints: &cc,
        goal: &goal,
    };
    let mut settings = TrialSettings::from_scenario(scenario, model, speed, seed)?;
    if let Some(w) = workers {
        settings.planner.workers = w;
    }
    settings.keep_stats = true;
    run_trial(
        &ctx,
        (scenario.start.x, scenario.start.y, scenario.start.psi),
        &settings,
    )
}
