//! Optimal control problem assembly and the sampling ("empirical argmin")
//! solver: draw `N` i.i.d. control sequences, roll each out through the
//! chosen model, and keep the cheapest.

use std::ops::ControlFlow;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constraints::{
    constraint_set_cost, esm, wheel_footprint, ConstraintConfig, RolloverMeasure,
};
use crate::dynamics::{
    rollout, steps_per_segment, Control, ControlSequence, EstModel, EstState, ModelKind, Scheme,
    SrbModel, SrbState, TireParams, VehicleModel, VehicleParams,
};
use crate::terrain::{Heightmap, SignedDistanceMap};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights<T = f64> {
    /// Time-to-goal weight, cost/s.
    pub w_t: T,
    /// Steering-rate weight, cost/s per (rad/s)².
    pub w_c: T,
    /// Terminal distance weight, cost/m.
    pub w_g: T,
}

impl<T: Real> CostWeights<T> {
    pub fn new(w_t: T, w_c: T, w_g: T) -> Result<Self> {
        let w = Self { w_t, w_c, w_g };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_t", self.w_t), ("w_c", self.w_c), ("w_g", self.w_g)] {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(Error::config(format!(
                    "weights.{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl<T: Real> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            w_t: T::lit(5.0),
            w_c: T::lit(8.0),
            w_g: T::lit(15.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal<T = f64> {
    pub x: T,
    pub y: T,
    pub radius: T,
}

impl<T: Real> Goal<T> {
    pub const DEFAULT_RADIUS: f64 = 2.5;

    pub fn new(x: T, y: T, radius: T) -> Result<Self> {
        if !(radius > T::zero() && radius.is_finite()) || !x.is_finite() || !y.is_finite() {
            return Err(Error::config(format!(
                "goal radius must be positive, got {radius}"
            )));
        }
        Ok(Self { x, y, radius })
    }

    pub fn at(x: T, y: T) -> Self {
        Self {
            x,
            y,
            radius: T::lit(Self::DEFAULT_RADIUS),
        }
    }

    #[inline]
    pub fn distance(&self, x: T, y: T) -> T {
        (x - self.x).hypot(y - self.y)
    }

    #[inline]
    pub fn reached(&self, x: T, y: T) -> bool {
        self.distance(x, y) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig<T = f64> {
    pub n_samples: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub dt_int: T,
    pub scheme: Scheme,
    /// Number of hold segments and their duration.
    pub n_t: usize,
    pub dt_zoh: T,
    /// Steering-rate samples are uniform on `±delta_rate_max`.
    pub delta_rate_max: T,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    pub weights: CostWeights<T>,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        Self {
            n_samples: 1024,
            seed: 0,
            model: ModelKind::Srb,
            dt_int: T::lit(0.005),
            scheme: Scheme::Euler,
            n_t: 16,
            dt_zoh: T::lit(0.25),
            delta_rate_max: T::one(),
            workers: 0,
            weights: CostWeights::default(),
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("planner.n_samples must be at least 1"));
        }
        if self.n_t == 0 {
            return Err(Error::config("planner.n_t must be at least 1"));
        }
        if !(self.dt_zoh > T::zero()) {
            return Err(Error::config("planner.dt_zoh must be positive"));
        }
        if !(self.delta_rate_max >= T::zero() && self.delta_rate_max.is_finite()) {
            return Err(Error::config("planner.delta_rate_max must be non-negative"));
        }
        steps_per_segment(self.dt_zoh, self.dt_int)?;
        self.weights.validate()
    }

    pub fn horizon(&self) -> T {
        self.dt_zoh * T::from_usize(self.n_t).unwrap()
    }
}

/// Cost terms of one rollout. `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown<T = f64> {
    pub time: T,
    pub control: T,
    pub terminal: T,
    pub distance: T,
    pub rollover: T,
}

impl<T: Real> CostBreakdown<T> {
    pub fn total(&self) -> T {
        self.time + self.control + self.terminal + self.distance + self.rollover
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult<T = f64> {
    pub cost: T,
    pub breakdown: CostBreakdown<T>,
    /// Time at which the goal circle was first entered.
    pub goal_time: Option<T>,
    /// Planar pose `(x, y, psi)` at every visited grid state, when requested.
    pub trajectory: Option<Vec<[T; 3]>>,
}

impl<T: Real> RolloutResult<T> {
    pub fn diverged() -> Self {
        Self {
            cost: T::infinity(),
            breakdown: CostBreakdown::default(),
            goal_time: None,
            trajectory: None,
        }
    }
}

/// A vehicle model that the cost function can query.
pub trait PlanningModel<T: Real>: VehicleModel<T> {
    fn pose(s: &Self::State) -> [T; 3];
    fn rollover_measure(&self, s: &Self::State, aux: &Self::Aux) -> RolloverMeasure<T>;
}

impl<T: Real> PlanningModel<T> for EstModel<'_, T> {
    #[inline]
    fn pose(s: &EstState<T>) -> [T; 3] {
        [s.x, s.y, s.psi]
    }

    #[inline]
    fn rollover_measure(&self, _: &EstState<T>, aux: &Self::Aux) -> RolloverMeasure<T> {
        RolloverMeasure::LateralAccel {
            a_by: aux.a_by,
            g_by: aux.g_body[1],
        }
    }
}

impl<T: Real> PlanningModel<T> for SrbModel<'_, T> {
    #[inline]
    fn pose(s: &SrbState<T>) -> [T; 3] {
        [s.x, s.y, s.psi]
    }

    #[inline]
    fn rollover_measure(&self, s: &SrbState<T>, _: &Self::Aux) -> RolloverMeasure<T> {
        RolloverMeasure::Esm(esm(s.phi, s.theta, self.vehicle))
    }
}

/// Everything a rollout is scored against.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a, T: Real = f64> {
    pub sdist: &'a SignedDistanceMap<T>,
    pub vehicle: &'a VehicleParams<T>,
    pub constraints: &'a ConstraintConfig<T>,
    pub weights: &'a CostWeights<T>,
    pub goal: &'a Goal<T>,
}

/// Rectangle-rule integrator of `L0 + L_soft` over the integration grid,
/// stopping at the first grid state inside the goal circle.
#[derive(Debug, Clone)]
pub struct CostAccumulator<'a, T: Real = f64> {
    ctx: CostContext<'a, T>,
    dt: T,
    steps: usize,
    breakdown: CostBreakdown<T>,
    goal_time: Option<T>,
    last_pose: Option<[T; 3]>,
    features: bool,
    trajectory: Option<Vec<[T; 3]>>,
    last_rates: (T, T),
}

impl<'a, T: Real> CostAccumulator<'a, T> {
    pub fn new(ctx: CostContext<'a, T>, dt: T, record: bool) -> Self {
        Self {
            features: !ctx.sdist.is_featureless(),
            ctx,
            dt,
            steps: 0,
            breakdown: CostBreakdown::default(),
            goal_time: None,
            last_pose: None,
            trajectory: record.then(Vec::new),
            last_rates: (T::zero(), T::zero()),
        }
    }

    /// Wheel signed distances at a planar pose (`+inf` without features).
    #[inline]
    pub fn wheel_sdists(&self, pose: [T; 3]) -> [T; 4] {
        if !self.features {
            return [T::infinity(); 4];
        }
        wheel_footprint(pose[0], pose[1], pose[2], self.ctx.vehicle)
            .map(|p| self.ctx.sdist.sdist_at(p[0], p[1]))
    }

    /// Visits grid state `k` at time `t`.
    #[inline]
    pub fn visit(
        &mut self,
        t: T,
        pose: [T; 3],
        rollover: RolloverMeasure<T>,
        u: &Control<T>,
    ) -> ControlFlow<()> {
        self.last_pose = Some(pose);
        if let Some(tr) = self.trajectory.as_mut() {
            tr.push(pose);
        }
        if self.ctx.goal.reached(pose[0], pose[1]) {
            self.goal_time = Some(t);
            return ControlFlow::Break(());
        }
        let w = self.ctx.weights;
        let c = constraint_set_cost(&self.wheel_sdists(pose), rollover, self.ctx.constraints);
        let b = &mut self.breakdown;
        b.control = b.control + w.w_c * u.delta_rate * u.delta_rate * self.dt;
        b.distance = b.distance + c.distance * self.dt;
        b.rollover = b.rollover + c.rollover * self.dt;
        self.last_rates = (c.distance, c.rollover);
        self.steps += 1;
        ControlFlow::Continue(())
    }

    /// Holds the last visited state for `n` more grid steps, charging its
    /// time and constraint rates. Used when the model leaves its attitude
    /// domain mid-horizon.
    pub fn hold(&mut self, n: usize) {
        let n_t = T::from_usize(n).unwrap() * self.dt;
        let b = &mut self.breakdown;
        b.distance = b.distance + self.last_rates.0 * n_t;
        b.rollover = b.rollover + self.last_rates.1 * n_t;
        self.steps += n;
    }

    /// Adds the time and terminal terms. The final visited state is the
    /// terminal state; a visit past the last control interval adds no
    /// running cost of its own beyond the rectangle it closes.
    pub fn finish(self) -> RolloutResult<T> {
        let mut b = self.breakdown;
        let w = self.ctx.weights;
        b.time = w.w_t * self.dt * T::from_usize(self.steps).unwrap();
        if let Some(p) = self.last_pose {
            b.terminal = w.w_g * self.ctx.goal.distance(p[0], p[1]);
        }
        RolloutResult {
            cost: b.total(),
            breakdown: b,
            goal_time: self.goal_time,
            trajectory: self.trajectory,
        }
    }
}

/// Rolls `controls` out from `s0` and scores the trajectory.
pub fn trajectory_cost<T: Real, M: PlanningModel<T>>(
    model: &M,
    s0: &M::State,
    controls: &ControlSequence<T>,
    dt_int: T,
    scheme: Scheme,
    ctx: CostContext<'_, T>,
    record: bool,
) -> Result<RolloutResult<T>> {
    let mut acc = CostAccumulator::new(ctx, dt_int, record);
    let per_seg = steps_per_segment(controls.dt_zoh, dt_int)?;
    let total = per_seg * controls.len();
    let r = rollout(model, s0, controls, dt_int, scheme, |k, t, s, aux, u| {
        if k == total {
            // terminal state: only the goal check and pose matter
            acc.last_pose = Some(M::pose(s));
            if let Some(tr) = acc.trajectory.as_mut() {
                tr.push(M::pose(s));
            }
            let p = M::pose(s);
            if acc.ctx.goal.reached(p[0], p[1]) {
                acc.goal_time = Some(t);
            }
            return ControlFlow::Break(());
        }
        acc.visit(t, M::pose(s), model.rollover_measure(s, aux), u)
    });
    match r {
        Ok(_) => {}
        // tipped past the attitude chart: the vehicle is charged as if it
        // stayed at its last state for the rest of the horizon
        Err(Error::Domain(_)) if acc.steps > 0 && acc.goal_time.is_none() => {
            let n = total - acc.steps;
            acc.hold(n);
        }
        Err(e) => return Err(e),
    }
    Ok(acc.finish())
}

/// Counter-based stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one control sequence: `n_t` steering rates uniform on
/// `±delta_rate_max`, zero longitudinal acceleration.
pub fn sample_controls<T: Real, R: Rng>(cfg: &PlannerConfig<T>, rng: &mut R) -> ControlSequence<T> {
    let m = cfg.delta_rate_max.as_f64();
    let controls = (0..cfg.n_t)
        .map(|_| {
            let r = if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
            Control::steer(T::lit(r))
        })
        .collect();
    ControlSequence {
        controls,
        dt_zoh: cfg.dt_zoh,
    }
}

/// The state handed to the planner, matching its model kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlannerState<T = f64> {
    Est(EstState<T>),
    Srb(SrbState<T>),
}

impl<T: Real> PlannerState<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            PlannerState::Est(_) => ModelKind::Est,
            PlannerState::Srb(_) => ModelKind::Srb,
        }
    }

    /// Pose `(x, y, psi)`.
    pub fn pose(&self) -> [T; 3] {
        match self {
            PlannerState::Est(s) => [s.x, s.y, s.psi],
            PlannerState::Srb(s) => [s.x, s.y, s.psi],
        }
    }
}

/// Inputs shared by every rollout of one solve.
#[derive(Debug, Clone, Copy)]
pub struct OcpProblem<'a, T: Real = f64> {
    pub terrain: &'a Heightmap<T>,
    pub sdist: &'a SignedDistanceMap<T>,
    pub vehicle: &'a VehicleParams<T>,
    pub tire: &'a TireParams<T>,
    pub constraints: &'a ConstraintConfig<T>,
    pub goal: &'a Goal<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStats {
    pub n_samples: usize,
    pub n_finite: usize,
    pub best_index: usize,
    pub best_cost: f64,
    /// Mean over finite-cost samples.
    pub mean_cost: f64,
    pub elapsed_s: f64,
    pub rollouts_per_s: f64,
}

#[derive(Debug, Clone)]
pub struct Solution<T: Real = f64> {
    pub controls: ControlSequence<T>,
    pub result: RolloutResult<T>,
    pub stats: SolverStats,
}

/// Scores sample `index` of the stream, returning `+inf` for rollouts that
/// diverge or leave the model's domain.
pub fn sample_cost<T: Real>(
    problem: &OcpProblem<'_, T>,
    state: &PlannerState<T>,
    cfg: &PlannerConfig<T>,
    index: usize,
) -> Result<(ControlSequence<T>, RolloutResult<T>)> {
    let seq = sample_controls(cfg, &mut sample_rng(cfg.seed, index as u64));
    let res = evaluate(problem, state, cfg, &seq, false)?;
    Ok((seq, res))
}

/// Scores a given control sequence. Divergence and domain errors become an
/// infinite cost; configuration errors propagate.
pub fn evaluate<T: Real>(
    problem: &OcpProblem<'_, T>,
    state: &PlannerState<T>,
    cfg: &PlannerConfig<T>,
    seq: &ControlSequence<T>,
    record: bool,
) -> Result<RolloutResult<T>> {
    let weights = cfg.weights;
    let ctx = CostContext {
        sdist: problem.sdist,
        vehicle: problem.vehicle,
        constraints: problem.constraints,
        weights: &weights,
        goal: problem.goal,
    };
    let r = match state {
        PlannerState::Est(s) => {
            let m = EstModel::new(problem.terrain, problem.vehicle, problem.tire);
            trajectory_cost(&m, s, seq, cfg.dt_int, cfg.scheme, ctx, record)
        }
        PlannerState::Srb(s) => {
            let m = SrbModel::new(problem.terrain, problem.vehicle, problem.tire);
            trajectory_cost(&m, s, seq, cfg.dt_int, cfg.scheme, ctx, record)
        }
    };
    match r {
        Ok(r) => Ok(r),
        Err(Error::Diverged { .. } | Error::Domain(_)) => Ok(RolloutResult::diverged()),
        Err(e) => Err(e),
    }
}

/// Solver with an optional dedicated worker pool.
pub struct Planner<T: Real = f64> {
    pub cfg: PlannerConfig<T>,
    pool: Option<rayon::ThreadPool>,
}

impl<T: Real> std::fmt::Debug for Planner<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Planner").field("cfg", &self.cfg).finish()
    }
}

impl<T: Real> Planner<T> {
    pub fn new(cfg: PlannerConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let pool = if cfg.workers > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| Error::Solver(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self { cfg, pool })
    }

    /// Evaluates `N` sampled sequences and returns the cheapest, ties going
    /// to the lowest sample index.
    pub fn solve(
        &self,
        problem: &OcpProblem<'_, T>,
        state: &PlannerState<T>,
    ) -> Result<Solution<T>> {
        let cfg = &self.cfg;
        if state.kind() != cfg.model {
            return Err(Error::config(format!(
                "planner configured for {} but given a {} state",
                cfg.model,
                state.kind()
            )));
        }
        let start = Instant::now();
        let run = || -> Result<Vec<T>> {
            (0..cfg.n_samples)
                .into_par_iter()
                .map(|i| sample_cost(problem, state, cfg, i).map(|(_, r)| r.cost))
                .collect()
        };
        let costs = match &self.pool {
            Some(p) => p.install(run)?,
            None => run()?,
        };
        let elapsed = start.elapsed().as_secs_f64();

        let mut best: Option<(usize, T)> = None;
        let (mut sum, mut n_finite) = (0.0, 0usize);
        for (i, &c) in costs.iter().enumerate() {
            if c.is_finite() {
                sum += c.as_f64();
                n_finite += 1;
                if best.is_none_or(|(_, b)| c < b) {
                    best = Some((i, c));
                }
            }
        }
        let Some((best_index, _)) = best else {
            return Err(Error::Solver(format!(
                "all {} rollouts diverged",
                cfg.n_samples
            )));
        };
        let (controls, _) = sample_cost(problem, state, cfg, best_index)?;
        let result = evaluate(problem, state, cfg, &controls, true)?;
        let stats = SolverStats {
            n_samples: cfg.n_samples,
            n_finite,
            best_index,
            best_cost: result.cost.as_f64(),
            mean_cost: sum / n_finite as f64,
            elapsed_s: elapsed,
            rollouts_per_s: cfg.n_samples as f64 / elapsed.max(1e-12),
        };
        Ok(Solution {
            controls,
            result,
            stats,
        })
    }

    /// Solves and returns the first hold segment of the best sequence.
    pub fn plan_step(
        &self,
        problem: &OcpProblem<'_, T>,
        state: &PlannerState<T>,
    ) -> Result<(Control<T>, Solution<T>)> {
        let sol = self.solve(problem, state)?;
        Ok((sol.controls.controls[0], sol))
    }
}

/// One-shot solve with a pool sized by `cfg.workers`.
pub fn solve_ocp<T: Real>(
    problem: &OcpProblem<'_, T>,
    state: &PlannerState<T>,
    cfg: &PlannerConfig<T>,
) -> Result<Solution<T>> {
    Planner::new(*cfg)?.solve(problem, state)
}

/// Mixes a base seed with an iteration counter into an independent seed.
pub fn derive_seed(base: u64, counter: u64) -> u64 {
    let mut z = base ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
