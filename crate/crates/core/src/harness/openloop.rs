use crate::constraints::{esm, esm_from_rotation};
use crate::dynamics::{
    integrate, rot_123, steps_per_segment, Control, ControlSequence, EstModel, ModelKind, Scheme,
    SrbModel, TireParams, VehicleParams,
};
use crate::terrain::Heightmap;
use crate::{Error, Result};

use super::trial::{planner_state, TrialRow};
use crate::planner::PlannerState;

/// How a model is replayed against the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenLoopConfig {
    pub horizon: f64,
    /// Hold duration of the recorded controls (the planning period).
    pub control_period: f64,
    pub dt_int: f64,
    pub scheme: Scheme,
}

impl Default for OpenLoopConfig {
    fn default() -> Self {
        Self {
            horizon: 4.0,
            control_period: 0.04,
            dt_int: 0.005,
            scheme: Scheme::Euler,
        }
    }
}

/// Time-averaged absolute errors of one open-loop replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenLoopError {
    /// Planar position error, m.
    pub location: f64,
    /// ESM error, J.
    pub esm: f64,
}

/// Replays `model` open-loop from the first plant row with the recorded
/// controls and compares position and ESM against the plant over `horizon`.
///
/// `rows` are plant states at a fixed step; `controls[i]` was applied over
/// `[i, i + 1) * control_period` measured from `rows[0].t`.
#[allow(clippy::too_many_arguments)]
pub fn open_loop_errors(
    rows: &[TrialRow],
    controls: &[Control<f64>],
    model: ModelKind,
    model_terrain: &Heightmap<f64>,
    plant_terrain: &Heightmap<f64>,
    vp: &VehicleParams<f64>,
    tp: &TireParams<f64>,
    cfg: &OpenLoopConfig,
) -> Result<OpenLoopError> {
    if rows.len() < 2 {
        return Err(Error::Analysis(
            "plant trajectory has fewer than two states".into(),
        ));
    }
    let plant_dt = rows[1].t - rows[0].t;
    let n_rows = (cfg.horizon / plant_dt).round() as usize;
    let n_ctrl = steps_per_segment(cfg.horizon, cfg.control_period)?;
    if rows.len() <= n_rows || controls.len() < n_ctrl {
        return Err(Error::Analysis(format!(
            "plant trajectory shorter than the {} s horizon",
            cfg.horizon
        )));
    }
    let per_row = steps_per_segment(plant_dt, cfg.dt_int)?;
    let seq = ControlSequence::new(controls[..n_ctrl].to_vec(), cfg.control_period)?;
    let start = planner_state(&rows[0].state, model, plant_terrain, model_terrain);

    // (x, y, esm) of the model at every plant row
    let track: Vec<(f64, f64, f64)> = match start {
        PlannerState::Srb(s0) => {
            let m = SrbModel::new(model_terrain, vp, tp);
            integrate(&m, &s0, &seq, cfg.dt_int, cfg.scheme)?
                .iter()
                .step_by(per_row)
                .map(|s| (s.x, s.y, esm(s.phi, s.theta, vp)))
                .collect()
        }
        PlannerState::Est(s0) => {
            let m = EstModel::new(model_terrain, vp, tp);
            integrate(&m, &s0, &seq, cfg.dt_int, cfg.scheme)?
                .iter()
                .step_by(per_row)
                .map(|s| {
                    let (roll, pitch) = m.local_attitude(s.x, s.y);
                    (
                        s.x,
                        s.y,
                        esm_from_rotation(&rot_123(roll, pitch, s.psi), vp),
                    )
                })
                .collect()
        }
    };

    let (mut loc, mut e) = (0.0, 0.0);
    for j in 1..=n_rows {
        let p = &rows[j].state;
        let (x, y, u) = track[j];
        loc += (x - p.x).hypot(y - p.y) * plant_dt;
        e += (u - esm(p.phi, p.theta, vp)).abs() * plant_dt;
    }
    Ok(OpenLoopError {
        location: loc / cfg.horizon,
        esm: e / cfg.horizon,
    })
}

/// Open-loop replay of one model from one start row.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Plant time of the first row, s.
    pub start: f64,
    pub model: ModelKind,
    /// Errors, or why the replay failed (divergence, attitude domain).
    pub result: std::result::Result<OpenLoopError, String>,
}

/// Recovers the per-period commands of a logged trial: the command applied
/// at every `plan_steps`-th row.
pub fn controls_from_rows(rows: &[TrialRow], plan_steps: usize) -> Vec<Control<f64>> {
    rows.iter()
        .step_by(plan_steps.max(1))
        .map(|r| Control::steer(r.delta_rate_cmd))
        .collect()
}

/// Cuts a plant trajectory into horizon-long segments starting every
/// `stride_periods` planning periods and replays each listed model on each.
/// Segments that do not fit in the trajectory are skipped; failed replays are
/// kept with their reason.
#[allow(clippy::too_many_arguments)]
pub fn open_loop_segments<'t>(
    rows: &[TrialRow],
    controls: &[Control<f64>],
    stride_periods: usize,
    models: &[ModelKind],
    model_terrain: impl Fn(ModelKind) -> &'t Heightmap<f64>,
    plant_terrain: &Heightmap<f64>,
    vp: &VehicleParams<f64>,
    tp: &TireParams<f64>,
    cfg: &OpenLoopConfig,
) -> Result<Vec<Segment>> {
    if rows.len() < 2 {
        return Ok(vec![]);
    }
    let plant_dt = rows[1].t - rows[0].t;
    let plan_steps = steps_per_segment(cfg.control_period, plant_dt)?;
    let n_rows = (cfg.horizon / plant_dt).round() as usize;
    let n_ctrl = steps_per_segment(cfg.horizon, cfg.control_period)?;
    let stride = stride_periods.max(1);
    let mut out = vec![];
    let mut p = 0;
    while (p * plan_steps) + n_rows < rows.len() && p + n_ctrl <= controls.len() {
        let r0 = p * plan_steps;
        for &m in models {
            let result = match open_loop_errors(
                &rows[r0..],
                &controls[p..],
                m,
                model_terrain(m),
                plant_terrain,
                vp,
                tp,
                cfg,
            ) {
                Ok(e) => Ok(e),
                Err(e @ (Error::Diverged { .. } | Error::Domain(_))) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            out.push(Segment {
                start: rows[r0].t,
                model: m,
                result,
            });
        }
        p += stride;
    }
    Ok(out)
}
