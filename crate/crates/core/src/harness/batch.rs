use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::scenario::{Scenario, Setup, World};
use super::stats::{mann_whitney_u, median, stat_summary, Proportion};
use super::trial::{run_trial, Outcome, TrialContext, TrialRecord, TrialSettings};
use crate::dynamics::ModelKind;
use crate::planner::derive_seed;
use crate::{Error, Result};

/// Seed of trial `index`; shared by every formulation and speed so that
/// initial conditions are matched.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub speeds: Vec<f64>,
    pub formulations: Vec<ModelKind>,
    pub setup: Setup,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Planner worker override.
    pub workers: Option<usize>,
    pub n_samples: Option<usize>,
    /// Run independent trials concurrently.
    pub parallel: bool,
    /// Keep full trial records in the output.
    pub keep_records: bool,
}

impl BatchPlan {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            speeds: sc.speeds(),
            formulations: sc.trial.formulations.clone(),
            setup: sc.trial.setup,
            n_trials: sc.trial.n_trials,
            base_seed: sc.trial.seed,
            workers: None,
            n_samples: None,
            parallel: true,
            keep_records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub speed: f64,
    pub setup: Setup,
    pub formulation: ModelKind,
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub end_time: f64,
    pub goal_time: Option<f64>,
    pub cost: f64,
    pub collision_time: f64,
    pub max_attitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub speed: f64,
    pub setup: Setup,
    pub formulation: ModelKind,
    pub n: usize,
    /// Indexed like [`Outcome::ALL`].
    pub proportions: [Proportion; 5],
    /// Accrued costs of successful trials.
    pub success_costs: Vec<f64>,
}

impl CellSummary {
    pub fn proportion(&self, o: Outcome) -> Proportion {
        self.proportions[Outcome::ALL.iter().position(|x| *x == o).unwrap()]
    }

    pub fn mean_success_cost(&self) -> Option<f64> {
        if self.success_costs.is_empty() {
            None
        } else {
            Some(self.success_costs.iter().sum::<f64>() / self.success_costs.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchSummary {
    pub base_seed: u64,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialSummary>,
}

pub const SUMMARY_HEADER: &str = "speed,setup,formulation,n,n_success,n_collision,n_rollover,n_timeout,n_aborted,\
p_success,se_success,p_collision,se_collision,p_rollover,se_rollover,p_timeout,se_timeout,p_aborted,se_aborted,\
mean_success_cost,base_seed";

pub const TRIALS_HEADER: &str =
    "speed,setup,formulation,trial,seed,outcome,end_time,goal_time,cost,collision_time,max_attitude";

impl BatchSummary {
    /// Groups trial summaries into (speed, setup, formulation) cells in
    /// first-seen order.
    pub fn from_trials(base_seed: u64, trials: Vec<TrialSummary>) -> Result<Self> {
        let mut keys: Vec<(f64, Setup, ModelKind)> = vec![];
        for t in &trials {
            let k = (t.speed, t.setup, t.formulation);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut cells = vec![];
        for (speed, setup, formulation) in keys {
            let members: Vec<&TrialSummary> = trials
                .iter()
                .filter(|t| t.speed == speed && t.setup == setup && t.formulation == formulation)
                .collect();
            let n = members.len();
            let mut proportions = [stat_summary(0, n)?; 5];
            for (i, o) in Outcome::ALL.iter().enumerate() {
                proportions[i] =
                    stat_summary(members.iter().filter(|t| t.outcome == *o).count(), n)?;
            }
            cells.push(CellSummary {
                speed,
                setup,
                formulation,
                n,
                proportions,
                success_costs: members
                    .iter()
                    .filter(|t| t.outcome == Outcome::Success)
                    .map(|t| t.cost)
                    .collect(),
            });
        }
        Ok(Self {
            base_seed,
            cells,
            trials,
        })
    }

    pub fn cell(&self, speed: f64, setup: Setup, formulation: ModelKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.speed == speed && c.setup == setup && c.formulation == formulation)
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for c in &self.cells {
            let counts: Vec<String> = c.proportions.iter().map(|p| p.k.to_string()).collect();
            let props: Vec<String> = c
                .proportions
                .iter()
                .map(|p| format!("{},{}", p.p, p.se))
                .collect();
            let mean = c
                .mean_success_cost()
                .map_or(String::new(), |m| m.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.speed,
                c.setup,
                c.formulation,
                c.n,
                counts.join(","),
                props.join(","),
                mean,
                self.base_seed
            )?;
        }
        Ok(())
    }

    pub fn write_trials_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRIALS_HEADER}")?;
        for t in &self.trials {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.speed,
                t.setup,
                t.formulation,
                t.trial,
                t.seed,
                t.outcome,
                t.end_time,
                t.goal_time.map_or(String::new(), |g| g.to_string()),
                t.cost,
                t.collision_time,
                t.max_attitude
            )?;
        }
        Ok(())
    }
}

/// Parses a per-trial CSV written by [`BatchSummary::write_trials_csv`].
pub fn read_trials_csv<R: BufRead>(r: R) -> Result<Vec<TrialSummary>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty trials file"))??;
    if header.trim() != TRIALS_HEADER {
        return Err(Error::parse(1, "not a trials file (header mismatch)"));
    }
    let mut out = vec![];
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::parse(
                n,
                format!("expected 11 fields, got {}", f.len()),
            ));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(n, format!("`{s}`: {e}")))
        };
        let setup: u8 = f[1]
            .trim()
            .parse()
            .map_err(|e| Error::parse(n, format!("setup: {e}")))?;
        out.push(TrialSummary {
            speed: num(f[0])?,
            setup: Setup::try_from(setup).map_err(|e| Error::parse(n, e))?,
            formulation: f[2]
                .parse()
                .map_err(|e: Error| Error::parse(n, e.to_string()))?,
            trial: f[3]
                .trim()
                .parse()
                .map_err(|e| Error::parse(n, format!("trial: {e}")))?,
            seed: f[4]
                .trim()
                .parse()
                .map_err(|e| Error::parse(n, format!("seed: {e}")))?,
            outcome: f[5]
                .parse()
                .map_err(|e: Error| Error::parse(n, e.to_string()))?,
            end_time: num(f[6])?,
            goal_time: if f[7].trim().is_empty() {
                None
            } else {
                Some(num(f[7])?)
            },
            cost: num(f[8])?,
            collision_time: num(f[9])?,
            max_attitude: num(f[10])?,
        });
    }
    Ok(out)
}

/// Success-cost comparison of two formulations in one (speed, setup) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulationComparison {
    pub speed: f64,
    pub setup: Setup,
    pub a: ModelKind,
    pub b: ModelKind,
    pub n_a: usize,
    pub n_b: usize,
    pub median_a: Option<f64>,
    pub median_b: Option<f64>,
    /// Two-sided Mann-Whitney p-value; `None` when either side has no
    /// successful trial.
    pub p_value: Option<f64>,
}

/// Compares the accrued costs of successful trials between EST and SRB for
/// every (speed, setup) present, in first-seen order.
pub fn compare_formulations(trials: &[TrialSummary]) -> Vec<FormulationComparison> {
    let mut keys: Vec<(f64, Setup)> = vec![];
    for t in trials {
        if !keys.contains(&(t.speed, t.setup)) {
            keys.push((t.speed, t.setup));
        }
    }
    let (a, b) = (ModelKind::Est, ModelKind::Srb);
    keys.into_iter()
        .map(|(speed, setup)| {
            let costs = |m: ModelKind| -> Vec<f64> {
                trials
                    .iter()
                    .filter(|t| {
                        t.speed == speed
                            && t.setup == setup
                            && t.formulation == m
                            && t.outcome == Outcome::Success
                    })
                    .map(|t| t.cost)
                    .filter(|c| !c.is_nan())
                    .collect()
            };
            let (ca, cb) = (costs(a), costs(b));
            FormulationComparison {
                speed,
                setup,
                a,
                b,
                n_a: ca.len(),
                n_b: cb.len(),
                median_a: median(&ca),
                median_b: median(&cb),
                p_value: mann_whitney_u(&ca, &cb).ok(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub summary: BatchSummary,
    /// Full records aligned with `summary.trials` when requested (`None`
    /// for trials that ended in an error), otherwise empty.
    pub records: Vec<Option<TrialRecord>>,
}

/// Runs every (speed, formulation, trial) combination of `plan` with matched
/// seeds. Trials that fail with an error are recorded as aborted.
pub fn run_batch(scenario: &Scenario, world: &World, plan: &BatchPlan) -> Result<BatchOutput> {
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
    let start = (scenario.start.x, scenario.start.y, scenario.start.psi);
    let mut jobs = vec![];
    for &speed in &plan.speeds {
        for &model in &plan.formulations {
            for i in 0..plan.n_trials {
                jobs.push((speed, model, i));
            }
        }
    }
    let run = |&(speed, model, i): &(f64, ModelKind, usize)| -> Result<(TrialSummary, Option<TrialRecord>)> {
        let seed = trial_seed(plan.base_seed, i);
        let mut settings = TrialSettings::from_scenario(scenario, model, speed, seed)?;
        settings.setup = plan.setup;
        if let Some(w) = plan.workers {
            settings.planner.workers = w;
        }
        if let Some(n) = plan.n_samples {
            settings.planner.n_samples = n;
        }
        let summary = |outcome, end_time, goal_time, cost, collision_time, max_attitude| TrialSummary {
            speed,
            setup: plan.setup,
            formulation: model,
            trial: i,
            seed,
            outcome,
            end_time,
            goal_time,
            cost,
            collision_time,
            max_attitude,
        };
        match run_trial(&ctx, start, &settings) {
            Ok(rec) => Ok((
                summary(
                    rec.outcome,
                    rec.end_time,
                    rec.goal_time,
                    rec.total_cost,
                    rec.collision_time,
                    rec.max_abs_attitude(),
                ),
                plan.keep_records.then_some(rec),
            )),
            Err(Error::Config(e)) => Err(Error::Config(e)),
            Err(_) => Ok((summary(Outcome::Aborted, 0.0, None, f64::NAN, 0.0, 0.0), None)),
        }
    };
    let results: Vec<(TrialSummary, Option<TrialRecord>)> = if plan.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };
    let mut trials = Vec::with_capacity(results.len());
    let mut records = vec![];
    for (t, r) in results {
        trials.push(t);
        if plan.keep_records {
            records.push(r);
        }
    }
    Ok(BatchOutput {
        summary: BatchSummary::from_trials(plan.base_seed, trials)?,
        records,
    })
}
