#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmpc::constraints::{critical_mu, ConstraintConfig};
use tmpc::dynamics::{ModelKind, VehicleParams};
use tmpc::harness::{
    compare_formulations, controls_from_rows, mann_whitney_u, median, open_loop_segments,
    read_trial_csv, read_trials_csv, run_batch, run_scenario_trial, BatchPlan, OpenLoopConfig,
    Scenario, Segment, Setup, TerrainSource, TrialRow, TrialSummary, World, SUMMARY_HEADER,
    TRIALS_HEADER,
};
use tmpc::terrain::{
    attenuation, gaussian_smooth, read_heightmap, write_heightmap, GridSpec, TerrainSpec,
};
use tmpc::Error;

#[derive(Parser)]
#[command(
    name = "tmpc",
    version,
    about = "Terrain-aware sampling MPC: terrain tools, trials and analysis"
)]
struct Cli {
    /// Worker threads for rollouts and trials (0 = all cores).
    #[arg(long, global = true, env = "TMPC_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Gaussian-smooth a heightmap and report the attenuation.
    Smooth(SmoothArgs),
    /// Run one closed-loop trial.
    Simulate(SimulateArgs),
    /// Run a matched-seed batch of trials.
    Batch(BatchArgs),
    /// Replay both models open-loop against plant trajectories.
    Openloop(OpenloopArgs),
    /// Compare formulations across batch outputs.
    Analyze(AnalyzeArgs),
    /// Write a synthetic heightmap.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Standard deviation in meters.
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Trajectory CSV.
    #[arg(long)]
    log: PathBuf,
    /// Planner formulation (defaults to the scenario's).
    #[arg(long)]
    model: Option<ModelKind>,
    /// Prescribed speed (defaults to the start speed).
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    setup: Option<u8>,
    /// Samples per planning step.
    #[arg(long)]
    samples: Option<usize>,
    /// Per-iteration solver statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated speeds.
    #[arg(long, value_delimiter = ',')]
    speeds: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated formulations.
    #[arg(long, value_delimiter = ',')]
    formulations: Option<Vec<ModelKind>>,
    /// Base seed (defaults to the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    setup: Option<u8>,
    #[arg(long)]
    samples: Option<usize>,
    /// Skip the per-trial trajectory logs.
    #[arg(long)]
    no_logs: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OpenloopArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Replay horizon, s.
    #[arg(long, default_value_t = 4.0)]
    horizon: f64,
    /// Segment start spacing in planning periods.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Trajectory logs to replay; without it trajectories are generated.
    #[arg(long)]
    logs: Option<PathBuf>,
    /// Generated trials per formulation.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Per-segment errors CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory of batch outputs (searched recursively).
    #[arg(long)]
    summaries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Friction coefficient for the violability check.
    #[arg(long, default_value_t = 0.4)]
    mu: f64,
    /// Lateral acceleration limit, m/s^2.
    #[arg(long, default_value_t = 5.0)]
    a_by_bar: f64,
    #[arg(long, default_value_t = 9.81)]
    g: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Take the terrain block of this scenario.
    #[arg(long, conflicts_with_all = ["layer", "grid"])]
    scenario: Option<PathBuf>,
    /// Terrain layer as JSON, e.g. '{"kind":"sine_ridge","amplitude":0.35,"wavelength":4}'.
    #[arg(long)]
    layer: Vec<String>,
    /// origin_x,origin_y,resolution,nx,ny
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            msg: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

type Res<T = ()> = Result<T, Failure>;

fn must_exist(p: &Path) -> Res {
    if p.exists() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file or directory", p.display())))
    }
}

fn create(p: &Path) -> Res<BufWriter<File>> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(p).map(BufWriter::new).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", p.display()),
    })
}

fn load_scenario(p: &Path) -> Res<Scenario> {
    must_exist(p)?;
    Scenario::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn setup_arg(s: Option<u8>) -> Res<Option<Setup>> {
    s.map(|v| Setup::try_from(v).map_err(usage)).transpose()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers.filter(|&w| w > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let r = match cli.cmd {
        Cmd::Smooth(a) => smooth(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Batch(a) => batch(a),
        Cmd::Openloop(a) => openloop(a),
        Cmd::Analyze(a) => analyze(a),
        Cmd::Synth(a) => synth(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn smooth(a: SmoothArgs) -> Res {
    must_exist(&a.input)?;
    if !(a.sigma >= 0.0) || !a.sigma.is_finite() {
        return Err(usage("--sigma must be a non-negative number"));
    }
    let map = read_heightmap(BufReader::new(File::open(&a.input)?)).map_err(|e| Failure {
        code: 2,
        msg: format!("{}: {e}", a.input.display()),
    })?;
    let out = gaussian_smooth(&map, a.sigma);
    let mut w = create(&a.out)?;
    write_heightmap(&out, &mut w)?;
    w.flush()?;
    let margin = 3.0 * a.sigma;
    match attenuation(&map, &out, margin) {
        Some(r) => println!("sigma={} attenuation={r:.6} margin={margin}", a.sigma),
        None => println!("sigma={} attenuation=n/a margin={margin}", a.sigma),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Res {
    let mut sc = load_scenario(&a.scenario)?;
    if let Some(s) = setup_arg(a.setup)? {
        sc.trial.setup = s;
    }
    if let Some(n) = a.samples {
        sc.planner.n_samples = n;
    }
    let model = a.model.unwrap_or(sc.planner.model);
    let speed = a.speed.unwrap_or(sc.start.speed);
    let world = World::build(&sc)?;
    let rec = run_scenario_trial(&sc, &world, model, speed, a.seed, None)?;
    let mut w = create(&a.log)?;
    rec.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = &a.stats {
        let mut w = create(p)?;
        rec.write_stats_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(m) = &rec.message {
        eprintln!("note: {m}");
    }
    println!(
        "outcome={} t={:.3} cost={} seed={} model={} speed={} setup={}",
        rec.outcome,
        rec.goal_time.unwrap_or(rec.end_time),
        rec.total_cost,
        a.seed,
        model,
        speed,
        rec.setup
    );
    Ok(())
}

fn batch(a: BatchArgs) -> Res {
    let mut sc = load_scenario(&a.scenario)?;
    if let Some(n) = a.samples {
        sc.planner.n_samples = n;
    }
    let world = World::build(&sc)?;
    let mut plan = BatchPlan::from_scenario(&sc);
    if let Some(v) = a.speeds {
        plan.speeds = v;
    }
    if let Some(n) = a.trials {
        plan.n_trials = n;
    }
    if let Some(f) = a.formulations {
        plan.formulations = f;
    }
    if let Some(s) = a.seed {
        plan.base_seed = s;
    }
    if let Some(s) = setup_arg(a.setup)? {
        plan.setup = s;
    }
    if plan.speeds.iter().any(|v| !(*v > 0.0)) {
        return Err(usage("speeds must be positive"));
    }
    plan.keep_records = !a.no_logs;
    let out = run_batch(&sc, &world, &plan)?;
    fs::create_dir_all(&a.out)?;
    let mut w = create(&a.out.join("summary.csv"))?;
    out.summary.write_summary_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("trials.csv"))?;
    out.summary.write_trials_csv(&mut w)?;
    w.flush()?;
    if plan.keep_records {
        let dir = a.out.join("logs");
        fs::create_dir_all(&dir)?;
        for (t, r) in out.summary.trials.iter().zip(&out.records) {
            if let Some(r) = r {
                let mut w = create(&dir.join(log_name(t)))?;
                r.write_csv(&mut w)?;
                w.flush()?;
            }
        }
    }
    for c in &out.summary.cells {
        let p = |o| c.proportion(o);
        use tmpc::harness::Outcome::*;
        println!(
            "speed={} setup={} formulation={} n={} success={:.3}±{:.3} collision={:.3}±{:.3} rollover={:.3}±{:.3} timeout={:.3}±{:.3} aborted={}",
            c.speed,
            c.setup,
            c.formulation,
            c.n,
            p(Success).p,
            p(Success).se,
            p(Collision).p,
            p(Collision).se,
            p(Rollover).p,
            p(Rollover).se,
            p(Timeout).p,
            p(Timeout).se,
            p(Aborted).k
        );
    }
    println!(
        "base_seed={} trials={}",
        plan.base_seed,
        out.summary.trials.len()
    );
    Ok(())
}

fn log_name(t: &TrialSummary) -> String {
    format!(
        "v{}_s{}_{}_{:03}.csv",
        t.speed, t.setup, t.formulation, t.trial
    )
}

/// A plant trajectory to replay, with the terrain setup it ran under.
struct Trajectory {
    name: String,
    rows: Vec<TrialRow>,
    setup: Setup,
}

fn openloop(a: OpenloopArgs) -> Res {
    let mut sc = load_scenario(&a.scenario)?;
    if let Some(n) = a.samples {
        sc.planner.n_samples = n;
    }
    if !(a.horizon > 0.0) {
        return Err(usage("--horizon must be positive"));
    }
    let world = World::build(&sc)?;
    let cfg = OpenLoopConfig {
        horizon: a.horizon,
        control_period: sc.trial.plan_period,
        ..OpenLoopConfig::default()
    };
    let plan_steps = (sc.trial.plan_period / sc.trial.plant_dt).round().max(1.0) as usize;
    let mut trajectories = vec![];
    let base_seed;
    if let Some(dir) = &a.logs {
        must_exist(dir)?;
        base_seed = None;
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            let rows = read_trial_csv(BufReader::new(File::open(&f)?)).map_err(|e| Failure {
                code: 2,
                msg: format!("{}: {e}", f.display()),
            })?;
            trajectories.push(Trajectory {
                name: f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                rows,
                setup: sc.trial.setup,
            });
        }
    } else {
        let mut plan = BatchPlan::from_scenario(&sc);
        plan.keep_records = true;
        if let Some(n) = a.trials {
            plan.n_trials = n;
        }
        if let Some(s) = a.seed {
            plan.base_seed = s;
        }
        if let Some(v) = a.speed {
            plan.speeds = vec![v];
        }
        base_seed = Some(plan.base_seed);
        let out = run_batch(&sc, &world, &plan)?;
        for (t, r) in out.summary.trials.iter().zip(out.records) {
            if let Some(r) = r {
                trajectories.push(Trajectory {
                    name: log_name(t).trim_end_matches(".csv").to_string(),
                    rows: r.rows,
                    setup: t.setup,
                });
            }
        }
    }

    let models = [ModelKind::Est, ModelKind::Srb];
    let mut segs: Vec<(String, Segment)> = vec![];
    for tr in &trajectories {
        let controls = controls_from_rows(&tr.rows, plan_steps);
        let found = open_loop_segments(
            &tr.rows,
            &controls,
            a.stride,
            &models,
            |m| world.planner_terrain(tr.setup, m),
            world.plant_terrain(tr.setup),
            &sc.vehicle,
            &sc.tires,
            &cfg,
        )?;
        segs.extend(found.into_iter().map(|s| (tr.name.clone(), s)));
    }
    if segs.is_empty() {
        return Err(Failure {
            code: 1,
            msg: format!(
                "no segments: no trajectory is longer than the {} s horizon",
                a.horizon
            ),
        });
    }

    let mut w = create(&a.out)?;
    writeln!(w, "trajectory,start,model,location,esm,status")?;
    for (name, s) in &segs {
        match &s.result {
            Ok(e) => writeln!(
                w,
                "{name},{},{},{},{},ok",
                s.start, s.model, e.location, e.esm
            )?,
            Err(msg) => writeln!(
                w,
                "{name},{},{},,,failed: {}",
                s.start,
                s.model,
                msg.replace(',', ";")
            )?,
        }
    }
    w.flush()?;

    let errs = |m: ModelKind, f: fn(&tmpc::harness::OpenLoopError) -> f64| -> Vec<f64> {
        segs.iter()
            .filter(|(_, s)| s.model == m)
            .filter_map(|(_, s)| s.result.as_ref().ok().map(f))
            .collect()
    };
    let failed = segs.iter().filter(|(_, s)| s.result.is_err()).count();
    for m in models {
        let loc = errs(m, |e| e.location);
        let esm = errs(m, |e| e.esm);
        println!(
            "model={m} segments={} median_location={} median_esm={}",
            loc.len(),
            fmt_opt(median(&loc)),
            fmt_opt(median(&esm))
        );
    }
    let p_loc = mann_whitney_u(
        &errs(ModelKind::Srb, |e| e.location),
        &errs(ModelKind::Est, |e| e.location),
    )
    .ok();
    let p_esm = mann_whitney_u(
        &errs(ModelKind::Srb, |e| e.esm),
        &errs(ModelKind::Est, |e| e.esm),
    )
    .ok();
    println!(
        "failed={failed} p_location={} p_esm={} seed={}",
        fmt_opt(p_loc),
        fmt_opt(p_esm),
        base_seed.map_or("n/a".to_string(), |s| s.to_string())
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.6}"))
}

fn csv_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            csv_files(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Res {
    must_exist(&a.summaries)?;
    let mut files = vec![];
    csv_files(&a.summaries, &mut files)?;
    files.sort();
    let mut trials = vec![];
    let mut n_files = 0;
    for f in &files {
        let text = fs::read_to_string(f)?;
        let header = text.lines().next().unwrap_or("").trim();
        let bad = |e: Error| Failure {
            code: 2,
            msg: format!("{}: {e}", f.display()),
        };
        if header == TRIALS_HEADER {
            trials.extend(read_trials_csv(text.as_bytes()).map_err(bad)?);
            n_files += 1;
        } else if header == SUMMARY_HEADER || header == tmpc::harness::TRIAL_COLUMNS.join(",") {
            // aggregates and trajectory logs are recomputable from the trial rows
        } else {
            return Err(bad(Error::parse(1, "unrecognized CSV schema")));
        }
    }
    if n_files == 0 {
        return Err(Failure {
            code: 1,
            msg: format!("{}: no trial summaries found", a.summaries.display()),
        });
    }
    let mut cc = ConstraintConfig::for_vehicle(&VehicleParams::mrzr_d4());
    cc.a_by_bar = a.a_by_bar;
    cc.validate()?;
    let mu = critical_mu(&cc, a.mu, a.g);

    let mut w = create(&a.out)?;
    writeln!(w, "section,speed,setup,metric,value")?;
    let mut seeds: Vec<u64> = trials.iter().map(|t| t.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    writeln!(w, "meta,,,files,{n_files}")?;
    writeln!(w, "meta,,,trials,{}", trials.len())?;
    writeln!(w, "meta,,,distinct_seeds,{}", seeds.len())?;
    for c in compare_formulations(&trials) {
        let row = |w: &mut BufWriter<File>, metric: &str, v: String| {
            writeln!(w, "utest,{},{},{metric},{v}", c.speed, c.setup)
        };
        row(&mut w, &format!("n_success_{}", c.a), c.n_a.to_string())?;
        row(&mut w, &format!("n_success_{}", c.b), c.n_b.to_string())?;
        row(
            &mut w,
            &format!("median_cost_{}", c.a),
            c.median_a.map_or(String::new(), |v| v.to_string()),
        )?;
        row(
            &mut w,
            &format!("median_cost_{}", c.b),
            c.median_b.map_or(String::new(), |v| v.to_string()),
        )?;
        row(
            &mut w,
            "p_value",
            c.p_value.map_or(String::new(), |v| v.to_string()),
        )?;
        println!(
            "speed={} setup={} n_{}={} n_{}={} p={}",
            c.speed,
            c.setup,
            c.a,
            c.n_a,
            c.b,
            c.n_b,
            fmt_opt(c.p_value)
        );
    }
    writeln!(w, "critical_mu,,,a_by_bar,{}", a.a_by_bar)?;
    writeln!(w, "critical_mu,,,g,{}", a.g)?;
    writeln!(w, "critical_mu,,,threshold,{}", mu.threshold)?;
    writeln!(w, "critical_mu,,,mu,{}", a.mu)?;
    writeln!(w, "critical_mu,,,violable,{}", mu.violable)?;
    w.flush()?;
    println!(
        "critical_mu={:.4} mu={} violable={}",
        mu.threshold, a.mu, mu.violable
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Res {
    let src = if let Some(p) = &a.scenario {
        load_scenario(p)?.terrain
    } else {
        let g = a
            .grid
            .ok_or_else(|| usage("--grid is required without --scenario"))?;
        if g.len() != 5
            || g.iter().any(|v| !v.is_finite())
            || g[3].fract() != 0.0
            || g[4].fract() != 0.0
            || g[3] < 2.0
            || g[4] < 2.0
        {
            return Err(usage(
                "--grid expects origin_x,origin_y,resolution,nx,ny with integer sizes >= 2",
            ));
        }
        let grid = GridSpec::new(g[0], g[1], g[2], g[3] as usize, g[4] as usize)?;
        let layers = a
            .layer
            .iter()
            .map(|l| {
                serde_json::from_str::<TerrainSpec>(l)
                    .map_err(|e| usage(format!("--layer `{l}`: {e}")))
            })
            .collect::<Res<Vec<_>>>()?;
        TerrainSource {
            file: None,
            synth: Some(tmpc::harness::Layers::Many(layers)),
            grid: Some(grid),
        }
    };
    let map = src.build()?;
    let mut w = create(&a.out)?;
    write_heightmap(&map, &mut w)?;
    w.flush()?;
    let (lo, hi) = map
        .heights()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let s = map.spec();
    println!(
        "nx={} ny={} resolution={} min={lo} max={hi}",
        s.nx, s.ny, s.resolution
    );
    Ok(())
}
