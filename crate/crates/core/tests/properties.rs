use proptest::prelude::*;

use tmpc::constraints::{
    constraint_set_cost, esm, esm_geometry, gravity_corrected_normals, liftoff_margin,
    soft_cost_rate, ConstraintConfig, RolloverMeasure, SoftConstraintParams,
};
use tmpc::dynamics::{
    Control, EstModel, EstState, ModelKind, SrbModel, SrbState, TireParams, VehicleParams,
};
use tmpc::harness::{mann_whitney_u, stat_summary};
use tmpc::planner::{
    sample_controls, sample_rng, solve_ocp, Goal, OcpProblem, PlannerConfig, PlannerState,
};
use tmpc::terrain::{build_sdist_map, gaussian_smooth, GridSpec, Heightmap, Perimeter};

fn ramp(sx: f64, sy: f64) -> Heightmap<f64> {
    let g = GridSpec::new(-20.0, -20.0, 0.5, 81, 81).unwrap();
    Heightmap::from_fn(g, |x, y| sx * x + sy * y).unwrap()
}

fn est_state() -> impl Strategy<Value = EstState<f64>> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        -3.2..3.2f64,
        -3.0..3.0f64,
        -1.5..1.5f64,
        -0.6..0.6f64,
        0.5..15.0f64,
    )
        .prop_map(|(x, y, psi, v_by, omega_bz, delta, v_bx)| EstState {
            x,
            y,
            psi,
            v_by,
            omega_bz,
            delta,
            v_bx,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn esm_is_even_in_roll(phi in -1.5..1.5f64, theta in -1.0..1.0f64) {
        let vp = VehicleParams::mrzr_d4();
        let (a, b) = (esm(phi, theta, &vp), esm(-phi, theta, &vp));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn esm_decreases_with_roll(p1 in 0.0..1.5f64, dp in 1e-3..0.5f64, theta in -0.5..0.5f64) {
        let vp = VehicleParams::mrzr_d4();
        let (_, phi_bar) = esm_geometry(&vp);
        let p2 = (p1 + dp).min(std::f64::consts::FRAC_PI_2 - phi_bar + 0.5);
        prop_assume!(p2 > p1);
        prop_assert!(esm(p2, theta, &vp) < esm(p1, theta, &vp));
    }

    #[test]
    fn soft_cost_is_monotone_and_smooth(a in -3.0..3.0f64, b in -3.0..3.0f64, eps in 0.05..2.0f64) {
        let p = SoftConstraintParams::new(eps, 10.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(soft_cost_rate(lo, &p) <= soft_cost_rate(hi, &p));
        prop_assert!(soft_cost_rate(lo, &p) >= 0.0);
        // value and slope both vanish at the onset
        let h = 1e-6 * eps;
        let right = soft_cost_rate(-eps + h, &p);
        prop_assert!(right / h < 2e-5 / eps);
        prop_assert_eq!(soft_cost_rate(-eps - h, &p), 0.0);
        prop_assert!((soft_cost_rate(0.0, &p) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn constraint_cost_ignores_wheel_order(d in prop::array::uniform4(-1.0..2.0f64), u in -500.0..2500.0f64) {
        let cc = ConstraintConfig::for_vehicle(&VehicleParams::mrzr_d4());
        let a = constraint_set_cost(&d, RolloverMeasure::Esm(u), &cc);
        let r = [d[3], d[1], d[0], d[2]];
        let b = constraint_set_cost(&r, RolloverMeasure::Esm(u), &cc);
        prop_assert!((a.total() - b.total()).abs() <= 1e-9 * a.total().abs().max(1.0));
    }

    #[test]
    fn srb_normal_forces_are_non_negative(
        z in -0.3..0.6f64, theta in -0.6..0.6f64, phi in -0.6..0.6f64,
        v in prop::array::uniform3(-3.0..3.0f64), w in prop::array::uniform3(-2.0..2.0f64),
        delta in -0.6..0.6f64, sx in -0.4..0.4f64,
    ) {
        let m = ramp(sx, 0.0);
        let vp = VehicleParams::mrzr_d4();
        let tp = TireParams::simulated();
        let mut s = SrbState::resting_on(&m, &vp, 0.0, 0.0, 0.3, 5.0);
        s.z += z;
        s.theta = theta;
        s.phi = phi;
        s.v_bx += v[0];
        s.v_by = v[1];
        s.v_bz = v[2];
        s.omega_bx = w[0];
        s.omega_by = w[1];
        s.omega_bz = w[2];
        s.delta = delta;
        let (_, aux) = SrbModel::new(&m, &vp, &tp).eval(&s, &Control::zero()).unwrap();
        prop_assert!(aux.tires.f_z.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn srb_is_mirror_symmetric_on_flat_ground(
        theta in -0.3..0.3f64, phi in -0.3..0.3f64, v_by in -2.0..2.0f64,
        w in prop::array::uniform3(-1.0..1.0f64), delta in -0.5..0.5f64, dz in -0.05..0.05f64,
    ) {
        let m = ramp(0.0, 0.0);
        let vp = VehicleParams::mrzr_d4();
        let tp = TireParams::simulated();
        let model = SrbModel::new(&m, &vp, &tp);
        let mut s = SrbState::resting_on(&m, &vp, 0.0, 0.0, 0.0, 6.0);
        s.z += dz;
        s.theta = theta;
        s.phi = phi;
        s.v_by = v_by;
        s.omega_bx = w[0];
        s.omega_by = w[1];
        s.omega_bz = w[2];
        s.delta = delta;
        let mut r = s;
        r.phi = -phi;
        r.v_by = -v_by;
        r.omega_bx = -w[0];
        r.omega_bz = -w[2];
        r.delta = -delta;
        let (a, _) = model.eval(&s, &Control::zero()).unwrap();
        let (b, _) = model.eval(&r, &Control::zero()).unwrap();
        let flip = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0];
        for ((x, y), f) in a.to_array().iter().zip(b.to_array()).zip(flip) {
            prop_assert!((x - f * y).abs() <= 1e-6 * x.abs().max(1.0), "{a:?}\n{b:?}");
        }
    }

    #[test]
    fn gravity_corrected_liftoff_matches_threshold(s in est_state(), sx in -0.5..0.5f64, sy in -0.5..0.5f64) {
        let m = ramp(sx, sy);
        let vp = VehicleParams::mrzr_d4();
        let tp = TireParams::simulated();
        let model = EstModel::new(&m, &vp, &tp);
        // zero longitudinal acceleration
        let u = Control::new(0.0, s.omega_bz * s.v_by);
        let (_, aux) = model.eval(&s, &u);
        prop_assert!(aux.a_bx.abs() < 1e-12);
        let fz = gravity_corrected_normals(&aux, model.load_transfer(), vp.mass);
        let min = fz.iter().copied().fold(f64::INFINITY, f64::min);
        let margin = liftoff_margin(&aux, &vp);
        prop_assume!(min.abs() > 1e-9 && margin.abs() > 1e-9);
        prop_assert_eq!(min > 0.0, margin > 0.0);
    }

    #[test]
    fn lateral_specific_force_is_friction_bounded(s in est_state(), sx in -0.6..0.6f64, sy in -0.6..0.6f64) {
        let m = ramp(sx, sy);
        let vp = VehicleParams::mrzr_d4();
        let tp = TireParams::simulated();
        let u = Control::new(0.0, s.omega_bz * s.v_by);
        let (_, aux) = EstModel::new(&m, &vp, &tp).eval(&s, &u);
        let ratio = aux.lateral_specific_force().abs() / (-aux.g_body[2]);
        prop_assert!(ratio <= tp.mu + 1e-9, "{ratio}");
    }

    #[test]
    fn static_loads_sum_to_weight(
        mass in 200.0..3000.0f64, l_f in 0.5..2.5f64, l_r in 0.5..2.5f64,
        track in 0.8..2.0f64, h in 0.1..1.0f64,
    ) {
        let vp = VehicleParams { mass, l_f, l_r, track, h, ..VehicleParams::mrzr_d4() };
        let m = ramp(0.0, 0.0);
        let tp = TireParams::simulated();
        let total: f64 = SrbModel::new(&m, &vp, &tp).static_loads().iter().sum();
        prop_assert!((total - mass * vp.g).abs() <= 1e-9 * mass * vp.g);
    }

    #[test]
    fn sampled_rates_stay_in_bounds(seed in any::<u64>(), index in any::<u64>(), bound in 0.0..3.0f64) {
        let cfg = PlannerConfig { delta_rate_max: bound, ..PlannerConfig::<f64>::default() };
        let seq = sample_controls(&cfg, &mut sample_rng(seed, index));
        prop_assert_eq!(seq.len(), cfg.n_t);
        prop_assert!(seq.within_bounds(bound));
    }

    #[test]
    fn smoothing_preserves_constants(c in -100.0..100.0f64, sigma in 0.0..3.0f64) {
        let g = GridSpec::new(0.0, 0.0, 0.25, 40, 30).unwrap();
        let m = Heightmap::flat(g, c).unwrap();
        prop_assert!(gaussian_smooth(&m, sigma).heights().iter().all(|&h| h == c));
    }

    #[test]
    fn u_test_is_symmetric(a in prop::collection::vec(0.0..10.0f64, 1..12), b in prop::collection::vec(0.0..10.0f64, 1..12)) {
        let p = mann_whitney_u(&a, &b).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!((p - mann_whitney_u(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn proportions_are_valid(n in 1usize..500, frac in 0.0..=1.0f64) {
        let k = (frac * n as f64).floor() as usize;
        let p = stat_summary(k, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&p.p));
        prop_assert!(p.se >= 0.0 && p.se <= 0.5 / (n as f64).sqrt() + 1e-12);
    }
}

#[test]
fn sampled_rates_have_zero_mean() {
    let cfg = PlannerConfig::<f64>::default();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..4000 {
        for u in sample_controls(&cfg, &mut sample_rng(17, i)).controls {
            sum += u.delta_rate;
            n += 1;
        }
    }
    // uniform on ±1 has standard deviation 1/sqrt(3)
    let se = (1.0 / 3.0f64).sqrt() / (n as f64).sqrt();
    assert!((sum / n as f64).abs() < 4.0 * se);
}

struct Scene {
    terrain: Heightmap<f64>,
    sdist: tmpc::terrain::SignedDistanceMap<f64>,
    vp: VehicleParams<f64>,
    tp: TireParams<f64>,
    cc: ConstraintConfig<f64>,
    goal: Goal<f64>,
}

impl Scene {
    fn new() -> Self {
        let g = GridSpec::new(-10.0, -15.0, 0.25, 161, 121).unwrap();
        let terrain =
            Heightmap::from_fn(g, |x: f64, y: f64| 0.2 * (0.8 * x).sin() * (0.5 * y).cos())
                .unwrap();
        let obstacle =
            Perimeter::obstacle(vec![[8.0, -1.0], [10.0, -1.0], [10.0, 1.5], [8.0, 1.5]]).unwrap();
        let vp = VehicleParams::mrzr_d4();
        Self {
            sdist: build_sdist_map(g, &[obstacle]).unwrap(),
            terrain,
            cc: ConstraintConfig::for_vehicle(&vp),
            vp,
            tp: TireParams::simulated(),
            goal: Goal::at(20.0, 0.0),
        }
    }

    fn problem(&self) -> OcpProblem<'_, f64> {
        OcpProblem {
            terrain: &self.terrain,
            sdist: &self.sdist,
            vehicle: &self.vp,
            tire: &self.tp,
            constraints: &self.cc,
            goal: &self.goal,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn nested_prefixes_never_increase_best_cost(seed in any::<u64>(), y0 in -1.0..1.0f64) {
        let sc = Scene::new();
        let state = PlannerState::Est(EstState::new(0.0, y0, 0.0, 5.0));
        let mut last = f64::INFINITY;
        for n in [8, 32, 96] {
            let cfg = PlannerConfig { n_samples: n, seed, model: ModelKind::Est, ..Default::default() };
            let c = solve_ocp(&sc.problem(), &state, &cfg).unwrap().result.cost;
            prop_assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn solution_does_not_depend_on_workers(seed in any::<u64>()) {
        let sc = Scene::new();
        let state = PlannerState::Srb(SrbState::resting_on(&sc.terrain, &sc.vp, 0.0, 0.0, 0.0, 5.0));
        let run = |w| {
            let cfg = PlannerConfig { n_samples: 24, seed, workers: w, ..Default::default() };
            solve_ocp(&sc.problem(), &state, &cfg).unwrap()
        };
        let a = run(1);
        for w in [2, 3] {
            let b = run(w);
            prop_assert_eq!(&a.controls, &b.controls);
            prop_assert_eq!(a.result.cost.to_bits(), b.result.cost.to_bits());
            prop_assert_eq!(a.stats.best_index, b.stats.best_index);
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let m = ramp(0.1, -0.05);
    let vp = VehicleParams::mrzr_d4();
    let tp = TireParams::simulated();
    let s = EstState {
        x: 1.0,
        y: 2.0,
        psi: 0.3,
        v_by: 0.4,
        omega_bz: 0.2,
        delta: 0.1,
        v_bx: 6.0,
    };
    let (d64, _) = EstModel::new(&m, &vp, &tp).eval(&s, &Control::zero());
    let (m32, vp32, tp32) = (m.cast::<f32>(), vp.cast::<f32>(), tp.cast::<f32>());
    let s32 = EstState::<f32>::from_array(s.to_array().map(|v| v as f32));
    let (d32, _) = EstModel::new(&m32, &vp32, &tp32).eval(&s32, &Control::zero());
    for (a, b) in d64.to_array().iter().zip(d32.to_array()) {
        assert!((a - b as f64).abs() <= 1e-4 * a.abs().max(1.0), "{a} {b}");
    }
}
