use super::*;
use crate::functionals::{energy, mass};
use core::f64::consts::PI;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn quiet(mut cfg: SimConfig) -> SimConfig {
    cfg.noise = NoiseBasis::empty();
    cfg
}

#[test]
fn drift_split_examples() {
    let cfg = SimConfig::prototype();
    let model = Model::new(&cfg).unwrap();
    let g = model.grid;
    let (a, rhs) = drift_split(&Field::constant(g, 1.3), &model).unwrap();
    assert!(a.iter().all(|&v| (v - 1.69).abs() < 1e-15));
    assert!(rhs.values().iter().all(|&v| v == 0.0));

    let u = Field::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
    let (a, _) = drift_split(&u, &model).unwrap();
    let v = u.values();
    assert_eq!(a[0], 0.5 * (v[0] * v[0] + v[1] * v[1]));

    // m = u², C = 2: the Stratonovich shift of Φ is exactly 1
    let mut strat = cfg.clone();
    strat.scheme = Scheme::Stratonovich;
    strat.noise = crate::noise::build_trig_basis(1, 3.0, 1.0).unwrap();
    let sm = Model::new(&strat).unwrap();
    assert!((sm.intensity - 2.0).abs() < 1e-14);
    let (_, r_ito) = drift_split(&u, &Model::new(&cfg).unwrap()).unwrap();
    let (_, r_str) = drift_split(&u, &sm).unwrap();
    let extra = flux_divergence(&face_gradient(v, g.h()), g.h());
    for i in 0..g.n() {
        assert!(
            (r_str.values()[i] - r_ito.values()[i] - extra[i]).abs()
                < 1e-9 * (1.0 + extra[i].abs())
        );
    }
}

#[test]
fn implicit_solve_examples() {
    let g = TorusGrid::new(64).unwrap();
    let h = g.h();
    let rhs = Field::from_fn(g, |x| (2.0 * PI * x).sin() + 0.3).unwrap();
    let a = vec![1.0; 64];
    let v = implicit_solve(&a, &rhs, 1e-16).unwrap();
    for (x, y) in v.values().iter().zip(rhs.values()) {
        assert!((x - y).abs() <= 1e-12);
    }
    let dt = 1e-4;
    let lam = (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
    let sine = Field::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
    let v = implicit_solve(&a, &sine, dt).unwrap();
    for (x, y) in v.values().iter().zip(sine.values()) {
        assert!((x - y / (1.0 + dt * lam * lam)).abs() <= 1e-10);
    }
    let v = implicit_solve(&a, &rhs, dt).unwrap();
    assert!((v.integrate() - rhs.integrate()).abs() <= 1e-12);
    assert!(implicit_solve(&[0.0; 64], &rhs, dt).is_err());
}

#[test]
fn implicit_solve_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let n = [16usize, 64, 128, 256][trial % 4];
        let g = TorusGrid::new(n).unwrap();
        // log-uniform face values; every fourth trial spans a contrast of 1e6
        let span = if trial % 4 == 0 {
            6.0
        } else {
            2.0 * uniform(&mut rng)
        };
        let a: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(span * (uniform(&mut rng) - 0.5)))
            .collect();
        // stiffness dt·max(a)/h⁴ up to 1e4 covers every step the stepper
        // takes; beyond that, rounding v itself to doubles already moves
        // (I + dt L)v by more than 1e-10 ‖rhs‖
        let a_max = a.iter().fold(0.0f64, |m, v| m.max(*v));
        let h4 = g.h().powi(4);
        let dt = 10f64
            .powf(-12.0 + 16.0 * uniform(&mut rng))
            .min(1e4 * h4 / a_max);
        let rhs: Vec<f64> = (0..n)
            .map(|_| 2.0 * uniform(&mut rng) - 1.0 + 3.0 * uniform(&mut rng))
            .collect();
        let rhs = Field::new(g, rhs).unwrap();
        let v = implicit_solve(&a, &rhs, dt).unwrap();
        let op = ImplicitOperator::new(&a, dt, g.h()).unwrap();
        let res = op.apply(v.values());
        let scale = rhs.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = res
            .iter()
            .zip(rhs.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(
            err <= 1e-10 * scale,
            "trial {trial}: n={n} dt={dt:e} residual {err:e}"
        );
        assert!((v.integrate() - rhs.integrate()).abs() <= 1e-12 * scale);
    }
}

#[test]
fn constant_state_is_fixed() {
    let mut cfg = quiet(SimConfig::prototype());
    cfg.initial = InitialCondition::Constant { value: 1.2 };
    cfg.t_final = 1e-3;
    let res = run(&cfg, 0).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    for &v in res.final_field.values() {
        assert!((v - 1.2).abs() < 1e-14);
    }
}

#[test]
fn deterministic_energy_decreases() {
    let mut cfg = quiet(SimConfig::prototype());
    cfg.dt0 = 1e-6;
    cfg.t_final = 2e-3;
    cfg.output_stride = 1;
    let res = run(&cfg, 0).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    assert_eq!(res.stats.accepted, 2000);
    let e: Vec<f64> = res.diagnostics.iter().map(|r| r.energy).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn noisy_run_conserves_mass() {
    let mut cfg = SimConfig::prototype();
    cfg.t_final = 5e-3;
    cfg.output_stride = 1;
    let res = run(&cfg, 3).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    let m0 = res.diagnostics[0].mass;
    for r in &res.diagnostics {
        assert!((r.mass - m0).abs() <= 1e-12, "{}", r.mass - m0);
        assert!(r.min_u > 0.0);
    }
    let u0 = cfg.initial.field(cfg.grid().unwrap()).unwrap();
    assert!((mass(&res.final_field) - mass(&u0)).abs() <= 1e-12);
}

#[test]
fn run_examples() {
    let mut cfg = SimConfig::prototype();
    cfg.t_final = 0.0;
    let res = run(&cfg, 0).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    assert_eq!(res.diagnostics.len(), 1);

    let mut cfg = quiet(SimConfig::prototype());
    cfg.initial = InitialCondition::Constant { value: 1.0 };
    cfg.t_final = 1e-3;
    let res = run(&cfg, 0).unwrap();
    assert!(res.final_field.values().iter().all(|&v| v == 1.0));

    let mut cfg = SimConfig::prototype();
    cfg.t_final = 2e-3;
    cfg.output_stride = 7;
    let a = run(&cfg, 5).unwrap();
    let b = run(&cfg, 5).unwrap();
    let bits = |r: &RunResult| {
        r.diagnostics
            .iter()
            .flat_map(|d| d.fields())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&run(&cfg, 6).unwrap()));
    // the last row lands on T
    assert_eq!(a.diagnostics.last().unwrap().t, cfg.t_final);
}

#[test]
fn rejection_splits_the_same_path() {
    // an aggressive noise amplitude without a potential forces rejections;
    // the run still conserves mass and reaches T
    let mut cfg = SimConfig::prototype();
    cfg.potential = None;
    cfg.noise = crate::noise::build_trig_basis(4, 3.0, 2.0).unwrap();
    cfg.t_final = 0.02;
    cfg.output_stride = 1;
    let res = run(&cfg, 1).unwrap();
    let m0 = res.diagnostics[0].mass;
    assert!(res.diagnostics.iter().all(|r| (r.mass - m0).abs() < 1e-11));
    assert!(res.stats.rejected > 0 || res.stats.max_level == 0);
}

#[test]
fn coupled_levels_and_scheme_identity() {
    let mut cfg = SimConfig::prototype();
    cfg.t_final = 2e-3;
    let model = Model::new(&cfg).unwrap();
    let p = coupled_path(&model, 0, 2).unwrap();
    let again = coupled_path(&model, 0, 2).unwrap();
    let f = p.finals.as_ref().unwrap();
    let g = again.finals.as_ref().unwrap();
    for (x, y) in f.iter().zip(g) {
        assert_eq!(x, y);
    }
    assert!(p.errors().unwrap().iter().all(|e| *e > 0.0));

    cfg.scheme = Scheme::Stratonovich;
    let model = Model::new(&cfg).unwrap();
    let cmp = scheme_comparison_path(&model, 2, 2).unwrap();
    assert!(cmp.bit_equal);
    assert_eq!(cmp.gaps.unwrap().len(), 2);

    // with no noise every scheme is the same deterministic stepper
    let mut det = quiet(cfg.clone());
    det.scheme = Scheme::Stratonovich;
    let cmp = scheme_comparison_path(&Model::new(&det).unwrap(), 0, 2).unwrap();
    assert!(cmp.bit_equal && cmp.gaps.unwrap().iter().all(|&g| g == 0.0));
}

#[test]
fn stratonovich_requires_constant_intensity() {
    let mut cfg = SimConfig::prototype();
    cfg.scheme = Scheme::Stratonovich;
    cfg.noise = cfg.noise.without(2, crate::noise::Parity::Sin);
    assert!(Model::new(&cfg).is_err());
}

#[test]
fn stability_cap_and_exact_horizon() {
    let cfg = SimConfig::prototype();
    let model = Model::new(&cfg).unwrap();
    let u0 = cfg.initial.field(model.grid).unwrap();
    let (dt, steps) = model.base_step(&u0).unwrap();
    assert!(dt <= cfg.dt0);
    assert!((dt * steps as f64 - cfg.t_final).abs() < 1e-15);
    let mut c2 = quiet(cfg.clone());
    c2.dt0 = 1e-6;
    c2.t_final = 1e-2;
    let m2 = Model::new(&c2).unwrap();
    assert_eq!(m2.base_step(&u0).unwrap().1, 10_000);
    let _ = energy(&u0, cfg.potential.as_ref()).unwrap();
}

#[test]
fn spatial_refinement_is_second_order() {
    let mut cfg = quiet(SimConfig::prototype());
    cfg.n = 16;
    cfg.t_final = 1e-3;
    let rep = spatial_study(&cfg, 0, 3).unwrap();
    assert_eq!(rep.ns, vec![16, 32, 64, 128]);
    let order = rep.order.unwrap();
    assert!(order >= 1.9, "{order} {:?}", rep.errors);
}

#[test]
fn h1_shortcut_bounds_the_spectral_norm() {
    let g = TorusGrid::new(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..50 {
        let f = if case == 0 {
            // Nyquist mode, where the bound is tightest
            Field::from_fn(g, |x| (PI * 32.0 * x).cos()).unwrap()
        } else {
            Field::new(g, (0..32).map(|_| uniform(&mut rng) - 0.5).collect()).unwrap()
        };
        let exact = f.sobolev_norm(1.0).unwrap();
        assert!(h1_bound_sq(&f) >= exact * exact * (1.0 - 1e-12));
    }
}
