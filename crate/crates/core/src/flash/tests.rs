use nalgebra::{DMatrix, DVector};
use rand::{rngs::StdRng, Rng, SeedableRng};

use super::layout::{unpack_tvn, unpack_uvn};
use super::*;
use crate::eos::{eval_counts, ComponentDatabase, Order, GAS_CONSTANT};
use crate::solver::Globalization;

fn binary() -> Mixture {
    ComponentDatabase::builtin().mixture(&["C1", "H2S"]).unwrap()
}

fn six() -> Mixture {
    ComponentDatabase::builtin().mixture(&["C2", "C3H6", "C3", "iC4", "nC4", "nC5"]).unwrap()
}

fn p1() -> FlashSpec {
    FlashSpec::new(-756500.8, 52869e-6, vec![10.0, 90.0])
}

fn p2() -> FlashSpec {
    FlashSpec::new(-1511407.6, 4268.1e-6, vec![0.95, 99.05])
}

fn p6() -> FlashSpec {
    FlashSpec::new(24858.2, 289380.3e-6, vec![10.8, 360.8, 146.5, 233.0, 233.0, 15.9])
}

/// Random TVN vector with both phases well inside the domain.
fn random_tvn(rng: &mut StdRng, mix: &Mixture, spec: &FlashSpec) -> DVector<f64> {
    loop {
        let mut x = vec![spec.total_v * rng.gen_range(0.05..0.95)];
        x.extend(spec.total_moles.iter().map(|m| m * rng.gen_range(0.05..0.95)));
        x.push(rng.gen_range(200.0..450.0));
        if unpack_tvn(mix, spec, &x).is_ok() {
            return DVector::from_vec(x);
        }
    }
}

fn random_uvn(rng: &mut StdRng, mix: &Mixture, spec: &FlashSpec) -> DVector<f64> {
    loop {
        let x = random_tvn(rng, mix, spec);
        let (t, ph) = unpack_tvn(mix, spec, x.as_slice()).unwrap();
        let u1 = mix.internal_energy(&StateTVN::new(t, ph.volumes[0], ph.moles[0].clone())).unwrap();
        let mut v = ph.moles[0].clone();
        v.push(ph.volumes[0]);
        v.push(u1);
        let v = DVector::from_vec(v);
        let temps: Result<Vec<_>, _> =
            decode(mix, spec, &v, Formulation::Uvn).map(|s| s.phases.iter().map(|p| p.temperature).collect::<Vec<_>>());
        if temps.is_ok_and(|t| t.iter().all(|t| (150.0..600.0).contains(t))) {
            return v;
        }
    }
}

fn fd_gradient(f: &mut dyn FnMut(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-6 * x[i].abs().max(1e-3);
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

fn fd_jacobian(f: &mut dyn FnMut(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let m = x.len();
    let mut out = DMatrix::zeros(m, m);
    for j in 0..m {
        let h = 1e-6 * x[j].abs().max(1e-3);
        let mut a = x.clone();
        let mut b = x.clone();
        a[j] += h;
        b[j] -= h;
        let col = (f(&a) - f(&b)) / (2.0 * h);
        out.set_column(j, &col);
    }
    out
}

fn assert_close_vec(a: &DVector<f64>, b: &DVector<f64>, tol: f64, what: &str) {
    let scale = a.amax();
    for i in 0..a.len() {
        let err = (a[i] - b[i]).abs();
        assert!(err <= tol * a[i].abs().max(1e-4 * scale), "{what}[{i}]: {} vs {}", a[i], b[i]);
    }
}

fn assert_close_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64, what: &str) {
    let scale = a.amax();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let err = (a[(i, j)] - b[(i, j)]).abs();
            assert!(err <= tol * a[(i, j)].abs().max(1e-4 * scale), "{what}[{i},{j}]: {} vs {}", a[(i, j)], b[(i, j)]);
        }
    }
}

#[test]
fn tvn_derivatives_match_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for (mix, spec, count) in [(binary(), p1(), 100), (six(), p6(), 30)] {
        for form in [Lagrangian::Scl, Lagrangian::Acl] {
            let obj = TvnObjective::new(&mix, &spec, form);
            for _ in 0..count {
                let x = random_tvn(&mut rng, &mix, &spec);
                let g = obj.gradient(&x).unwrap();
                let fd = fd_gradient(&mut |y| obj.value(y).unwrap(), &x);
                assert_close_vec(&g, &fd, 1e-6, "gradient");
                let h = obj.hessian(&x).unwrap();
                let fdh = fd_jacobian(&mut |y| obj.gradient(y).unwrap(), &x);
                assert_close_mat(&h, &fdh, 1e-5, "hessian");
                assert!((&h - h.transpose()).amax() <= 1e-10 * h.amax());
            }
        }
    }
}

#[test]
fn uvn_derivatives_match_differences() {
    let mut rng = StdRng::seed_from_u64(12);
    for (mix, spec, count) in [(binary(), p1(), 30), (six(), p6(), 10)] {
        for _ in 0..count {
            let x = random_uvn(&mut rng, &mix, &spec);
            let mut obj = UvnObjective::new(&mix, &spec, false);
            let g = obj.gradient(&x).unwrap();
            let fd = fd_gradient(&mut |y| objective_uvn(&mix, &spec, y).unwrap(), &x);
            assert_close_vec(&g, &fd, 1e-6, "gradient");
            let h = obj.hessian(&x).unwrap();
            let fdh = fd_jacobian(&mut |y| UvnObjective::new(&mix, &spec, false).gradient(y).unwrap(), &x);
            assert_close_mat(&h, &fdh, 1e-5, "hessian");
            assert!((&h - h.transpose()).amax() <= 1e-10 * h.amax());
        }
    }
}

#[test]
fn scaled_uvn_is_a_change_of_variables() {
    let mix = binary();
    let spec = p1();
    let mut rng = StdRng::seed_from_u64(3);
    let x = random_uvn(&mut rng, &mix, &spec);
    let mut plain = UvnObjective::new(&mix, &spec, false);
    let mut scaled = UvnObjective::new(&mix, &spec, true);
    let xs = scaled.to_solver(&x);
    assert!((scaled.from_solver(&xs) - &x).amax() <= 1e-12 * x.amax());
    let g = solver::Problem::gradient(&mut plain, &x).unwrap();
    let gs = solver::Problem::gradient(&mut scaled, &xs).unwrap();
    let s = x.component_div(&xs);
    assert!((gs - g.component_mul(&s)).amax() <= 1e-12 * g.amax() * s.amax());
}

#[test]
fn lagrangians_agree() {
    let mut rng = StdRng::seed_from_u64(5);
    let mix = binary();
    let spec = p1();
    for _ in 0..1000 {
        let x = random_tvn(&mut rng, &mix, &spec);
        let s = lagrangian(&mix, &spec, &x, Lagrangian::Scl).unwrap();
        let a = lagrangian(&mix, &spec, &x, Lagrangian::Acl).unwrap();
        assert!((s - a).abs() <= 1e-10 * s.abs(), "{s} vs {a}");
    }
}

#[test]
fn temperature_gradient_is_constraint() {
    let mut rng = StdRng::seed_from_u64(6);
    for (mix, spec) in [(binary(), p1()), (six(), p6())] {
        for _ in 0..100 {
            let x = random_tvn(&mut rng, &mix, &spec);
            let t = x[x.len() - 1];
            let c = constraint(&mix, &spec, &x).unwrap();
            for form in [Lagrangian::Scl, Lagrangian::Acl] {
                let g = TvnObjective::new(&mix, &spec, form).gradient(&x).unwrap();
                let lt = g[g.len() - 1] * t * t;
                assert!((lt - c).abs() <= 1e-9 * c.abs().max(1e-6 * spec.total_u.abs()), "{lt} vs {c}");
            }
        }
    }
}

#[test]
fn constraint_temperature_derivative_is_heat_capacity() {
    let mut rng = StdRng::seed_from_u64(8);
    let mix = binary();
    let spec = p1();
    for _ in 0..50 {
        let x = random_tvn(&mut rng, &mix, &spec);
        let (t, ph) = unpack_tvn(&mix, &spec, x.as_slice()).unwrap();
        let cv: f64 = (0..2)
            .map(|k| mix.properties(&StateTVN::new(t, ph.volumes[k], ph.moles[k].clone())).unwrap().heat_capacity_v)
            .sum();
        let it = x.len() - 1;
        let h = 1e-4;
        let (mut a, mut b) = (x.clone(), x.clone());
        a[it] += h;
        b[it] -= h;
        let fd = (constraint(&mix, &spec, &a).unwrap() - constraint(&mix, &spec, &b).unwrap()) / (2.0 * h);
        assert!((fd - cv).abs() <= 1e-6 * cv, "{fd} vs {cv}");
    }
}

#[test]
fn acl_uses_only_helmholtz_evaluations() {
    let mix = binary();
    let spec = p1();
    let x = random_tvn(&mut StdRng::seed_from_u64(1), &mix, &spec);
    let before = eval_counts();
    lagrangian(&mix, &spec, &x, Lagrangian::Acl).unwrap();
    let d = eval_counts() - before;
    assert_eq!((d.helmholtz, d.entropy, d.energy), (2, 0, 0));
    let before = eval_counts();
    lagrangian(&mix, &spec, &x, Lagrangian::Scl).unwrap();
    let d = eval_counts() - before;
    assert_eq!((d.helmholtz, d.entropy, d.energy), (0, 2, 2));
}

#[test]
fn encode_decode_round_trip() {
    let mut rng = StdRng::seed_from_u64(9);
    let mix = binary();
    let spec = p1();
    for _ in 0..1000 {
        let x = random_tvn(&mut rng, &mix, &spec);
        let split = decode(&mix, &spec, &x, Formulation::Acl).unwrap();
        assert_eq!(encode(&split, Formulation::Acl), x);
        let total_v: f64 = split.volumes().iter().sum();
        assert!((total_v - spec.total_v).abs() <= 1e-15 * spec.total_v);
    }
    for _ in 0..50 {
        let x = random_uvn(&mut rng, &mix, &spec);
        let split = decode(&mix, &spec, &x, Formulation::Uvn).unwrap();
        assert_eq!(encode(&split, Formulation::Uvn), x);
    }
}

#[test]
fn decode_rejects_infeasible_vectors() {
    let mix = binary();
    let spec = p1();
    let x = DVector::from_vec(vec![spec.total_v * 0.5, 11.0, 40.0, 300.0]);
    assert!(matches!(decode(&mix, &spec, &x, Formulation::Acl), Err(FlashError::Infeasible { phase: 1, .. })));
    let x = DVector::from_vec(vec![1e-9, 5.0, 45.0, 300.0]);
    assert!(matches!(decode(&mix, &spec, &x, Formulation::Acl), Err(FlashError::Infeasible { phase: 0, .. })));
    let x = DVector::from_vec(vec![0.01, 5.0, 300.0]);
    assert!(matches!(decode(&mix, &spec, &x, Formulation::Acl), Err(FlashError::Length { expected: 4, got: 3 })));
    assert!(unpack_uvn(&mix, &spec, &[5.0, 45.0, spec.total_v, 0.0]).is_err());
}

#[test]
fn symmetric_split_is_stationary() {
    let mix = binary();
    let spec = p1();
    let t = mix.solve_temperature(spec.total_u, spec.total_v, &spec.total_moles, 300.0).unwrap().temperature;
    let half = DVector::from_vec(vec![0.5 * spec.total_v, 5.0, 45.0, t]);
    let split = decode(&mix, &spec, &half, Formulation::Acl).unwrap();
    assert_eq!(split.phases[0], split.phases[1]);
    let c = constraint(&mix, &spec, &half).unwrap();
    assert!(c.abs() <= 1e-8 * spec.total_u.abs());
    let g = TvnObjective::new(&mix, &spec, Lagrangian::Acl).gradient(&half).unwrap();
    for i in 0..3 {
        assert_eq!(g[i], 0.0);
    }
    let s_total = mix.entropy(&StateTVN::new(t, spec.total_v, spec.total_moles.clone())).unwrap();
    let l = lagrangian(&mix, &spec, &half, Lagrangian::Scl).unwrap();
    assert!((l - s_total).abs() <= 1e-9 * s_total.abs());

    let u = DVector::from_vec(vec![5.0, 45.0, 0.5 * spec.total_v, 0.5 * spec.total_u]);
    let s_red = objective_uvn(&mix, &spec, &u).unwrap();
    assert!((s_red - s_total).abs() <= 1e-9 * s_total.abs());
    let g = UvnObjective::new(&mix, &spec, false).gradient(&u).unwrap();
    assert!(g.amax() == 0.0);
}

#[test]
fn uvn_and_tvn_objectives_agree_on_the_constraint_surface() {
    let mix = binary();
    let spec = p1();
    let sol = flash(&mix, &spec, &FlashConfig::default()).unwrap();
    let x_tvn = encode(&sol.split, Formulation::Acl);
    let x_uvn = encode(&sol.split, Formulation::Uvn);
    let l = lagrangian(&mix, &spec, &x_tvn, Lagrangian::Scl).unwrap();
    let s = objective_uvn(&mix, &spec, &x_uvn).unwrap();
    assert!((l - s).abs() <= 1e-9 * s.abs(), "{l} vs {s}");
}

fn assert_valid(sol: &FlashSolution) {
    assert!(sol.split_found);
    assert!(sol.residuals.satisfied(), "{:?}", sol.residuals);
    assert!(sol.s_two >= sol.s_single - 1e-9 * sol.s_single.abs());
}

#[test]
fn problem_1_split() {
    let mix = binary();
    let spec = p1();
    let cfg = FlashConfig { formulation: Formulation::Scl, ..Default::default() };
    let sol = flash(&mix, &spec, &cfg).unwrap();
    assert_valid(&sol);
    let p = &sol.split.phases[1];
    assert!((p.volume - 51366.638597e-6).abs() <= 1e-3 * p.volume);
    assert!((p.moles[0] - 9.664319).abs() <= 1e-3 * 9.664319);
    assert!((p.moles[1] - 54.315976).abs() <= 1e-3 * 54.315976);
    assert!(((sol.s_two - sol.s_single) - 512.325309).abs() <= 1e-3 * 512.325309);
    assert_eq!(sol.inner_iterations, 0);
    assert!(sol.regularized_steps == 0);
    let h = TvnObjective::new(&mix, &spec, Lagrangian::Scl).hessian(&encode(&sol.split, Formulation::Scl)).unwrap();
    assert!(h.lu().determinant().abs() > 0.0);
}

#[test]
fn formulations_agree() {
    for (mix, spec) in [(binary(), p1()), (binary(), p2()), (six(), p6())] {
        let prepared = prepare(&mix, &spec, false).unwrap();
        let mut splits = Vec::new();
        for formulation in Formulation::ALL {
            for globalization in [Globalization::LineSearch, Globalization::TrustRegion] {
                let cfg = FlashConfig {
                    formulation,
                    solver: SolverConfig { globalization, ..Default::default() },
                    force_split: false,
                };
                let sol = solve_prepared(&mix, &spec, &prepared, &cfg).unwrap();
                assert_valid(&sol);
                assert_eq!(sol.inner_iterations == 0, formulation.is_tvn());
                splits.push(encode(&sol.split, Formulation::Acl));
            }
        }
        for s in &splits[1..] {
            let rel = (s - &splits[0]).component_div(&splits[0]).amax();
            assert!(rel <= 1e-6, "{rel}");
        }
    }
}

#[test]
fn permuting_components_permutes_the_solution() {
    let mix = binary();
    let spec = p2();
    let swapped = mix.permuted(&[1, 0]).unwrap();
    let spec_swapped = FlashSpec::new(spec.total_u, spec.total_v, vec![spec.total_moles[1], spec.total_moles[0]]);
    let a = flash(&mix, &spec, &FlashConfig::default()).unwrap();
    let b = flash(&swapped, &spec_swapped, &FlashConfig::default()).unwrap();
    for k in 0..2 {
        let (pa, pb) = (&a.split.phases[k], &b.split.phases[k]);
        assert!((pa.volume - pb.volume).abs() <= 1e-8 * pa.volume);
        assert!((pa.moles[0] - pb.moles[1]).abs() <= 1e-8 * pa.moles[0]);
        assert!((pa.moles[1] - pb.moles[0]).abs() <= 1e-8 * pa.moles[1]);
        assert!((pa.temperature - pb.temperature).abs() <= 1e-8 * pa.temperature);
    }
}

#[test]
fn reference_constants_do_not_move_the_split() {
    let mix = binary();
    let spec = p2();
    let base = flash(&mix, &spec, &FlashConfig::default()).unwrap();
    let du0 = 1234.5;
    let shifted = mix.with_reference(du0, 2.0e5).unwrap();
    let spec2 = FlashSpec::new(spec.total_u + du0 * 100.0, spec.total_v, spec.total_moles.clone());
    let other = flash(&shifted, &spec2, &FlashConfig::default()).unwrap();
    let a = encode(&base.split, Formulation::Acl);
    let b = encode(&other.split, Formulation::Acl);
    assert!((a - &b).component_div(&b).amax() <= 1e-7);
    let gap = |s: &FlashSolution| s.s_two - s.s_single;
    assert!((gap(&base) - gap(&other)).abs() <= 1e-6 * gap(&base));
    let dp = GAS_CONSTANT * 100.0 * (2.0e5 / mix.p_ref()).ln();
    assert!(((other.s_single - base.s_single) - dp).abs() <= 1e-6 * dp);
}

#[test]
fn stable_state_returns_one_phase() {
    let mix = binary();
    let spec = FlashSpec::new(-331083.7, 80258.1e-6, vec![15.1, 84.9]);
    let sol = flash(&mix, &spec, &FlashConfig::default()).unwrap();
    assert!(!sol.split_found);
    assert_eq!(sol.split.phases.len(), 1);
    assert_eq!(sol.s_two, sol.s_single);
    let forced = flash(&mix, &spec, &FlashConfig { force_split: true, ..Default::default() }).unwrap();
    assert_valid(&forced);
    assert!(((forced.s_two - forced.s_single) - 0.000395).abs() <= 1e-3 * 0.000395);
}

#[test]
fn initial_split_fails_on_a_stable_state() {
    let mix = binary();
    let spec = FlashSpec::new(-756500.8 + 2.0e6, 52869e-6, vec![10.0, 90.0]);
    let out = crate::stability::run_stability_extended(&mix, &spec.stability_spec()).unwrap();
    assert!(out.is_stable);
    let mut forced = out.clone();
    if forced.best.is_none() {
        forced.best = forced.trials.iter().position(|t| t.converged);
    }
    assert!(matches!(
        initial_split(&mix, &spec, &forced),
        Err(FlashError::NoFeasibleSplit { volume_fraction }) if volume_fraction < 1e-8
    ));
    assert!(matches!(
        initial_split(&mix, &spec, &out),
        Err(FlashError::NoTrialPhase) | Err(FlashError::NoFeasibleSplit { .. })
    ));
}

#[test]
fn uvn_problem_4_line_search_reports_failure() {
    let mix = binary();
    let spec = FlashSpec::new(-636468.0, 9926.71e-6, vec![10.0, 90.0]);
    let cfg = FlashConfig {
        formulation: Formulation::Uvn,
        solver: SolverConfig { max_outer: 3, ..Default::default() },
        force_split: false,
    };
    match flash(&mix, &spec, &cfg) {
        Err(FlashError::NotConverged { iterations, last_iterate, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(last_iterate.len(), 4);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn hessian_orders_are_consistent() {
    let mix = six();
    let spec = p6();
    let x = random_tvn(&mut StdRng::seed_from_u64(4), &mix, &spec);
    let obj = TvnObjective::new(&mix, &spec, Lagrangian::Acl);
    let full = obj.derivs(x.as_slice(), Order::Hessian).unwrap();
    let grad = obj.derivs(x.as_slice(), Order::Gradient).unwrap();
    let val = obj.derivs(x.as_slice(), Order::Value).unwrap();
    assert_eq!(full.grad, grad.grad);
    assert_eq!(full.value, val.value);
}
