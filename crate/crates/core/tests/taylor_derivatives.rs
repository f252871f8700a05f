mod common;

use common::Warped;
use nalgebra::DVector;
use pathmc::action::{
    action_derivatives, exact_action, init_level_m_linearized, init_level_m_taylor,
    quadratic_action_value,
};
use pathmc::linearization::{integrate_mean_path, linearize_theta, BurgersModel, Relaxation};
use pathmc::model::{validate_derivatives, Model, Path, TimeGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_path<R: Rng>(rng: &mut R, d: usize, nodes: usize, scale: f64) -> Path {
    let values: Vec<f64> = (0..d * nodes)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let states: Vec<DVector<f64>> = values.chunks(d).map(DVector::from_column_slice).collect();
    Path::from_nodes(&states).unwrap()
}

fn shifted(path: &Path, node: usize, comp: usize, by: f64) -> Path {
    let mut p = path.clone();
    p.node_mut(node)[comp] += by;
    p
}

fn rel(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1.0)
}

/// Largest relative deviation of the analytic gradient and Hessian blocks
/// from central differences of the exact action.
fn derivative_error(model: &dyn Model, grid: &TimeGrid, path: &Path) -> f64 {
    let der = action_derivatives(path, model, grid).unwrap();
    let s = |p: &Path| exact_action(p, model, grid).unwrap();
    let (d, final_node) = (model.dimension(), grid.final_node());
    let (eg, eh) = (1e-6, 1e-3);
    let mut worst: f64 = 0.0;
    for n in 1..=final_node {
        for i in 0..d {
            let fd = (s(&shifted(path, n, i, eg)) - s(&shifted(path, n, i, -eg))) / (2.0 * eg);
            worst = worst.max(rel(der.gradient[n - 1][i], fd));
        }
    }
    let second = |a: (usize, usize), b: (usize, usize)| {
        let at = |sa: f64, sb: f64| {
            s(&shifted(
                &shifted(path, a.0, a.1, sa * eh),
                b.0,
                b.1,
                sb * eh,
            ))
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * eh * eh)
    };
    for n in 1..=final_node {
        for i in 0..d {
            for j in 0..d {
                worst = worst.max(rel(der.hessian_diag[n - 1][(i, j)], second((n, i), (n, j))));
                if n < final_node {
                    worst = worst.max(rel(
                        der.hessian_coupling[n][(i, j)],
                        second((n, i), (n + 1, j)),
                    ));
                }
            }
        }
    }
    worst
}

#[test]
fn warped_model_derivatives_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
        let report = validate_derivatives(&Warped, &x, 1e-5).unwrap();
        assert!(report.max_error() < 1e-6, "{report:?}");
    }
}

#[test]
fn warped_action_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for levels in 1..=3 {
        let grid = TimeGrid::new(levels, 0.1, 0.7).unwrap();
        for _ in 0..5 {
            let path = random_path(&mut rng, 2, grid.node_count(), 1.0);
            let err = derivative_error(&Warped, &grid, &path);
            assert!(err < 1e-5, "m={levels} err={err}");
        }
    }
}

#[test]
fn burgers_action_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for mode_count in 1..=3 {
        let model = BurgersModel::new(mode_count, 0.2).unwrap();
        let grid = TimeGrid::new(2, 0.05, 1.0).unwrap();
        for _ in 0..3 {
            let path = random_path(&mut rng, model.dimension(), grid.node_count(), 0.8);
            let err = derivative_error(&model, &grid, &path);
            assert!(err < 1e-5, "modes={mode_count} err={err}");
        }
    }
}

#[test]
fn taylor_action_is_exact_at_the_expansion_point() {
    let grid = TimeGrid::new(3, 0.1, 1.0).unwrap();
    let x0 = DVector::from_vec(vec![0.6, -0.4]);
    let traj = integrate_mean_path(&Warped, &x0, &grid).unwrap();
    let init = init_level_m_taylor(&Warped, &traj, &grid).unwrap();
    let reference = traj.to_path();
    let exact = exact_action(&reference, &Warped, &grid).unwrap();
    let approx = quadratic_action_value(&init.action, &reference).unwrap();
    assert!((exact - approx).abs() < 1e-12 * exact.abs().max(1.0));
}

#[test]
fn taylor_action_error_is_third_order() {
    let grid = TimeGrid::new(2, 0.1, 1.0).unwrap();
    let x0 = DVector::from_vec(vec![0.6, -0.4]);
    let traj = integrate_mean_path(&Warped, &x0, &grid).unwrap();
    let init = init_level_m_taylor(&Warped, &traj, &grid).unwrap();
    let reference = traj.to_path();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let direction: Vec<f64> = (0..reference.as_slice().len())
        .map(|i| {
            if i < 2 {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    let error_at = |h: f64| {
        let states: Vec<DVector<f64>> = reference
            .as_slice()
            .iter()
            .zip(&direction)
            .map(|(r, u)| r + h * u)
            .collect::<Vec<_>>()
            .chunks(2)
            .map(DVector::from_column_slice)
            .collect();
        let p = Path::from_nodes(&states).unwrap();
        (exact_action(&p, &Warped, &grid).unwrap()
            - quadratic_action_value(&init.action, &p).unwrap())
        .abs()
    };
    let ratio = error_at(0.02) / error_at(0.01);
    assert!(ratio > 6.0 && ratio < 10.0, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadratic_variants_agree_on_action_differences(
        seed in any::<u64>(),
        gamma in 0.2f64..3.0,
        phi in 0.0f64..1.0,
        levels in 1usize..=4,
    ) {
        let model = Relaxation::new(2, gamma, 0.0, phi).unwrap();
        let grid = TimeGrid::new(levels, 0.1, 0.8).unwrap();
        let x0 = DVector::zeros(2);
        let traj = integrate_mean_path(&model, &x0, &grid).unwrap();
        let lin = linearize_theta(&model, &traj).unwrap();
        let a = init_level_m_linearized(&model, &lin, &grid).unwrap();
        let b = init_level_m_taylor(&model, &traj, &grid).unwrap().action;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pair = || {
            let mut p = random_path(&mut rng, 2, grid.node_count(), 2.0);
            p.node_mut(0).copy_from_slice(x0.as_slice());
            p
        };
        let (p, q) = (pair(), pair());
        let da = quadratic_action_value(&a, &p).unwrap() - quadratic_action_value(&a, &q).unwrap();
        let db = quadratic_action_value(&b, &p).unwrap() - quadratic_action_value(&b, &q).unwrap();
        let de = exact_action(&p, &model, &grid).unwrap() - exact_action(&q, &model, &grid).unwrap();
        let scale = de.abs().max(1.0);
        prop_assert!((da - db).abs() < 1e-10 * scale, "A {} B {}", da, db);
        prop_assert!((db - de).abs() < 1e-10 * scale);
    }

    #[test]
    fn taylor_variant_is_exact_for_quadratic_models_off_equilibrium(
        seed in any::<u64>(),
        gamma in 0.2f64..3.0,
        phi in 0.0f64..1.0,
    ) {
        let model = Relaxation::new(1, gamma, 0.0, phi).unwrap();
        let grid = TimeGrid::new(3, 0.1, 1.0).unwrap();
        let x0 = DVector::from_element(1, 1.3);
        let traj = integrate_mean_path(&model, &x0, &grid).unwrap();
        let b = init_level_m_taylor(&model, &traj, &grid).unwrap().action;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_path(&mut rng, 1, grid.node_count(), 2.0);
        p.node_mut(0)[0] = 1.3;
        let exact = exact_action(&p, &model, &grid).unwrap();
        let approx = quadratic_action_value(&b, &p).unwrap();
        prop_assert!((exact - approx).abs() < 1e-10 * exact.abs().max(1.0));
    }
}
