mod common;

use common::rng;
use dynlearn::gp::{
    gram, neg_log_marginal_likelihood, nll_with_gradient, optimize_hyperparameters, GpModel, OptimizerOptions,
};
use dynlearn::kernels::{InputLayout, KernelSpec};
use dynlearn::rbd::{builtin, regressor, JointKind, JointVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SE kernel on a 1-D signal carried in the first input slot.
fn se1(lambda: f64, ls: f64) -> KernelSpec {
    let mut k = KernelSpec::squared_exponential(InputLayout::inverse(1));
    k.set_log_params(&[lambda.ln(), ls.ln(), 0.0, 0.0]);
    k
}

fn line(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&t| vec![t, 0.0, 0.0]).collect()
}

fn random_inputs(r: &mut ChaCha8Rng, n: usize, d: usize, half: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.random_range(-half..half)).collect()).collect()
}

fn random_log_params(r: &mut ChaCha8Rng, k: &KernelSpec, spread: f64) -> KernelSpec {
    let log: Vec<f64> = (0..k.n_params()).map(|_| r.random_range(-spread..spread)).collect();
    k.with_log_params(&log)
}

fn all_families(dof: usize) -> Vec<KernelSpec> {
    let robot = builtin("spatial3").unwrap().lock_after(dof).unwrap();
    vec![
        KernelSpec::squared_exponential(InputLayout::inverse(dof)),
        KernelSpec::squared_exponential(InputLayout::forward(dof)),
        KernelSpec::polynomial(InputLayout::inverse(dof), 1).unwrap(),
        KernelSpec::polynomial(InputLayout::inverse(dof), 2).unwrap(),
        KernelSpec::gip(&vec![JointKind::Revolute; dof]),
        KernelSpec::gip(&[JointKind::Revolute, JointKind::Prismatic][..dof.min(2)]),
        KernelSpec::semiparametric(&robot, 0).unwrap(),
    ]
}

/// Posterior mean through a plain Gaussian-elimination solve.
fn dense_solve_mean(k: &KernelSpec, x: &[Vec<f64>], y: &[f64], noise: f64, at: &[f64]) -> f64 {
    let n = x.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| k.eval(&x[i], &x[j]).unwrap()).collect();
            row[i] += noise * noise;
            row.push(y[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=n {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..n).map(|i| k.eval(at, &x[i]).unwrap() * a[i][n] / a[i][i]).sum()
}

#[test]
fn matches_dense_solve_on_toy_set() {
    let k = se1(1.3, 0.7);
    let x = line(&[-1.0, -0.2, 0.5, 1.1, 2.0]);
    let y = [0.3, -0.4, 1.2, 0.1, -0.8];
    let m = GpModel::fit(&x, &y, &k, 0.05).unwrap();
    for t in [-1.5, -0.2, 0.0, 0.77, 1.9, 3.0] {
        let want = dense_solve_mean(&k, &x, &y, 0.05, &[t, 0.0, 0.0]);
        assert!((m.predict(&[t, 0.0, 0.0]).unwrap() - want).abs() <= 1e-10);
    }
}

#[test]
fn interpolates_training_targets_without_noise() {
    let mut r = rng(21);
    for k in all_families(2) {
        let x = random_inputs(&mut r, 12, 6, 1.5);
        let y: Vec<f64> = (0..12).map(|_| r.random_range(-2.0..2.0)).collect();
        let k = if k.family == dynlearn::kernels::KernelFamily::SquaredExponential {
            k
        } else {
            // the finite-rank families need more features than points
            continue;
        };
        let m = GpModel::fit(&x, &y, &k, 0.0).unwrap();
        let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(xi).unwrap() - yi).abs() <= 1e-8 * ymax);
        }
    }
}

#[test]
fn gram_matrices_are_symmetric_psd_and_factorize_with_noise() {
    let mut r = rng(22);
    for dof in [1, 2] {
        for k in all_families(dof) {
            let k = random_log_params(&mut r, &k, 0.5);
            let x = random_inputs(&mut r, 200, k.input_dim(), 2.0);
            let g = gram(&k, &x, &x).unwrap();
            assert_eq!(g, g.transpose());
            let min = g.clone().symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-8 * g.trace(), "{:?}: {min}", k.family);
            let noisy = g + DMatrix::identity(200, 200) * 1e-8;
            assert!(noisy.cholesky().is_some(), "{:?}", k.family);
        }
    }
}

#[test]
fn nll_gradient_matches_central_differences() {
    let mut r = rng(23);
    for trial in 0..4 {
        for k in all_families(1 + trial % 2) {
            let k = random_log_params(&mut r, &k, 0.4);
            let x = random_inputs(&mut r, 20, k.input_dim(), 1.5);
            let y: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
            let noise = 0.3;
            let (_, grad) = nll_with_gradient(&x, &y, &k, noise).unwrap();
            let mut log = k.params().log_values.clone();
            log.push(noise.ln());
            let f = |l: &[f64]| {
                let (kl, s) = l.split_at(l.len() - 1);
                neg_log_marginal_likelihood(&x, &y, &k.with_log_params(kl), s[0].exp()).unwrap()
            };
            let frozen = &k.params().frozen;
            for i in 0..log.len() {
                if i < frozen.len() && frozen[i] {
                    assert_eq!(grad[i], 0.0);
                    continue;
                }
                let h = 1e-5;
                let (mut up, mut dn) = (log.clone(), log.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                let scale = fd.abs().max(grad[i].abs()).max(1e-3);
                assert!(
                    (fd - grad[i]).abs() <= 1e-4 * scale,
                    "{:?} param {i}: analytic {} fd {fd}",
                    k.family,
                    grad[i]
                );
            }
        }
    }
}

#[test]
fn nll_prefers_the_generating_noise_level() {
    let mut r = rng(24);
    let k = se1(1.0, 1.0);
    let x: Vec<Vec<f64>> = line(&(0..80).map(|i| i as f64 * 0.1).collect::<Vec<_>>());
    let y: Vec<f64> = x
        .iter()
        .map(|p| p[0].sin() + 0.2 * Distribution::<f64>::sample(&StandardNormal, &mut r))
        .collect();
    let at = |s: f64| neg_log_marginal_likelihood(&x, &y, &k, s).unwrap();
    assert!(at(0.05) > at(0.1) && at(0.1) > at(0.2));
    assert!(at(1.0) > at(0.5) && at(0.5) > at(0.2));
}

#[test]
fn recovers_the_generating_lengthscale() {
    let truth = se1(1.0, 0.5);
    let x = line(&(0..200).map(|i| i as f64 * 0.05).collect::<Vec<_>>());
    let g = gram(&truth, &x, &x).unwrap() + DMatrix::identity(200, 200) * 1e-8;
    let l = g.cholesky().unwrap().l();
    let mut r = rng(25);
    let z = DVector::from_fn(200, |_, _| StandardNormal.sample(&mut r));
    let y: Vec<f64> = (l * z).iter().copied().collect();
    let mut init = se1(1.0, 1.5);
    init.set_frozen("lengthscale_2", true).unwrap();
    init.set_frozen("lengthscale_3", true).unwrap();
    let opts = OptimizerOptions {
        budget: 200,
        restarts: 2,
        ..Default::default()
    };
    let res = optimize_hyperparameters(&x, &y, &init, 1e-3, &opts).unwrap();
    let ls = res.kernel.params().value("lengthscale_1").unwrap();
    assert!((0.3..=0.8).contains(&ls), "lengthscale {ls}");
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gip_matches_oracle_torques_with_enough_data() {
    use dynlearn::experiments::inverse_inputs;
    use dynlearn::trajgen::{generate_dataset, TrajectoryConfig};
    let robot = builtin("planar2").unwrap();
    let mut c = TrajectoryConfig::for_robot(&robot, 31);
    c.duration = 100.0;
    c.rate = 10.0;
    let train = generate_dataset(&robot, &c, 0.0, 31).unwrap();
    c.seed = 32;
    c.duration = 20.0;
    let test = generate_dataset(&robot, &c, 0.0, 32).unwrap();
    let x = inverse_inputs(&train);
    let xt = inverse_inputs(&test);
    for j in 0..2 {
        let y: Vec<f64> = train.samples.iter().map(|s| s.tau[j]).collect();
        let k = KernelSpec::gip(&robot.joint_kinds()).initialized_from(&x, &y);
        let m = GpModel::fit(&x, &y, &k, 0.0).unwrap();
        let worst = test
            .samples
            .iter()
            .zip(m.predict_many(&xt).unwrap())
            .map(|(s, p)| (s.tau[j] - p).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-4, "joint {j}: max held-out error {worst}");
    }
}

#[test]
fn sp_without_se_part_is_ridge_regression_on_the_regressor() {
    let robot = builtin("planar2").unwrap();
    let mut k = KernelSpec::semiparametric(&robot, 1).unwrap();
    k.set_value("lambda", 0.0).unwrap();
    let mut r = rng(26);
    let noise = 0.05;
    let states: Vec<_> = (0..40).map(|_| common::random_state(&mut r, 2)).collect();
    let x: Vec<Vec<f64>> = states
        .iter()
        .map(|(q, qd, qdd)| InputLayout::join(q.as_slice(), qd.as_slice(), qdd.as_slice()))
        .collect();
    let y: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
    let m = GpModel::fit(&x, &y, &k, noise).unwrap();
    let row = |s: &(JointVector, JointVector, JointVector)| -> Vec<f64> {
        regressor(&robot, &s.0, &s.1, &s.2).unwrap().row(1).iter().copied().collect()
    };
    let p = 20;
    let phi = DMatrix::from_fn(40, p, |i, c| row(&states[i])[c]);
    let yv = DVector::from_vec(y);
    let w = (phi.transpose() * &phi + DMatrix::identity(p, p) * noise * noise)
        .lu()
        .solve(&(phi.transpose() * yv))
        .unwrap();
    for _ in 0..10 {
        let s = common::random_state(&mut r, 2);
        let want: f64 = row(&s).iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let got = m
            .predict(&InputLayout::join(s.0.as_slice(), s.1.as_slice(), s.2.as_slice()))
            .unwrap();
        assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_is_linear_in_targets(seed in any::<u64>(), pick in 0usize..7) {
        let mut r = rng(seed);
        let k = random_log_params(&mut r, &all_families(2)[pick], 0.3);
        let x = random_inputs(&mut r, 15, k.input_dim(), 1.0);
        let y1: Vec<f64> = (0..15).map(|_| r.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..15).map(|_| r.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let at = random_inputs(&mut r, 5, k.input_dim(), 1.0);
        let p1 = GpModel::fit(&x, &y1, &k, 0.1).unwrap().predict_many(&at).unwrap();
        let p2 = GpModel::fit(&x, &y2, &k, 0.1).unwrap().predict_many(&at).unwrap();
        let ps = GpModel::fit(&x, &sum, &k, 0.1).unwrap().predict_many(&at).unwrap();
        for i in 0..5 {
            prop_assert!((ps[i] - p1[i] - p2[i]).abs() <= 1e-10 * (1.0 + ps[i].abs()));
        }
    }

    #[test]
    fn nll_is_permutation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = random_log_params(&mut r, &KernelSpec::squared_exponential(InputLayout::inverse(1)), 0.5);
        let x = random_inputs(&mut r, 12, 3, 2.0);
        let y: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut idx: Vec<usize> = (0..12).collect();
        idx.reverse();
        idx.swap(0, 5);
        let xp: Vec<_> = idx.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<_> = idx.iter().map(|&i| y[i]).collect();
        let a = neg_log_marginal_likelihood(&x, &y, &k, 0.2).unwrap();
        let b = neg_log_marginal_likelihood(&xp, &yp, &k, 0.2).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn gip_values_are_periodic_in_revolute_angles(seed in any::<u64>(), turns in -3i32..3) {
        let mut r = rng(seed);
        let k = random_log_params(&mut r, &KernelSpec::gip(&[JointKind::Revolute, JointKind::Revolute]), 0.3);
        let a = random_inputs(&mut r, 1, 6, 2.0).remove(0);
        let b = random_inputs(&mut r, 1, 6, 2.0).remove(0);
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2[1] += turns as f64 * std::f64::consts::TAU;
        b2[0] -= turns as f64 * std::f64::consts::TAU;
        let v = k.eval(&a, &b).unwrap();
        prop_assert!((k.eval(&a2, &b2).unwrap() - v).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn se_is_translation_invariant(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut r = rng(seed);
        let k = random_log_params(&mut r, &KernelSpec::squared_exponential(InputLayout::inverse(2)), 0.5);
        let a = random_inputs(&mut r, 1, 6, 2.0).remove(0);
        let b = random_inputs(&mut r, 1, 6, 2.0).remove(0);
        let at: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let bt: Vec<f64> = b.iter().map(|v| v + shift).collect();
        prop_assert!((k.eval(&a, &b).unwrap() - k.eval(&at, &bt).unwrap()).abs() <= 1e-12);
        prop_assert!((k.eval(&a, &b).unwrap() - k.eval(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn optimizer_trace_never_increases(seed in 0u64..1000) {
        let mut r = rng(seed);
        let x = random_inputs(&mut r, 25, 3, 2.0);
        let y: Vec<f64> = x.iter().map(|p| p[0].sin() + 0.1 * p[1]).collect();
        let opts = OptimizerOptions { budget: 30, restarts: 2, seed, ..Default::default() };
        let k = KernelSpec::squared_exponential(InputLayout::inverse(1));
        let res = optimize_hyperparameters(&x, &y, &k, 0.1, &opts).unwrap();
        prop_assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*res.trace.last().unwrap(), res.nll);
    }
}
