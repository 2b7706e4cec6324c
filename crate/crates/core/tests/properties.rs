mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use sskpca::cqp::{solve_secular, CqpProblem};
use sskpca::data::{gen_two_moons, groups_from_labels, SplitPlan};
use sskpca::eigen::{generalized_eig_max, pencil_left_edge, Cholesky, Pencil};
use sskpca::eval::{cross_validate, risk_bound, ParamGrid, RiskBoundInput};
use sskpca::kernels::{build_graph, diffusion_kernel, gaussian_kernel, mixed_kernel, KernelMatrix, KernelSpec, VarianceOperator};
use sskpca::kpca::{kpca_fit, mvkpca_fit};
use sskpca::lrkpca::{lrkpca_fit, reweight, LrConfig};
use sskpca::lskpca::{lskpca_fit, LsConfig};

use common::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn generators_are_pure(half in 5usize..40, per_class in 0usize..4, seed in any::<u64>()) {
        let a = gen_two_moons(2 * half, 0.1, per_class, seed).unwrap();
        let b = gen_two_moons(2 * half, 0.1, per_class, seed).unwrap();
        prop_assert_eq!(a.points_hash(), b.points_hash());
        prop_assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn groups_cover_labeled_points(half in 5usize..30, per_class in 1usize..4, seed in any::<u64>()) {
        let d = gen_two_moons(2 * half, 0.1, per_class, seed).unwrap();
        let groups = groups_from_labels(&d).unwrap();
        let mut all: Vec<usize> = groups.groups().iter().flatten().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(&all[..], d.labeled_indices());
    }

    #[test]
    fn folds_partition_labeled_points(half in 10usize..40, per_class in 2usize..8, folds in 2usize..5, seed in any::<u64>()) {
        let d = gen_two_moons(2 * half, 0.1, per_class, seed).unwrap();
        let folds = folds.min(d.labeled_indices().len());
        let plan = SplitPlan::new(&d, folds, seed).unwrap();
        let sizes: Vec<usize> = plan.folds().iter().map(|f| f.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = plan.folds().iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(&all[..], d.labeled_indices());
    }

    #[test]
    fn kernels_symmetric_and_psd(seed in any::<u64>(), gamma in 0.1f64..10.0, tau in 0.1f64..5.0) {
        let d = gen_two_moons(40, 0.1, 0, seed).unwrap();
        let graph = build_graph(&d.points, 6).unwrap();
        for k in [gaussian_kernel(&d.points, gamma).unwrap(), diffusion_kernel(&graph, tau).unwrap()] {
            let norm = k.matrix().norm();
            prop_assert!((k.matrix() - k.matrix().transpose()).norm() <= 1e-12 * norm);
            let min = k.matrix().clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min >= -1e-8 * norm, "min eigenvalue {}", min);
        }
    }

    #[test]
    fn mixed_kernel_is_affine(seed in any::<u64>(), w in 0.0f64..=1.0) {
        let d = gen_two_moons(30, 0.1, 0, seed).unwrap();
        let graph = build_graph(&d.points, 5).unwrap();
        let kg = gaussian_kernel(&d.points, 2.0).unwrap();
        let kd = diffusion_kernel(&graph, 1.0).unwrap();
        let mixed = mixed_kernel(&kg, &kd, w).unwrap();
        let k1 = mixed_kernel(&kg, &kd, 1.0).unwrap();
        let k0 = mixed_kernel(&kg, &kd, 0.0).unwrap();
        let expect = k1.matrix() * w + k0.matrix() * (1.0 - w);
        prop_assert!((mixed.matrix() - expect).amax() <= 1e-14);
    }

    #[test]
    fn centered_variance_ignores_constants(seed in any::<u64>(), scale in -5.0f64..5.0) {
        let d = gen_two_moons(26, 0.1, 0, seed).unwrap();
        let k = gaussian_kernel(&d.points, 1.0).unwrap().with_jitter(1e-8).unwrap();
        // α with Kα = scale·e
        let alpha = Cholesky::new(&k.jittered()).unwrap().solve(&DVector::from_element(26, scale));
        let op = VarianceOperator::centered(&k.jittered()).unwrap();
        let p_norm = op.matrix().norm();
        prop_assert!(op.form(&alpha) <= 1e-12 * p_norm * alpha.norm_squared());
    }

    #[test]
    fn generalized_max_dominates_samples(seed in any::<u64>(), m in 3usize..8) {
        let mut rng = rng(seed);
        let a = random_psd(&mut rng, m, m);
        let b = random_spd(&mut rng, m, 0.3);
        let top = generalized_eig_max(&Pencil::new(a.clone(), b.clone()).unwrap()).unwrap();
        for _ in 0..10_000 {
            let v = normal_vector(&mut rng, m);
            let q = v.dot(&(&a * &v)) / v.dot(&(&b * &v));
            prop_assert!(q <= top.value + 1e-9);
        }
    }

    #[test]
    fn left_edge_separates_definiteness(seed in any::<u64>(), m in 3usize..10) {
        let mut rng = rng(seed);
        let c = random_spd(&mut rng, m, 0.5);
        let p = random_psd(&mut rng, m, m - 1);
        let edge = pencil_left_edge(&c, &p).unwrap();
        for i in 1..=20 {
            let below = edge.delta - edge.delta.abs().max(1.0) * (i as f64) * 0.05;
            prop_assert!(Cholesky::new(&(&c - &p * below)).is_some());
        }
        let above = edge.delta * (1.0 + 1e-6);
        prop_assert!(Cholesky::new(&(&c - &p * above)).is_none());
    }

    #[test]
    fn cqp_kkt_and_constraint(seed in any::<u64>(), m in 3usize..25) {
        let mut rng = rng(seed);
        let problem = random_cqp(&mut rng, m);
        let sol = solve_secular(&problem).unwrap();
        prop_assert!((problem.constraint_value(&sol.alpha) - problem.s2).abs() <= 1e-8 * problem.s2);
        if !sol.hard_case {
            let scale = (problem.c.norm() + sol.zeta.abs() * problem.p.norm()) * sol.alpha.norm();
            prop_assert!(problem.kkt_residual(&sol.alpha, sol.zeta) <= 1e-8 * scale);
        }
    }

    #[test]
    fn constraint_level_only_rescales(seed in any::<u64>(), rho in 0.1f64..10.0) {
        let mut rng = rng(seed);
        let m = 8;
        let c = random_spd(&mut rng, m, 0.5);
        let p = random_psd(&mut rng, m, m - 1);
        let solve = |s2: f64| solve_secular(&CqpProblem::new(c.clone(), DVector::zeros(m), p.clone(), s2).unwrap()).unwrap().alpha;
        let a1 = solve(1.0);
        let a2 = solve(rho * rho);
        let diff = (&a2 - &a1 * rho).norm().min((&a2 + &a1 * rho).norm());
        prop_assert!(diff <= 1e-10 * a2.norm(), "{}", diff);
    }

    #[test]
    fn risk_bound_exceeds_empirical(r in 0.0f64..=1.0, q in 1usize..20, s2 in 0.01f64..100.0, l in 1usize..200, n in 1usize..2000, delta in 0.001f64..0.999) {
        let bound = risk_bound(&RiskBoundInput { empirical_risk: r, q, s2, l, n, delta }).unwrap();
        prop_assert!(bound >= r);
    }
}

#[test]
fn kpca_eigenvalue_is_achieved_variance() {
    let d = gen_two_moons(80, 0.1, 0, 3).unwrap();
    let k = gaussian_kernel(&d.points, 2.0).unwrap();
    let basis = kpca_fit(&k, true, 3).unwrap();
    let op = VarianceOperator::centered(k.matrix()).unwrap();
    for (f, &lambda) in basis.functions.iter().zip(&basis.eigenvalues) {
        let norm = f.alpha.dot(&(k.matrix() * &f.alpha));
        assert!((norm - 1.0).abs() <= 1e-9);
        assert!((op.form(&f.alpha) - lambda).abs() <= 1e-9 * lambda);
    }
}

#[test]
fn mv_eigenvalue_nonincreasing_in_c() {
    let d = gen_two_moons(100, 0.1, 4, 5).unwrap();
    let k = gaussian_kernel(&d.points, 5.0).unwrap();
    let groups = groups_from_labels(&d).unwrap();
    let values: Vec<f64> = [0.0, 0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&c| mvkpca_fit(&k, &groups, c, 1).unwrap().eigenvalues[0])
        .collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{values:?}");
    }
}

#[test]
fn labeled_error_nonincreasing_in_c() {
    for seed in 0..5 {
        let d = gen_two_moons(60, 0.1, 3, seed).unwrap();
        let k = gaussian_kernel(&d.points, 3.0).unwrap();
        let k_l = k.matrix().select_rows(d.labeled_indices());
        let t = d.targets();
        let errors: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&c| {
                let fit = lskpca_fit(&k, &d, &LsConfig::new(c, 20.0)).unwrap();
                (&k_l * &fit.function.alpha - &t).norm_squared()
            })
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {errors:?}");
        }
    }
}

#[test]
fn lr_iterates_keep_constraint_and_definite_c() {
    let mut rng = rng(77);
    for _ in 0..4 {
        let seed = rng.random_range(0..1000);
        let d = gen_two_moons(60, 0.1, 3, seed).unwrap();
        let k = gaussian_kernel(&d.points, 4.0).unwrap();
        let cfg = LrConfig::new(5.0, 30.0);
        let fit = lrkpca_fit(&k, &d, &cfg).unwrap();
        let op = VarianceOperator::centered(k.matrix()).unwrap();
        assert!((op.form(&fit.function.alpha) - cfg.s2).abs() <= 1e-8 * cfg.s2);
        assert!(fit.trace.len() <= cfg.max_iterations + 1);
        assert!(fit.trace.windows(2).all(|w| w[1].objective < w[0].objective));
        // inner matrix at the final weights, with the smallest proximal weight
        let k_l = k.matrix().select_rows(d.labeled_indices());
        let rw = reweight(&(&k_l * &fit.function.alpha), &d.targets());
        let lambda0 = 1e-4 * k.matrix().trace() / 60.0;
        let weighted = DMatrix::from_fn(k_l.nrows(), 60, |i, j| k_l[(i, j)] * rw.r[i] * cfg.c);
        let c = k.matrix() + k_l.transpose() * weighted + DMatrix::identity(60, 60) * lambda0;
        assert!(rw.r.iter().all(|&r| r > 0.0 && r <= 0.25));
        assert!(Cholesky::new(&c).is_some());
    }
}

#[test]
fn cv_selection_ignores_grid_order() {
    let d = gen_two_moons(80, 0.1, 4, 11).unwrap();
    let grid = ParamGrid::parse(
        r#"
        version = 1
        kernel = "gaussian"
        gamma = [1.0, 5.0]
        c = [1.0, 10.0]
        s2 = [0.1, 1.0]
        method = ["ls"]
        "#,
    )
    .unwrap();
    let configs = grid.expand().unwrap();
    let mut reversed = configs.clone();
    reversed.reverse();
    let a = cross_validate(&d, &configs, 4, 3).unwrap();
    let b = cross_validate(&d, &reversed, 4, 3).unwrap();
    assert_eq!(a.best().config, b.best().config);
}

#[test]
fn kernel_builds_match_spec() {
    let d = gen_two_moons(30, 0.1, 0, 2).unwrap();
    let spec = KernelSpec::Mixed {
        gamma: 2.0,
        tau: 1.0,
        w: 0.3,
        knn: 5,
    };
    let built = KernelMatrix::build(&spec, &d.points).unwrap();
    let graph = build_graph(&d.points, 5).unwrap();
    let manual = mixed_kernel(
        &gaussian_kernel(&d.points, 2.0).unwrap(),
        &diffusion_kernel(&graph, 1.0).unwrap(),
        0.3,
    )
    .unwrap();
    assert!((built.matrix() - manual.matrix()).amax() <= 1e-14);
}
