mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use psvm::bench::random_instance;
use psvm::dual::{dual_objective, is_feasible, Hyperparams, Penalty};
use psvm::kernel::{eta, kernel_matrix, Kernel, KernelStore};
use psvm::margin::{phi, MarginLossParams};
use psvm::matrix::Matrix;
use psvm::model::{fit_binary, fit_binary_with, fit_multiclass};
use psvm::reference::project_feasible;
use psvm::solver::{
    train_dual, train_dual_observed, DualState, PairSubproblem, RootMode, SolverOptions,
};

fn tight() -> SolverOptions {
    SolverOptions {
        kkt_tol: 1e-9,
        ..SolverOptions::default()
    }
}

fn points(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_is_nonnegative(x in points(6, 3), sigma in 0.1f64..5.0) {
        for kernel in [Kernel::Linear, Kernel::gaussian(sigma).unwrap()] {
            let k = kernel_matrix(&kernel, &x).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert!(eta(&k, i, j).unwrap() >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn phi_is_lipschitz(p in 1.0f64..4.0, rho in 0.05f64..3.0, a in -2.0f64..4.0, b in -2.0f64..4.0) {
        let params = MarginLossParams::new(p, rho).unwrap();
        let lhs = (phi(&params, a) - phi(&params, b)).abs();
        prop_assert!(lhs <= params.lipschitz() * (a - b).abs() * (1.0 + 1e-12) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&phi(&params, a)));
    }

    #[test]
    fn dual_objective_is_concave(
        x in points(8, 2),
        raw_a in prop::collection::vec(0.0f64..3.0, 8),
        raw_b in prop::collection::vec(0.0f64..3.0, 8),
        p in 1.1f64..3.0,
        c in 0.1f64..10.0,
    ) {
        let y: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = kernel_matrix(&Kernel::gaussian(1.0).unwrap(), &x).unwrap();
        let hp = Hyperparams::new(p, c).unwrap();
        let a = project_feasible(&raw_a, &y, None);
        let b = project_feasible(&raw_b, &y, None);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let fa = dual_objective(&a, &y, &k, &hp).unwrap();
        let fb = dual_objective(&b, &y, &k, &hp).unwrap();
        let fm = dual_objective(&mid, &y, &k, &hp).unwrap();
        prop_assert!(fm >= 0.5 * (fa + fb) - 1e-9 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn dual_objective_is_permutation_invariant(
        x in points(7, 3),
        raw in prop::collection::vec(0.0f64..2.0, 7),
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = (0..7).map(|i| if i < 3 { 1.0 } else { -1.0 }).collect();
        let alpha = project_feasible(&raw, &y, None);
        let hp = Hyperparams::new(1.7, 2.0).unwrap();
        let mut perm: Vec<usize> = (0..7).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let xp = x.select_rows(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let ap: Vec<f64> = perm.iter().map(|&i| alpha[i]).collect();
        let kernel = Kernel::gaussian(1.3).unwrap();
        let f = dual_objective(&alpha, &y, &kernel_matrix(&kernel, &x).unwrap(), &hp).unwrap();
        let g = dual_objective(&ap, &yp, &kernel_matrix(&kernel, &xp).unwrap(), &hp).unwrap();
        prop_assert!((f - g).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn analytic_roots_match_bisection(
        a_i in 0.0f64..5.0,
        a_j in 0.0f64..5.0,
        same in any::<bool>(),
        eta_v in 0.0f64..6.0,
        e_diff in -6.0f64..6.0,
        p_is_two in any::<bool>(),
        c in 0.05f64..20.0,
    ) {
        let (y_i, y_j) = if same { (1.0, 1.0) } else { (1.0, -1.0) };
        let p = if p_is_two { 2.0 } else { 1.5 };
        let hp = Hyperparams::new(p, c).unwrap();
        let sub = PairSubproblem::new(a_i, a_j, y_i, y_j, eta_v, e_diff, &hp.penalty);
        let analytic = sub.solve(RootMode::for_penalty(&hp.penalty)).unwrap();
        let numeric = sub.solve(RootMode::Numeric).unwrap();
        prop_assert_eq!(analytic.branch, numeric.branch);
        let scale = 1.0 + analytic.alpha_j.abs();
        prop_assert!((analytic.alpha_j - numeric.alpha_j).abs() <= 1e-9 * scale,
            "{} vs {}", analytic.alpha_j, numeric.alpha_j);
    }

    #[test]
    fn g_is_decreasing_on_the_domain(
        a_i in 0.0f64..5.0,
        a_j in 0.0f64..5.0,
        same in any::<bool>(),
        eta_v in 0.0f64..6.0,
        e_diff in -6.0f64..6.0,
        p in 1.2f64..4.0,
        c in 0.05f64..20.0,
        t in 0.0f64..1.0,
    ) {
        let (y_i, y_j) = if same { (-1.0, -1.0) } else { (-1.0, 1.0) };
        let hp = Hyperparams::new(p, c).unwrap();
        let sub = PairSubproblem::new(a_i, a_j, y_i, y_j, eta_v, e_diff, &hp.penalty);
        let (lo, hi) = match sub.domain() {
            psvm::solver::Domain::Closed { lo, hi } => (lo, hi),
            psvm::solver::Domain::Open { lo } => (lo, lo + 10.0),
        };
        let x1 = lo + t * (hi - lo);
        let x2 = x1 + 0.5 * (hi - x1);
        prop_assert!(sub.g(x1) >= sub.g(x2) - 1e-9 * (1.0 + sub.g(x1).abs()));
    }
}

#[test]
fn training_never_decreases_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 0..40 {
        let m = rng.gen_range(4..=30);
        let inst = random_instance(&mut rng, m, 3, n % 2 == 0).unwrap();
        let p = [1.5, 2.0, 2.5, 3.3][n % 4];
        let hp = Hyperparams::new(p, [0.1, 1.0, 10.0][n % 3]).unwrap();
        let store = KernelStore::from_matrix(&inst.k).unwrap();
        let mut prev = 0.0f64;
        let mut steps = 0;
        train_dual_observed(
            store,
            &inst.y,
            &hp,
            &SolverOptions::default(),
            &mut |r, st| {
                let now = dual_objective(st.alpha(), st.y(), &inst.k, &hp).unwrap();
                assert!(r.objective_increase >= -1e-10, "{r:?}");
                assert!(
                    now >= prev - 1e-10 * (1.0 + prev.abs()),
                    "objective fell {prev} -> {now}"
                );
                assert!(st.alpha().iter().all(|&a| a >= 0.0));
                assert!(is_feasible(
                    st.alpha(),
                    st.y(),
                    1e-8 * st.alpha().iter().sum::<f64>().max(1.0)
                ));
                prev = now;
                steps += 1;
            },
        )
        .unwrap();
        assert!(steps > 0);
    }
}

#[test]
fn pair_update_matches_two_variable_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x = Matrix::from_rows(&[
            [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        ])
        .unwrap();
        let y = [1.0, -1.0];
        let p = [1.5, 2.0, 2.5][rng.gen_range(0..3)];
        let hp = Hyperparams::new(p, rng.gen_range(0.2..5.0)).unwrap();
        let k = kernel_matrix(&Kernel::Linear, &x).unwrap();
        let mut state =
            DualState::new(KernelStore::from_matrix(&k).unwrap(), y.to_vec(), hp, 1e-8).unwrap();
        let r = state.update_pair(0, 1).unwrap();
        // Feasible set is the ray a_0 = a_1 = a.
        let best = common::grid_argmax(0.0, 60.0, 1e-4, |a| {
            dual_objective(&[a, a], &y, &k, &hp).unwrap()
        });
        assert!((r.after.1 - best).abs() <= 2e-4, "{:?} vs {best}", r.after);
    }
}

#[test]
fn hard_margin_separable_set_is_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    while rows.len() < 40 {
        let p: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let s = p[0] + 0.5 * p[1];
        if s.abs() < 0.3 {
            continue;
        }
        rows.push(p);
        y.push(if s > 0.0 { 1.0 } else { -1.0 });
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let hp = Hyperparams::new(1.0, 1.0)
        .unwrap()
        .with_eps(1e-9)
        .with_max_iter(20_000);
    let model = fit_binary(&x, &y, &hp, &Kernel::Linear).unwrap();
    for (r, &t) in x.iter_rows().zip(&y) {
        assert_eq!(model.predict(r).unwrap(), t);
    }
}

fn decision_grid(model: &psvm::model::BinaryModel) -> Vec<f64> {
    let mut out = Vec::new();
    for a in -4..=4 {
        for b in -4..=4 {
            out.push(
                model
                    .decision_value(&[a as f64 * 0.5, b as f64 * 0.5])
                    .unwrap(),
            );
        }
    }
    out
}

#[test]
fn duplicating_a_point_keeps_the_hard_margin_decision() {
    let x = Matrix::from_rows(&[
        [1.0, 1.0],
        [2.0, 0.5],
        [1.5, 2.0],
        [-1.0, -1.0],
        [-2.0, 0.0],
        [-0.5, -2.0],
    ])
    .unwrap();
    let y = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
    let hp = Hyperparams::new(1.0, 1.0)
        .unwrap()
        .with_eps(1e-12)
        .with_max_iter(50_000);
    let (base, _) = fit_binary_with(&x, &y, &hp, &Kernel::Linear, &tight()).unwrap();
    for dup in 0..6 {
        let mut rows: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
        rows.push(rows[dup].clone());
        let mut yd = y.to_vec();
        yd.push(y[dup]);
        let xd = Matrix::from_rows(&rows).unwrap();
        let (model, _) = fit_binary_with(&xd, &yd, &hp, &Kernel::Linear, &tight()).unwrap();
        for (u, v) in decision_grid(&base).iter().zip(decision_grid(&model)) {
            assert!((u - v).abs() <= 1e-6, "duplicate {dup}: {u} vs {v}");
        }
    }
}

#[test]
fn duplicating_a_point_outside_the_margin_keeps_the_decision() {
    let x = Matrix::from_rows(&[
        [1.0, 1.0],
        [3.0, 3.0],
        [0.2, -0.1],
        [-1.0, -1.0],
        [-3.0, -2.5],
        [0.1, 0.3],
    ])
    .unwrap();
    let y = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
    let hp = Hyperparams::new(2.0, 1.0)
        .unwrap()
        .with_eps(1e-12)
        .with_max_iter(50_000);
    let (base, _) = fit_binary_with(&x, &y, &hp, &Kernel::Linear, &tight()).unwrap();
    for dup in 0..6 {
        if base.support_index.contains(&dup) {
            continue;
        }
        let mut rows: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
        rows.push(rows[dup].clone());
        let mut yd = y.to_vec();
        yd.push(y[dup]);
        let xd = Matrix::from_rows(&rows).unwrap();
        let (model, _) = fit_binary_with(&xd, &yd, &hp, &Kernel::Linear, &tight()).unwrap();
        for (u, v) in decision_grid(&base).iter().zip(decision_grid(&model)) {
            assert!((u - v).abs() <= 1e-6, "duplicate {dup}: {u} vs {v}");
        }
    }
}

#[test]
fn two_class_ovo_equals_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = random_instance(&mut rng, 30, 3, true).unwrap();
    let labels: Vec<String> = inst
        .y
        .iter()
        .map(|&v| if v > 0.0 { "yes" } else { "no" }.to_string())
        .collect();
    let hp = Hyperparams::new(1.5, 1.0).unwrap();
    let ovo = fit_multiclass(&inst.x, &labels, &hp, &inst.kernel).unwrap();
    assert_eq!(ovo.pairs.len(), 1);
    // "no" sorts first and maps to +1.
    let y: Vec<f64> = labels
        .iter()
        .map(|l| if l == "no" { 1.0 } else { -1.0 })
        .collect();
    let bin = fit_binary(&inst.x, &y, &hp, &inst.kernel).unwrap();
    for r in inst.x.iter_rows() {
        let a = ovo.pairs[0].model.decision_value(r).unwrap();
        let b = bin.decision_value(r).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ovo.predict(r).unwrap(), if b >= 0.0 { "no" } else { "yes" });
    }
}

#[test]
fn solver_is_deterministic_under_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_instance(&mut rng, 25, 4, true).unwrap();
    let hp = Hyperparams::new(2.5, 1.0).unwrap().with_seed(123);
    let run = || {
        let store = KernelStore::from_matrix(&inst.k).unwrap();
        let (s, _) = train_dual(store, &inst.y, &hp, &SolverOptions::default()).unwrap();
        (s.alpha().to_vec(), s.bias())
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_theta_reduces_to_classic_smo() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let hp = Hyperparams::new(2.0, 1.0)
        .unwrap()
        .with_penalty(Penalty::Smooth {
            gamma: 2.0,
            theta: 0.0,
        });
    for _ in 0..200 {
        let m = rng.gen_range(3..12);
        let gaussian = rng.gen_bool(0.5);
        let inst = random_instance(&mut rng, m, 3, gaussian).unwrap();
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let alpha = project_feasible(&raw, &inst.y, None);
        let mut st = DualState::new(
            KernelStore::from_matrix(&inst.k).unwrap(),
            inst.y.clone(),
            hp,
            1e-8,
        )
        .unwrap();
        st.set_alpha(alpha.clone()).unwrap();
        st.set_bias(rng.gen_range(-1.0..1.0));
        let i = rng.gen_range(0..m);
        let j = (i + rng.gen_range(1..m)) % m;
        let e = eta(&inst.k, i, j).unwrap();
        if e < 1e-9 {
            continue;
        }
        let want = common::classic_smo_step(
            alpha[i],
            alpha[j],
            inst.y[i],
            inst.y[j],
            e,
            st.compute_error(i),
            st.compute_error(j),
        );
        let r = st.update_pair(i, j).unwrap();
        assert!((r.after.0 - want.0).abs() <= 1e-9 * (1.0 + want.0.abs()));
        assert!((r.after.1 - want.1).abs() <= 1e-9 * (1.0 + want.1.abs()));
    }
}
