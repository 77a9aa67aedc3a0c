use proptest::prelude::*;

use rmd::model::{Dataset, LossSpec, ModelSpec};
use rmd::numerics::{gaussian_matrix, solve_linear_system, DenseMatrix, DenseVector, RngStream};
use rmd::optimizer::{
    rmd_step, sgd_step, smd_step, ConstraintLoss, HyperParams, Objective, OptimizerState,
};
use rmd::oracle::{ridge_closed_form, InterpolationProblem, RegularizedProblem};
use rmd::potential::PotentialSpec;

/// Distance from `v` to the row space of `x`, relative to `‖v‖`.
fn off_row_space(x: &DenseMatrix, v: &DenseVector) -> f64 {
    let gram = x.matmul(&x.transpose()).unwrap();
    let coef = solve_linear_system(&gram, &x.matvec(v).unwrap()).unwrap();
    let proj = x.matvec_t(&coef).unwrap();
    v.sub(&proj).norm2() / v.norm2().max(1e-300)
}

fn instance(n: usize, p: usize, seed: u64) -> (DenseMatrix, DenseVector) {
    let mut rng = RngStream::new(seed);
    let x = gaussian_matrix(n, p, &mut rng).unwrap();
    let y = rng.gaussian_vector(n, 1.0);
    (x, y)
}

fn potentials() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        Just(PotentialSpec::SquaredL2),
        Just(PotentialSpec::QNorm(3.0)),
        Just(PotentialSpec::QNorm(1.5)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mirror_displacement_stays_in_row_space(
        seed in 0u64..1000,
        potential in potentials(),
        lambda in 0.2f64..5.0,
        steps in 1usize..60,
    ) {
        let (x, y) = instance(5, 12, seed);
        let data = Dataset::from_xy(&x, &y).unwrap();
        let model = ModelSpec::linear(12);
        let obj = Objective::new(&model, LossSpec::Square, &data);
        let hp = HyperParams::new(0.01, lambda);
        let w0 = RngStream::new(seed + 1).gaussian_vector(12, 0.3);
        let mut smd = OptimizerState::new(w0.clone(), 5);
        let mut rmd = OptimizerState::new(w0.clone(), 5);
        for t in 0..steps {
            smd_step(&mut smd, &obj, &potential, t % 5, &hp).unwrap();
            rmd_step(&mut rmd, &obj, &potential, ConstraintLoss::Square, (t * 3) % 5, &hp).unwrap();
        }
        let start = potential.grad(&w0).unwrap();
        for w in [&smd.w, &rmd.w] {
            let moved = potential.grad(w).unwrap().sub(&start);
            prop_assert!(off_row_space(&x, &moved) < 1e-9);
        }
    }

    #[test]
    fn smd_with_l2_is_sgd(seed in 0u64..1000, eta in 1e-4f64..0.05) {
        let (x, y) = instance(6, 9, seed);
        let data = Dataset::from_xy(&x, &y).unwrap();
        let model = ModelSpec::linear(9);
        let obj = Objective::new(&model, LossSpec::Square, &data);
        let hp = HyperParams::new(eta, 1.0);
        let w0 = RngStream::new(seed).gaussian_vector(9, 1.0);
        let mut a = OptimizerState::new(w0.clone(), 6);
        let mut b = OptimizerState::new(w0, 6);
        for t in 0..40 {
            smd_step(&mut a, &obj, &PotentialSpec::SquaredL2, t % 6, &hp).unwrap();
            sgd_step(&mut b, &obj, t % 6, &hp).unwrap();
        }
        prop_assert_eq!(a.w, b.w);
    }

    #[test]
    fn slack_moves_only_on_the_visited_sample(seed in 0u64..1000, i in 0usize..6) {
        let (x, y) = instance(6, 9, seed);
        let data = Dataset::from_xy(&x, &y).unwrap();
        let model = ModelSpec::linear(9);
        let obj = Objective::new(&model, LossSpec::Square, &data);
        let hp = HyperParams::new(0.02, 1.5);
        let mut state = OptimizerState::new(DenseVector::zeros(9), 6);
        state.z = RngStream::new(seed).gaussian_vector(6, 0.5);
        let before = state.z.clone();
        rmd_step(&mut state, &obj, &PotentialSpec::SquaredL2, ConstraintLoss::Square, i, &hp).unwrap();
        for k in 0..6 {
            prop_assert_eq!(state.z[k] == before[k], k != i);
        }
    }
}

/// With every residual keeping its sign along the trajectory, the fixed point
/// of cyclic RMD is the ridge solution.
#[test]
fn sign_stable_rmd_reaches_ridge() {
    let (x, y) = instance(10, 30, 5);
    let data = Dataset::from_xy(&x, &y).unwrap();
    let model = ModelSpec::linear(30);
    let obj = Objective::new(&model, LossSpec::Square, &data);
    let hp = HyperParams::new(0.01, 1.0);
    let mut state = OptimizerState::new(DenseVector::zeros(30), 10);
    let initial_sign: Vec<bool> = y.iter().map(|&v| v < 0.0).collect();
    for _ in 0..100_000 {
        let before = state.w.clone();
        for i in 0..10 {
            rmd_step(
                &mut state,
                &obj,
                &PotentialSpec::SquaredL2,
                ConstraintLoss::Square,
                i,
                &hp,
            )
            .unwrap();
        }
        let f = x.matvec(&state.w).unwrap();
        for i in 0..10 {
            assert_eq!(
                f[i] - y[i] > 0.0,
                initial_sign[i],
                "residual {i} changed sign"
            );
        }
        if state.w.sub(&before).norm_inf() <= 1e-14 {
            break;
        }
    }
    let problem = RegularizedProblem::new(
        InterpolationProblem::new(x, y).unwrap(),
        1.0,
        PotentialSpec::SquaredL2,
        None,
    )
    .unwrap();
    let ridge = ridge_closed_form(&problem).unwrap();
    assert!(
        state.w.relative_error(&ridge) < 1e-8,
        "{}",
        state.w.relative_error(&ridge)
    );
}

/// Once a residual crosses zero the slack tracks |e| through the kink and the
/// fixed point moves off the ridge solution.
#[test]
fn sign_crossing_moves_rmd_off_ridge() {
    let (x, y) = instance(10, 30, 3);
    let data = Dataset::from_xy(&x, &y).unwrap();
    let model = ModelSpec::linear(30);
    let obj = Objective::new(&model, LossSpec::Square, &data);
    let hp = HyperParams::new(0.01, 1.0);
    let mut state = OptimizerState::new(DenseVector::zeros(30), 10);
    for _ in 0..100_000 {
        let before = state.w.clone();
        for i in 0..10 {
            rmd_step(
                &mut state,
                &obj,
                &PotentialSpec::SquaredL2,
                ConstraintLoss::Square,
                i,
                &hp,
            )
            .unwrap();
        }
        if state.w.sub(&before).norm_inf() <= 1e-14 {
            break;
        }
    }
    let problem = RegularizedProblem::new(
        InterpolationProblem::new(x, y).unwrap(),
        1.0,
        PotentialSpec::SquaredL2,
        None,
    )
    .unwrap();
    let ridge = ridge_closed_form(&problem).unwrap();
    // at convergence every slack equals its residual magnitude
    let f = problem.problem.x.matvec(&state.w).unwrap();
    for i in 0..10 {
        assert!((state.z[i] - (f[i] - problem.problem.y[i]).abs()).abs() < 1e-9);
    }
    assert!(state.w.relative_error(&ridge) > 1e-3);
}
