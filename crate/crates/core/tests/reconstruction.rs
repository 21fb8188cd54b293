//! Round trips through explicit operators and recovery of solved worst
//! cases.

use linop_pep::classes::{FunctionClass, OperatorClass};
use linop_pep::linalg::{sigma_max, Svd, SymmetricEigen};
use linop_pep::methods::{CriterionSpec, GradientObjective};
use linop_pep::reconstruct::{
    factor_gram, interpolate_operator, recover_instance, GramBlocks, INDEFINITE_TOLERANCE,
};
use linop_pep::sdp::{ClarabelBackend, DEFAULT_TOLERANCE};
use linop_pep::worstcase::gradient_worst_case;
use linop_pep::PepError;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 100;

fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random matrix with singular values clipped to `l`, some of them active.
fn bounded_matrix(rng: &mut impl Rng, m: usize, n: usize, l: f64) -> DMatrix<f64> {
    let mut svd = Svd::new(random_matrix(rng, m, n)).unwrap();
    let top = svd.singular_values.max().max(1e-12);
    let stretch = rng.gen_range(1.0..3.0) * l / top;
    svd.singular_values
        .iter_mut()
        .for_each(|v| *v = (*v * stretch).min(l));
    svd.recompose()
}

fn symmetric_matrix(rng: &mut impl Rng, n: usize, mu: f64, l: f64) -> DMatrix<f64> {
    let q = random_matrix(rng, n, n).qr().q();
    let spectrum = nalgebra::DVector::from_fn(n, |i, _| match i {
        0 => l,
        1 => mu,
        _ => rng.gen_range(mu..=l),
    });
    &q * DMatrix::from_diagonal(&spectrum) * q.transpose()
}

fn skew_matrix(rng: &mut impl Rng, n: usize, l: f64) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    let s = &a - a.transpose();
    let norm = sigma_max(&s).max(1e-12);
    s * (l / norm * rng.gen_range(0.5..1.0))
}

struct Check {
    forward: f64,
    adjoint: f64,
    sigma: f64,
}

fn check(
    m: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Check {
    Check {
        forward: (y - m * x).norm(),
        adjoint: (v - m.transpose() * u).norm(),
        sigma: sigma_max(m),
    }
}

#[test]
fn random_gram_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..SEEDS {
        let rank = rng.gen_range(1..=6);
        let p = random_matrix(&mut rng, rank, 6);
        let g = p.transpose() * &p;
        let f = factor_gram(&g, INDEFINITE_TOLERANCE).unwrap();
        assert!(f.nrows() <= rank);
        assert!((f.transpose() * &f - &g).norm() <= 1e-12 * (1.0 + g.norm()));
    }
}

#[test]
fn general_operator_round_trip() {
    let backend = ClarabelBackend::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (n1, n2) = (rng.gen_range(0..=5), rng.gen_range(0..=5));
        let l = rng.gen_range(0.2..3.0);
        let m0 = bounded_matrix(&mut rng, m, n, l);
        let x = random_matrix(&mut rng, n, n1);
        let u = random_matrix(&mut rng, m, n2);
        let (y, v) = (&m0 * &x, m0.transpose() * &u);
        let op = interpolate_operator(
            &OperatorClass::GeneralBounded { l },
            &x,
            &y,
            &u,
            &v,
            &backend,
            DEFAULT_TOLERANCE,
        )
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(op.shape(), (m, n));
        let c = check(&op, &x, &y, &u, &v);
        assert!(
            c.forward <= 1e-6,
            "seed {seed}: forward residual {:e}",
            c.forward
        );
        assert!(
            c.adjoint <= 1e-6,
            "seed {seed}: adjoint residual {:e}",
            c.adjoint
        );
        assert!(c.sigma <= l + 1e-7, "seed {seed}: sigma {} > {l}", c.sigma);
    }
}

#[test]
fn unbounded_operator_round_trip() {
    let backend = ClarabelBackend::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (n1, n2) = (rng.gen_range(0..=5), rng.gen_range(0..=5));
        let m0 = random_matrix(&mut rng, m, n) * rng.gen_range(0.1..5.0);
        let x = random_matrix(&mut rng, n, n1);
        let u = random_matrix(&mut rng, m, n2);
        let (y, v) = (&m0 * &x, m0.transpose() * &u);
        let bound = GramBlocks::from_vectors(&x, &y, &u, &v).minimal_bound();
        assert!(bound <= sigma_max(&m0) + 1e-9);
        let op = interpolate_operator(
            &OperatorClass::GeneralUnbounded,
            &x,
            &y,
            &u,
            &v,
            &backend,
            DEFAULT_TOLERANCE,
        )
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let c = check(&op, &x, &y, &u, &v);
        assert!(
            c.forward <= 1e-6,
            "seed {seed}: forward residual {:e}",
            c.forward
        );
        assert!(
            c.adjoint <= 1e-6,
            "seed {seed}: adjoint residual {:e}",
            c.adjoint
        );
        assert!(
            c.sigma <= bound * (1.0 + 1e-6) + 1e-7,
            "seed {seed}: sigma {} > {bound}",
            c.sigma
        );
    }
}

#[test]
fn symmetric_operator_round_trip() {
    let backend = ClarabelBackend::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n = rng.gen_range(1..=8);
        let (n1, n2) = (rng.gen_range(0..=5), rng.gen_range(0..=5));
        let l = rng.gen_range(0.2..3.0);
        let mu = if rng.gen_bool(0.3) {
            -l * rng.gen_range(0.0..1.0)
        } else {
            l * rng.gen_range(0.0..1.0)
        };
        let m0 = symmetric_matrix(&mut rng, n, mu, l);
        let x = random_matrix(&mut rng, n, n1);
        let u = random_matrix(&mut rng, n, n2);
        let (y, v) = (&m0 * &x, &m0 * &u);
        let op = interpolate_operator(
            &OperatorClass::Symmetric { mu, l },
            &x,
            &y,
            &u,
            &v,
            &backend,
            DEFAULT_TOLERANCE,
        )
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let c = check(&op, &x, &y, &u, &v);
        assert!(
            c.forward <= 1e-6,
            "seed {seed}: forward residual {:e}",
            c.forward
        );
        assert!(
            c.adjoint <= 1e-6,
            "seed {seed}: adjoint residual {:e}",
            c.adjoint
        );
        assert!(
            (&op - op.transpose()).norm() <= 1e-8,
            "seed {seed}: not symmetric"
        );
        let spectrum = SymmetricEigen::new(op.clone()).eigenvalues;
        assert!(
            spectrum.max() <= l + 1e-7,
            "seed {seed}: lambda_max {} > {l}",
            spectrum.max()
        );
        assert!(
            spectrum.min() >= mu - 1e-7,
            "seed {seed}: lambda_min {} < {mu}",
            spectrum.min()
        );
        assert!(c.sigma <= l.max(mu.abs()) + 1e-7);
    }
}

#[test]
fn skew_operator_round_trip() {
    let backend = ClarabelBackend::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = rng.gen_range(1..=8);
        let (n1, n2) = (rng.gen_range(0..=5), rng.gen_range(0..=5));
        let l = rng.gen_range(0.2..3.0);
        let m0 = skew_matrix(&mut rng, n, l);
        let x = random_matrix(&mut rng, n, n1);
        let u = random_matrix(&mut rng, n, n2);
        let (y, v) = (&m0 * &x, m0.transpose() * &u);
        let op = interpolate_operator(
            &OperatorClass::SkewSymmetric { l },
            &x,
            &y,
            &u,
            &v,
            &backend,
            DEFAULT_TOLERANCE,
        )
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let c = check(&op, &x, &y, &u, &v);
        assert!(
            c.forward <= 1e-6,
            "seed {seed}: forward residual {:e}",
            c.forward
        );
        assert!(
            c.adjoint <= 1e-6,
            "seed {seed}: adjoint residual {:e}",
            c.adjoint
        );
        assert!(
            (&op + op.transpose()).norm() <= 1e-8,
            "seed {seed}: not skew"
        );
        assert!(c.sigma <= l + 1e-7, "seed {seed}: sigma {} > {l}", c.sigma);
    }
}

#[test]
fn gradient_method_instance_replays_quadratic_branch() {
    let backend = ClarabelBackend::default();
    let objective =
        GradientObjective::Plain(FunctionClass::SmoothStronglyConvex { mu: 0.0, l: 1.0 });
    let wc = gradient_worst_case(
        &objective,
        1.8,
        1,
        1.0,
        CriterionSpec::ObjectiveGapLast,
        &backend,
        DEFAULT_TOLERANCE,
    )
    .unwrap();
    assert!((wc.value - 0.32).abs() < 1e-6, "{}", wc.value);
    let inst = recover_instance(&wc, &backend, DEFAULT_TOLERANCE).unwrap();
    assert!((inst.replayed_objective - 0.32).abs() < 1e-5);
    assert!(
        inst.function_residual < 1e-6,
        "{:e}",
        inst.function_residual
    );
    assert!(inst.operator.is_none());
    let text = inst.to_text();
    assert!(text.starts_with("solver_objective 3.2"));
    assert!(text.contains("iterates "));
}

#[test]
fn composed_instance_is_dominated_by_one_direction() {
    let backend = ClarabelBackend::default();
    let objective = GradientObjective::Composed {
        g: FunctionClass::SmoothStronglyConvex { mu: 0.1, l: 1.0 },
        m: OperatorClass::GeneralBounded { l: 1.0 },
    };
    let wc = gradient_worst_case(
        &objective,
        1.0,
        3,
        1.0,
        CriterionSpec::ObjectiveGapLast,
        &backend,
        DEFAULT_TOLERANCE,
    )
    .unwrap();
    let inst = recover_instance(&wc, &backend, DEFAULT_TOLERANCE).unwrap();
    let op = inst.operator.as_ref().unwrap();
    assert!(inst.forward_residual <= 1e-6 * (1.0 + inst.x.norm()));
    assert!(inst.adjoint_residual <= 1e-6 * (1.0 + inst.u.norm()));
    assert!(inst.sigma_max <= 1.0 + 1e-6);
    assert!(
        inst.function_residual < 1e-6,
        "{:e}",
        inst.function_residual
    );
    assert!((inst.replayed_objective - inst.solver_objective).abs() < 1e-5);
    let sv = Svd::new(op.clone()).unwrap().singular_values;
    let top = sv.max();
    let second = sv
        .iter()
        .filter(|&&s| s < top)
        .fold(0.0f64, |a, &s| a.max(s));
    let image = &inst.x.transpose() * op.transpose() * op * &inst.x;
    let energy = SymmetricEigen::new(image).eigenvalues;
    let lead = energy.max();
    let rest: f64 = energy.iter().map(|e| e.max(0.0)).sum::<f64>() - lead;
    assert!(
        rest <= 1e-3 * lead,
        "top {top}, second {second}, energy {energy:?}"
    );
}

#[test]
fn non_optimal_results_are_rejected() {
    let backend = ClarabelBackend::default();
    let objective =
        GradientObjective::Plain(FunctionClass::SmoothStronglyConvex { mu: 0.0, l: 1.0 });
    let mut wc = gradient_worst_case(
        &objective,
        1.0,
        1,
        1.0,
        CriterionSpec::ObjectiveGapLast,
        &backend,
        DEFAULT_TOLERANCE,
    )
    .unwrap();
    wc.result.status = linop_pep::sdp::SolveStatus::Unbounded;
    assert!(matches!(
        recover_instance(&wc, &backend, DEFAULT_TOLERANCE),
        Err(PepError::NotOptimal(_))
    ));
}

#[test]
fn quadratic_instance_recovers_hessian_in_spectrum() {
    let backend = ClarabelBackend::default();
    let (mu, l) = (0.1, 1.0);
    let objective = GradientObjective::Plain(FunctionClass::Quadratic { mu, l });
    let wc = gradient_worst_case(
        &objective,
        1.0,
        3,
        1.0,
        CriterionSpec::ObjectiveGapLast,
        &backend,
        DEFAULT_TOLERANCE,
    )
    .unwrap();
    let inst = recover_instance(&wc, &backend, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(inst.hessians.len(), 1);
    let q = &inst.hessians[0];
    assert!((q - q.transpose()).norm() <= 1e-8);
    let spectrum = SymmetricEigen::new(q.clone()).eigenvalues;
    assert!(
        spectrum.min() >= mu - 1e-7 && spectrum.max() <= l + 1e-7,
        "{spectrum:?}"
    );
    assert!((inst.replayed_objective - inst.solver_objective).abs() < 1e-5);
}
