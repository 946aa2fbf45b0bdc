use std::f64::consts::PI;

use grkbs::feature::{ActivationKind, ConfigurationMap, FeatureMapConfig};
use grkbs::measure::{AtomicMeasure, ParameterBox};
use grkbs::pde::{
    convergence_study, cosine_profile, DiscreteEllipticOperator, EllipticProblem, PmannMap,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_operator(rng: &mut ChaCha8Rng) -> DiscreteEllipticOperator {
    let m = rng.random_range(11..=121);
    let k: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..3.0)).collect();
    let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..3.0)).collect();
    DiscreteEllipticOperator::assemble(EllipticProblem::from_samples(1.0, k, a).unwrap())
}

fn random_grid_fn(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Eigenvalue of the three-point Neumann stencil on `cos(jπy)`.
fn stencil_eigenvalue(j: usize, m: usize, k: f64, a: f64) -> f64 {
    let h = 1.0 / (m - 1) as f64;
    k * (2.0 - 2.0 * (j as f64 * PI * h).cos()) / (h * h) + a
}

#[test]
fn solution_operator_is_self_adjoint_and_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let op = random_operator(&mut rng);
        let m = op.grid_points();
        let f = random_grid_fn(&mut rng, m);
        let g = random_grid_fn(&mut rng, m);
        let kf = op.solve_k(&f).unwrap();
        let kg = op.solve_k(&g).unwrap();
        let scale = op.l2_norm(&kf) * op.l2_norm(&g) + op.l2_norm(&f) * op.l2_norm(&kg);
        assert!((op.inner(&kf, &g) - op.inner(&f, &kg)).abs() <= 1e-10 * scale.max(1.0));
        assert!(-op.inner(&kf, &f) >= 0.0);
        assert!(op.residual(&kf, &f) <= 1e-9 * f.iter().map(|v| v.abs()).fold(1.0, f64::max));
    }
}

#[test]
fn solve_matches_dense_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let op = random_operator(&mut rng);
        let m = op.grid_points();
        let f = random_grid_fn(&mut rng, m);
        let w: Vec<f64> = (0..m)
            .map(|j| if j == 0 || j + 1 == m { 0.5 } else { 1.0 })
            .collect();
        let rhs = DVector::from_fn(m, |j, _| -w[j] * f[j]);
        let dense = op.matrix().lu().solve(&rhs).unwrap();
        let u = op.solve_k(&f).unwrap();
        let err = u
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10 * dense.amax().max(1.0), "{err}");
    }
}

#[test]
fn eigenpairs_invert_the_solution_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let op = random_operator(&mut rng);
        let basis = op.eigenbasis(5).unwrap();
        for (lambda, psi) in basis.values().iter().zip(basis.vectors()) {
            assert!(*lambda > 0.0);
            let kpsi = op.solve_k(psi).unwrap();
            let err = kpsi
                .iter()
                .zip(psi)
                .map(|(u, p)| (u + p / lambda).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-9, "{err}");
        }
    }
}

#[test]
fn projection_is_idempotent_and_bessel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let op = random_operator(&mut rng);
        let basis = op.eigenbasis(rng.random_range(1..=6)).unwrap();
        let u = random_grid_fn(&mut rng, op.grid_points());
        let c = basis.project(&u).unwrap();
        let pu = basis.reconstruct(&c);
        let c2 = basis.project(&pu).unwrap();
        for (a, b) in c.iter().zip(&c2) {
            assert!((a - b).abs() <= 1e-10);
        }
        let coeff2: f64 = c.iter().map(|v| v * v).sum();
        assert!(coeff2 <= op.inner(&u, &u) * (1.0 + 1e-12));
    }
}

#[test]
fn eigenvalues_match_continuous_spectrum() {
    let (k, a) = (0.7, 2.0);
    let op = DiscreteEllipticOperator::assemble(EllipticProblem::constant(1.0, 201, k, a).unwrap());
    let basis = op.eigenbasis(5).unwrap();
    for (j, lambda) in basis.values().iter().enumerate() {
        let exact = k * (j as f64 * PI).powi(2) + a;
        assert!(
            (lambda - exact).abs() <= 0.01 * exact,
            "{j}: {lambda} vs {exact}"
        );
        let discrete = stencil_eigenvalue(j, 201, k, a);
        assert!(
            (lambda - discrete).abs() <= 1e-9 * discrete,
            "{j}: {lambda} vs {discrete}"
        );
    }
}

#[test]
fn cosine_convergence_is_second_order() {
    let rows = convergence_study(2.0, 1.5, 0.5, &[51, 101, 201]).unwrap();
    for r in &rows[1..] {
        let ratio = r.ratio.unwrap();
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
}

#[test]
fn solution_operator_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let op =
        DiscreteEllipticOperator::assemble(EllipticProblem::constant(1.0, 101, 1.0, 1.0).unwrap());
    // for k = a = 1, ‖u‖²_{H¹} ≤ ‖f‖ ‖u‖ ≤ ‖f‖ ‖u‖_{H¹}
    for _ in 0..100 {
        let f = random_grid_fn(&mut rng, 101);
        let ratio = op.stability_ratio(&f).unwrap();
        assert!(ratio.is_finite() && ratio <= 1.0 + 1e-9, "{ratio}");
    }
}

#[test]
fn composed_response_matches_closed_form() {
    let (k, a, m) = (1.3, 0.4, 81);
    let feature = FeatureMapConfig::scalar(
        ActivationKind::Tanh,
        ParameterBox::cube(2, -1.0, 1.0).unwrap(),
    )
    .unwrap();
    let op = DiscreteEllipticOperator::assemble(EllipticProblem::constant(1.0, m, k, a).unwrap());
    let basis = op.eigenbasis(3).unwrap();
    let map = PmannMap::new(feature.clone(), op, basis).unwrap();
    // forcing cos(πy) is the second eigenvector; its trapezoid norm² is 1/2
    let lambda = stencil_eigenvalue(1, m, k, a);
    let expected = [0.0, -(0.5f64).sqrt() / lambda, 0.0];
    for (q, e) in map.response().iter().zip(expected) {
        assert!((q - e).abs() <= 1e-12, "{q} vs {e}");
    }

    let mu = AtomicMeasure::single(feature.param_box().clone(), vec![0.6, -0.2], 1.7).unwrap();
    let x = [0.35];
    let scalar = feature.evaluate(&x, &mu).unwrap()[0];
    let forcing: Vec<f64> = cosine_profile(map.operator().problem(), 1)
        .iter()
        .map(|g| scalar * g)
        .collect();
    let direct = map
        .basis()
        .project(&map.operator().solve_k(&forcing).unwrap())
        .unwrap();
    let composed = map.evaluate(&x, &mu).unwrap();
    for (c, d) in composed.iter().zip(&direct) {
        assert!((c - d).abs() <= 1e-12, "{c} vs {d}");
    }
}
