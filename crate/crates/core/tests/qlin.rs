use std::f64::consts::FRAC_PI_4;

use otlab_core::qlin::{
    haar_state, haar_unitary, max_abs, partial_trace, projector_span, random_density, tensor,
    trace_norm, ComplexMatrix, ComplexVector, PureState, SubsystemLayout, C64,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Unit vector orthogonal to `v`.
fn perpendicular(v: &ComplexVector, rng: &mut ChaCha8Rng) -> ComplexVector {
    loop {
        let w = haar_state(v.len(), rng).into_amplitudes();
        let p = &w - v * v.dotc(&w);
        let n = p.norm();
        if n > 1e-6 {
            return p / C64::from(n);
        }
    }
}

fn rotate(from: &ComplexVector, toward: &ComplexVector, angle: f64) -> ComplexVector {
    from * C64::from(angle.cos()) + toward * C64::from(angle.sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partial_trace_preserves_trace(
        seed in any::<u64>(),
        dims in prop::collection::vec(2usize..4, 1..4),
        mask in any::<u8>(),
    ) {
        let layout = SubsystemLayout::new(dims.clone()).unwrap();
        let rho = random_density(layout.total(), &mut rng(seed));
        let keep: Vec<usize> = (0..dims.len()).filter(|i| mask >> i & 1 == 1).collect();
        let reduced = partial_trace(&rho, &layout, &keep).unwrap();
        prop_assert!((reduced.trace() - rho.trace()).abs() < 1e-10);
    }

    #[test]
    fn tensor_mixed_product(seed in any::<u64>(), m in 1usize..4, n in 1usize..4) {
        let mut r = rng(seed);
        let (a, c) = (random_matrix(m, m, &mut r), random_matrix(m, m, &mut r));
        let (b, d) = (random_matrix(n, n, &mut r), random_matrix(n, n, &mut r));
        let lhs = tensor(&a, &b) * tensor(&c, &d);
        let rhs = tensor(&(&a * &c), &(&b * &d));
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn tensor_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c) = (random_matrix(2, 2, &mut r), random_matrix(3, 3, &mut r), random_matrix(2, 2, &mut r));
        let lhs = tensor(&tensor(&a, &b), &c);
        let rhs = tensor(&a, &tensor(&b, &c));
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn trace_norm_is_unitarily_invariant(seed in any::<u64>(), d in 1usize..6) {
        let mut r = rng(seed);
        let m = random_matrix(d, d, &mut r);
        let (u, v) = (haar_unitary(d, &mut r), haar_unitary(d, &mut r));
        let t = trace_norm(&m).unwrap();
        prop_assert!((trace_norm(&(&u * &m * &v)).unwrap() - t).abs() < 1e-9 * t.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_keeps_overlap_with_fixed_vector(
        seed in any::<u64>(),
        d in 2usize..7,
        extra in 0usize..3,
    ) {
        let mut r = rng(seed);
        let (x, y) = (haar_state(d, &mut r), haar_state(d, &mut r));
        let mut span = vec![y.clone()];
        span.extend((0..extra.min(d - 1)).map(|_| haar_state(d, &mut r)));
        let q = projector_span(&span).unwrap();
        let qy = &q * y.amplitudes();
        prop_assert!((qy - y.amplitudes()).norm() < 1e-9);
        let lhs = (&q * x.amplitudes()).norm_squared();
        prop_assert!(lhs >= x.inner(&y).norm_sqr() - 1e-10);
    }

    #[test]
    fn angle_triangle_inequality(
        seed in any::<u64>(),
        d in 2usize..7,
        theta in 0.0..=FRAC_PI_4,
        theta_p in 0.0..=FRAC_PI_4,
    ) {
        let mut r = rng(seed);
        let phi = haar_state(d, &mut r).into_amplitudes();
        let psi = rotate(&phi, &perpendicular(&phi, &mut r), theta);
        let xi = rotate(&phi, &perpendicular(&phi, &mut r), theta_p);
        let psi = PureState::normalized(psi).unwrap();
        let xi = PureState::normalized(xi).unwrap();
        prop_assert!(psi.inner(&xi).norm() >= (theta + theta_p).cos() - 1e-10);
    }
}

#[test]
fn cosine_sum_inequality_on_grid() {
    let n = 200;
    let step = FRAC_PI_4 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            let (t, p) = (i as f64 * step, j as f64 * step);
            let lhs = (t + p).cos();
            let rhs = t.cos().powi(2) + p.cos().powi(2) - 1.0;
            assert!(lhs >= rhs - 1e-12, "({t}, {p})");
        }
    }
}

#[test]
fn measurement_basis_spans_four_dimensions() {
    use otlab_core::cheat::superposition_basis;
    use otlab_core::qlin::identity;
    let basis = superposition_basis();
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((u.dotc(v) - C64::from(expected)).norm() < 1e-12);
        }
    }
    let states: Vec<PureState> = basis
        .into_iter()
        .map(|v| PureState::new(v).unwrap())
        .collect();
    let q = projector_span(&states).unwrap();
    assert!(max_abs(&(q - identity(4))) < 1e-10);
}
