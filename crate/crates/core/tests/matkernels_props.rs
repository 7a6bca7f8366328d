use oia_core::matkernels::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHAPES: [(usize, usize); 10] = [(1, 1), (2, 2), (3, 2), (4, 3), (6, 3), (8, 8), (2, 3), (3, 5), (2, 8), (14, 7)];

fn gram_error(a: &ComplexMatrix) -> f64 {
    a.adjoint_matmul(a).sub(&ComplexMatrix::identity(a.cols())).frobenius_norm()
}

fn check_svd(a: &ComplexMatrix) {
    let s = svd(a).unwrap();
    let n = a.rows().min(a.cols());
    assert_eq!(s.singular.len(), n);
    assert!(s.singular.windows(2).all(|w| w[0] >= w[1]), "{:?}", s.singular);
    assert!(s.singular.iter().all(|&x| x >= 0.0));
    assert!(gram_error(&s.left) < 1e-10, "left {}", gram_error(&s.left));
    assert!(gram_error(&s.right) < 1e-10, "right {}", gram_error(&s.right));
    let rel = s.reconstruct().sub(a).frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE);
    assert!(rel < 1e-8, "reconstruction {rel}");
}

#[test]
fn svd_invariants_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (r, c) in SHAPES {
        for _ in 0..1000 {
            check_svd(&ComplexMatrix::random_gaussian(r, c, &mut rng));
        }
    }
}

#[test]
fn svd_invariants_on_rank_deficient_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (r, c, k) in [(4, 3, 1), (6, 6, 2), (3, 5, 2), (8, 8, 7)] {
        for _ in 0..1000 {
            let a = ComplexMatrix::random_gaussian(r, k, &mut rng).matmul(&ComplexMatrix::random_gaussian(k, c, &mut rng));
            check_svd(&a);
            let s = svd(&a).unwrap();
            assert!(s.singular[k..].iter().all(|&x| x < 1e-10 * s.singular[0]));
        }
    }
}

/// Roots of `x^3 - a x^2 + b x - c` when all three are real, largest first,
/// refined by Newton steps.
fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = -2.0 * a * a * a / 27.0 + a * b / 3.0 - c;
    let r = (-p / 3.0).max(0.0).sqrt();
    let arg = if r > 0.0 { (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos() / 3.0 } else { 0.0 };
    let tau = 2.0 * std::f64::consts::PI / 3.0;
    let mut roots = [0, 1, 2].map(|k| 2.0 * r * (arg - tau * k as f64).cos() + shift);
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((*x - a) * *x + b) * *x - c;
            let d = (3.0 * *x - 2.0 * a) * *x + b;
            if d.abs() > 1e-300 {
                *x -= f / d;
            }
        }
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    roots
}

#[test]
fn singular_values_match_characteristic_polynomial_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let a = ComplexMatrix::random_gaussian(4, 3, &mut rng);
        let g = a.adjoint_matmul(&a);
        let e = |i: usize, j: usize| g[(i, j)];
        let trace = (e(0, 0) + e(1, 1) + e(2, 2)).re;
        let minors = (e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0)
            + e(0, 0) * e(2, 2)
            - e(0, 2) * e(2, 0)
            + e(1, 1) * e(2, 2)
            - e(1, 2) * e(2, 1))
        .re;
        let det = (e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
            + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0)))
        .re;
        let lambda = cubic_roots(trace, minors, det);
        let s = svd(&a).unwrap();
        for (sv, l) in s.singular.iter().zip(lambda) {
            assert!((sv - l.max(0.0).sqrt()).abs() < 1e-8, "{sv} vs {}", l.sqrt());
        }
    }
}

#[test]
fn last_right_vector_minimizes_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (r, c) in [(4, 3), (6, 3), (8, 8)] {
        for _ in 0..1000 {
            let a = ComplexMatrix::random_gaussian(r, c, &mut rng);
            let (sigma, v) = right_singular_basis(&a).unwrap();
            let best = vec_norm_sqr(&a.mul_vec(&v.column(c - 1)));
            assert!((best - sigma[c - 1].powi(2)).abs() < 1e-9 * (1.0 + best));
            for _ in 0..10_000 {
                let w: CVector = (0..c).map(|_| standard_complex_normal(&mut rng)).collect();
                let gain = vec_norm_sqr(&a.mul_vec(&w)) / vec_norm_sqr(&w);
                assert!(gain >= best - 1e-9, "probe {gain} beat {best}");
            }
        }
    }
}

#[test]
fn wide_right_basis_spans_null_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (r, c) in [(1, 2), (2, 3), (4, 8), (6, 7)] {
        for _ in 0..1000 {
            let a = ComplexMatrix::random_gaussian(r, c, &mut rng);
            let (sigma, v) = right_singular_basis(&a).unwrap();
            assert_eq!(sigma.len(), c);
            assert!(gram_error(&v) < 1e-10);
            for k in r..c {
                assert!(vec_norm_sqr(&a.mul_vec(&v.column(k))) < 1e-20);
            }
        }
    }
}

#[test]
fn pseudo_inverse_agrees_with_svd_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (r, c) in [(1, 1), (3, 2), (4, 3), (8, 8), (14, 7)] {
        for _ in 0..1000 {
            let a = ComplexMatrix::random_gaussian(r, c, &mut rng);
            let f = pseudo_inverse(&a).unwrap();
            assert!(f.matmul(&a).sub(&ComplexMatrix::identity(c)).frobenius_norm() < 1e-8);
            let s = svd(&a).unwrap();
            let vs = ComplexMatrix::from_fn(c, c, |i, j| s.right[(i, j)] / s.singular[j]);
            let other = vs.matmul(&s.left.adjoint());
            assert!(other.sub(&f).frobenius_norm() < 1e-8 * (1.0 + f.frobenius_norm()));
        }
    }
}

#[test]
fn null_space_and_random_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (m, k) in [(1, 0), (3, 1), (3, 2), (4, 2), (8, 5), (8, 8)] {
        for _ in 0..1000 {
            let q = random_orthonormal(m, k, &mut rng).unwrap();
            assert!(gram_error(&q) < 1e-10);
            let u = null_space(&q, m - k).unwrap();
            assert_eq!(u.shape(), (m, m - k));
            assert!(gram_error(&u) < 1e-10);
            assert!(q.adjoint_matmul(&u).frobenius_norm() < 1e-10);
        }
    }
}

fn scaled_matrix() -> impl Strategy<Value = ComplexMatrix> {
    (1usize..=8, 1usize..=8, any::<u64>(), -6i32..=6).prop_map(|(r, c, seed, exp)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::random_gaussian(r, c, &mut rng).scale(10f64.powi(exp))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_holds_across_scales(a in scaled_matrix()) {
        check_svd(&a);
    }

    #[test]
    fn adjoint_has_same_spectrum(a in scaled_matrix()) {
        let s1 = svd(&a).unwrap().singular;
        let s2 = svd(&a.adjoint()).unwrap().singular;
        let top = s1[0].max(f64::MIN_POSITIVE);
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x - y).abs() <= 1e-10 * top);
        }
    }
}
