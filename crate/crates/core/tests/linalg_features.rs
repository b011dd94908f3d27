use front_core::environment::mean_reward;
use front_core::features::{build_design, dot, phi, Context};
use front_core::linalg::{cholesky_solve, min_eigenvalue, symmetric_eigenvalues, SymMatrix};
use front_core::Theta;
use proptest::prelude::*;

/// Number of eigenvalues below `sigma`, from the signs of the LDLᵀ pivots of
/// `A − σI` (Sylvester's law of inertia).
fn count_below(a: &[Vec<f64>], sigma: f64) -> usize {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= sigma;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut pivot = m[k][k];
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / pivot;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    negatives
}

fn bisection_min_eig(a: &[Vec<f64>]) -> f64 {
    let radius: f64 = a
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs() + r.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (-radius - 1.0, radius + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(a, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn largest_by_power_iteration(a: &SymMatrix) -> f64 {
    // Shift to make the spectrum nonnegative so the dominant eigenvalue is the largest.
    let shift = a.frobenius_norm();
    let b = a.shifted(shift);
    let mut x = vec![1.0; a.dim()];
    for (i, v) in x.iter_mut().enumerate() {
        *v += 0.1 * i as f64;
    }
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let y = b.mul_vec(&x);
        let norm = dot(&y, &y).sqrt();
        lambda = dot(&x, &y) / dot(&x, &x);
        x = y.into_iter().map(|v| v / norm).collect();
    }
    lambda - shift
}

fn sym_from(entries: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            rows[i][j] = entries[k];
            rows[j][i] = entries[k];
            k += 1;
        }
    }
    rows
}

fn spd_from(entries: &[f64], n: usize) -> SymMatrix {
    // B Bᵀ + I
    let b: Vec<Vec<f64>> = entries.chunks(n).map(|c| c.to_vec()).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            rows[i][j] = (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
        }
    }
    SymMatrix::from_rows(&rows)
}

#[test]
fn min_eigenvalue_of_simple_matrices() {
    assert!((min_eigenvalue(&SymMatrix::identity(5)) - 1.0).abs() < 1e-12);
    assert!((min_eigenvalue(&SymMatrix::from_diagonal(&[2.0, 5.0, 0.3])) - 0.3).abs() < 1e-12);
}

#[test]
fn full_spectrum_sums_to_trace() {
    let a = SymMatrix::from_rows(&sym_from(&[4.0, 1.0, 3.0, -2.0, 0.5, 6.0], 3));
    let eig = symmetric_eigenvalues(&a);
    assert_eq!(eig.len(), 3);
    assert!((eig.iter().sum::<f64>() - a.trace()).abs() < 1e-10);
}

proptest! {
    #[test]
    fn min_eigenvalue_matches_inertia_bisection(entries in prop::collection::vec(-5.0f64..5.0, 10)) {
        let rows = sym_from(&entries, 4);
        let ours = min_eigenvalue(&SymMatrix::from_rows(&rows));
        let oracle = bisection_min_eig(&rows);
        prop_assert!((ours - oracle).abs() < 1e-8, "ours {ours} oracle {oracle}");
    }

    #[test]
    fn trace_over_dim_lies_between_extremes(entries in prop::collection::vec(-3.0f64..3.0, 10)) {
        let a = SymMatrix::from_rows(&sym_from(&entries, 4));
        let lo = min_eigenvalue(&a);
        let hi = largest_by_power_iteration(&a);
        let mean = a.trace() / 4.0;
        prop_assert!(lo <= mean + 1e-9);
        prop_assert!(mean <= hi + 1e-6);
    }

    #[test]
    fn min_eigenvalue_scales_linearly(entries in prop::collection::vec(-3.0f64..3.0, 10), c in 0.01f64..50.0) {
        let a = SymMatrix::from_rows(&sym_from(&entries, 4));
        let scaled = min_eigenvalue(&a.scaled(c));
        let base = min_eigenvalue(&a);
        prop_assert!((scaled - c * base).abs() < 1e-9 * (1.0 + c * base.abs()));
    }

    #[test]
    fn cholesky_solve_residual_is_small(
        entries in prop::collection::vec(-2.0f64..2.0, 25),
        b in prop::collection::vec(-10.0f64..10.0, 5),
    ) {
        let a = spd_from(&entries, 5);
        let x = cholesky_solve(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        let resid = r.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let bnorm = dot(&b, &b).sqrt();
        prop_assert!(resid <= 1e-9 * (1.0 + bnorm));
    }

    #[test]
    fn design_is_linear_in_features(
        f in prop::collection::vec(-5.0f64..5.0, 6),
        g in prop::collection::vec(-5.0f64..5.0, 6),
        a in 0u8..2,
        c in -3.0f64..3.0,
    ) {
        let sum: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + c * y).collect();
        let lhs = build_design(&sum, a, 0.0);
        let zf = build_design(&f, a, 0.0);
        let zg = build_design(&g, a, 0.0);
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (zf[i] + c * zg[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn design_inner_product_is_mean_reward(
        theta in prop::collection::vec(-1.0f64..1.0, 13),
        x1 in -10.0f64..10.0,
        x2 in 0.0f64..2.0,
        kappa in 0.0f64..1.0,
        a in 0u8..2,
    ) {
        let th = Theta::from_flat(&theta).unwrap();
        let f = phi(&Context::pair(x1, x2));
        let z = build_design(&f, a, kappa);
        prop_assert!((dot(&z, &theta) - mean_reward(&th, &f, kappa, a)).abs() < 1e-10);
    }

    #[test]
    fn features_are_bounded_on_the_support(x1 in -10.0f64..=10.0, x2 in 0.0f64..=2.0) {
        let f = phi(&Context::pair(x1, x2));
        prop_assert_eq!(f.len(), 6);
        prop_assert!(f.iter().all(|v| v.abs() <= 100.0));
    }
}
