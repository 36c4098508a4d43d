//! Property tests for the documented invariants of the numerical kernels and
//! the correlation statistics.

use elliptgof::datagen::{AlternativeSpec, RadialLaw, ShapeStructure};
use elliptgof::linalg::{self, MatrixPower, SymMatrix};
use elliptgof::stats::{self, StandardizedSample};
use elliptgof::TestMode;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Random PD matrix of dimension `dim` built as B B' / dim + ridge I.
fn pd_matrix(dim: usize, entries: Vec<f64>, ridge: f64) -> SymMatrix {
    let b = DMatrix::from_fn(dim, dim, |j, k| entries[j * dim + k]);
    let mut m = &b * b.transpose() / dim as f64;
    for j in 0..dim {
        m[(j, j)] += ridge;
    }
    SymMatrix::from_matrix(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sqrt_round_trips_on_random_pd(
        dim in 2usize..8,
        seed in proptest::collection::vec(-1.0f64..1.0, 64),
        ridge in 0.05f64..2.0,
    ) {
        let m = pd_matrix(dim, seed, ridge);
        let root = linalg::matrix_power(&m, MatrixPower::Sqrt).unwrap();
        let squared = root.as_matrix() * root.as_matrix();
        prop_assert!(frob_rel(&squared, m.as_matrix()) < 1e-10);
    }

    #[test]
    fn inv_sqrt_equals_sqrt_of_inverse(
        dim in 2usize..8,
        seed in proptest::collection::vec(-1.0f64..1.0, 64),
        ridge in 0.05f64..2.0,
    ) {
        let m = pd_matrix(dim, seed, ridge);
        let a = linalg::matrix_power(&m, MatrixPower::InvSqrt).unwrap();
        let inv = linalg::matrix_power(&m, MatrixPower::Inverse).unwrap();
        let b = linalg::matrix_power(&inv, MatrixPower::Sqrt).unwrap();
        prop_assert!(frob_rel(a.as_matrix(), b.as_matrix()) < 1e-9);
    }

    #[test]
    fn band_is_idempotent_and_masks(
        dim in 1usize..10,
        h in 0usize..10,
        seed in proptest::collection::vec(-5.0f64..5.0, 100),
    ) {
        let m = SymMatrix::from_fn(dim, |j, k| seed[j * dim + k]);
        let once = linalg::band(&m, h);
        let twice = linalg::band(&once, h);
        prop_assert_eq!(&once, &twice);
        for j in 0..dim {
            for k in 0..dim {
                if j.abs_diff(k) > h {
                    prop_assert_eq!(once.entry(j, k), 0.0);
                } else {
                    prop_assert_eq!(once.entry(j, k), m.entry(j, k));
                }
            }
        }
    }

    #[test]
    fn project_then_normalize_is_pd_with_trace_p(
        dim in 1usize..8,
        seed in proptest::collection::vec(-3.0f64..3.0, 64),
    ) {
        let m = SymMatrix::from_fn(dim, |j, k| seed[j * dim + k]);
        let out = linalg::trace_normalize(&linalg::pd_project(&m, 1e-8).unwrap()).unwrap();
        prop_assert!((out.trace() - dim as f64).abs() < 1e-10 * dim as f64);
        let eig = linalg::sym_eig(&out).unwrap();
        prop_assert!(eig.eigenvalues[dim - 1] > 0.0);
    }

    #[test]
    fn correlations_match_naive_pearson(
        log_radii in proptest::collection::vec(-1.0f64..1.0, 20),
        raw in proptest::collection::vec(-1.0f64..1.0, 200),
    ) {
        // Random 20x10 direction rows, normalized.
        let mut dirs = DMatrix::from_fn(20, 10, |i, j| raw[i * 10 + j] + 0.01);
        for i in 0..20 {
            let norm = dirs.row(i).norm();
            prop_assume!(norm > 1e-6);
            dirs.row_mut(i).scale_mut(1.0 / norm);
        }
        let radii: Vec<f64> = log_radii.iter().map(|l| l.exp()).collect();
        let sample = StandardizedSample::from_parts(radii, dirs.clone()).unwrap();
        let g = match stats::correlation_vector(&sample) {
            Ok(g) => g,
            Err(_) => return Ok(()), // degenerate draw
        };
        for j in 0..10 {
            let col: Vec<f64> = (0..20).map(|i| dirs[(i, j)]).collect();
            let n = 20.0;
            let ml = log_radii.iter().sum::<f64>() / n;
            let mu = col.iter().sum::<f64>() / n;
            let mut cov = 0.0;
            let mut vl = 0.0;
            let mut vu = 0.0;
            for i in 0..20 {
                cov += (log_radii[i] - ml) * (col[i] - mu);
                vl += (log_radii[i] - ml).powi(2);
                vu += (col[i] - mu).powi(2);
            }
            let pearson = cov / (vl.sqrt() * vu.sqrt());
            prop_assert!((g.coordinates()[j] - pearson).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_p_values_stay_in_counting_range(b_pi in 1usize..40, seed in any::<u64>()) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 15;
        let p = 4;
        let radii: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut dirs = DMatrix::zeros(n, p);
        for i in 0..n {
            let v = elliptgof::calibrate::sample_uniform_sphere(p, &mut rng);
            dirs.row_mut(i).tr_copy_from(&v);
        }
        let s = StandardizedSample::from_parts(radii, dirs).unwrap();
        let report = stats::report_from_sample(&s).unwrap();
        let out = elliptgof::permutation_check(&s, &report, b_pi, seed).unwrap();
        let min_p = 1.0 / (b_pi + 1) as f64;
        for v in [out.p_sum_perm, out.p_max_perm] {
            prop_assert!(v >= min_p - 1e-15);
            prop_assert!(v <= 1.0 + 1e-15);
        }
    }
}

#[test]
fn column_permutation_permutes_g_and_fixes_statistics() {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(314);
    let n = 60;
    let p = 12;
    let x = elliptgof::datagen::generate(
        n,
        p,
        &RadialLaw::Gaussian,
        &ShapeStructure::Identity,
        &AlternativeSpec { active_set: elliptgof::datagen::ActiveSet::Frac20, delta: 1.0 },
        &DVector::zeros(p),
        &mut rng,
    )
    .unwrap();

    let perm: Vec<usize> = {
        let mut idx: Vec<usize> = (0..p).collect();
        idx.shuffle(&mut rng);
        idx
    };
    let mut xp = DMatrix::zeros(n, p);
    for (dst, &src) in perm.iter().enumerate() {
        xp.set_column(dst, &x.column(src));
    }

    let mode = TestMode::Oracle { mu: DVector::zeros(p), sigma: SymMatrix::identity(p) };
    let mode_p = TestMode::Oracle { mu: DVector::zeros(p), sigma: SymMatrix::identity(p) };
    let base = elliptgof::run_test_full(&x, &mode).unwrap();
    let permuted = elliptgof::run_test_full(&xp, &mode_p).unwrap();

    let g_base = stats::correlation_vector(&base.sample).unwrap();
    let g_perm = stats::correlation_vector(&permuted.sample).unwrap();
    for (dst, &src) in perm.iter().enumerate() {
        assert_eq!(
            g_perm.coordinates()[dst].to_bits(),
            g_base.coordinates()[src].to_bits(),
            "coordinate {src} -> {dst} changed under column permutation"
        );
    }
    assert_eq!(base.report.t_sum.to_bits(), permuted.report.t_sum.to_bits());
    assert_eq!(base.report.t_max.to_bits(), permuted.report.t_max.to_bits());
}

#[test]
fn power_of_two_rescaling_is_bit_identical() {
    // Scaling by a power of two is exact in every floating-point operation
    // of the oracle pipeline, so the statistics must match bit for bit.
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2718);
    let n = 50;
    let p = 8;
    let x = elliptgof::datagen::generate(
        n,
        p,
        &RadialLaw::Gaussian,
        &ShapeStructure::ar_default(),
        &AlternativeSpec::null(),
        &DVector::from_element(p, 0.25),
        &mut rng,
    )
    .unwrap();

    let c = 4.0;
    let sigma = elliptgof::datagen::make_shape(&ShapeStructure::ar_default(), p).unwrap();
    let sigma_scaled = SymMatrix::from_matrix(sigma.as_matrix() * (c * c));
    let mu = DVector::from_element(p, 0.25);
    let mu_scaled = &mu * c;

    let base = elliptgof::run_test(&x, &TestMode::Oracle { mu, sigma }).unwrap();
    let scaled = elliptgof::run_test(
        &(&x * c),
        &TestMode::Oracle { mu: mu_scaled, sigma: sigma_scaled },
    )
    .unwrap();

    assert_eq!(base.t_sum.to_bits(), scaled.t_sum.to_bits());
    assert_eq!(base.t_max.to_bits(), scaled.t_max.to_bits());
    assert_eq!(base.p_cau.to_bits(), scaled.p_cau.to_bits());
}

#[test]
fn bootstrap_is_invariant_to_sample_order() {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
    let n = 30;
    let p = 6;
    let radii: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
    let mut dirs = DMatrix::zeros(n, p);
    for i in 0..n {
        dirs.row_mut(i).tr_copy_from(&elliptgof::calibrate::sample_uniform_sphere(p, &mut rng));
    }
    let s = StandardizedSample::from_parts(radii.clone(), dirs.clone()).unwrap();
    let report = stats::report_from_sample(&s).unwrap();

    // Reverse the observation order; the resampled replicate statistics see
    // only the empirical radius distribution, which is unchanged.
    let rev_radii: Vec<f64> = radii.into_iter().rev().collect();
    let mut rev_dirs = DMatrix::zeros(n, p);
    for i in 0..n {
        rev_dirs.set_row(i, &dirs.row(n - 1 - i));
    }
    let s_rev = StandardizedSample::from_parts(rev_radii, rev_dirs).unwrap();

    let a = elliptgof::bootstrap_calibrate(&s, &report, 40, 5).unwrap();
    let b = elliptgof::bootstrap_calibrate(&s_rev, &report, 40, 5).unwrap();
    assert_eq!(a.mean_sum.to_bits(), b.mean_sum.to_bits());
    assert_eq!(a.sd_sum.to_bits(), b.sd_sum.to_bits());
    assert_eq!(a.mean_max.to_bits(), b.mean_max.to_bits());
    assert_eq!(a.sd_max.to_bits(), b.sd_max.to_bits());
}
