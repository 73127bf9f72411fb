use bw_isolas::dispersion::{solve_collision, ModelSetup};
use bw_isolas::ffh::spectrum;
use bw_isolas::report::{loglog_fit, unordered_error};
use bw_isolas::stokes::{eval_wave, stokes_coefficients};
use num_complex::Complex64;
use proptest::prelude::*;

fn max_pairing_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_is_odd_and_increasing(alpha in 0.05f64..8.0, k in -20.0f64..20.0, dk in 1e-3f64..1.0) {
        let s = ModelSetup::new(alpha).unwrap();
        prop_assert!((s.omega(-k) + s.omega(k)).abs() <= 1e-14 * (1.0 + s.omega(k).abs()));
        prop_assert!(s.omega(k + dk) > s.omega(k));
        prop_assert!(s.omega_prime(k) > 0.0);
    }

    #[test]
    fn omega_prime_bounded_beyond_one(alpha in 0.05f64..8.0, k in 1.001f64..30.0, sign in prop::bool::ANY) {
        let s = ModelSetup::new(alpha).unwrap();
        let k = if sign { k } else { -k };
        prop_assert!(s.omega_prime(k) < alpha * s.c0);
    }

    #[test]
    fn collision_structure(alpha in 0.1f64..6.0, p in 2i64..=10) {
        let s = ModelSetup::new(alpha).unwrap();
        let c = solve_collision(p, &s).unwrap();
        let d = solve_collision(-p, &s).unwrap();
        prop_assert!(c.k < -(p as f64));
        prop_assert!((c.k + d.k).abs() < 1e-12 * c.k.abs());
        prop_assert!((c.lambda0.im + d.lambda0.im).abs() < 1e-12 * c.lambda0.im.abs());
        prop_assert!(c.krein_product() > 0.0);
        prop_assert!(c.residual < 1e-13 * (1.0 + c.lambda0.norm()));
        prop_assert!(c.mu0.abs() <= 0.5);
        prop_assert_eq!(c.m - c.n, p);
        let next = solve_collision(p + 1, &s).unwrap();
        prop_assert!(next.k < c.k);
        prop_assert!(next.lambda0.im < c.lambda0.im);
    }

    #[test]
    fn stokes_profile_is_even(alpha in 0.1f64..5.0, eps in 0.0f64..1e-2, x in -7.0f64..7.0) {
        let series = stokes_coefficients(&ModelSetup::new(alpha).unwrap()).unwrap();
        let (e1, u1, c1) = eval_wave(&series, eps, x);
        let (e2, u2, c2) = eval_wave(&series, eps, -x);
        prop_assert!((e1 - e2).abs() <= 1e-16 + 1e-13 * e1.abs());
        prop_assert!((u1 - u2).abs() <= 1e-16 + 1e-13 * u1.abs());
        prop_assert_eq!(c1, c2);
    }

    #[test]
    fn loglog_fit_recovers_power(power in -3.0f64..6.0, scale in 1e-3f64..1e3) {
        let x = [1e-4f64, 3e-4, 1e-3, 3e-3];
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(power)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        prop_assert!((f.slope - power).abs() < 1e-9);
    }

    #[test]
    fn unordered_error_is_symmetric(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
        prop_assert_eq!(unordered_error((a, b), (c, d)), unordered_error((b, a), (d, c)));
        prop_assert_eq!(unordered_error((a, b), (c, d)), unordered_error((c, d), (a, b)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn spectrum_quadrafold(alpha in 0.3f64..3.0, eps in 0.0f64..2e-3, mu in -0.5f64..0.5) {
        let series = stokes_coefficients(&ModelSetup::new(alpha).unwrap()).unwrap();
        let here = spectrum(&series, eps, mu, 12).unwrap().eigenvalues;
        let there = spectrum(&series, eps, -mu, 12).unwrap().eigenvalues;
        let reflected: Vec<Complex64> = here.iter().map(|z| -z.conj()).collect();
        let conj: Vec<Complex64> = here.iter().map(|z| z.conj()).collect();
        let neg: Vec<Complex64> = here.iter().map(|z| -z).collect();
        let scale = here.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        prop_assert!(max_pairing_distance(&here, &reflected) < 1e-12 * scale);
        prop_assert!(max_pairing_distance(&conj, &there) < 1e-10 * scale);
        prop_assert!(max_pairing_distance(&neg, &there) < 1e-10 * scale);
    }
}
