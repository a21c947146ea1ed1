use proptest::prelude::*;
use rtfcomb_core::beamform::{mvdr_weights, narrowband_output_snr};
use rtfcomb_core::linalg::{gevd_principal, hermitian_cholesky, hermitian_eig, rayleigh_quotient};
use rtfcomb_core::rtf::{predicted_bias_msnr, predicted_bias_sc};
use rtfcomb_core::{CMatrix, CVector, C64};

fn complex_entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
}

fn hpd(entries: &[(f64, f64)], n: usize, shift: f64) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |i, j| {
        let (re, im) = entries[i * n + j];
        C64::new(re, im)
    });
    &(&g * &g.adjoint()) + &CMatrix::identity(n).scale_real(shift)
}

fn hermitian(entries: &[(f64, f64)], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| {
        let (re, im) = entries[i * n + j];
        C64::new(re, im)
    })
    .hermitian_part()
}

fn sized(max: usize) -> impl Strategy<Value = (usize, Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    (1..=max).prop_flat_map(|n| (Just(n), complex_entries(n * n), complex_entries(n * n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cholesky_round_trip((n, g, _) in sized(8)) {
        let m = hpd(&g, n, 0.1);
        let l = hermitian_cholesky(&m).unwrap();
        let err = (&(&l * &l.adjoint()) - &m).frobenius_norm() / m.frobenius_norm();
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn eig_trace_and_residual((n, a, _) in sized(10)) {
        let m = hermitian(&a, n);
        let e = hermitian_eig(&m).unwrap();
        let tr: f64 = e.values.iter().sum();
        prop_assert!((tr - m.trace().re).abs() < 1e-9);
        for (lam, v) in e.values.iter().zip(&e.vectors) {
            let r = (&m.mul_vec(v) - &v.scale(C64::new(*lam, 0.0))).norm();
            prop_assert!(r < 1e-9);
        }
    }

    #[test]
    fn gevd_beats_random_vectors(
        (n, a, b) in sized(6),
        probes in prop::collection::vec(complex_entries(6), 1000),
    ) {
        let a = hermitian(&a, n);
        let b = hpd(&b, n, 0.2);
        let p = gevd_principal(&a, &b).unwrap();
        let best = rayleigh_quotient(&a, &b, &p.vector);
        prop_assert!((best - p.value).abs() < 1e-8 * p.value.abs().max(1.0));
        for e in 0..n {
            prop_assert!(rayleigh_quotient(&a, &b, &CVector::basis(n, e)) <= best + 1e-9 * best.abs().max(1.0));
        }
        for probe in &probes {
            let v = CVector(probe[..n].iter().map(|&(re, im)| C64::new(re, im)).collect());
            if v.norm() < 1e-6 {
                continue;
            }
            prop_assert!(rayleigh_quotient(&a, &b, &v) <= best + 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn gevd_with_identity_is_top_eigenvector((n, a, _) in sized(6)) {
        let a = hermitian(&a, n);
        let e = hermitian_eig(&a).unwrap();
        prop_assume!(n == 1 || e.values[n - 1] - e.values[n - 2] > 1e-6);
        let p = gevd_principal(&a, &CMatrix::identity(n)).unwrap();
        prop_assert!((p.vector.dot(&e.vectors[n - 1]).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn msnr_bias_dominates_sc(snrs in prop::collection::vec(1e-3f64..1e3, 1..6)) {
        let combined = predicted_bias_msnr(&snrs);
        let best_single = snrs.iter().map(|&s| predicted_bias_sc(s)).fold(f64::INFINITY, f64::min);
        if snrs.len() == 1 {
            prop_assert_eq!(combined, best_single);
        } else {
            prop_assert!(combined < best_single);
        }
    }

    #[test]
    fn mvdr_distortionless_and_snr_identity((n, g, x) in sized(6), h in complex_entries(6)) {
        let rn = hpd(&g, n, 0.05);
        let rx = hpd(&x, n, 0.0);
        let mut h = CVector(h[..n].iter().map(|&(re, im)| C64::new(re, im)).collect());
        h[0] = C64::new(1.0, 0.0);
        let w = mvdr_weights(&rn, &h).unwrap();
        prop_assert!((w.response(&h) - C64::new(1.0, 0.0)).norm() < 1e-10);
        let s = narrowband_output_snr(&w, &rx, &rn).unwrap();
        prop_assert!((s.biased - s.unbiased - 1.0).abs() < 1e-12 * s.biased.max(1.0));
    }
}
