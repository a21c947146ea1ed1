//! RTF-steered MVDR beamformer and narrowband output SNR.

use crate::linalg::{CMatrix, CVector, Cholesky, C64};
use crate::{Error, Result};

/// MVDR filter of one bin, `w = Rn^-1 h / (h^H Rn^-1 h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerWeights(pub CVector);

impl BeamformerWeights {
    /// Reference-microphone passthrough `e_1`.
    pub fn passthrough(channels: usize) -> Self {
        BeamformerWeights(CVector::basis(channels, 0))
    }

    /// Beamformer output `w^H y` for one frame vector.
    pub fn output(&self, y: &[C64]) -> C64 {
        self.0.iter().zip(y).map(|(w, y)| w.conj() * y).sum()
    }

    /// `w^H h`, which is 1 for a distortionless filter steered by `h`.
    pub fn response(&self, h: &[C64]) -> C64 {
        self.output(h)
    }

    /// `w^H R w`
    pub fn power(&self, r: &CMatrix) -> f64 {
        r.quad_form(&self.0).re
    }
}

/// MVDR weights steered by `h` against the noise covariance `rn`.
///
/// `rn` is used as given; callers that work with estimated covariances load
/// its diagonal first (see `covariance::diagonal_loading`).
pub fn mvdr_weights(rn: &CMatrix, h: &[C64]) -> Result<BeamformerWeights> {
    if h.len() != rn.rows() {
        return Err(Error::DimensionMismatch {
            expected: rn.rows(),
            found: h.len(),
        });
    }
    let g = Cholesky::new(rn)?.solve(h)?;
    let denom = CVector(h.to_vec()).dot(&g).re;
    if !(denom > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    Ok(BeamformerWeights(g.scale(C64::new(1.0 / denom, 0.0))))
}

/// Narrowband output SNRs of a beamformer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputSnr {
    /// `w^H Ry w / w^H Rn w` with `Ry = Rx + Rn`
    pub biased: f64,
    /// `w^H Rx w / w^H Rn w`
    pub unbiased: f64,
}

pub fn narrowband_output_snr(w: &BeamformerWeights, rx: &CMatrix, rn: &CMatrix) -> Result<OutputSnr> {
    let m = w.0.len();
    if rx.rows() != m || rn.rows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: rx.rows(),
        });
    }
    let pn = w.power(rn);
    if !(pn > 0.0) {
        return Err(Error::ZeroNoisePower);
    }
    let px = w.power(rx);
    let py = w.power(&(rx + rn));
    Ok(OutputSnr {
        biased: py / pn,
        unbiased: px / pn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &(&g * &g.adjoint()) + &CMatrix::identity(n).scale_real(0.05)
    }

    #[test]
    fn identity_noise_cases() {
        let w = mvdr_weights(&CMatrix::identity(3), &CVector::basis(3, 0)).unwrap();
        assert_eq!(w.0, CVector::basis(3, 0));
        let w = mvdr_weights(&CMatrix::identity(2), &CVector::from_real(&[1.0, 1.0])).unwrap();
        assert_eq!(w.0, CVector::from_real(&[0.5, 0.5]));
    }

    #[test]
    fn distortionless_and_minimum_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let n = 5;
            let rn = random_hpd(&mut rng, n);
            let mut h = CVector((0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
            h[0] = c(1.0, 0.0);
            let w = mvdr_weights(&rn, &h).unwrap();
            assert!((w.response(&h) - c(1.0, 0.0)).norm() < 1e-12);
            let best = w.power(&rn);
            for _ in 0..1000 {
                // any distortionless filter is w + u with u orthogonal to h
                let r = CVector((0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
                let proj = h.scale(h.dot(&r) / h.norm_sqr());
                let u = &r - &proj;
                let alt = BeamformerWeights(&w.0 + &u);
                assert!((alt.response(&h) - c(1.0, 0.0)).norm() < 1e-10);
                assert!(alt.power(&rn) >= best * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn output_snr_identity() {
        let w = BeamformerWeights(CVector::from_real(&[0.6, 0.8]));
        let eye = CMatrix::identity(2);
        let s = narrowband_output_snr(&w, &eye, &eye).unwrap();
        assert!((s.unbiased - 1.0).abs() < 1e-15 && (s.biased - 2.0).abs() < 1e-15);
        let s = narrowband_output_snr(&w, &CMatrix::zeros(2, 2), &eye).unwrap();
        assert_eq!((s.unbiased, s.biased), (0.0, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let rx = random_hpd(&mut rng, 4);
            let rn = random_hpd(&mut rng, 4);
            let w = BeamformerWeights(CVector((0..4).map(|_| c(rng.random(), rng.random())).collect()));
            let s = narrowband_output_snr(&w, &rx, &rn).unwrap();
            assert!((s.biased - s.unbiased - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_power() {
        let w = BeamformerWeights(CVector::basis(2, 1));
        let rn = CMatrix::from_diag(&[1.0, 0.0]);
        assert_eq!(
            narrowband_output_snr(&w, &CMatrix::identity(2), &rn),
            Err(Error::ZeroNoisePower)
        );
    }

    #[test]
    fn output_is_linear() {
        let w = BeamformerWeights(CVector(vec![c(0.3, 0.1), c(-0.2, 0.4)]));
        let x = [c(1.0, 2.0), c(0.5, -1.0)];
        let n = [c(-0.3, 0.2), c(2.0, 0.1)];
        let y = [x[0] + n[0], x[1] + n[1]];
        assert!((w.output(&y) - w.output(&x) - w.output(&n)).norm() < 1e-12);
        assert_eq!(BeamformerWeights::passthrough(2).output(&x), x[0]);
    }
}
