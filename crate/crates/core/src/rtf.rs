//! RTF vector estimation with external microphones.
//!
//! The SC estimator takes the column of the noisy covariance matrix that
//! belongs to one external microphone and normalizes it by its reference
//! entry. With noise in the external microphones uncorrelated to every other
//! microphone, all entries of that estimate are unbiased except the one of
//! the external microphone itself, which is scaled by `1 + 1/SNR_e`.
//!
//! The mSNR combination mixes the `Me` SC estimates with weights `alpha`
//! (`1^T alpha = 1`) that maximize the biased output SNR of the RTF-steered
//! MVDR beamformer. The maximizer is the principal generalized eigenvector of
//! `A = H~^H Rn^-1 Ry Rn^-1 H~` and `B = H~^H Rn^-1 H~`; under the rank-1
//! speech / uncorrelated external noise model it reduces to the normalized
//! external input SNRs, which leaves every external entry with the common
//! bias `1 + 1/sum(SNR_e)`.
//!
//! Microphone order everywhere is `[LMA_1 (reference), .., LMA_Ma, E_1, .., E_Me]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{gevd_principal, CMatrix, CVector, Cholesky, C64};
use crate::{Error, Result};

/// SC normalizers smaller than this times `trace(Ry)/M` are rejected.
pub const SC_NORMALIZER_RTOL: f64 = 1e-12;
/// Lower bound applied to input SNRs read from covariance diagonals.
pub const SNR_FLOOR: f64 = 1e-8;
/// Upper bound applied to input SNRs read from covariance diagonals.
pub const SNR_CEIL: f64 = 1e12;
/// `|1^T v|` below this times `||v||` makes the GEVD weights fall back to uniform.
pub const GEVD_NORMALIZER_RTOL: f64 = 1e-10;
/// RTF entries smaller than this are skipped in bias statistics.
pub const BIAS_MIN_RTF: f64 = 1e-6;
/// Tolerance of the `h^H Rn^-1 E = (1/phi_x1) 1^T` model check.
pub const MODEL_CHECK_TOL: f64 = 1e-9;

/// Microphone counts of a local array plus external microphones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrayLayout {
    pub lma: usize,
    pub external: usize,
}

impl ArrayLayout {
    pub fn new(lma: usize, external: usize) -> Self {
        ArrayLayout { lma, external }
    }

    pub fn total(&self) -> usize {
        self.lma + self.external
    }

    /// Row/column of external microphone `me` (0-based).
    pub fn external_index(&self, me: usize) -> usize {
        self.lma + me
    }
}

/// How an RTF estimate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateSource {
    /// SC estimate from external microphone `me` (0-based).
    Sc(usize),
    Msnr(WeightKind),
}

/// RTF vector of one bin; entry 0 (reference) is exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RtfEstimate {
    pub h: CVector,
    pub source: EstimateSource,
}

/// SC estimate `Ry e_col / (e_1^T Ry e_col)` for external microphone `me`.
pub fn sc_estimate(ry: &CMatrix, layout: ArrayLayout, me: usize) -> Result<RtfEstimate> {
    let m = layout.total();
    if ry.rows() != m || ry.cols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: ry.rows(),
        });
    }
    if me >= layout.external {
        return Err(Error::DimensionMismatch {
            expected: layout.external,
            found: me + 1,
        });
    }
    let col = layout.external_index(me);
    let normalizer = ry[(0, col)];
    let eps = SC_NORMALIZER_RTOL * ry.trace().re.abs() / m as f64;
    if !(normalizer.norm() > eps) {
        return Err(Error::NearZeroNormalizer {
            column: me,
            magnitude: normalizer.norm(),
        });
    }
    let mut h = CVector((0..m).map(|i| ry[(i, col)] / normalizer).collect());
    h[0] = C64::new(1.0, 0.0);
    Ok(RtfEstimate {
        h,
        source: EstimateSource::Sc(me),
    })
}

/// Bias factor `1 + 1/SNR_e` of the external entry of an SC estimate.
/// An infinite SNR gives 1, a zero SNR gives `+inf`.
pub fn predicted_bias_sc(snr_e: f64) -> f64 {
    if snr_e == f64::INFINITY {
        1.0
    } else if snr_e <= 0.0 {
        f64::INFINITY
    } else {
        1.0 + 1.0 / snr_e
    }
}

/// Common bias factor `1 + 1/sum(SNR_e)` of the external entries of the
/// model-weighted mSNR estimate. Returns `+inf` when every SNR is zero.
pub fn predicted_bias_msnr(snr_e: &[f64]) -> f64 {
    let total: f64 = snr_e.iter().sum();
    predicted_bias_sc(total)
}

/// The `M x Me` matrix `H~` whose columns are the SC estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateMatrix {
    matrix: CMatrix,
    layout: ArrayLayout,
}

impl EstimateMatrix {
    pub fn build(ry: &CMatrix, layout: ArrayLayout) -> Result<Self> {
        if layout.external == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let cols = (0..layout.external)
            .map(|me| sc_estimate(ry, layout, me).map(|e| e.h))
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimateMatrix {
            matrix: CMatrix::from_columns(&cols),
            layout,
        })
    }

    /// Wraps an explicit matrix, e.g. `h 1^T + E`.
    pub fn from_matrix(matrix: CMatrix, layout: ArrayLayout) -> Result<Self> {
        if matrix.rows() != layout.total() || matrix.cols() != layout.external {
            return Err(Error::DimensionMismatch {
                expected: layout.total() * layout.external,
                found: matrix.rows() * matrix.cols(),
            });
        }
        Ok(EstimateMatrix { matrix, layout })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> ArrayLayout {
        self.layout
    }

    pub fn column(&self, me: usize) -> CVector {
        self.matrix.column(me)
    }
}

/// Where a set of combination weights came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    Gevd,
    Model,
    Uniform,
}

/// Why a weight computation fell back to uniform weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightFallback {
    /// `|1^T P{B^-1 A}|` was too small to normalize by.
    NormalizerNearZero,
    /// `B` was not positive definite (the SC estimates are linearly dependent).
    SingularPencil,
    /// Every input SNR was zero.
    AllZeroSnr,
}

/// Combination weights of one bin with `1^T alpha = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub alpha: CVector,
    pub kind: WeightKind,
    pub fallback: Option<WeightFallback>,
    /// The top generalized eigenvalue was tied (GEVD only).
    pub degenerate: bool,
}

impl WeightVector {
    pub fn uniform(me: usize) -> Self {
        WeightVector {
            alpha: CVector::from_real(&vec![1.0 / me as f64; me]),
            kind: WeightKind::Uniform,
            fallback: None,
            degenerate: false,
        }
    }

    fn fallback(me: usize, reason: WeightFallback) -> Self {
        WeightVector {
            fallback: Some(reason),
            ..Self::uniform(me)
        }
    }

    /// Selection weights `e_me`, which turn the combination into SC estimate `me`.
    pub fn select(external: usize, me: usize) -> Self {
        WeightVector {
            alpha: CVector::basis(external, me),
            kind: WeightKind::Uniform,
            fallback: None,
            degenerate: false,
        }
    }

    /// `|1^T alpha - 1|`
    pub fn constraint_error(&self) -> f64 {
        (self.alpha.sum() - C64::new(1.0, 0.0)).norm()
    }
}

/// The pencil `(A, B)` whose Rayleigh quotient is the biased output SNR of
/// the MVDR beamformer steered by `H~ alpha`.
pub fn msnr_pencil(est: &EstimateMatrix, ry: &CMatrix, rn: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let chol = Cholesky::new(rn)?;
    let g = chol.solve_matrix(est.matrix())?;
    let b = (&est.matrix().adjoint() * &g).hermitian_part();
    let a = (&(&g.adjoint() * ry) * &g).hermitian_part();
    Ok((a, b))
}

/// `J(alpha) = alpha^H A alpha / alpha^H B alpha`.
pub fn msnr_cost(a: &CMatrix, b: &CMatrix, alpha: &[C64]) -> f64 {
    a.quad_form(alpha).re / b.quad_form(alpha).re
}

/// GEVD-based mSNR weights `P{B^-1 A} / (1^T P{B^-1 A})`.
///
/// A rank-deficient `B` or a vanishing normalizer yields uniform weights
/// with the reason recorded in `fallback`. A noise covariance that is not
/// positive definite is an error.
pub fn gevd_weights(est: &EstimateMatrix, ry: &CMatrix, rn: &CMatrix) -> Result<WeightVector> {
    let me = est.layout().external;
    let (a, b) = msnr_pencil(est, ry, rn)?;
    let principal = match gevd_principal(&a, &b) {
        Ok(p) => p,
        Err(Error::NotPositiveDefinite { .. }) => {
            return Ok(WeightVector::fallback(me, WeightFallback::SingularPencil))
        }
        Err(e) => return Err(e),
    };
    let v = principal.vector;
    let s = v.sum();
    if !(s.norm() >= GEVD_NORMALIZER_RTOL * v.norm()) {
        return Ok(WeightVector::fallback(me, WeightFallback::NormalizerNearZero));
    }
    Ok(WeightVector {
        alpha: v.scale(s.inv()),
        kind: WeightKind::Gevd,
        fallback: None,
        degenerate: principal.degenerate,
    })
}

/// Model-based mSNR weights: the external input SNRs normalized to sum one.
///
/// Infinite SNRs share the weight equally among themselves.
pub fn model_weights(snr_e: &[f64]) -> WeightVector {
    let me = snr_e.len();
    let infinite = snr_e.iter().filter(|s| s.is_infinite()).count();
    let alpha: Vec<f64> = if infinite > 0 {
        snr_e
            .iter()
            .map(|s| if s.is_infinite() { 1.0 / infinite as f64 } else { 0.0 })
            .collect()
    } else {
        let total: f64 = snr_e.iter().sum();
        if !(total > 0.0) {
            return WeightVector::fallback(me, WeightFallback::AllZeroSnr);
        }
        snr_e.iter().map(|s| s / total).collect()
    };
    WeightVector {
        alpha: CVector::from_real(&alpha),
        kind: WeightKind::Model,
        fallback: None,
        degenerate: false,
    }
}

/// Per-external-microphone input SNR `Rx[e,e] / Rn[e,e]`, clamped to
/// `[SNR_FLOOR, SNR_CEIL]`.
pub fn input_snrs(rx: &CMatrix, rn: &CMatrix, layout: ArrayLayout) -> Vec<f64> {
    (0..layout.external)
        .map(|me| {
            let i = layout.external_index(me);
            let px = rx[(i, i)].re.max(0.0);
            let pn = rn[(i, i)].re;
            let snr = if pn > 0.0 {
                px / pn
            } else if px > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            snr.clamp(SNR_FLOOR, SNR_CEIL)
        })
        .collect()
}

/// mSNR estimate `H~ alpha`, with the reference entry re-pinned to 1.
pub fn combine(est: &EstimateMatrix, weights: &WeightVector) -> Result<RtfEstimate> {
    let me = est.layout().external;
    if weights.alpha.len() != me {
        return Err(Error::DimensionMismatch {
            expected: me,
            found: weights.alpha.len(),
        });
    }
    let s = weights.alpha.sum();
    if (s - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::ConstraintViolation {
            sum_re: s.re,
            sum_im: s.im,
        });
    }
    let mut h = est.matrix().mul_vec(&weights.alpha);
    h[0] = C64::new(1.0, 0.0);
    Ok(RtfEstimate {
        h,
        source: EstimateSource::Msnr(weights.kind),
    })
}

/// Bias matrix `E` with `H~ = h 1^T + E`: zero LMA rows, and
/// `H_e / SNR_e` on the diagonal of the external block.
pub fn bias_matrix(h: &[C64], snr_e: &[f64], layout: ArrayLayout) -> Result<CMatrix> {
    if h.len() != layout.total() {
        return Err(Error::DimensionMismatch {
            expected: layout.total(),
            found: h.len(),
        });
    }
    if snr_e.len() != layout.external {
        return Err(Error::DimensionMismatch {
            expected: layout.external,
            found: snr_e.len(),
        });
    }
    let mut e = CMatrix::zeros(layout.total(), layout.external);
    for (me, &snr) in snr_e.iter().enumerate() {
        if !(snr > 0.0) {
            return Err(Error::ZeroSnr { index: me });
        }
        let i = layout.external_index(me);
        e[(i, me)] = h[i] / snr;
    }
    Ok(e)
}

/// Two evaluations of the biased output SNR `J(alpha)` under the signal model,
/// with the scalars of the reduced form.
#[derive(Clone, Debug, PartialEq)]
pub struct CostDecomposition {
    /// `h^H Rn^-1 Ry Rn^-1 h`
    pub a1: f64,
    /// `h^H Rn^-1 h`
    pub b1: f64,
    /// `1 / phi_x1`
    pub b2: f64,
    /// `a1 + 2 (b1 + b2) + b2`
    pub a: f64,
    /// `b1 + 2 b2`
    pub b: f64,
    /// Diagonal of `S`: inverse external input SNRs.
    pub s: Vec<f64>,
    /// `b2 alpha^H S alpha`
    pub c_of_alpha: f64,
    /// `J` from the full `A`, `B` built with `H~ = h 1^T + E`.
    pub j_direct: f64,
    /// `(a + c) / (b + c)`
    pub j_reduced: f64,
}

/// Evaluates `J(alpha)` directly and through its reduced form.
///
/// `ry` must be `phi_x1 h h^H + rn`, with `rn` free of correlation between
/// any external microphone and any other microphone; the identity
/// `h^H Rn^-1 E = (1/phi_x1) 1^T` is checked and its failure reported as
/// [`Error::ModelViolation`].
pub fn cost_decomposition(
    h: &[C64],
    rn: &CMatrix,
    ry: &CMatrix,
    e: &CMatrix,
    alpha: &[C64],
    layout: ArrayLayout,
) -> Result<CostDecomposition> {
    let m = layout.total();
    let me = layout.external;
    if h.len() != m || rn.rows() != m || ry.rows() != m || e.rows() != m || e.cols() != me {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: h.len(),
        });
    }
    if alpha.len() != me {
        return Err(Error::DimensionMismatch {
            expected: me,
            found: alpha.len(),
        });
    }
    let sum: C64 = alpha.iter().sum();
    if (sum - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::ConstraintViolation {
            sum_re: sum.re,
            sum_im: sum.im,
        });
    }
    let chol = Cholesky::new(rn)?;
    let phi_x1 = ry[(0, 0)].re - rn[(0, 0)].re;
    if !(phi_x1 > 0.0) {
        return Err(Error::NonpositiveInput);
    }
    let b2 = 1.0 / phi_x1;

    let g = chol.solve(h)?;
    let b1 = CVector(h.to_vec()).dot(&g).re;
    let a1 = ry.quad_form(&g).re;

    let rn_inv_e = chol.solve_matrix(e)?;
    let h_rn_inv_e = rn_inv_e.adjoint().mul_vec(h);
    let deviation = h_rn_inv_e
        .iter()
        .map(|z| (z.conj() - C64::new(b2, 0.0)).norm() / b2)
        .fold(0.0, f64::max);
    if !(deviation <= MODEL_CHECK_TOL) {
        return Err(Error::ModelViolation { deviation });
    }

    let s: Vec<f64> = (0..me)
        .map(|k| {
            let i = layout.external_index(k);
            let snr = phi_x1 * h[i].norm_sqr() / rn[(i, i)].re;
            1.0 / snr
        })
        .collect();
    let c_of_alpha = b2
        * alpha
            .iter()
            .zip(&s)
            .map(|(a, s)| a.norm_sqr() * s)
            .sum::<f64>();
    let a = a1 + 2.0 * (b1 + b2) + b2;
    let b = b1 + 2.0 * b2;
    let j_reduced = (a + c_of_alpha) / (b + c_of_alpha);

    let ones = CMatrix::from_fn(1, me, |_, _| C64::new(1.0, 0.0));
    let h_col = CMatrix::from_fn(m, 1, |i, _| h[i]);
    let h_tilde = &(&h_col * &ones) + e;
    let est = EstimateMatrix::from_matrix(h_tilde, layout)?;
    let (big_a, big_b) = msnr_pencil(&est, ry, rn)?;
    let j_direct = msnr_cost(&big_a, &big_b, alpha);

    Ok(CostDecomposition {
        a1,
        b1,
        b2,
        a,
        b,
        s,
        c_of_alpha,
        j_direct,
        j_reduced,
    })
}

/// Predicted and measured bias of one external entry of an RTF estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasEntry {
    pub predicted_factor: f64,
    /// Estimated entry divided by the true entry.
    pub measured_ratio: C64,
}

/// Bias of the external entries of `estimate` against `truth`.
///
/// `predicted[me]` is the theoretical factor for external microphone `me`.
/// Entries whose true RTF is below [`BIAS_MIN_RTF`] in magnitude are `None`.
pub fn bias_report(
    estimate: &[C64],
    truth: &[C64],
    predicted: &[f64],
    layout: ArrayLayout,
) -> Vec<Option<BiasEntry>> {
    (0..layout.external)
        .map(|me| {
            let i = layout.external_index(me);
            let t = truth[i];
            if t.norm() < BIAS_MIN_RTF {
                return None;
            }
            Some(BiasEntry {
                predicted_factor: predicted[me],
                measured_ratio: estimate[i] / t,
            })
        })
        .collect()
}

/// Theoretical bias factors of every external entry of `H~ alpha` under the
/// signal model: `1 + Re(alpha_me) / SNR_me`.
pub fn predicted_bias_factors(alpha: &[C64], snr_e: &[f64]) -> Vec<f64> {
    alpha
        .iter()
        .zip(snr_e)
        .map(|(a, &snr)| {
            if snr == f64::INFINITY {
                1.0
            } else if snr <= 0.0 {
                f64::INFINITY
            } else {
                1.0 + a.re / snr
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// `Ry = phi h h^H + Rn`
    fn exact_ry(h: &[C64], phi: f64, rn: &CMatrix) -> CMatrix {
        &CMatrix::outer(h, h).scale_real(phi) + rn
    }

    struct Instance {
        layout: ArrayLayout,
        h: CVector,
        phi: f64,
        rn: CMatrix,
        ry: CMatrix,
        snr: Vec<f64>,
    }

    fn random_instance(rng: &mut ChaCha8Rng, lma: usize, external: usize) -> Instance {
        let layout = ArrayLayout::new(lma, external);
        let m = layout.total();
        let mut h = CVector((0..m)
            .map(|_| c(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
            .collect());
        h[0] = c(1.0, 0.0);
        let g = CMatrix::from_fn(lma, lma, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let block = &(&g * &g.adjoint()) + &CMatrix::identity(lma).scale_real(0.2);
        let mut rn = CMatrix::zeros(m, m);
        for i in 0..lma {
            for j in 0..lma {
                rn[(i, j)] = block[(i, j)];
            }
        }
        for k in 0..external {
            let i = layout.external_index(k);
            rn[(i, i)] = c(rng.random_range(0.1..3.0), 0.0);
        }
        let phi = rng.random_range(0.2..5.0);
        let ry = exact_ry(&h, phi, &rn);
        let snr = (0..external)
            .map(|k| {
                let i = layout.external_index(k);
                phi * h[i].norm_sqr() / rn[(i, i)].re
            })
            .collect();
        Instance {
            layout,
            h,
            phi,
            rn,
            ry,
            snr,
        }
    }

    fn random_constrained_alpha(rng: &mut ChaCha8Rng, me: usize) -> CVector {
        let mut a = CVector((0..me)
            .map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect());
        let s = a.sum();
        a[me - 1] += c(1.0, 0.0) - s;
        a
    }

    fn worked_example() -> (ArrayLayout, CVector, CMatrix) {
        // h = [1, 0.5, 2], Rn = diag(1, 1, 0.5), phi = 1, so SNR_e = 4 / 0.5 = 8
        let layout = ArrayLayout::new(2, 1);
        let h = CVector::from_real(&[1.0, 0.5, 2.0]);
        let ry = exact_ry(&h, 1.0, &CMatrix::from_diag(&[1.0, 1.0, 0.5]));
        (layout, h, ry)
    }

    #[test]
    fn sc_noise_free_is_exact() {
        let h = CVector::from_real(&[1.0, 0.5, 2.0]);
        let ry = CMatrix::outer(&h, &h).scale_real(3.0);
        let est = sc_estimate(&ry, ArrayLayout::new(2, 1), 0).unwrap();
        assert_eq!(est.h, h);
        assert_eq!(est.source, EstimateSource::Sc(0));
    }

    #[test]
    fn sc_worked_example() {
        // column 3 of Ry is [2, 1, 4.5]; dividing by its first entry gives [1, 0.5, 2.25]
        let (layout, _, ry) = worked_example();
        assert_eq!(ry.column(2), CVector::from_real(&[2.0, 1.0, 4.5]));
        let est = sc_estimate(&ry, layout, 0).unwrap();
        let expected = [1.0, 0.5, 2.25];
        for (z, e) in est.h.iter().zip(expected) {
            assert!(close(*z, c(e, 0.0), 1e-10));
        }
        assert!((est.h[2].re / 2.0 - predicted_bias_sc(8.0)).abs() < 1e-12);
    }

    #[test]
    fn sc_lma_entries_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 3, 2);
            for me in 0..2 {
                let est = sc_estimate(&inst.ry, inst.layout, me).unwrap();
                for i in 0..inst.layout.lma {
                    assert!(close(est.h[i], inst.h[i], 1e-12 * inst.h[i].norm().max(1.0)));
                }
                let i = inst.layout.external_index(me);
                let ratio = est.h[i] / inst.h[i];
                assert!(close(ratio, c(1.0 + 1.0 / inst.snr[me], 0.0), 1e-10));
            }
        }
    }

    #[test]
    fn sc_rejects_vanishing_normalizer() {
        let rn = CMatrix::identity(3);
        let h = CVector::from_real(&[1.0, 0.5, 0.0]);
        let ry = exact_ry(&h, 1.0, &rn);
        let err = sc_estimate(&ry, ArrayLayout::new(2, 1), 0).unwrap_err();
        assert!(matches!(err, Error::NearZeroNormalizer { column: 0, .. }));
    }

    #[test]
    fn predicted_bias_values() {
        assert_eq!(predicted_bias_sc(8.0), 1.125);
        assert_eq!(predicted_bias_sc(1.0), 2.0);
        assert_eq!(predicted_bias_sc(f64::INFINITY), 1.0);
        assert_eq!(predicted_bias_sc(0.0), f64::INFINITY);
        assert_eq!(predicted_bias_msnr(&[8.0, 8.0]), 1.0625);
        assert_eq!(predicted_bias_msnr(&[8.0]), predicted_bias_sc(8.0));
        assert_eq!(predicted_bias_msnr(&[0.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn estimate_matrix_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 2, 2);
        let est = EstimateMatrix::build(&inst.ry, inst.layout).unwrap();
        assert_eq!(est.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(est.matrix()[(0, 1)], c(1.0, 0.0));
        assert!(close(est.matrix()[(1, 0)], est.matrix()[(1, 1)], 1e-12));

        let (layout, _, ry) = worked_example();
        let single = EstimateMatrix::build(&ry, layout).unwrap();
        assert_eq!(single.column(0), sc_estimate(&ry, layout, 0).unwrap().h);
    }

    #[test]
    fn bias_matrix_worked_example() {
        let layout = ArrayLayout::new(2, 1);
        let h = CVector::from_real(&[1.0, 0.5, 2.0]);
        let e = bias_matrix(&h, &[8.0], layout).unwrap();
        assert_eq!(e.column(0), CVector::from_real(&[0.0, 0.0, 0.25]));
        let zero = bias_matrix(&h, &[f64::INFINITY], layout).unwrap();
        assert_eq!(zero, CMatrix::zeros(3, 1));
        assert_eq!(bias_matrix(&h, &[0.0], layout), Err(Error::ZeroSnr { index: 0 }));
    }

    #[test]
    fn bias_matrix_reproduces_estimate_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 3, 3);
            let e = bias_matrix(&inst.h, &inst.snr, inst.layout).unwrap();
            let est = EstimateMatrix::build(&inst.ry, inst.layout).unwrap();
            let m = inst.layout.total();
            for i in 0..m {
                for k in 0..3 {
                    let model = inst.h[i] + e[(i, k)];
                    assert!(close(est.matrix()[(i, k)], model, 1e-12 * model.norm().max(1.0)));
                }
            }
        }
    }

    #[test]
    fn model_weight_examples() {
        let w = model_weights(&[2.0, 6.0]);
        assert_eq!(w.alpha, CVector::from_real(&[0.25, 0.75]));
        let w = model_weights(&[3.0, 3.0, 3.0]);
        for a in w.alpha.iter() {
            assert!(close(*a, c(1.0 / 3.0, 0.0), 1e-15));
        }
        let w = model_weights(&[1e9, 1.0]);
        assert!(close(w.alpha[0], c(1.0, 0.0), 1e-8));
        assert!((w.alpha[1].re - 1e-9).abs() < 1e-15);
        let w = model_weights(&[0.0, 0.0]);
        assert_eq!(w.fallback, Some(WeightFallback::AllZeroSnr));
        assert_eq!(w.kind, WeightKind::Uniform);
        assert!(w.constraint_error() < 1e-15);
    }

    #[test]
    fn gevd_single_external_is_one() {
        let (layout, _, ry) = worked_example();
        let est = EstimateMatrix::build(&ry, layout).unwrap();
        let w = gevd_weights(&est, &ry, &CMatrix::from_diag(&[1.0, 1.0, 0.5])).unwrap();
        assert!(close(w.alpha[0], c(1.0, 0.0), 1e-12));
    }

    #[test]
    fn gevd_equals_model_on_exact_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let me = 2 + trial % 3;
            let inst = random_instance(&mut rng, 2 + trial % 2, me);
            let est = EstimateMatrix::build(&inst.ry, inst.layout).unwrap();
            let g = gevd_weights(&est, &inst.ry, &inst.rn).unwrap();
            let m = model_weights(&inst.snr);
            assert_eq!(g.fallback, None);
            for (a, b) in g.alpha.iter().zip(m.alpha.iter()) {
                assert!(close(*a, *b, 1e-8), "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gevd_maximizes_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 3, 3);
        let est = EstimateMatrix::build(&inst.ry, inst.layout).unwrap();
        let (a, b) = msnr_pencil(&est, &inst.ry, &inst.rn).unwrap();
        let w = gevd_weights(&est, &inst.ry, &inst.rn).unwrap();
        let best = msnr_cost(&a, &b, &w.alpha);
        for _ in 0..1000 {
            let alt = random_constrained_alpha(&mut rng, 3);
            assert!(msnr_cost(&a, &b, &alt) <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gevd_singular_pencil_falls_back() {
        // noise-free external entries make both SC columns identical
        let layout = ArrayLayout::new(1, 2);
        let h = CVector::from_real(&[1.0, 0.7, 0.4]);
        let ry = CMatrix::outer(&h, &h);
        let est = EstimateMatrix::build(&ry, layout).unwrap();
        let w = gevd_weights(&est, &ry, &CMatrix::identity(3)).unwrap();
        assert_eq!(w.fallback, Some(WeightFallback::SingularPencil));
        assert_eq!(w.alpha, CVector::from_real(&[0.5, 0.5]));
    }

    #[test]
    fn combine_selection_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inst = random_instance(&mut rng, 2, 2);
        let est = EstimateMatrix::build(&inst.ry, inst.layout).unwrap();
        let sel = combine(&est, &WeightVector::select(2, 1)).unwrap();
        assert_eq!(sel.h, est.column(1));

        // SNRs {8, 8}: h = [1, 0.5, 2, 1], Rn = diag(1, 1, 0.5, 0.125), phi = 1
        let layout = ArrayLayout::new(2, 2);
        let h = CVector::from_real(&[1.0, 0.5, 2.0, 1.0]);
        let rn = CMatrix::from_diag(&[1.0, 1.0, 0.5, 0.125]);
        let ry = exact_ry(&h, 1.0, &rn);
        let est = EstimateMatrix::build(&ry, layout).unwrap();
        let w = model_weights(&input_snrs(&CMatrix::outer(&h, &h), &rn, layout));
        assert!(close(w.alpha[0], c(0.5, 0.0), 1e-15));
        let comb = combine(&est, &w).unwrap();
        assert!(close(comb.h[2], h[2].scale(1.0625), 1e-10));
        assert!(close(comb.h[3], h[3].scale(1.0625), 1e-10));
        assert!(close(comb.h[1], h[1], 1e-12));

        let bad = WeightVector {
            alpha: CVector::from_real(&[0.7, 0.7]),
            ..WeightVector::uniform(2)
        };
        assert!(matches!(combine(&est, &bad), Err(Error::ConstraintViolation { .. })));
        assert!(matches!(
            combine(&est, &WeightVector::uniform(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cost_reduction_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 3, 2);
            let e = bias_matrix(&inst.h, &inst.snr, inst.layout).unwrap();
            let alpha = random_constrained_alpha(&mut rng, 2);
            let d = cost_decomposition(&inst.h, &inst.rn, &inst.ry, &e, &alpha, inst.layout)
                .unwrap();
            assert!(((d.j_direct - d.j_reduced) / d.j_direct).abs() < 1e-8);
            assert!(d.a >= d.b);
            assert!((d.b2 - 1.0 / inst.phi).abs() < 1e-12 / inst.phi);
            for (s, snr) in d.s.iter().zip(&inst.snr) {
                assert!((s - 1.0 / snr).abs() < 1e-12 * s);
            }
        }
    }

    #[test]
    fn model_weights_minimize_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, 2, 3);
        let e = bias_matrix(&inst.h, &inst.snr, inst.layout).unwrap();
        let w = model_weights(&inst.snr);
        let best = cost_decomposition(&inst.h, &inst.rn, &inst.ry, &e, &w.alpha, inst.layout)
            .unwrap()
            .c_of_alpha;
        for _ in 0..1000 {
            let alt = random_constrained_alpha(&mut rng, 3);
            let c_alt = cost_decomposition(&inst.h, &inst.rn, &inst.ry, &e, &alt, inst.layout)
                .unwrap()
                .c_of_alpha;
            assert!(c_alt >= best * (1.0 - 1e-12));
        }
    }

    #[test]
    fn coherent_external_noise_is_a_model_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut inst = random_instance(&mut rng, 2, 2);
        let e = bias_matrix(&inst.h, &inst.snr, inst.layout).unwrap();
        // a point interferer seen by the reference and the first external mic
        let g = CVector(vec![c(1.0, 0.0), c(0.2, 0.1), c(0.8, -0.3), c(0.0, 0.0)]);
        inst.rn = &inst.rn + &CMatrix::outer(&g, &g);
        inst.ry = exact_ry(&inst.h, inst.phi, &inst.rn);
        let r = cost_decomposition(&inst.h, &inst.rn, &inst.ry, &e, &[c(0.5, 0.0), c(0.5, 0.0)], inst.layout);
        assert!(matches!(r, Err(Error::ModelViolation { .. })));
    }

    #[test]
    fn bias_report_skips_tiny_entries() {
        let layout = ArrayLayout::new(1, 2);
        let truth = [c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)];
        let est = [c(1.0, 0.0), c(0.1, 0.0), c(2.5, 0.0)];
        let r = bias_report(&est, &truth, &[1.2, 1.25], layout);
        assert!(r[0].is_none());
        let e = r[1].unwrap();
        assert_eq!(e.measured_ratio, c(1.25, 0.0));
        assert_eq!(e.predicted_factor, 1.25);
    }
}
