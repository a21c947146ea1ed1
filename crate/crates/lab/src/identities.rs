//! Exact-model identity battery on constructed one-bin covariances.
//!
//! Every instance satisfies the signal model exactly: `Ry = phi h h^H + Rn`
//! with `Rn` block diagonal (arbitrary LMA block, diagonal external block).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtfcomb_core::beamform::{mvdr_weights, narrowband_output_snr, BeamformerWeights};
use rtfcomb_core::rtf::{
    bias_matrix, combine, cost_decomposition, gevd_weights, model_weights, msnr_cost, msnr_pencil, predicted_bias_msnr,
    sc_estimate, ArrayLayout, EstimateMatrix, WeightVector,
};
use rtfcomb_core::{CMatrix, CVector, Error, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatteryConfig {
    pub seed: u64,
    pub instances: usize,
    pub competitors: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 2024,
            instances: 1000,
            competitors: 1000,
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// One bin of the exact signal model.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactModel {
    pub layout: ArrayLayout,
    pub h: CVector,
    pub phi: f64,
    pub rn: CMatrix,
    pub rx: CMatrix,
    pub ry: CMatrix,
}

impl ExactModel {
    pub fn new(h: CVector, phi: f64, rn: CMatrix, layout: ArrayLayout) -> Self {
        let rx = CMatrix::outer(&h, &h).scale_real(phi);
        let ry = &rx + &rn;
        ExactModel {
            layout,
            h,
            phi,
            rn,
            rx,
            ry,
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, lma: usize, external: usize) -> Self {
        let layout = ArrayLayout::new(lma, external);
        let m = layout.total();
        let mut h = CVector(
            (0..m)
                .map(|_| C64::from_polar(rng.random_range(0.3..2.0), rng.random_range(-3.2..3.2)))
                .collect(),
        );
        h[0] = c(1.0, 0.0);
        let g = CMatrix::from_fn(lma, lma, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let block = &(&g * &g.adjoint()) + &CMatrix::identity(lma).scale_real(0.2);
        let mut rn = CMatrix::zeros(m, m);
        for i in 0..lma {
            for j in 0..lma {
                rn[(i, j)] = block[(i, j)];
            }
        }
        for k in 0..external {
            let i = layout.external_index(k);
            rn[(i, i)] = c(rng.random_range(0.2..2.0), 0.0);
        }
        let phi = rng.random_range(0.2..5.0);
        Self::new(h, phi, rn, layout)
    }

    /// External input SNRs `phi |H_e|^2 / Rn[e, e]`.
    pub fn snr(&self) -> Vec<f64> {
        (0..self.layout.external)
            .map(|k| {
                let i = self.layout.external_index(k);
                self.phi * self.h[i].norm_sqr() / self.rn[(i, i)].re
            })
            .collect()
    }

    /// The same scene with a coherent noise source reaching the reference
    /// mic and external mic `me`, which breaks the external noise model.
    pub fn with_coherent_external_noise(&self, me: usize, power: f64) -> ExactModel {
        let m = self.layout.total();
        let mut u = CVector::zeros(m);
        u[0] = c(1.0, 0.0);
        u[self.layout.external_index(me)] = c(0.8, 0.3);
        let rn = &self.rn + &CMatrix::outer(&u, &u).scale_real(power);
        Self::new(self.h.clone(), self.phi, rn, self.layout)
    }

    pub fn estimate_matrix(&self) -> Result<EstimateMatrix, Error> {
        EstimateMatrix::build(&self.ry, self.layout)
    }
}

/// Random complex weights with `1^T alpha = 1`.
pub fn random_constrained(rng: &mut ChaCha8Rng, me: usize) -> CVector {
    let v: Vec<C64> = (0..me)
        .map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    let shift = (c(1.0, 0.0) - v.iter().sum::<C64>()) / me as f64;
    CVector(v.iter().map(|x| x + shift).collect())
}

/// Cycles the external count through 2, 3 and 4 with 1 to 4 LMA mics.
fn shapes(i: usize) -> (usize, usize) {
    (1 + i % 4, 2 + i % 3)
}

/// The SC bias example: `h = [1, 0.5, 2]`, `Rn = diag(1, 1, 0.5)`, `phi = 1`.
pub fn sc_bias_example() -> Check {
    let layout = ArrayLayout::new(2, 1);
    let model = ExactModel::new(
        CVector::from_real(&[1.0, 0.5, 2.0]),
        1.0,
        CMatrix::from_diag(&[1.0, 1.0, 0.5]),
        layout,
    );
    let expected = [1.0, 0.5, 2.25];
    match sc_estimate(&model.ry, layout, 0) {
        Ok(est) => {
            let err = est.h.iter().zip(expected).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            check(
                "sc bias example",
                err <= 1e-10,
                format!("estimate {:?}, max error {err:.2e}", est.h.iter().map(|z| z.re).collect::<Vec<_>>()),
            )
        }
        Err(e) => check("sc bias example", false, e.to_string()),
    }
}

/// Model weights on equal external SNRs of 8: both external entries scaled by 1.0625.
pub fn msnr_bias_example() -> Check {
    let layout = ArrayLayout::new(2, 2);
    let h = CVector::from_real(&[1.0, 0.5, 2.0, 1.0]);
    let model = ExactModel::new(h.clone(), 1.0, CMatrix::from_diag(&[1.0, 1.0, 0.5, 0.125]), layout);
    let run = || -> Result<(f64, f64), Error> {
        let est = model.estimate_matrix()?;
        let w = model_weights(&model.snr());
        let out = combine(&est, &w)?.h;
        let ext = (0..2)
            .map(|k| {
                let i = layout.external_index(k);
                (out[i] / h[i] - 1.0625).norm()
            })
            .fold(0.0, f64::max);
        let lma = (0..2).map(|i| (out[i] - h[i]).norm()).fold(0.0, f64::max);
        Ok((ext, lma))
    };
    match run() {
        Ok((ext, lma)) => check(
            "msnr bias example",
            ext <= 1e-10 && lma <= 1e-12,
            format!("SNRs {:?}: external factor error {ext:.2e}, LMA error {lma:.2e}", model.snr()),
        ),
        Err(e) => check("msnr bias example", false, e.to_string()),
    }
}

/// Largest per-entry gap between GEVD and model weights, and largest
/// imaginary part of the GEVD weights.
fn gevd_model_gap(model: &ExactModel) -> Result<(f64, f64), Error> {
    let est = model.estimate_matrix()?;
    let g = gevd_weights(&est, &model.ry, &model.rn)?;
    if g.fallback.is_some() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let m = model_weights(&model.snr());
    let gap = g.alpha.iter().zip(m.alpha.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let imag = g.alpha.iter().map(|a| a.im.abs()).fold(0.0, f64::max);
    Ok((gap, imag))
}

pub fn gevd_equals_model(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut worst_gap, mut worst_imag) = (0.0f64, 0.0f64);
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        match gevd_model_gap(&model) {
            Ok((gap, imag)) => {
                worst_gap = worst_gap.max(gap);
                worst_imag = worst_imag.max(imag);
            }
            Err(e) => return check("gevd equals model", false, format!("instance {i}: {e}")),
        }
    }
    check(
        "gevd equals model",
        worst_gap <= 1e-8 && worst_imag <= 1e-8,
        format!(
            "{} instances, max |gevd - model| {worst_gap:.2e}, max |Im gevd| {worst_imag:.2e}",
            cfg.instances
        ),
    )
}

/// Uses the instances of [`gevd_equals_model`]; probes come from a separate stream.
pub fn cost_reduction(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probes = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a);
    let mut worst_rel = 0.0f64;
    let mut beaten = 0usize;
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        let snr = model.snr();
        let run = |alpha: &[C64]| -> Result<_, Error> {
            let e = bias_matrix(&model.h, &snr, model.layout)?;
            cost_decomposition(&model.h, &model.rn, &model.ry, &e, alpha, model.layout)
        };
        let probe = random_constrained(&mut probes, me);
        let d = match run(&probe) {
            Ok(d) => d,
            Err(e) => return check("cost reduction", false, format!("instance {i}: {e}")),
        };
        worst_rel = worst_rel.max((d.j_direct - d.j_reduced).abs() / d.j_direct.abs());
        let c_of = |alpha: &[C64]| d.b2 * alpha.iter().zip(&d.s).map(|(a, s)| a.norm_sqr() * s).sum::<f64>();
        let best = c_of(&model_weights(&snr).alpha);
        for _ in 0..cfg.competitors {
            let alt = random_constrained(&mut probes, me);
            if c_of(&alt) < best * (1.0 - 1e-12) {
                beaten += 1;
            }
        }
    }
    check(
        "cost reduction",
        worst_rel <= 1e-8 && beaten == 0,
        format!(
            "{} instances, max relative |J_direct - J_reduced| {worst_rel:.2e}, model c(alpha) beaten {beaten} times in {} trials",
            cfg.instances,
            cfg.instances * cfg.competitors
        ),
    )
}

/// Bias laws of SC, model-weighted mSNR and the unbiased LMA entries.
pub fn bias_laws(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5c);
    let (mut sc_err, mut msnr_err, mut lma_err) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        let snr = model.snr();
        let mut run = || -> Result<(), Error> {
            let est = model.estimate_matrix()?;
            for k in 0..me {
                let col = est.column(k);
                let idx = model.layout.external_index(k);
                sc_err = sc_err.max((col[idx] / model.h[idx] - (1.0 + 1.0 / snr[k])).norm());
                for j in 0..ma {
                    lma_err = lma_err.max((col[j] - model.h[j]).norm() / model.h[j].norm());
                }
            }
            let out = combine(&est, &model_weights(&snr))?.h;
            let factor = predicted_bias_msnr(&snr);
            for k in 0..me {
                let idx = model.layout.external_index(k);
                msnr_err = msnr_err.max((out[idx] / model.h[idx] - factor).norm());
            }
            Ok(())
        };
        if let Err(e) = run() {
            return check("bias laws", false, format!("instance {i}: {e}"));
        }
    }
    check(
        "bias laws",
        sc_err <= 1e-10 && msnr_err <= 1e-10 && lma_err <= 1e-12,
        format!("sc {sc_err:.2e}, msnr {msnr_err:.2e}, LMA {lma_err:.2e}"),
    )
}

/// `J(gevd) >= J(model) >= J(uniform)` on exact-model pencils.
pub fn optimality_ordering(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0d);
    let mut violations = 0usize;
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        let run = || -> Result<(f64, f64, f64), Error> {
            let est = model.estimate_matrix()?;
            let (a, b) = msnr_pencil(&est, &model.ry, &model.rn)?;
            let g = gevd_weights(&est, &model.ry, &model.rn)?;
            let m = model_weights(&model.snr());
            let u = WeightVector::uniform(me);
            Ok((msnr_cost(&a, &b, &g.alpha), msnr_cost(&a, &b, &m.alpha), msnr_cost(&a, &b, &u.alpha)))
        };
        match run() {
            Ok((jg, jm, ju)) => {
                let tol = 1e-10 * jg.abs().max(1.0);
                if jg < jm - tol || jm < ju - tol {
                    violations += 1;
                }
            }
            Err(e) => return check("optimality ordering", false, format!("instance {i}: {e}")),
        }
    }
    check(
        "optimality ordering",
        violations == 0,
        format!("{violations} of {} instances out of order", cfg.instances),
    )
}

/// Distortionless response, the biased SNR identity and minimum noise power.
pub fn mvdr_identities(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d);
    let (mut distortion, mut identity) = (0.0f64, 0.0f64);
    let mut beaten = 0usize;
    let bins = 10;
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        let w = match mvdr_weights(&model.rn, &model.h) {
            Ok(w) => w,
            Err(e) => return check("mvdr identities", false, format!("instance {i}: {e}")),
        };
        distortion = distortion.max((w.response(&model.h) - c(1.0, 0.0)).norm());
        match narrowband_output_snr(&w, &model.rx, &model.rn) {
            Ok(s) => identity = identity.max((s.biased - s.unbiased - 1.0).abs()),
            Err(e) => return check("mvdr identities", false, format!("instance {i}: {e}")),
        }
        if i < bins {
            let best = w.power(&model.rn);
            let m = model.layout.total();
            for _ in 0..cfg.competitors {
                let r = CVector((0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
                let proj = model.h.scale(model.h.dot(&r) / model.h.norm_sqr());
                let alt = BeamformerWeights(&w.0 + &(&r - &proj));
                if alt.power(&model.rn) < best * (1.0 - 1e-12) {
                    beaten += 1;
                }
            }
        }
    }
    check(
        "mvdr identities",
        distortion < 1e-10 && identity <= 1e-12 && beaten == 0,
        format!(
            "max |w^H h - 1| {distortion:.2e}, max |biased - unbiased - 1| {identity:.2e}, noise power beaten {beaten} times"
        ),
    )
}

/// With one external mic the constraint forces `alpha = [1]` for both weightings.
pub fn single_external(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x01);
    let mut worst = 0.0f64;
    for i in 0..cfg.instances.min(100) {
        let model = ExactModel::random(&mut rng, 1 + i % 4, 1);
        let est = match model.estimate_matrix() {
            Ok(e) => e,
            Err(e) => return check("single external mic", false, e.to_string()),
        };
        let g = match gevd_weights(&est, &model.ry, &model.rn) {
            Ok(g) => g,
            Err(e) => return check("single external mic", false, e.to_string()),
        };
        let m = model_weights(&model.snr());
        worst = worst.max((g.alpha[0] - c(1.0, 0.0)).norm()).max((m.alpha[0] - c(1.0, 0.0)).norm());
    }
    check("single external mic", worst <= 1e-12, format!("max |alpha - 1| {worst:.2e}"))
}

/// Steering by the true RTF never does worse than a biased SC estimate.
pub fn oracle_beats_sc(cfg: &BatteryConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0c);
    let mut violations = 0usize;
    for i in 0..cfg.instances {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me);
        let run = || -> Result<bool, Error> {
            let snr_of = |h: &[C64]| -> Result<f64, Error> {
                let w = mvdr_weights(&model.rn, h)?;
                Ok(narrowband_output_snr(&w, &model.rx, &model.rn)?.unbiased)
            };
            let best = snr_of(&model.h)?;
            let est = model.estimate_matrix()?;
            for k in 0..me {
                if snr_of(&est.column(k))? > best * (1.0 + 1e-10) {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        match run() {
            Ok(true) => {}
            Ok(false) => violations += 1,
            Err(e) => return check("oracle steering beats sc", false, format!("instance {i}: {e}")),
        }
    }
    check(
        "oracle steering beats sc",
        violations == 0,
        format!("{violations} of {} instances where an SC estimate won", cfg.instances),
    )
}

/// Outcome of the coherent-noise negative control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegativeControl {
    pub instances: usize,
    /// Instances where the cost decomposition reported a model violation.
    pub violations_flagged: usize,
    /// Smallest and largest GEVD-versus-model weight gap.
    pub min_gap: f64,
    pub max_gap: f64,
}

/// Injects coherent noise shared by the reference and an external mic.
pub fn negative_control_stats(cfg: &BatteryConfig, power: f64) -> Result<NegativeControl, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e);
    let n = cfg.instances.min(200);
    let mut flagged = 0;
    let (mut min_gap, mut max_gap) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let (ma, me) = shapes(i);
        let model = ExactModel::random(&mut rng, ma, me).with_coherent_external_noise(i % me, power);
        let snr = model.snr();
        let e = bias_matrix(&model.h, &snr, model.layout)?;
        let alpha = model_weights(&snr).alpha;
        if let Err(Error::ModelViolation { .. }) =
            cost_decomposition(&model.h, &model.rn, &model.ry, &e, &alpha, model.layout)
        {
            flagged += 1;
        }
        let (gap, _) = gevd_model_gap(&model)?;
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
    }
    Ok(NegativeControl {
        instances: n,
        violations_flagged: flagged,
        min_gap,
        max_gap,
    })
}

pub fn negative_control(cfg: &BatteryConfig) -> Check {
    match negative_control_stats(cfg, 0.5) {
        Ok(s) => check(
            "coherent noise negative control",
            s.violations_flagged == s.instances && s.min_gap > 1e-3,
            format!(
                "model violation flagged on {}/{} instances, gevd-model gap in [{:.2e}, {:.2e}]",
                s.violations_flagged, s.instances, s.min_gap, s.max_gap
            ),
        ),
        Err(e) => check("coherent noise negative control", false, e.to_string()),
    }
}

pub fn run_battery(cfg: &BatteryConfig) -> Vec<Check> {
    vec![
        sc_bias_example(),
        msnr_bias_example(),
        bias_laws(cfg),
        gevd_equals_model(cfg),
        cost_reduction(cfg),
        optimality_ordering(cfg),
        mvdr_identities(cfg),
        single_external(cfg),
        oracle_beats_sc(cfg),
        negative_control(cfg),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_battery_passes() {
        let cfg = BatteryConfig {
            seed: 5,
            instances: 60,
            competitors: 50,
        };
        for c in run_battery(&cfg) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn constrained_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for me in 1..5 {
            let a = random_constrained(&mut rng, me);
            assert!((a.sum() - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn coherent_noise_breaks_block_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ExactModel::random(&mut rng, 2, 2).with_coherent_external_noise(1, 0.5);
        assert!(m.rn[(0, 3)].norm() > 0.0);
        assert!(m.rn.is_hermitian(1e-15));
    }

    #[test]
    fn check_display() {
        let c = check("x", false, "detail".into());
        assert_eq!(c.to_string(), "FAIL x: detail");
    }
}
