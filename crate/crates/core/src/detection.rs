//! Pulse-level Monte Carlo of the polarization analyzer and the NRF estimator.
//!
//! Records are drawn by symmetric-ordered (Wigner) quadrature sampling of the
//! Gaussian state in the analyzer basis. Per mode the photon estimate is
//! `(x² + p² - 1) / 2`, whose mean is exact; the variance of any detector
//! difference picks up `¼ Tr(M²)` extra, which is 1 photon² here. See
//! [`wigner_bias_bound`].

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{chunk_sizes, map_indexed, stream_rng, Exec};
use crate::gaussian::{Band, GaussianState, Mat8, Vec8};
use crate::optics::{coherent_state, Polarization};
use crate::stokes::{stokes_form, Plate, StokesForm, NRF_UNDEFINED_BELOW};

pub const MIN_RECORDS: usize = 100;
pub const BOOTSTRAP_BLOCKS: usize = 100;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// NRF bias above which the Wigner sampler should give way to the Fock oracle.
pub const WIGNER_BIAS_LIMIT: f64 = 1e-4;

const PULSE_CHUNK: usize = 4096;
const PULSE_TAG: u64 = 0x5055_4C53;
const DARK_TAG: u64 = 0x4441_524B;
const BOOTSTRAP_TAG: u64 = 0xB007;
const BOOTSTRAP_SEED: u64 = 0x5EED_B007;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Standard deviation of the additive noise, in photons per detector per pulse.
    pub electronic_noise_sigma: f64,
    /// Charge per photon.
    pub gain: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            electronic_noise_sigma: 180.0,
            gain: 1.0,
        }
    }
}

impl DetectorModel {
    pub fn new(electronic_noise_sigma: f64, gain: f64) -> Result<Self> {
        let det = DetectorModel {
            electronic_noise_sigma,
            gain,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn noiseless() -> Self {
        DetectorModel {
            electronic_noise_sigma: 0.0,
            gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.electronic_noise_sigma.is_finite() && self.electronic_noise_sigma >= 0.0) {
            return Err(Error::InvalidDetector(format!(
                "electronic_noise_sigma must be >= 0, got {}",
                self.electronic_noise_sigma
            )));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::InvalidDetector(format!("gain must be > 0, got {}", self.gain)));
        }
        Ok(())
    }

    /// Electronic contribution to `Var(q1 - q2)` in charge units, `2 σ² g²`.
    pub fn electronic_variance(&self) -> f64 {
        2.0 * (self.electronic_noise_sigma * self.gain).powi(2)
    }
}

/// Analyzer setting: wave plate type and its axis angle in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub plate: Plate,
    pub angle_deg: f64,
}

impl Setting {
    pub fn new(plate: Plate, angle_deg: f64) -> Self {
        Setting { plate, angle_deg }
    }

    /// Observable measured by `q1 - q2`.
    pub fn difference_form(&self) -> StokesForm {
        stokes_form(1)
            .expect("S1")
            .rotated(self.plate, self.angle_deg.to_radians())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseRecord {
    pub q1: f64,
    pub q2: f64,
    pub setting: Setting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NrfEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_pulses: usize,
    pub snl_reference: f64,
}

/// How raw charge moments are turned into an NRF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    /// Shot-noise level the ratio is divided by.
    pub snl: f64,
    pub gain: f64,
    /// Subtracted from `Var(q1 - q2)`, charge units.
    pub electronic_variance: f64,
}

impl Normalization {
    /// Subtracts the known electronic variance of `det`.
    pub fn analytic(det: &DetectorModel, snl: f64) -> Self {
        Normalization {
            snl,
            gain: det.gain,
            electronic_variance: det.electronic_variance(),
        }
    }

    /// Subtracts the variance measured on a dark run.
    pub fn dark_run(det: &DetectorModel, dark: &[PulseRecord], snl: f64) -> Result<Self> {
        if dark.len() < 2 {
            return Err(Error::TooFewRecords {
                needed: 2,
                got: dark.len(),
            });
        }
        let m = dark
            .iter()
            .fold(Moments::default(), |acc, r| acc.merge(&Moments::single(r)));
        Ok(Normalization {
            snl,
            gain: det.gain,
            electronic_variance: m.var_diff(),
        })
    }

    /// Plain ratio, no subtraction.
    pub fn raw() -> Self {
        Normalization {
            snl: 1.0,
            gain: 1.0,
            electronic_variance: 0.0,
        }
    }
}

/// Precomputed sampler for one state and analyzer setting.
pub struct PulseSampler {
    mean: Vec8,
    factor: Mat8,
    setting: Setting,
    det: DetectorModel,
}

impl PulseSampler {
    pub fn new(state: &GaussianState, setting: Setting, det: DetectorModel) -> Result<Self> {
        det.validate()?;
        if !setting.angle_deg.is_finite() {
            return Err(Error::NonFinite("angle_deg"));
        }
        let j = setting.plate.jones(setting.angle_deg.to_radians());
        let rotated = state.passive_polarization(&j, Band::Both)?;
        let eig = SymmetricEigen::new(*rotated.cov());
        let scale = Vec8::from_fn(|k, _| eig.eigenvalues[k].max(0.0).sqrt());
        Ok(PulseSampler {
            mean: *rotated.mean(),
            factor: eig.eigenvectors * Mat8::from_diagonal(&scale),
            setting,
            det,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PulseRecord {
        let z = Vec8::from_fn(|_, _| StandardNormal.sample(rng));
        let r = self.mean + self.factor * z;
        let n = |m: usize| 0.5 * (r[2 * m] * r[2 * m] + r[2 * m + 1] * r[2 * m + 1] - 1.0);
        let sigma = self.det.electronic_noise_sigma;
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        PulseRecord {
            q1: self.det.gain * (n(0) + n(2) + sigma * e1),
            q2: self.det.gain * (n(1) + n(3) + sigma * e2),
            setting: self.setting,
        }
    }
}

pub fn sample_pulse(state: &GaussianState, setting: Setting, det: DetectorModel, seed: u64) -> Result<PulseRecord> {
    let sampler = PulseSampler::new(state, setting, det)?;
    Ok(sampler.sample(&mut stream_rng(seed, PULSE_TAG, 0)))
}

/// `n` pulses; identical for a given seed under any execution policy, and the
/// first record equals [`sample_pulse`] with the same seed.
pub fn simulate_pulses(
    state: &GaussianState,
    setting: Setting,
    det: DetectorModel,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<PulseRecord>> {
    let sampler = PulseSampler::new(state, setting, det)?;
    Ok(run_chunks(n, seed, PULSE_TAG, exec, |rng| sampler.sample(rng)))
}

/// Pulses with the light blocked: electronic noise only.
pub fn simulate_dark_run(det: DetectorModel, setting: Setting, n: usize, seed: u64, exec: Exec) -> Result<Vec<PulseRecord>> {
    det.validate()?;
    let s = det.electronic_noise_sigma * det.gain;
    Ok(run_chunks(n, seed, DARK_TAG, exec, |rng| {
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        PulseRecord {
            q1: s * e1,
            q2: s * e2,
            setting,
        }
    }))
}

fn run_chunks<F>(n: usize, seed: u64, tag: u64, exec: Exec, draw: F) -> Vec<PulseRecord>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> PulseRecord + Sync + Send,
{
    let sizes = chunk_sizes(n, PULSE_CHUNK);
    let chunks = map_indexed(exec, sizes.len(), |c| {
        let mut rng = stream_rng(seed, tag, c as u64);
        (0..sizes[c]).map(|_| draw(&mut rng)).collect::<Vec<_>>()
    });
    chunks.into_iter().flatten().collect()
}

/// Running moments of `d = q1 - q2` and the sum of `s = q1 + q2`.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean_d: f64,
    m2_d: f64,
    sum_s: f64,
}

impl Moments {
    fn single(r: &PulseRecord) -> Self {
        Moments {
            n: 1.0,
            mean_d: r.q1 - r.q2,
            m2_d: 0.0,
            sum_s: r.q1 + r.q2,
        }
    }

    fn merge(&self, o: &Moments) -> Moments {
        let n = self.n + o.n;
        if n == 0.0 {
            return *self;
        }
        let delta = o.mean_d - self.mean_d;
        Moments {
            n,
            mean_d: self.mean_d + delta * o.n / n,
            m2_d: self.m2_d + o.m2_d + delta * delta * self.n * o.n / n,
            sum_s: self.sum_s + o.sum_s,
        }
    }

    fn var_diff(&self) -> f64 {
        self.m2_d / (self.n - 1.0)
    }

    fn nrf(&self, norm: &Normalization) -> Result<f64> {
        let mean_sum = self.sum_s / self.n;
        if !(mean_sum.is_finite() && mean_sum > 0.0) {
            return Err(Error::ZeroMeanSum);
        }
        Ok((self.var_diff() - norm.electronic_variance) / norm.gain / mean_sum / norm.snl)
    }
}

/// `Var(q1 - q2) / (⟨q1⟩ + ⟨q2⟩)` after subtracting electronic variance and
/// dividing out gain and shot-noise level. The error bar is a blocked
/// bootstrap over contiguous blocks with a fixed internal seed, so repeated
/// calls on the same records agree exactly.
pub fn estimate_nrf(records: &[PulseRecord], norm: &Normalization) -> Result<NrfEstimate> {
    if records.len() < MIN_RECORDS {
        return Err(Error::TooFewRecords {
            needed: MIN_RECORDS,
            got: records.len(),
        });
    }
    let setting = records[0].setting;
    if records.iter().any(|r| r.setting != setting) {
        return Err(Error::MixedSettings);
    }
    let len = records.len();
    let blocks: Vec<Moments> = (0..BOOTSTRAP_BLOCKS)
        .map(|b| {
            let (lo, hi) = (b * len / BOOTSTRAP_BLOCKS, (b + 1) * len / BOOTSTRAP_BLOCKS);
            records[lo..hi]
                .iter()
                .fold(Moments::default(), |acc, r| acc.merge(&Moments::single(r)))
        })
        .collect();
    let total = blocks.iter().fold(Moments::default(), |acc, b| acc.merge(b));
    let value = total.nrf(norm)?;

    let mut rng = stream_rng(BOOTSTRAP_SEED, BOOTSTRAP_TAG, 0);
    let mut stats = Moments::default();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let m = (0..BOOTSTRAP_BLOCKS).fold(Moments::default(), |acc, _| {
            acc.merge(&blocks[rng.random_range(0..BOOTSTRAP_BLOCKS)])
        });
        // resample spread reuses the same accumulator on the estimator values
        let v = m.nrf(norm).unwrap_or(f64::NAN);
        stats = stats.merge(&Moments {
            n: 1.0,
            mean_d: v,
            m2_d: 0.0,
            sum_s: 0.0,
        });
    }
    Ok(NrfEstimate {
        value,
        std_error: stats.var_diff().sqrt(),
        n_pulses: len,
        snl_reference: norm.snl,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Calibration {
    /// Measured shot-noise level, gain-normalized and noise-subtracted.
    pub snl: f64,
    pub std_error: f64,
    pub n_pulses: usize,
    pub mean_photons: f64,
    /// Electronic noise relative to shot noise, `2 σ² / ⟨N⟩`.
    pub electronic_ratio: f64,
}

/// Coherent pulses of `mean_photons` split equally between the detectors.
pub fn shot_noise_calibration(
    mean_photons: f64,
    n_pulses: usize,
    det: DetectorModel,
    seed: u64,
    exec: Exec,
) -> Result<Calibration> {
    if !(mean_photons.is_finite() && mean_photons > 0.0) {
        return Err(Error::NonPositivePhotons(mean_photons));
    }
    let laser = coherent_state(mean_photons, Polarization::D)?;
    let records = simulate_pulses(&laser, Setting::new(Plate::Hwp, 0.0), det, n_pulses, seed, exec)?;
    let est = estimate_nrf(&records, &Normalization::analytic(&det, 1.0))?;
    Ok(Calibration {
        snl: est.value,
        std_error: est.std_error,
        n_pulses,
        mean_photons,
        electronic_ratio: 2.0 * det.electronic_noise_sigma.powi(2) / mean_photons,
    })
}

/// Excess `Var(q1 - q2)` of Wigner sampling for a detector difference form:
/// `¼ Tr(M²)` photon².
pub fn wigner_variance_bias(form: &StokesForm) -> f64 {
    let m = form.matrix();
    0.25 * (m * m).trace().re
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WignerBias {
    /// Additive excess in `Var(q1 - q2)`, photon².
    pub variance: f64,
    /// Same excess relative to `⟨S0⟩`; `None` for a dark state.
    pub nrf: Option<f64>,
    /// Bias too large for macroscopic sampling; use the Fock oracle.
    pub oracle_regime: bool,
}

pub fn wigner_bias_bound(state: &GaussianState) -> WignerBias {
    let variance = wigner_variance_bias(&stokes_form(1).expect("S1"));
    let s0 = stokes_form(0).expect("S0").mean(state);
    let nrf = (s0 > NRF_UNDEFINED_BELOW).then(|| variance / s0);
    WignerBias {
        variance,
        nrf,
        oracle_regime: nrf.is_none_or(|b| b > WIGNER_BIAS_LIMIT),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{gain_for_s0, make_bell_state, BellKind};
    use approx::assert_abs_diff_eq;
    use rand_distr::Poisson;

    fn hwp0() -> Setting {
        Setting::new(Plate::Hwp, 0.0)
    }

    fn synthetic(pairs: impl Iterator<Item = (f64, f64)>) -> Vec<PulseRecord> {
        pairs
            .map(|(q1, q2)| PulseRecord {
                q1,
                q2,
                setting: hwp0(),
            })
            .collect()
    }

    #[test]
    fn detector_validation() {
        assert!(DetectorModel::new(-1.0, 1.0).is_err());
        assert!(DetectorModel::new(1.0, 0.0).is_err());
        assert_eq!(DetectorModel::default().electronic_variance(), 2.0 * 180.0 * 180.0);
    }

    #[test]
    fn vacuum_mean_charge_is_zero() {
        let recs = simulate_pulses(&GaussianState::vacuum(), hwp0(), DetectorModel::noiseless(), 100_000, 1, Exec::default()).unwrap();
        let n = recs.len() as f64;
        let mean = recs.iter().map(|r| r.q1).sum::<f64>() / n;
        let var = recs.iter().map(|r| (r.q1 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 3.0 * (var / n).sqrt());
    }

    #[test]
    fn coherent_split_is_shot_noise_limited() {
        let laser = coherent_state(1e6, Polarization::D).unwrap();
        let recs = simulate_pulses(&laser, hwp0(), DetectorModel::noiseless(), 100_000, 2, Exec::default()).unwrap();
        let est = estimate_nrf(&recs, &Normalization::raw()).unwrap();
        assert!((est.value - 1.0).abs() <= 3.0 * est.std_error, "{est:?}");
        assert!(est.std_error > 0.0 && est.std_error < 0.01);
    }

    #[test]
    fn identical_outputs_give_zero() {
        let recs = synthetic((0..1000).map(|k| (k as f64, k as f64)));
        let est = estimate_nrf(&recs, &Normalization::raw()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn poisson_counts_give_one() {
        let mut rng = stream_rng(5, 0, 0);
        let p = Poisson::new(5e5).unwrap();
        let recs = synthetic((0..100_000).map(|_| (p.sample(&mut rng), p.sample(&mut rng))));
        let est = estimate_nrf(&recs, &Normalization::raw()).unwrap();
        assert!((est.value - 1.0).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn estimator_errors() {
        let few = synthetic((0..99).map(|_| (1.0, 1.0)));
        assert_eq!(
            estimate_nrf(&few, &Normalization::raw()).unwrap_err(),
            Error::TooFewRecords { needed: 100, got: 99 }
        );
        let dark = synthetic((0..200).map(|k| (k as f64, -(k as f64))));
        assert_eq!(estimate_nrf(&dark, &Normalization::raw()).unwrap_err(), Error::ZeroMeanSum);
        let mut mixed = synthetic((0..200).map(|_| (1.0, 2.0)));
        mixed[7].setting = Setting::new(Plate::Qwp, 0.0);
        assert_eq!(estimate_nrf(&mixed, &Normalization::raw()).unwrap_err(), Error::MixedSettings);
    }

    #[test]
    fn records_are_policy_independent() {
        let st = make_bell_state(BellKind::PsiMinus, 1.0).unwrap();
        let s = Setting::new(Plate::Qwp, 30.0);
        let a = simulate_pulses(&st, s, DetectorModel::default(), 9000, 11, Exec::Sequential).unwrap();
        let b = simulate_pulses(&st, s, DetectorModel::default(), 9000, 11, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_pulse(&st, s, DetectorModel::default(), 11).unwrap(), a[0]);
    }

    #[test]
    fn sampled_means_follow_detector_forms() {
        let st = coherent_state(1e4, Polarization::R).unwrap();
        for s in [hwp0(), Setting::new(Plate::Hwp, 22.5), Setting::new(Plate::Qwp, 45.0), Setting::new(Plate::Qwp, 10.0)] {
            let (h, v) = crate::stokes::detector_forms(s.plate, s.angle_deg.to_radians());
            let recs = simulate_pulses(&st, s, DetectorModel::noiseless(), 20_000, 4, Exec::default()).unwrap();
            let n = recs.len() as f64;
            for (got, form) in [(recs.iter().map(|r| r.q1).sum::<f64>() / n, &h), (recs.iter().map(|r| r.q2).sum::<f64>() / n, &v)] {
                let sd = (form.variance(&st) + 0.5) .sqrt();
                assert!((got - form.mean(&st)).abs() <= 4.0 * sd / n.sqrt(), "{s:?}");
            }
        }
    }

    #[test]
    fn calibration_reports_noise_ratio_and_ignores_gain() {
        let det = DetectorModel::default();
        let a = shot_noise_calibration(1e6, 20_000, det, 9, Exec::default()).unwrap();
        assert_abs_diff_eq!(a.electronic_ratio, 0.0648, epsilon = 1e-12);
        let b = shot_noise_calibration(1e6, 20_000, DetectorModel::new(180.0, 2.0).unwrap(), 9, Exec::default()).unwrap();
        assert_abs_diff_eq!(a.snl, b.snl, epsilon = 1e-9);
        assert!(shot_noise_calibration(0.0, 100, det, 1, Exec::default()).is_err());
    }

    #[test]
    fn dark_run_measures_electronic_variance() {
        let det = DetectorModel::default();
        let dark = simulate_dark_run(det, hwp0(), 50_000, 3, Exec::default()).unwrap();
        let norm = Normalization::dark_run(&det, &dark, 1.0).unwrap();
        let expected = det.electronic_variance();
        // relative sd of a variance estimate is sqrt(2 / n)
        assert!((norm.electronic_variance / expected - 1.0).abs() < 3.0 * (2.0f64 / 50_000.0).sqrt());
    }

    #[test]
    fn wigner_bias_values() {
        assert_eq!(wigner_variance_bias(&hwp0().difference_form()), 1.0);
        let big = make_bell_state(BellKind::PsiMinus, gain_for_s0(1e6)).unwrap();
        let b = wigner_bias_bound(&big);
        assert_abs_diff_eq!(b.nrf.unwrap(), 1e-6, epsilon = 1e-15);
        assert!(!b.oracle_regime);
        let small = make_bell_state(BellKind::PsiMinus, gain_for_s0(4.0)).unwrap();
        let b = wigner_bias_bound(&small);
        assert_abs_diff_eq!(b.nrf.unwrap(), 0.25, epsilon = 1e-12);
        assert!(b.oracle_regime);
        let vac = wigner_bias_bound(&GaussianState::vacuum());
        assert!(vac.variance.is_finite() && vac.nrf.is_none());
    }
}
