//! Stokes observables summed over both frequency bands.
//!
//! Per band the coefficient blocks are `I` (S0), `diag(1, -1)` (S1),
//! `[[0, 1], [1, 0]]` (S2) and `[[0, -i], [i, 0]]` (S3), in the `(H, V)` basis.
//! A waveplate with Jones matrix `J` in front of a polarizing analyzer turns
//! the analyzer difference `S1` into `J† S1 J`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{max_modulus, CMat2, CMat4, GaussianState};

/// Below this mean intensity the NRF is reported as undefined.
pub const NRF_UNDEFINED_BELOW: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Passive rotation of the polarization basis by `theta`.
pub fn rotation(theta: f64) -> CMat2 {
    let (s, co) = theta.sin_cos();
    CMat2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

/// Linear retarder with fast axis at `axis` and phase `retardance` on the slow axis.
pub fn waveplate(axis: f64, retardance: f64) -> CMat2 {
    let r = rotation(axis);
    let d = CMat2::new(
        c(1.0, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        Complex64::from_polar(1.0, retardance),
    );
    r * d * r.transpose()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plate {
    #[serde(rename = "HWP")]
    Hwp,
    #[serde(rename = "QWP")]
    Qwp,
}

impl Plate {
    pub fn retardance(self) -> f64 {
        match self {
            Plate::Hwp => PI,
            Plate::Qwp => FRAC_PI_2,
        }
    }

    pub fn jones(self, theta: f64) -> CMat2 {
        waveplate(theta, self.retardance())
    }
}

impl fmt::Display for Plate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Plate::Hwp => "HWP",
            Plate::Qwp => "QWP",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StokesLabel {
    S0,
    S1,
    S2,
    S3,
    Rotated { plate: Plate, angle: f64 },
    Custom,
}

/// Hermitian quadratic observable `O = Σ c_i† m_ij c_j` over the four modes.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesForm {
    m: CMat4,
    label: StokesLabel,
}

impl StokesForm {
    /// Observable with the same 2×2 polarization block in both bands.
    pub fn from_band_block(block: &CMat2, label: StokesLabel) -> Self {
        let mut m = CMat4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(block);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(block);
        StokesForm { m, label }
    }

    pub fn from_matrix(m: CMat4) -> Self {
        StokesForm {
            m,
            label: StokesLabel::Custom,
        }
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.m
    }

    pub fn label(&self) -> StokesLabel {
        self.label
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_modulus((self.m - self.m.adjoint()).iter())
    }

    /// `U† m U` with the same `U` in both bands.
    pub fn conjugated(&self, u: &CMat2) -> StokesForm {
        let mut full = CMat4::zeros();
        full.fixed_view_mut::<2, 2>(0, 0).copy_from(u);
        full.fixed_view_mut::<2, 2>(2, 2).copy_from(u);
        StokesForm {
            m: full.adjoint() * self.m * full,
            label: StokesLabel::Custom,
        }
    }

    /// Observable measured through `plate` at `theta` followed by the analyzer.
    pub fn rotated(&self, plate: Plate, theta: f64) -> StokesForm {
        StokesForm {
            label: StokesLabel::Rotated { plate, angle: theta },
            ..self.conjugated(&plate.jones(theta))
        }
    }

    /// Sorted eigenvalues of the coefficient matrix.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let herm = (self.m + self.m.adjoint()) * c(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn mean(&self, state: &GaussianState) -> f64 {
        state.quadratic_mean(&self.m)
    }

    pub fn variance(&self, state: &GaussianState) -> f64 {
        state.quadratic_variance(&self.m)
    }
}

/// Per-band coefficient block of `S_k`.
pub fn stokes_block(k: usize) -> Result<CMat2> {
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    Ok(match k {
        0 => CMat2::new(one, o, o, one),
        1 => CMat2::new(one, o, o, -one),
        2 => CMat2::new(o, one, one, o),
        3 => CMat2::new(o, c(0.0, -1.0), c(0.0, 1.0), o),
        _ => return Err(Error::InvalidStokesIndex(k)),
    })
}

pub fn stokes_form(k: usize) -> Result<StokesForm> {
    let label = [StokesLabel::S0, StokesLabel::S1, StokesLabel::S2, StokesLabel::S3]
        .get(k)
        .copied()
        .ok_or(Error::InvalidStokesIndex(k))?;
    Ok(StokesForm::from_band_block(&stokes_block(k)?, label))
}

pub fn rotated_form(base: &StokesForm, plate: Plate, theta: f64) -> StokesForm {
    base.rotated(plate, theta)
}

/// Intensity observables of the two analyzer outputs (transmitted `H`,
/// reflected `V`) behind `plate` at `theta`.
pub fn detector_forms(plate: Plate, theta: f64) -> (StokesForm, StokesForm) {
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let h = StokesForm::from_band_block(&CMat2::new(one, o, o, o), StokesLabel::Custom);
    let v = StokesForm::from_band_block(&CMat2::new(o, o, o, one), StokesLabel::Custom);
    let j = plate.jones(theta);
    (h.conjugated(&j), v.conjugated(&j))
}

/// `Var(form) / ⟨S0⟩`, or `None` when the state carries no intensity.
pub fn nrf(state: &GaussianState, form: &StokesForm) -> Option<f64> {
    let s0 = state.quadratic_mean(stokes_form(0).expect("S0").matrix());
    (s0 > NRF_UNDEFINED_BELOW).then(|| form.variance(state) / s0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    pub means: [f64; 4],
    pub variances: [f64; 4],
    /// NRF of S1, S2, S3; `None` when `⟨S0⟩` vanishes.
    pub nrf: [Option<f64>; 3],
}

pub fn stokes_report(state: &GaussianState) -> StokesReport {
    let forms: Vec<StokesForm> = (0..4).map(|k| stokes_form(k).expect("k < 4")).collect();
    let means = [0, 1, 2, 3].map(|k| forms[k].mean(state));
    let variances = [0, 1, 2, 3].map(|k| forms[k].variance(state));
    let nrf = [1, 2, 3].map(|k| (means[0] > NRF_UNDEFINED_BELOW).then(|| variances[k] / means[0]));
    StokesReport {
        means,
        variances,
        nrf,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCheck {
    /// `margins[k-1] = ΔS_i ΔS_j - |⟨S_k⟩|` for cyclic `(i, j, k)`.
    pub margins: [f64; 3],
    pub satisfied: [bool; 3],
}

impl UncertaintyCheck {
    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }
}

pub fn uncertainty_check(state: &GaussianState) -> UncertaintyCheck {
    let report = stokes_report(state);
    let sd = report.variances.map(|v| v.max(0.0).sqrt());
    let mut margins = [0.0; 3];
    let mut satisfied = [false; 3];
    for (i, j, k) in [(2, 3, 1), (3, 1, 2), (1, 2, 3)] {
        let product = sd[i] * sd[j];
        let margin = product - report.means[k].abs();
        margins[k - 1] = margin;
        satisfied[k - 1] = margin >= -1e-9 * product.max(1.0);
    }
    UncertaintyCheck { margins, satisfied }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrfBounds {
    pub min: f64,
    pub max: f64,
}

/// Squeezed and anti-squeezed NRF of a Bell state with per-mode photon number
/// `n` (before loss) seen through uniform efficiency `eta`.
pub fn nrf_bounds(n: f64, eta: f64) -> Result<NrfBounds> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::NonFinite("n"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidEfficiency { mode: 0, value: eta });
    }
    let s0 = 4.0 * n;
    Ok(NrfBounds {
        min: 1.0 - eta,
        max: 1.0 + eta + eta * s0 / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{CVec4, Mode};
    use approx::assert_abs_diff_eq;

    fn close(a: &StokesForm, b: &StokesForm) -> f64 {
        max_modulus((a.matrix() - b.matrix()).iter())
    }

    #[test]
    fn forms_are_hermitian_with_expected_traces() {
        for k in 0..4 {
            let f = stokes_form(k).unwrap();
            assert!(f.hermiticity_defect() < 1e-12);
            let tr: Complex64 = f.matrix().trace();
            let expected = if k == 0 { 4.0 } else { 0.0 };
            assert_abs_diff_eq!(tr.re, expected, epsilon = 1e-12);
        }
        assert_eq!(*stokes_form(0).unwrap().matrix(), CMat4::identity());
        assert_eq!(stokes_form(4).unwrap_err(), Error::InvalidStokesIndex(4));
    }

    #[test]
    fn plate_angles_select_stokes_axes() {
        let s1 = stokes_form(1).unwrap();
        let deg = PI / 180.0;
        assert!(close(&s1.rotated(Plate::Hwp, 0.0), &s1) < 1e-12);
        assert!(close(&s1.rotated(Plate::Hwp, 22.5 * deg), &stokes_form(2).unwrap()) < 1e-12);
        assert!(close(&s1.rotated(Plate::Qwp, 45.0 * deg), &stokes_form(3).unwrap()) < 1e-12);
    }

    #[test]
    fn right_circular_light_has_full_s3() {
        let amp = 3.0 / 2f64.sqrt();
        let alpha = CVec4::new(c(amp, 0.0), c(0.0, amp), c(0.0, 0.0), c(0.0, 0.0));
        let st = GaussianState::vacuum().displace(&alpha);
        let r = stokes_report(&st);
        assert_abs_diff_eq!(r.means[3], r.means[0], epsilon = 1e-10);
        assert_abs_diff_eq!(r.means[0], 9.0, epsilon = 1e-10);
    }

    #[test]
    fn rotation_preserves_spectrum() {
        let s1 = stokes_form(1).unwrap();
        let base = s1.eigenvalues();
        for plate in [Plate::Hwp, Plate::Qwp] {
            for step in 0..12 {
                let r = s1.rotated(plate, step as f64 * 0.3);
                assert!(r.hermiticity_defect() < 1e-12);
                for (x, y) in r.eigenvalues().iter().zip(base) {
                    assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn detector_forms_add_to_s0_and_differ_by_rotated_s1() {
        let (d1, d2) = detector_forms(Plate::Qwp, 0.37);
        let sum = d1.matrix() + d2.matrix();
        assert!(max_modulus((sum - CMat4::identity()).iter()) < 1e-12);
        let diff = StokesForm::from_matrix(d1.matrix() - d2.matrix());
        assert!(close(&diff, &stokes_form(1).unwrap().rotated(Plate::Qwp, 0.37)) < 1e-12);
    }

    #[test]
    fn vacuum_report_has_undefined_nrf() {
        let r = stokes_report(&GaussianState::vacuum());
        assert_eq!(r.means, [0.0; 4]);
        assert_eq!(r.variances, [0.0; 4]);
        assert_eq!(r.nrf, [None; 3]);
        let u = uncertainty_check(&GaussianState::vacuum());
        assert_eq!(u.margins, [0.0; 3]);
        assert!(u.all_satisfied());
    }

    #[test]
    fn horizontal_coherent_state_saturates() {
        let alpha = CVec4::new(c(10.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let st = GaussianState::vacuum().displace(&alpha);
        let u = uncertainty_check(&st);
        // ΔS2 ΔS3 = |⟨S1⟩| = 100
        assert!(u.margins[0].abs() < 1e-6 * 100.0);
        assert!(u.all_satisfied());
        let r = stokes_report(&st);
        assert_abs_diff_eq!(r.variances[2], 100.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.variances[3], 100.0, epsilon = 1e-8);
    }

    #[test]
    fn nrf_bound_values() {
        let b = nrf_bounds(123.0, 0.65).unwrap();
        assert_abs_diff_eq!(b.min, 0.35, epsilon = 1e-15);
        let b = nrf_bounds(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(b.max, 2.5, epsilon = 1e-15);
        assert_eq!(nrf_bounds(7.0, 0.0).unwrap(), NrfBounds { min: 1.0, max: 1.0 });
        assert!(nrf_bounds(1.0, 1.5).is_err());
        assert!(nrf_bounds(-1.0, 0.5).is_err());
    }

    #[test]
    fn nrf_of_two_mode_squeezed_difference() {
        let st = GaussianState::vacuum()
            .two_mode_squeeze(Mode::A1, Mode::B2, 1f64.asinh(), 0.0)
            .unwrap();
        // S1 = n_a1 - n_b2 for this state: perfectly correlated twin beams.
        assert_abs_diff_eq!(nrf(&st, &stokes_form(1).unwrap()).unwrap(), 0.0, epsilon = 1e-12);
        assert!(nrf(&GaussianState::vacuum(), &stokes_form(1).unwrap()).is_none());
    }
}
