//! Sources and preparation optics for the macroscopic Bell states.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Band, CVec4, GaussianState, Mode};
use crate::stokes::{rotation, waveplate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellKind {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PsiMinus,
        BellKind::PsiPlus,
        BellKind::PhiMinus,
        BellKind::PhiPlus,
    ];

    /// Two-mode squeezers `(i, j, phase)` that generate the state from vacuum.
    /// Psi states pair `a1 b2` and `b1 a2`, Phi states pair `a1 a2` and `b1 b2`;
    /// the minus states carry phase π on the second pair.
    pub fn squeezers(self) -> [(Mode, Mode, f64); 2] {
        let second = match self {
            BellKind::PsiMinus | BellKind::PhiMinus => PI,
            BellKind::PsiPlus | BellKind::PhiPlus => 0.0,
        };
        match self {
            BellKind::PsiMinus | BellKind::PsiPlus => {
                [(Mode::A1, Mode::B2, 0.0), (Mode::B1, Mode::A2, second)]
            }
            BellKind::PhiMinus | BellKind::PhiPlus => {
                [(Mode::A1, Mode::A2, 0.0), (Mode::B1, Mode::B2, second)]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BellKind::PsiMinus => "PsiMinus",
            BellKind::PsiPlus => "PsiPlus",
            BellKind::PhiMinus => "PhiMinus",
            BellKind::PhiPlus => "PhiPlus",
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BellKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BellKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown Bell state `{s}`"))
    }
}

fn check_gain(gamma: f64) -> Result<()> {
    if !gamma.is_finite() {
        return Err(Error::NonFinite("gain"));
    }
    if gamma < 0.0 {
        return Err(Error::NegativeGain(gamma));
    }
    Ok(())
}

/// Parametric gain giving total mean intensity `s0 = 4 sinh²Γ`.
pub fn gain_for_s0(s0: f64) -> f64 {
    (s0 / 4.0).sqrt().asinh()
}

pub fn make_bell_state(kind: BellKind, gamma: f64) -> Result<GaussianState> {
    check_gain(gamma)?;
    kind.squeezers()
        .into_iter()
        .try_fold(GaussianState::vacuum(), |st, (i, j, phase)| {
            st.two_mode_squeeze(i, j, gamma, phase)
        })
}

/// Quartz plate whose retardance differs between the two wavelengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichroicPlate {
    pub axis_angle: f64,
    /// Retardance at the first and second wavelength.
    pub retardance: [f64; 2],
}

impl DichroicPlate {
    /// Plate that maps `PsiPlus` onto `PsiMinus` when placed after the
    /// 45° basis rotation: axis along H, extra π on the first band.
    pub fn canonical() -> Self {
        DichroicPlate {
            axis_angle: 0.0,
            retardance: [PI, 0.0],
        }
    }

    pub fn relative_retardance(&self) -> f64 {
        self.retardance[0] - self.retardance[1]
    }
}

pub fn apply_dichroic_plate(state: &GaussianState, plate: &DichroicPlate) -> Result<GaussianState> {
    state
        .passive_polarization(&waveplate(plate.axis_angle, plate.retardance[0]), Band::First)?
        .passive_polarization(&waveplate(plate.axis_angle, plate.retardance[1]), Band::Second)
}

/// Rotates the polarization basis of both bands by `theta`.
pub fn basis_rotation(state: &GaussianState, theta: f64) -> Result<GaussianState> {
    state.passive_polarization(&rotation(theta), Band::Both)
}

/// Two-crystal interferometer source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub gain: f64,
    /// Ratio of the vertical-crystal gain to the horizontal one.
    pub gain_imbalance: f64,
    /// Phase between the two squeezed vacua, radians.
    pub pump_phase: f64,
    pub eta: [f64; 4],
}

impl SourceConfig {
    pub fn lossless(gain: f64, pump_phase: f64) -> Self {
        SourceConfig {
            gain,
            gain_imbalance: 1.0,
            pump_phase,
            eta: [1.0; 4],
        }
    }
}

/// Orthogonally polarized squeezed vacua from the two crystals, overlapped
/// with relative phase `pump_phase`, followed by per-mode loss.
pub fn mzi_source(cfg: &SourceConfig) -> Result<GaussianState> {
    check_gain(cfg.gain)?;
    let gain_v = cfg.gain * cfg.gain_imbalance;
    check_gain(gain_v)?;
    if !cfg.pump_phase.is_finite() {
        return Err(Error::NonFinite("pump_phase"));
    }
    GaussianState::vacuum()
        .two_mode_squeeze(Mode::A1, Mode::A2, cfg.gain, 0.0)?
        .two_mode_squeeze(Mode::B1, Mode::B2, gain_v, cfg.pump_phase)?
        .loss(cfg.eta)
}

/// Interferometer locked at φ = π (PhiMinus), 45° basis rotation (PsiPlus),
/// canonical dichroic plate (PsiMinus), then loss.
pub fn preparation_chain(gamma: f64, eta: [f64; 4]) -> Result<GaussianState> {
    let phi_minus = mzi_source(&SourceConfig::lossless(gamma, PI))?;
    let psi_plus = basis_rotation(&phi_minus, FRAC_PI_4)?;
    apply_dichroic_plate(&psi_plus, &DichroicPlate::canonical())?.loss(eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    /// Normalized Jones vector in the `(H, V)` basis.
    pub fn jones(self) -> [Complex64; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let (h, v) = match self {
            Polarization::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Polarization::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Polarization::D => (Complex64::new(r, 0.0), Complex64::new(r, 0.0)),
            Polarization::A => (Complex64::new(r, 0.0), Complex64::new(-r, 0.0)),
            Polarization::R => (Complex64::new(r, 0.0), Complex64::new(0.0, r)),
            Polarization::L => (Complex64::new(r, 0.0), Complex64::new(0.0, -r)),
        };
        [h, v]
    }
}

/// Laser pulse with `photons` mean photons in the first band.
pub fn coherent_state(photons: f64, polarization: Polarization) -> Result<GaussianState> {
    if !(photons.is_finite() && photons >= 0.0) {
        return Err(Error::NonFinite("photons"));
    }
    let [h, v] = polarization.jones();
    let amp = photons.sqrt();
    let alpha = CVec4::new(h * amp, v * amp, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    Ok(GaussianState::vacuum().displace(&alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::{rotation, stokes_form, stokes_report};
    use approx::assert_abs_diff_eq;

    fn cov_diff(a: &GaussianState, b: &GaussianState) -> f64 {
        (a.cov() - b.cov()).amax() / a.cov().amax().max(1.0)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BellKind::ALL {
            assert_eq!(k.name().parse::<BellKind>().unwrap(), k);
        }
        assert!("Chi".parse::<BellKind>().is_err());
    }

    #[test]
    fn zero_gain_gives_vacuum() {
        for k in BellKind::ALL {
            assert_eq!(make_bell_state(k, 0.0).unwrap(), GaussianState::vacuum());
        }
        assert_eq!(make_bell_state(BellKind::PsiMinus, -0.1), Err(Error::NegativeGain(-0.1)));
    }

    #[test]
    fn table_rows_at_unit_photon_number() {
        let g = 1f64.asinh();
        let expect = [
            (BellKind::PsiMinus, [16.0, 0.0, 0.0, 0.0]),
            (BellKind::PsiPlus, [16.0, 0.0, 16.0, 16.0]),
            (BellKind::PhiMinus, [16.0, 16.0, 0.0, 16.0]),
            (BellKind::PhiPlus, [16.0, 16.0, 16.0, 0.0]),
        ];
        for (kind, vars) in expect {
            let r = stokes_report(&make_bell_state(kind, g).unwrap());
            for (got, want) in r.variances.iter().zip(vars) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
            }
            assert_abs_diff_eq!(r.means[0], 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn interferometer_phase_selects_phi_states() {
        let g = 0.8;
        let plus = mzi_source(&SourceConfig::lossless(g, 0.0)).unwrap();
        let minus = mzi_source(&SourceConfig::lossless(g, PI)).unwrap();
        assert!(cov_diff(&plus, &make_bell_state(BellKind::PhiPlus, g).unwrap()) < 1e-10);
        assert!(cov_diff(&minus, &make_bell_state(BellKind::PhiMinus, g).unwrap()) < 1e-10);
        assert!(stokes_report(&minus).variances[2].abs() < 1e-10);
        assert!(stokes_report(&plus).variances[3].abs() < 1e-10);
    }

    #[test]
    fn quadrature_pump_phase_is_midway() {
        let st = mzi_source(&SourceConfig::lossless(1f64.asinh(), PI / 2.0)).unwrap();
        let r = stokes_report(&st);
        assert_abs_diff_eq!(r.variances[2], 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.variances[3], 8.0, epsilon = 1e-10);
    }

    #[test]
    fn rotated_phi_minus_is_psi_plus() {
        let g = 0.6;
        let rotated = basis_rotation(&make_bell_state(BellKind::PhiMinus, g).unwrap(), FRAC_PI_4).unwrap();
        assert!(cov_diff(&rotated, &make_bell_state(BellKind::PsiPlus, g).unwrap()) < 1e-10);
    }

    #[test]
    fn dichroic_plate_maps_psi_plus_to_psi_minus_and_back() {
        let g = 0.9;
        let plus = make_bell_state(BellKind::PsiPlus, g).unwrap();
        let plate = DichroicPlate::canonical();
        assert_abs_diff_eq!(plate.relative_retardance().abs(), PI, epsilon = 1e-12);
        let once = apply_dichroic_plate(&plus, &plate).unwrap();
        assert!(cov_diff(&once, &make_bell_state(BellKind::PsiMinus, g).unwrap()) < 1e-10);
        let twice = apply_dichroic_plate(&once, &plate).unwrap();
        assert!(cov_diff(&twice, &plus) < 1e-10);
        let blank = DichroicPlate {
            axis_angle: 0.3,
            retardance: [0.0, 0.0],
        };
        assert!(cov_diff(&apply_dichroic_plate(&plus, &blank).unwrap(), &plus) < 1e-12);
    }

    #[test]
    fn diagonal_axis_plate_does_not_give_singlet() {
        // The alternative axis candidate fails the PsiPlus -> PsiMinus map.
        let g = 0.9;
        let plus = make_bell_state(BellKind::PsiPlus, g).unwrap();
        let target = make_bell_state(BellKind::PsiMinus, g).unwrap();
        for retardance in [[PI, 0.0], [0.0, PI]] {
            let plate = DichroicPlate {
                axis_angle: FRAC_PI_4,
                retardance,
            };
            assert!(cov_diff(&apply_dichroic_plate(&plus, &plate).unwrap(), &target) > 1e-3);
        }
    }

    #[test]
    fn chain_reproduces_singlet() {
        for g in [0.1, 1.0, 7.0] {
            let chain = preparation_chain(g, [1.0; 4]).unwrap();
            let direct = make_bell_state(BellKind::PsiMinus, g).unwrap();
            assert!(cov_diff(&chain, &direct) < 1e-9, "gain {g}");
        }
    }

    #[test]
    fn singlet_is_invariant_under_polarization_transforms() {
        let st = make_bell_state(BellKind::PsiMinus, 0.7).unwrap();
        let base = stokes_report(&st);
        for (axis, ret) in [(0.1, 0.4), (1.0, PI), (-0.7, 2.2)] {
            let u = waveplate(axis, ret);
            // Covariance is SU(2)-invariant; det(u) only shifts the pair phase.
            let su2 = u * Complex64::from_polar(1.0, -ret / 2.0);
            let t = st.passive_polarization(&su2, Band::Both).unwrap();
            assert!(cov_diff(&t, &st) < 1e-10);
            let t = st.passive_polarization(&u, Band::Both).unwrap();
            let r = stokes_report(&t);
            for k in 0..4 {
                assert_abs_diff_eq!(r.means[k], base.means[k], epsilon = 1e-10);
                assert_abs_diff_eq!(r.variances[k], base.variances[k], epsilon = 1e-10);
            }
        }
        let t = st.passive_polarization(&rotation(0.33), Band::Both).unwrap();
        assert!(cov_diff(&t, &st) < 1e-10);
    }

    #[test]
    fn coherent_source_is_shot_noise_limited() {
        let st = coherent_state(1e6, Polarization::D).unwrap();
        let r = stokes_report(&st);
        assert_abs_diff_eq!(r.means[0], 1e6, epsilon = 1e-6);
        assert_abs_diff_eq!(r.means[2], 1e6, epsilon = 1e-6);
        for nrf in r.nrf {
            assert_abs_diff_eq!(nrf.unwrap(), 1.0, epsilon = 1e-9);
        }
        let s3 = stokes_form(3).unwrap();
        let rc = coherent_state(4.0, Polarization::R).unwrap();
        assert_abs_diff_eq!(s3.mean(&rc), 4.0, epsilon = 1e-12);
    }
}
