//! Scenario documents (TOML) and their validated form.
//!
//! ```toml
//! [source]
//! kind = "bell"          # bell | mzi | chain | coherent
//! state = "PsiMinus"     # bell only
//! target_s0 = 1e6        # or `gain`; coherent sources take target_s0 only
//!
//! [loss]
//! eta = 0.28             # or four per-mode values [a1, b1, a2, b2]
//!
//! [sweep]
//! plate = "both"         # HWP | QWP | both
//! ```
//!
//! Every section is optional except `[source]`. Unknown keys are rejected and
//! all constraint violations are reported together.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::DetectorModel;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::optics::{
    apply_dichroic_plate, basis_rotation, coherent_state, gain_for_s0, make_bell_state, mzi_source,
    BellKind, DichroicPlate, Polarization, SourceConfig,
};
use crate::stokes::Plate;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    source: Option<RawSource>,
    #[serde(default)]
    optics: RawOptics,
    #[serde(default)]
    loss: RawLoss,
    #[serde(default)]
    detector: RawDetector,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    mc: RawMc,
    #[serde(default)]
    outputs: RawOutputs,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: SourceKind,
    state: Option<BellKind>,
    gain: Option<f64>,
    target_s0: Option<f64>,
    pump_phase_deg: Option<f64>,
    gain_imbalance: Option<f64>,
    polarization: Option<Polarization>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Bell,
    Mzi,
    Chain,
    Coherent,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptics {
    dichroic: Option<bool>,
    dichroic_axis_deg: Option<f64>,
    dichroic_retardance_deg: Option<[f64; 2]>,
    extra_rotation_deg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EtaSpec {
    Uniform(f64),
    PerMode([f64; 4]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    eta: Option<EtaSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    electronic_noise_sigma: Option<f64>,
    gain: Option<f64>,
    dark_run: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlateChoice {
    #[serde(rename = "HWP")]
    Hwp,
    #[serde(rename = "QWP")]
    Qwp,
    #[serde(rename = "both")]
    Both,
}

impl PlateChoice {
    pub fn plates(self) -> Vec<Plate> {
        match self {
            PlateChoice::Hwp => vec![Plate::Hwp],
            PlateChoice::Qwp => vec![Plate::Qwp],
            PlateChoice::Both => vec![Plate::Hwp, Plate::Qwp],
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    plate: Option<PlateChoice>,
    start_deg: Option<f64>,
    stop_deg: Option<f64>,
    step_deg: Option<f64>,
    mc: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    pulses: Option<i64>,
    seed: Option<u64>,
    calibrate_snl: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    path: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Bell {
        kind: BellKind,
        gain: f64,
    },
    /// Two-crystal interferometer; `chain` adds the 45° basis rotation.
    Mzi {
        gain: f64,
        gain_imbalance: f64,
        pump_phase_deg: f64,
        rotate_basis: bool,
    },
    Coherent {
        photons: f64,
        polarization: Polarization,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub plates: Vec<Plate>,
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
    pub mc: bool,
}

impl SweepConfig {
    /// Grid `start, start + step, ...` up to `stop` inclusive.
    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start_deg + k as f64 * self.step_deg).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub pulses: usize,
    pub seed: u64,
    /// Divide by a simulated laser calibration instead of the ideal level 1.
    pub calibrate_snl: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub source: Source,
    pub dichroic: Option<DichroicPlate>,
    pub extra_rotation_deg: f64,
    pub eta: [f64; 4],
    pub detector: DetectorModel,
    pub dark_run: bool,
    pub sweep: SweepConfig,
    pub mc: McConfig,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_PULSES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn resolve(raw: RawScenario) -> Result<ScenarioConfig> {
    let mut errs = Vec::new();

    let source = match raw.source {
        None => {
            errs.push("missing [source] section".to_string());
            None
        }
        Some(src) => resolve_source(src, &mut errs),
    };
    let chain = matches!(
        source,
        Some(Source::Mzi {
            rotate_basis: true,
            ..
        })
    );

    let o = raw.optics;
    let dichroic_on = o.dichroic.unwrap_or(chain);
    if !dichroic_on && (o.dichroic_axis_deg.is_some() || o.dichroic_retardance_deg.is_some()) {
        errs.push("optics: dichroic plate parameters given but dichroic = false".into());
    }
    let canonical = DichroicPlate::canonical();
    let axis = o.dichroic_axis_deg.unwrap_or(canonical.axis_angle.to_degrees());
    let ret = o
        .dichroic_retardance_deg
        .unwrap_or(canonical.retardance.map(f64::to_degrees));
    if !axis.is_finite() || ret.iter().any(|r| !r.is_finite()) {
        errs.push("optics: dichroic plate angles must be finite".into());
    }
    let extra_rotation_deg = o.extra_rotation_deg.unwrap_or(0.0);
    if !extra_rotation_deg.is_finite() {
        errs.push("optics.extra_rotation_deg must be finite".into());
    }

    let eta = match raw.loss.eta {
        None => [1.0; 4],
        Some(EtaSpec::Uniform(e)) => [e; 4],
        Some(EtaSpec::PerMode(e)) => e,
    };
    for (m, e) in eta.iter().enumerate() {
        if !(0.0..=1.0).contains(e) {
            errs.push(format!("loss.eta[{m}] = {e} is outside [0, 1]"));
        }
    }

    let d = raw.detector;
    let detector = DetectorModel {
        electronic_noise_sigma: d.electronic_noise_sigma.unwrap_or(180.0),
        gain: d.gain.unwrap_or(1.0),
    };
    if let Err(e) = detector.validate() {
        errs.push(format!("detector: {e}"));
    }

    let s = raw.sweep;
    let sweep = SweepConfig {
        plates: s.plate.unwrap_or(PlateChoice::Hwp).plates(),
        start_deg: s.start_deg.unwrap_or(0.0),
        stop_deg: s.stop_deg.unwrap_or(90.0),
        step_deg: s.step_deg.unwrap_or(2.0),
        mc: s.mc.unwrap_or(false),
    };
    if !(sweep.step_deg.is_finite() && sweep.step_deg > 0.0) {
        errs.push(format!("sweep.step_deg must be > 0, got {}", sweep.step_deg));
    }
    if !(sweep.start_deg.is_finite() && sweep.stop_deg.is_finite() && sweep.stop_deg >= sweep.start_deg) {
        errs.push(format!(
            "sweep range [{}, {}] must be finite with stop >= start",
            sweep.start_deg, sweep.stop_deg
        ));
    }

    let pulses = raw.mc.pulses.unwrap_or(DEFAULT_PULSES as i64);
    if pulses < 100 {
        errs.push(format!("mc.pulses must be >= 100, got {pulses}"));
    }
    let mc = McConfig {
        pulses: pulses.max(0) as usize,
        seed: raw.mc.seed.unwrap_or(DEFAULT_SEED),
        calibrate_snl: raw.mc.calibrate_snl.unwrap_or(true),
    };

    match source {
        Some(source) if errs.is_empty() => Ok(ScenarioConfig {
            source,
            dichroic: dichroic_on.then(|| DichroicPlate {
                axis_angle: axis.to_radians(),
                retardance: ret.map(f64::to_radians),
            }),
            extra_rotation_deg,
            eta,
            detector,
            dark_run: d.dark_run.unwrap_or(false),
            sweep,
            mc,
            output_path: raw.outputs.path,
            format: raw.outputs.format.unwrap_or_default(),
        }),
        _ => Err(Error::Config(errs)),
    }
}

fn resolve_source(src: RawSource, errs: &mut Vec<String>) -> Option<Source> {
    let before = errs.len();
    let kind = src.kind;
    let only = |present: bool, key: &str, allowed: &str, errs: &mut Vec<String>| {
        if present {
            errs.push(format!("source.{key} applies to kind = {allowed} only"));
        }
    };
    only(src.state.is_some() && kind != SourceKind::Bell, "state", "bell", errs);
    only(src.polarization.is_some() && kind != SourceKind::Coherent, "polarization", "coherent", errs);
    let interferometer = matches!(kind, SourceKind::Mzi | SourceKind::Chain);
    only(src.pump_phase_deg.is_some() && !interferometer, "pump_phase_deg", "mzi|chain", errs);
    only(src.gain_imbalance.is_some() && !interferometer, "gain_imbalance", "mzi|chain", errs);

    if let Some(t) = src.target_s0 {
        if !(t.is_finite() && t > 0.0) {
            errs.push(format!("source.target_s0 must be > 0, got {t}"));
        }
    }
    if let Some(g) = src.gain {
        if !finite_nonneg(g) {
            errs.push(format!("source.gain must be >= 0, got {g}"));
        }
    }
    let gain = match (src.gain, src.target_s0, kind) {
        (Some(_), None, SourceKind::Coherent) => {
            errs.push("source.gain does not apply to coherent light; give target_s0".into());
            0.0
        }
        (Some(_), Some(_), _) => {
            errs.push("source: give exactly one of gain and target_s0, not both".into());
            0.0
        }
        (None, None, _) => {
            errs.push("source: one of gain or target_s0 is required".into());
            0.0
        }
        (Some(g), None, _) => g,
        (None, Some(t), SourceKind::Coherent) => t,
        (None, Some(t), _) => gain_for_s0(t),
    };

    let imbalance = src.gain_imbalance.unwrap_or(1.0);
    if !finite_nonneg(imbalance) {
        errs.push(format!("source.gain_imbalance must be >= 0, got {imbalance}"));
    }
    let phase = src.pump_phase_deg.unwrap_or(180.0);
    if !phase.is_finite() {
        errs.push("source.pump_phase_deg must be finite".into());
    }
    let source = match kind {
        SourceKind::Bell => match src.state {
            Some(k) => Source::Bell { kind: k, gain },
            None => {
                errs.push("source.state is required for kind = bell".into());
                return None;
            }
        },
        SourceKind::Mzi | SourceKind::Chain => Source::Mzi {
            gain,
            gain_imbalance: imbalance,
            pump_phase_deg: phase,
            rotate_basis: kind == SourceKind::Chain,
        },
        SourceKind::Coherent => Source::Coherent {
            photons: gain,
            polarization: src.polarization.unwrap_or(Polarization::D),
        },
    };
    (errs.len() == before).then_some(source)
}

impl ScenarioConfig {
    /// Parametric gain of the squeezed-light source; `None` for a laser.
    pub fn gain(&self) -> Option<f64> {
        match self.source {
            Source::Bell { gain, .. } | Source::Mzi { gain, .. } => Some(gain),
            Source::Coherent { .. } => None,
        }
    }

    /// Common efficiency when all four modes share it.
    pub fn uniform_eta(&self) -> Option<f64> {
        self.eta.iter().all(|&e| e == self.eta[0]).then_some(self.eta[0])
    }

    /// Source, optional basis rotation and dichroic plate, extra rotation, loss.
    pub fn build_state(&self) -> Result<GaussianState> {
        let st = self.build_source()?;
        let st = match &self.dichroic {
            Some(p) => apply_dichroic_plate(&st, p)?,
            None => st,
        };
        let st = if self.extra_rotation_deg != 0.0 {
            basis_rotation(&st, self.extra_rotation_deg.to_radians())?
        } else {
            st
        };
        st.loss(self.eta)
    }

    /// The state before any optics or loss (after the basis rotation of a chain).
    pub fn build_source(&self) -> Result<GaussianState> {
        match self.source {
            Source::Bell { kind, gain } => make_bell_state(kind, gain),
            Source::Mzi {
                gain,
                gain_imbalance,
                pump_phase_deg,
                rotate_basis,
            } => {
                let st = mzi_source(&SourceConfig {
                    gain,
                    gain_imbalance,
                    pump_phase: pump_phase_deg.to_radians(),
                    eta: [1.0; 4],
                })?;
                if rotate_basis {
                    basis_rotation(&st, PI / 4.0)
                } else {
                    Ok(st)
                }
            }
            Source::Coherent {
                photons,
                polarization,
            } => coherent_state(photons, polarization),
        }
    }
}
