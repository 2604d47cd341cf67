//! Runners behind the command-line subcommands and their output formats.

use serde::{Deserialize, Serialize};

use crate::detection::{
    estimate_nrf, shot_noise_calibration, simulate_dark_run, simulate_pulses, wigner_bias_bound, Calibration,
    Normalization, NrfEstimate, Setting, WignerBias,
};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed, Exec};
use crate::fock::{build_fock_state, moment_truncation_bound, FockState, ORACLE_MAX_GAIN};
use crate::gaussian::{max_modulus, GaussianState};
use crate::optics::{make_bell_state, BellKind};
use crate::scenario::ScenarioConfig;
use crate::stokes::{
    nrf_bounds, stokes_form, stokes_report, uncertainty_check, NrfBounds, Plate, StokesForm, StokesReport,
    UncertaintyCheck,
};

// sub-experiment indices for derive_seed
const SEED_CALIBRATION: u64 = 1 << 40;
const SEED_DARK: u64 = (1 << 40) + 1;
const SEED_MC: u64 = 1 << 41;

fn s0(state: &GaussianState) -> f64 {
    stokes_form(0).expect("S0").mean(state)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub gain: Option<f64>,
    pub eta: [f64; 4],
    /// `⟨S0⟩` before optics and loss.
    pub s0_source: f64,
    pub stokes: StokesReport,
    /// Present when all four efficiencies are equal and the source is squeezed light.
    pub nrf_bounds: Option<NrfBounds>,
    pub uncertainty: UncertaintyCheck,
    pub wigner_bias: WignerBias,
}

pub fn run_analytic(cfg: &ScenarioConfig) -> Result<AnalyticReport> {
    let source = cfg.build_source()?;
    let state = cfg.build_state()?;
    let s0_source = s0(&source);
    let nrf_bounds = match (cfg.gain(), cfg.uniform_eta()) {
        (Some(_), Some(eta)) => Some(nrf_bounds(s0_source / 4.0, eta)?),
        _ => None,
    };
    Ok(AnalyticReport {
        gain: cfg.gain(),
        eta: cfg.eta,
        s0_source,
        stokes: stokes_report(&state),
        nrf_bounds,
        uncertainty: uncertainty_check(&state),
        wigner_bias: wigner_bias_bound(&state),
    })
}

impl AnalyticReport {
    /// One row per Stokes observable: `k,mean,variance,nrf`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["k", "mean", "variance", "nrf"]).map_err(io)?;
        for k in 0..4 {
            let nrf = if k == 0 { None } else { self.stokes.nrf[k - 1] };
            w.write_record([
                k.to_string(),
                fmt_f64(self.stokes.means[k]),
                fmt_f64(self.stokes.variances[k]),
                fmt_opt(nrf),
            ])
            .map_err(io)?;
        }
        finish_csv(w)
    }
}

/// Nine significant digits, the decimal contract of all CSV output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub nrf_analytic: f64,
    pub nrf_mc: Option<f64>,
    pub nrf_mc_err: Option<f64>,
    /// Detector means divided by `⟨S0⟩`.
    pub mean_det1: f64,
    pub mean_det2: f64,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["angle_deg", "nrf_analytic", "nrf_mc", "nrf_mc_err", "mean_det1", "mean_det2"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepBlock {
    pub plate: Plate,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// Shot-noise calibration used by the MC columns.
    pub calibration: Option<Calibration>,
    pub blocks: Vec<SweepBlock>,
}

/// Charge normalization shared by every MC point of a run.
struct McContext {
    norm: Normalization,
    calibration: Option<Calibration>,
}

impl McContext {
    fn new(cfg: &ScenarioConfig, state: &GaussianState, exec: Exec) -> Result<Self> {
        let seed = cfg.mc.seed;
        let calibration = if cfg.mc.calibrate_snl {
            let photons = s0(state);
            if photons.is_nan() || photons <= 0.0 {
                return Err(Error::NonPositivePhotons(photons));
            }
            Some(shot_noise_calibration(
                photons,
                cfg.mc.pulses,
                cfg.detector,
                derive_seed(seed, SEED_CALIBRATION),
                exec,
            )?)
        } else {
            None
        };
        let snl = calibration.map_or(1.0, |c| c.snl);
        let norm = if cfg.dark_run {
            let dark = simulate_dark_run(
                cfg.detector,
                Setting::new(Plate::Hwp, 0.0),
                cfg.mc.pulses,
                derive_seed(seed, SEED_DARK),
                exec,
            )?;
            Normalization::dark_run(&cfg.detector, &dark, snl)?
        } else {
            Normalization::analytic(&cfg.detector, snl)
        };
        Ok(McContext { norm, calibration })
    }

    /// NRF at one setting; the error adds the calibration error in quadrature.
    fn measure(&self, cfg: &ScenarioConfig, state: &GaussianState, setting: Setting, index: u64, exec: Exec) -> Result<(NrfEstimate, f64)> {
        let records = simulate_pulses(state, setting, cfg.detector, cfg.mc.pulses, derive_seed(cfg.mc.seed, index), exec)?;
        let est = estimate_nrf(&records, &self.norm)?;
        let rel_cal = self.calibration.map_or(0.0, |c| c.std_error / c.snl);
        let err = est.std_error.hypot(est.value.abs() * rel_cal);
        Ok((est, err))
    }
}

pub fn run_sweep(cfg: &ScenarioConfig, exec: Exec) -> Result<SweepReport> {
    let state = cfg.build_state()?;
    let total = s0(&state);
    let angles = cfg.sweep.angles();
    let base = stokes_form(1)?;
    let ctx = if cfg.sweep.mc {
        Some(McContext::new(cfg, &state, exec)?)
    } else {
        None
    };
    let mut blocks = Vec::new();
    for (p, &plate) in cfg.sweep.plates.iter().enumerate() {
        let point = |k: usize| -> Result<SweepRow> {
            let angle = angles[k];
            let setting = Setting::new(plate, angle);
            let (h, v) = crate::stokes::detector_forms(plate, angle.to_radians());
            let form = base.rotated(plate, angle.to_radians());
            let norm = if total > 0.0 { total } else { f64::NAN };
            let (nrf_mc, nrf_mc_err) = match &ctx {
                Some(ctx) => {
                    // points already run in parallel; pulses of one point stay sequential
                    let index = SEED_MC + (p as u64) * 1_000_000 + k as u64;
                    let (est, err) = ctx.measure(cfg, &state, setting, index, Exec::Sequential)?;
                    (Some(est.value), Some(err))
                }
                None => (None, None),
            };
            Ok(SweepRow {
                angle_deg: angle,
                nrf_analytic: form.variance(&state) / norm,
                nrf_mc,
                nrf_mc_err,
                mean_det1: h.mean(&state) / norm,
                mean_det2: v.mean(&state) / norm,
            })
        };
        let rows = map_indexed(exec, angles.len(), point).into_iter().collect::<Result<Vec<_>>>()?;
        blocks.push(SweepBlock { plate, rows });
    }
    Ok(SweepReport {
        calibration: ctx.and_then(|c| c.calibration),
        blocks,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.angle_deg),
            fmt_f64(r.nrf_analytic),
            fmt_opt(r.nrf_mc),
            fmt_opt(r.nrf_mc_err),
            fmt_f64(r.mean_det1),
            fmt_f64(r.mean_det2),
        ])
        .map_err(io)?;
    }
    finish_csv(w)
}

/// Reads sweep CSV back; empty MC fields become `None`. Lines starting with
/// `#` separate plate blocks in multi-plate output and are skipped.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |msg: String| Error::Io(format!("sweep CSV: {msg}"));
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().ne(SWEEP_COLUMNS) {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.iter().eq(SWEEP_COLUMNS) {
            continue;
        }
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|e| bad(format!("field {}: {e}", SWEEP_COLUMNS[i]))) };
        let opt = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) } };
        rows.push(SweepRow {
            angle_deg: num(0)?,
            nrf_analytic: num(1)?,
            nrf_mc: opt(2)?,
            nrf_mc_err: opt(3)?,
            mean_det1: num(4)?,
            mean_det2: num(5)?,
        });
    }
    Ok(rows)
}

/// Applies the CSV decimal contract to a row, as a read-back would.
pub fn quantize_row(r: &SweepRow) -> SweepRow {
    let q = |x: f64| fmt_f64(x).parse::<f64>().expect("formatted float");
    SweepRow {
        angle_deg: q(r.angle_deg),
        nrf_analytic: q(r.nrf_analytic),
        nrf_mc: r.nrf_mc.map(q),
        nrf_mc_err: r.nrf_mc_err.map(q),
        mean_det1: q(r.mean_det1),
        mean_det2: q(r.mean_det2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McRow {
    pub observable: String,
    pub plate: Plate,
    pub angle_deg: f64,
    pub nrf_mc: f64,
    pub nrf_mc_err: f64,
    pub nrf_analytic: f64,
    pub n_pulses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub calibration: Option<Calibration>,
    /// Electronic variance subtracted, charge units.
    pub electronic_variance: f64,
    pub wigner_bias: WignerBias,
    pub rows: Vec<McRow>,
}

/// Analyzer settings measuring S1, S2 and S3.
pub const STOKES_SETTINGS: [(&str, Plate, f64); 3] =
    [("S1", Plate::Hwp, 0.0), ("S2", Plate::Hwp, 22.5), ("S3", Plate::Qwp, 45.0)];

pub fn run_mc(cfg: &ScenarioConfig, exec: Exec) -> Result<McReport> {
    let state = cfg.build_state()?;
    let ctx = McContext::new(cfg, &state, exec)?;
    let total = s0(&state);
    let mut rows = Vec::new();
    for (k, (name, plate, angle)) in STOKES_SETTINGS.into_iter().enumerate() {
        let setting = Setting::new(plate, angle);
        let (est, err) = ctx.measure(cfg, &state, setting, SEED_MC + k as u64, exec)?;
        rows.push(McRow {
            observable: name.to_string(),
            plate,
            angle_deg: angle,
            nrf_mc: est.value,
            nrf_mc_err: err,
            nrf_analytic: setting.difference_form().variance(&state) / total,
            n_pulses: est.n_pulses,
        });
    }
    Ok(McReport {
        calibration: ctx.calibration,
        electronic_variance: ctx.norm.electronic_variance,
        wigner_bias: wigner_bias_bound(&state),
        rows,
    })
}

impl McReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["observable", "plate", "angle_deg", "nrf_mc", "nrf_mc_err", "nrf_analytic", "n_pulses"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.observable.clone(),
                r.plate.to_string(),
                fmt_f64(r.angle_deg),
                fmt_f64(r.nrf_mc),
                fmt_f64(r.nrf_mc_err),
                fmt_f64(r.nrf_analytic),
                r.n_pulses.to_string(),
            ])
            .map_err(io)?;
        }
        finish_csv(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: String, deviation: f64, bound: f64) -> Self {
        Check {
            name,
            deviation,
            bound,
            pass: deviation <= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub cutoff: usize,
    pub gains: Vec<f64>,
    /// Largest probability mass dropped by truncation before renormalization.
    pub max_renormalized_mass: f64,
    pub max_deviation: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Round-off allowance on top of truncation bounds, relative to the scale of
/// the compared quantity.
const ROUNDOFF: f64 = 1e-12;

/// Oracle comparison on the gain grid `0.1, 0.2, ... <= max_gamma`.
pub fn run_validate(max_gamma: f64, cutoff: usize, exec: Exec) -> Result<ValidationReport> {
    run_validate_with(max_gamma, cutoff, exec, &stokes_form)
}

/// Same as [`run_validate`] with the Gaussian-side Stokes convention supplied
/// by the caller, so the harness itself can be tested.
pub fn run_validate_with(
    max_gamma: f64,
    cutoff: usize,
    exec: Exec,
    convention: &(dyn Fn(usize) -> Result<StokesForm> + Sync),
) -> Result<ValidationReport> {
    if !(max_gamma.is_finite() && max_gamma > 0.0) {
        return Err(Error::NonFinite("max_gamma"));
    }
    if max_gamma > ORACLE_MAX_GAIN {
        return Err(Error::OracleRegime(max_gamma));
    }
    let gains: Vec<f64> = (1..)
        .map(|k| k as f64 / 10.0)
        .take_while(|&g| g <= max_gamma + 1e-12)
        .collect();
    let forms = (0..4).map(convention).collect::<Result<Vec<_>>>()?;

    let mut checks = identity_checks(&forms);

    let cases: Vec<(BellKind, f64)> = BellKind::ALL
        .into_iter()
        .flat_map(|k| gains.iter().map(move |&g| (k, g)))
        .collect();
    let results = map_indexed(exec, cases.len(), |i| {
        let (kind, g) = cases[i];
        compare_case(kind, g, cutoff, &forms)
    });
    let mut max_mass: f64 = 0.0;
    for r in results {
        let (mass, case_checks) = r?;
        max_mass = max_mass.max(mass);
        checks.extend(case_checks);
    }
    let max_deviation = checks.iter().map(|c| c.deviation).fold(0.0, f64::max);
    Ok(ValidationReport {
        cutoff,
        gains,
        max_renormalized_mass: max_mass,
        max_deviation,
        passed: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn identity_checks(forms: &[StokesForm]) -> Vec<Check> {
    let diff = |a: &StokesForm, b: &StokesForm| max_modulus((a.matrix() - b.matrix()).iter());
    vec![
        Check::new(
            "HWP 22.5 deg maps S1 onto S2".into(),
            diff(&forms[1].rotated(Plate::Hwp, 22.5f64.to_radians()), &forms[2]),
            ROUNDOFF,
        ),
        Check::new(
            "QWP 45 deg maps S1 onto S3".into(),
            diff(&forms[1].rotated(Plate::Qwp, 45f64.to_radians()), &forms[3]),
            ROUNDOFF,
        ),
    ]
}

fn compare_case(kind: BellKind, gamma: f64, cutoff: usize, forms: &[StokesForm]) -> Result<(f64, Vec<Check>)> {
    let gauss = make_bell_state(kind, gamma)?;
    let fock = build_fock_state(kind, gamma, cutoff)?;
    let b1 = moment_truncation_bound(gamma, cutoff, 1);
    let b2 = moment_truncation_bound(gamma, cutoff, 2);
    let mut checks = Vec::new();
    let tag = format!("{kind} gain {gamma:.1}");
    for (k, form) in forms.iter().enumerate() {
        let (gm, gv) = (form.mean(&gauss), form.variance(&gauss));
        let fm = fock.stokes_moment(k, 1)?;
        let fv = fock.stokes_moment(k, 2)? - fm * fm;
        let mean_bound = 10.0 * b1 + ROUNDOFF * (1.0 + gm.abs());
        let var_bound = 10.0 * (b2 + 2.0 * gm.abs() * b1 + b1 * b1) + ROUNDOFF * (1.0 + gv.abs());
        checks.push(Check::new(format!("{tag} <S{k}>"), (gm - fm).abs(), mean_bound));
        checks.push(Check::new(format!("{tag} Var(S{k})"), (gv - fv).abs(), var_bound));
    }
    checks.push(correlation_check(&tag, &gauss, &fock, gamma, cutoff));
    if kind == BellKind::PsiMinus {
        for k in 1..=3 {
            for order in 1..=4 {
                let scale = fock.stokes_moment(0, order)?;
                let m = fock.stokes_moment(k, order)?;
                let bound = 10.0 * moment_truncation_bound(gamma, cutoff, order) + ROUNDOFF * (1.0 + scale);
                checks.push(Check::new(format!("{tag} <S{k}^{order}> = 0"), m.abs(), bound));
            }
        }
    }
    Ok((fock.truncated_mass(), checks))
}

fn correlation_check(tag: &str, gauss: &GaussianState, fock: &FockState, gamma: f64, cutoff: usize) -> Check {
    let (g, f) = (gauss.correlations(), fock.correlations());
    let dev = max_modulus((g.n - f.n).iter())
        .max(max_modulus((g.a - f.a).iter()))
        .max(max_modulus((g.d - f.d).iter()));
    // |<c†c>|, |<cc>| <= <S0>-weighted moments
    let bound = 10.0 * moment_truncation_bound(gamma, cutoff, 1) + ROUNDOFF * (1.0 + max_modulus(g.a.iter()));
    Check::new(format!("{tag} ladder moments"), dev, bound)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub snl: f64,
    pub std_error: f64,
    pub n_pulses: usize,
    pub mean_photons: f64,
    /// Electronic over shot-noise variance, `2 σ² / ⟨S0⟩`.
    pub electronic_ratio: f64,
    /// `⟨S0⟩` at which shot noise is ten times the electronic variance.
    pub tenfold_threshold_photons: f64,
    pub shot_noise_dominates_tenfold: bool,
}

/// Laser calibration at the detected intensity of the configured source.
pub fn run_calibrate(cfg: &ScenarioConfig, exec: Exec) -> Result<CalibrationReport> {
    let state = cfg.build_state()?;
    let photons = s0(&state);
    let c = shot_noise_calibration(photons, cfg.mc.pulses, cfg.detector, derive_seed(cfg.mc.seed, SEED_CALIBRATION), exec)?;
    let threshold = 20.0 * cfg.detector.electronic_noise_sigma.powi(2);
    Ok(CalibrationReport {
        snl: c.snl,
        std_error: c.std_error,
        n_pulses: c.n_pulses,
        mean_photons: photons,
        electronic_ratio: c.electronic_ratio,
        tenfold_threshold_photons: threshold,
        shot_noise_dominates_tenfold: photons >= threshold,
    })
}

impl CalibrationReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["snl", "std_error", "n_pulses", "mean_photons", "electronic_ratio", "tenfold_threshold_photons"])
            .map_err(io)?;
        w.write_record([
            fmt_f64(self.snl),
            fmt_f64(self.std_error),
            self.n_pulses.to_string(),
            fmt_f64(self.mean_photons),
            fmt_f64(self.electronic_ratio),
            fmt_f64(self.tenfold_threshold_photons),
        ])
        .map_err(io)?;
        finish_csv(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_config;
    use approx::assert_relative_eq;

    fn cfg(body: &str) -> ScenarioConfig {
        parse_config(body).unwrap()
    }

    #[test]
    fn analytic_table_row_and_bounds() {
        // n = 1 per mode gives <S0> = 4
        let r = run_analytic(&cfg("[source]\nkind = \"bell\"\nstate = \"PsiMinus\"\ntarget_s0 = 4\n")).unwrap();
        assert_relative_eq!(r.stokes.variances[0], 16.0, max_relative = 1e-9);
        assert!(r.stokes.variances[1..].iter().all(|v| v.abs() < 1e-9 * 16.0));
        let r = run_analytic(&cfg(
            "[source]\nkind = \"bell\"\nstate = \"PsiMinus\"\ntarget_s0 = 1e6\n[loss]\neta = 0.65\n",
        ))
        .unwrap();
        for v in r.stokes.nrf {
            assert_relative_eq!(v.unwrap(), 0.35, max_relative = 1e-9);
        }
        let b = r.nrf_bounds.unwrap();
        assert_relative_eq!(b.max, 1.0 + 0.65 + 0.65 * 5e5, max_relative = 1e-9);
        assert!(r.to_csv().unwrap().starts_with("k,mean,variance,nrf\n"));
    }

    #[test]
    fn coherent_is_at_shot_noise() {
        let r = run_analytic(&cfg("[source]\nkind = \"coherent\"\ntarget_s0 = 1e6\n")).unwrap();
        for v in r.stokes.nrf {
            assert_relative_eq!(v.unwrap(), 1.0, max_relative = 1e-9);
        }
        assert!(r.nrf_bounds.is_none());
    }

    #[test]
    fn singlet_sweep_is_flat() {
        let rep = run_sweep(&cfg("[source]\nkind = \"bell\"\nstate = \"PsiMinus\"\ntarget_s0 = 1e6\n[loss]\neta = 0.65\n[sweep]\nplate = \"both\"\n"), Exec::default()).unwrap();
        for b in &rep.blocks {
            for r in &b.rows {
                assert!((r.nrf_analytic - 0.35).abs() < 1e-10);
                assert!((r.mean_det1 - 0.5).abs() < 1e-12 && (r.mean_det2 - 0.5).abs() < 1e-12);
                assert!(r.nrf_mc.is_none());
            }
        }
    }

    #[test]
    fn psi_plus_sweep_modulates() {
        let rep = run_sweep(&cfg("[source]\nkind = \"bell\"\nstate = \"PsiPlus\"\ngain = 0.8813735870195430\n[sweep]\nplate = \"QWP\"\nstep_deg = 22.5\n"), Exec::default()).unwrap();
        // sinh(0.88137...) = 1, so n = 1 and 8n(n+1)/<S0> = 4
        let rows = &rep.blocks[0].rows;
        assert!(rows[0].nrf_analytic.abs() < 1e-9);
        assert!((rows[2].nrf_analytic - 4.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow { angle_deg: 1.0, nrf_analytic: 0.123456789123, nrf_mc: Some(0.3), nrf_mc_err: Some(1e-3), mean_det1: 0.5, mean_det2: 0.5 },
            SweepRow { angle_deg: 2.5, nrf_analytic: 1e6 / 3.0, nrf_mc: None, nrf_mc_err: None, mean_det1: 0.0, mean_det2: 1.0 },
        ];
        let text = sweep_csv(&rows).unwrap();
        assert!(text.starts_with("angle_deg,nrf_analytic,nrf_mc,nrf_mc_err,mean_det1,mean_det2\n"));
        let back = parse_sweep_csv(&text).unwrap();
        assert_eq!(back, rows.iter().map(quantize_row).collect::<Vec<_>>());
        assert_eq!(sweep_csv(&back).unwrap(), text);
        assert!(parse_sweep_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn small_validation_passes() {
        let rep = run_validate(0.2, 6, Exec::default()).unwrap();
        assert!(rep.passed, "{:?}", rep.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        assert_eq!(rep.gains, vec![0.1, 0.2]);
        assert!(run_validate(2.0, 6, Exec::default()).is_err());
    }

    #[test]
    fn broken_sign_fails_identity() {
        let broken = |k: usize| -> Result<StokesForm> {
            let f = stokes_form(k)?;
            Ok(if k == 2 { StokesForm::from_matrix(-f.matrix()) } else { f })
        };
        let rep = run_validate_with(0.1, 5, Exec::default(), &broken).unwrap();
        assert!(!rep.passed);
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["HWP 22.5 deg maps S1 onto S2"]);
    }

    #[test]
    fn calibration_report() {
        let c = run_calibrate(&cfg("[source]\nkind = \"coherent\"\ntarget_s0 = 1e6\n[mc]\npulses = 2000\n"), Exec::default()).unwrap();
        assert_relative_eq!(c.electronic_ratio, 0.0648, max_relative = 1e-12);
        assert_relative_eq!(c.tenfold_threshold_photons, 6.48e5, max_relative = 1e-12);
        assert!(c.shot_noise_dominates_tenfold);
    }
}
