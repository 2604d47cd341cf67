//! Cross-checks between the Gaussian engine, the Fock-space state and the two
//! samplers (photon counting vs. Wigner quadratures).

use polbell::detection::{estimate_nrf, simulate_pulses, wigner_bias_bound, DetectorModel, Normalization, Setting};
use polbell::fock::{build_fock_state, sample_photon_tuples, PhotonTuple};
use polbell::gaussian::max_modulus;
use polbell::optics::make_bell_state;
use polbell::stokes::{waveplate, stokes_report};
use polbell::{Band, BellKind, Exec, Mode, Plate};

const GAMMA: f64 = 0.3;
const CUTOFF: usize = 12;

#[test]
fn correlations_agree_for_all_bell_states() {
    let u = waveplate(0.3, 1.1);
    for kind in BellKind::ALL {
        let g = make_bell_state(kind, GAMMA).unwrap().passive_polarization(&u, Band::First).unwrap();
        let f = build_fock_state(kind, GAMMA, CUTOFF)
            .unwrap()
            .apply_polarization_unitary(&u, Band::First)
            .unwrap();
        let (cg, cf) = (g.correlations(), f.correlations());
        let dn = max_modulus((cg.n - cf.n).iter());
        let da = max_modulus((cg.a - cf.a).iter());
        assert!(dn < 1e-8 && da < 1e-8, "{kind:?}: dN {dn:.2e} dA {da:.2e}");
    }
}

/// Two-mode squeezed vacuum on (a1, b2): `⟨N⟩ = sinh²Γ`, `|⟨ab⟩| = sinhΓ coshΓ`.
#[test]
fn tmsv_block_matches_closed_form() {
    let f = build_fock_state(BellKind::PsiMinus, GAMMA, CUTOFF).unwrap();
    let c = f.correlations();
    let (a1, b2) = (Mode::A1.index(), Mode::B2.index());
    let (s, ch) = (GAMMA.sinh(), GAMMA.cosh());
    assert!((c.n[(a1, a1)].re - s * s).abs() < 1e-8);
    assert!((c.n[(b2, b2)].re - s * s).abs() < 1e-8);
    assert!((c.a[(a1, b2)].norm() - s * ch).abs() < 1e-8);
}

fn s1(t: &PhotonTuple) -> f64 {
    (t.n[0] as f64 - t.n[1] as f64) + (t.n[2] as f64 - t.n[3] as f64)
}

fn s0(t: &PhotonTuple) -> f64 {
    t.n.iter().sum::<u64>() as f64
}

/// NRF of S1 with a standard error from 100 batch means.
fn counting_nrf(tuples: &[PhotonTuple]) -> (f64, f64) {
    let nrf = |ts: &[PhotonTuple]| {
        let n = ts.len() as f64;
        let m1 = ts.iter().map(s1).sum::<f64>() / n;
        let var = ts.iter().map(|t| (s1(t) - m1).powi(2)).sum::<f64>() / (n - 1.0);
        var / (ts.iter().map(s0).sum::<f64>() / n)
    };
    let batches: Vec<f64> = tuples.chunks(tuples.len() / 100).map(nrf).collect();
    let mean = batches.iter().sum::<f64>() / batches.len() as f64;
    let spread = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
    (nrf(tuples), (spread / batches.len() as f64).sqrt())
}

#[test]
fn photon_counting_reproduces_lossy_squeezing() {
    let eta = 0.5;
    let st = build_fock_state(BellKind::PsiMinus, GAMMA, CUTOFF).unwrap();
    let tuples = sample_photon_tuples(&st, [eta; 4], 1_000_000, 3, Exec::default()).unwrap();
    let (value, se) = counting_nrf(&tuples);
    assert!((value - (1.0 - eta)).abs() <= 3.0 * se, "{value} +- {se}");

    // binomial thinning: per-mode mean eta sinh²Γ
    let mean_n = eta * GAMMA.sinh().powi(2);
    for m in 0..4 {
        let xs: Vec<f64> = tuples.iter().map(|t| t.n[m] as f64).collect();
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mu - mean_n).abs() <= 4.0 * (var / xs.len() as f64).sqrt(), "mode {m}: {mu} vs {mean_n}");
    }
}

/// Wigner sampling overestimates the variance by a fixed photon² offset; once
/// that is removed the two samplers agree.
#[test]
fn wigner_and_counting_agree_after_bias() {
    let eta = 0.5;
    let fock = build_fock_state(BellKind::PsiMinus, GAMMA, CUTOFF).unwrap();
    let tuples = sample_photon_tuples(&fock, [eta; 4], 400_000, 5, Exec::default()).unwrap();
    let (counted, se_c) = counting_nrf(&tuples);

    let gauss = make_bell_state(BellKind::PsiMinus, GAMMA).unwrap().loss([eta; 4]).unwrap();
    let records = simulate_pulses(
        &gauss,
        Setting::new(Plate::Hwp, 0.0),
        DetectorModel::noiseless(),
        400_000,
        5,
        Exec::default(),
    )
    .unwrap();
    let wig = estimate_nrf(&records, &Normalization::raw()).unwrap();
    let bias = wigner_bias_bound(&gauss);
    assert!(bias.oracle_regime);
    let corrected = wig.value - bias.nrf.unwrap();
    let se = (se_c.powi(2) + wig.std_error.powi(2)).sqrt();
    assert!((corrected - counted).abs() <= 3.0 * se, "wigner {corrected} vs counting {counted} +- {se}");

    let exact = stokes_report(&gauss).nrf[0].unwrap();
    assert!((exact - (1.0 - eta)).abs() < 1e-12);
}
