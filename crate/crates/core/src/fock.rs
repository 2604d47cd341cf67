//! Truncated Fock-space oracle for the four-mode Bell states.
//!
//! States are dense amplitude tensors over `(n_a1, n_b1, n_a2, n_b2)`, each
//! index running over `0..=2 * cutoff`. A squeezed-pair expansion keeps every
//! term whose combined pair photon number is at most `2 * cutoff`; this holds
//! the whole per-pair box `n, m <= cutoff` and, because that number equals the
//! photon number of each band, it is a union of whole band sectors.
//! Polarization optics therefore act exactly and the singlet stays exactly
//! invariant.
//!
//! Nothing here depends on the Gaussian engine; the two are compared in tests
//! and by the validation runner.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::exec::{chunk_sizes, map_indexed, stream_rng, Exec};
use crate::gaussian::{Band, CMat2, CMat4, ComplexCorrelations, Mode, UNITARITY_TOL};
use crate::optics::BellKind;
use crate::stokes::stokes_block;

/// Largest gain accepted by the oracle.
pub const ORACLE_MAX_GAIN: f64 = 1.5;
/// Largest truncated probability mass accepted when building a state.
pub const TAIL_LIMIT: f64 = 1e-6;

const SAMPLE_CHUNK: usize = 4096;
const FOCK_STREAM_TAG: u64 = 0xF0C5;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Probability mass of the two-pair product state with more than
/// `2 * cutoff` photons per band.
pub fn truncation_tail(gamma: f64, cutoff: usize) -> f64 {
    // P(N) = (1 - x)² (N + 1) x^N, summed from M = 2c + 1
    let x = gamma.tanh().powi(2);
    let m = (2 * cutoff + 1) as f64;
    x.powf(m) * ((m + 1.0) - m * x)
}

/// Looser documented bound `2 t^{2(c+1)} / (1 - t²)` on the norm defect.
pub fn truncation_norm_bound(gamma: f64, cutoff: usize) -> f64 {
    let t2 = gamma.tanh().powi(2);
    2.0 * t2.powi(cutoff as i32 + 1) / (1.0 - t2)
}

/// Bound on the error of a moment of `order` of any Stokes observable
/// evaluated on the truncated, renormalized state.
///
/// Within the sector of `N` photons per band every Stokes observable has norm
/// at most `2N`. The bound adds the neglected mass weighted by that norm and
/// the shift caused by renormalization.
pub fn moment_truncation_bound(gamma: f64, cutoff: usize, order: u32) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let x = gamma.tanh().powi(2);
    // terms decay like x^N; stop once they are far below double precision
    let horizon = 2 * cutoff + 64 + (80.0 / -x.ln()).ceil() as usize;
    let (mut outside, mut total) = (0.0, 0.0);
    for n in 0..=horizon {
        let w = (1.0 - x).powi(2) * (n + 1) as f64 * x.powi(n as i32) * (2.0 * n as f64).powi(order as i32);
        total += w;
        if n > 2 * cutoff {
            outside += w;
        }
    }
    outside + truncation_tail(gamma, cutoff) * total
}

fn factorials(max: usize) -> Vec<f64> {
    let mut f = vec![1.0; max + 1];
    for k in 1..=max {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    cutoff: usize,
    dim: usize,
    amp: Vec<Complex64>,
    truncated_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhotonTuple {
    pub n: [u64; 4],
}

impl FockState {
    pub fn vacuum(cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::Truncation {
                gamma: 0.0,
                cutoff,
                tail: 1.0,
                limit: TAIL_LIMIT,
            });
        }
        let dim = 2 * cutoff + 1;
        let mut amp = vec![zero(); dim.pow(4)];
        amp[0] = Complex64::new(1.0, 0.0);
        Ok(FockState {
            cutoff,
            dim,
            amp,
            truncated_mass: 0.0,
        })
    }

    /// Product of two-mode squeezed vacua `Σ (e^{iφ} tanhΓ)^n |n, n⟩ / coshΓ`
    /// on disjoint mode pairs, keeping terms with at most `2 * cutoff` photons
    /// summed over pairs, then renormalized.
    pub fn from_squeezers(pairs: &[(Mode, Mode, f64)], gamma: f64, cutoff: usize) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::NegativeGain(gamma));
        }
        if gamma > ORACLE_MAX_GAIN {
            return Err(Error::OracleRegime(gamma));
        }
        let tail = truncation_tail(gamma, cutoff);
        if tail > TAIL_LIMIT {
            return Err(Error::Truncation {
                gamma,
                cutoff,
                tail,
                limit: TAIL_LIMIT,
            });
        }
        let mut used = [false; 4];
        for &(i, j, _) in pairs {
            if i == j || used[i.index()] || used[j.index()] {
                return Err(Error::InvalidModePair(i.index(), j.index()));
            }
            used[i.index()] = true;
            used[j.index()] = true;
        }
        let mut state = FockState::vacuum(cutoff)?;
        state.amp[0] = zero();
        let t = gamma.tanh();
        let coeff = |n: usize, phase: f64| Complex64::from_polar(t.powi(n as i32) / gamma.cosh(), phase * n as f64);
        // iterate over photon numbers of each pair
        let k = pairs.len();
        let max = 2 * cutoff;
        let mut counts = vec![0usize; k];
        loop {
            let mut idx = [0usize; 4];
            let mut a = Complex64::new(1.0, 0.0);
            for (p, &(i, j, phase)) in pairs.iter().enumerate() {
                idx[i.index()] = counts[p];
                idx[j.index()] = counts[p];
                a *= coeff(counts[p], phase);
            }
            let at = state.index(idx);
            state.amp[at] = a;
            // odometer
            let mut p = 0;
            while p < k {
                counts[p] += 1;
                if counts.iter().sum::<usize>() <= max {
                    break;
                }
                counts[p] = 0;
                p += 1;
            }
            if p == k {
                break;
            }
        }
        let norm2 = state.norm_sqr();
        state.truncated_mass = 1.0 - norm2;
        let scale = 1.0 / norm2.sqrt();
        state.amp.iter_mut().for_each(|z| *z *= scale);
        Ok(state)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Per-mode index range, `2 * cutoff + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Probability mass removed by truncation before renormalization.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    fn index(&self, n: [usize; 4]) -> usize {
        ((n[0] * self.dim + n[1]) * self.dim + n[2]) * self.dim + n[3]
    }

    fn unindex(&self, mut at: usize) -> [usize; 4] {
        let mut n = [0; 4];
        for m in (0..4).rev() {
            n[m] = at % self.dim;
            at /= self.dim;
        }
        n
    }

    fn stride(&self, mode: usize) -> usize {
        self.dim.pow(3 - mode as u32)
    }

    pub fn amplitude(&self, n: [usize; 4]) -> Complex64 {
        if n.iter().any(|&k| k >= self.dim) {
            return zero();
        }
        self.amp[self.index(n)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &FockState) -> Complex64 {
        assert_eq!(self.dim, other.dim, "overlap needs equal cutoffs");
        self.amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Indices of all nonzero amplitudes, with their photon numbers.
    pub fn support(&self) -> impl Iterator<Item = ([usize; 4], Complex64)> + '_ {
        self.amp
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(at, &z)| (self.unindex(at), z))
    }

    /// Applies the Jones matrix `u` to the selected band(s), with the same
    /// convention as the Gaussian engine: `⟨c⟩ -> u ⟨c⟩`.
    pub fn apply_polarization_unitary(&self, u: &CMat2, band: Band) -> Result<FockState> {
        let defect = crate::gaussian::unitarity_defect(u);
        if defect.is_nan() || defect >= UNITARITY_TOL {
            return Err(Error::NonUnitary(defect));
        }
        let mut out = self.clone();
        for &offset in band.offsets() {
            out = out.mix_band(u, offset);
        }
        Ok(out)
    }

    fn sector_matrices(&self, u: &CMat2) -> Vec<Vec<Vec<Complex64>>> {
        let max = self.dim - 1;
        let f = factorials(max);
        let binom = |n: usize, k: usize| f[n] / (f[k] * f[n - k]);
        let pw = |z: Complex64, k: usize| z.powu(k as u32);
        let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
        (0..=max)
            .map(|total| {
                let mut w = vec![vec![zero(); total + 1]; total + 1];
                for k in 0..=total {
                    // a†^k b†^(N-k) with a† -> u00 a† + u10 b†, b† -> u01 a† + u11 b†
                    for p in 0..=k {
                        for q in 0..=(total - k) {
                            let kp = p + q;
                            let term = pw(u00, p)
                                * pw(u10, k - p)
                                * pw(u01, q)
                                * pw(u11, total - k - q)
                                * (binom(k, p) * binom(total - k, q));
                            let norm = (f[kp] * f[total - kp] / (f[k] * f[total - k])).sqrt();
                            w[kp][k] += term * norm;
                        }
                    }
                }
                w
            })
            .collect()
    }

    fn mix_band(&self, u: &CMat2, offset: usize) -> FockState {
        let w = self.sector_matrices(u);
        let (ma, mb) = (offset, offset + 1);
        let others: Vec<usize> = (0..4).filter(|&m| m != ma && m != mb).collect();
        let (sa, sb) = (self.stride(ma), self.stride(mb));
        let (so1, so2) = (self.stride(others[0]), self.stride(others[1]));
        let mut out = self.clone();
        let mut buf = Vec::with_capacity(self.dim);
        for o1 in 0..self.dim {
            for o2 in 0..self.dim {
                let base = o1 * so1 + o2 * so2;
                for (total, wn) in w.iter().enumerate() {
                    buf.clear();
                    buf.extend((0..=total).map(|k| self.amp[base + k * sa + (total - k) * sb]));
                    if buf.iter().all(|z| *z == zero()) {
                        continue;
                    }
                    for (kp, row) in wn.iter().enumerate() {
                        let v: Complex64 = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
                        out.amp[base + kp * sa + (total - kp) * sb] = v;
                    }
                }
            }
        }
        out
    }

    /// `Σ m_ij c_i† c_j |ψ⟩` for a form whose coefficients couple modes of the
    /// same band only; such forms conserve each band's photon number.
    pub fn apply_quadratic(&self, m: &CMat4) -> Result<FockState> {
        let band = |i: usize| i / 2;
        let mut terms = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let mij = m[(i, j)];
                if mij == zero() {
                    continue;
                }
                if band(i) != band(j) {
                    return Err(Error::Unphysical(
                        "Fock oracle supports band-diagonal quadratic forms only".into(),
                    ));
                }
                terms.push((i, j, mij));
            }
        }
        let mut out = vec![zero(); self.amp.len()];
        for (at, &a) in self.amp.iter().enumerate() {
            if a == zero() {
                continue;
            }
            let n = self.unindex(at);
            for &(i, j, mij) in &terms {
                if i == j {
                    out[at] += mij * a * n[i] as f64;
                } else if n[j] > 0 {
                    let coef = (n[j] as f64 * (n[i] + 1) as f64).sqrt();
                    let target = at - self.stride(j) + self.stride(i);
                    out[target] += mij * a * coef;
                }
            }
        }
        Ok(FockState {
            amp: out,
            ..self.clone()
        })
    }

    /// `⟨S_k^order⟩` on the renormalized truncated state.
    pub fn stokes_moment(&self, k: usize, order: u32) -> Result<f64> {
        let form = crate::stokes::StokesForm::from_band_block(
            &stokes_block(k)?,
            crate::stokes::StokesLabel::Custom,
        );
        let mut v = self.clone();
        for _ in 0..order {
            v = v.apply_quadratic(form.matrix())?;
        }
        Ok(self.overlap(&v).re / self.norm_sqr())
    }

    /// `‖S_k |ψ⟩‖`, zero exactly when the state is an eigenstate with eigenvalue 0.
    pub fn annihilation_residual(&self, k: usize) -> Result<f64> {
        let form = crate::stokes::StokesForm::from_band_block(
            &stokes_block(k)?,
            crate::stokes::StokesLabel::Custom,
        );
        let v = self.apply_quadratic(form.matrix())?;
        Ok((v.norm_sqr() / self.norm_sqr()).sqrt())
    }

    fn lowered(&self, mode: usize) -> Vec<Complex64> {
        let stride = self.stride(mode);
        let mut out = vec![zero(); self.amp.len()];
        for (at, &a) in self.amp.iter().enumerate() {
            if a == zero() {
                continue;
            }
            let n = (at / stride) % self.dim;
            if n > 0 {
                out[at - stride] = a * (n as f64).sqrt();
            }
        }
        out
    }

    /// Central ladder moments, directly comparable to the Gaussian engine's.
    pub fn correlations(&self) -> ComplexCorrelations {
        let norm = self.norm_sqr();
        let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
            a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() / norm
        };
        let low: Vec<Vec<Complex64>> = (0..4).map(|m| self.lowered(m)).collect();
        let mut d = crate::gaussian::CVec4::zeros();
        for i in 0..4 {
            d[i] = dot(&self.amp, &low[i]);
        }
        let mut n = CMat4::zeros();
        let mut a = CMat4::zeros();
        for j in 0..4 {
            let lj = FockState {
                amp: low[j].clone(),
                ..self.clone()
            };
            for i in 0..4 {
                n[(i, j)] = dot(&low[i], &low[j]) - d[i].conj() * d[j];
                a[(i, j)] = dot(&self.amp, &lj.lowered(i)) - d[i] * d[j];
            }
        }
        ComplexCorrelations { n, a, d }
    }

    /// Distribution of the photon number in one band (`0` or `2` offset).
    pub fn band_total_distribution(&self, band: Band) -> Vec<f64> {
        let offset = match band {
            Band::First => 0,
            Band::Second => 2,
            Band::Both => panic!("band_total_distribution needs a single band"),
        };
        let mut dist = vec![0.0; 2 * self.dim - 1];
        for (at, z) in self.amp.iter().enumerate() {
            let n = self.unindex(at);
            dist[n[offset] + n[offset + 1]] += z.norm_sqr();
        }
        dist
    }

    pub fn sampler(&self) -> FockSampler {
        let (support, weights): (Vec<[u32; 4]>, Vec<f64>) = self
            .support()
            .map(|(n, z)| (n.map(|k| k as u32), z.norm_sqr()))
            .unzip();
        let index = WeightedAliasIndex::new(weights).expect("state has nonzero norm");
        FockSampler { support, index }
    }
}

pub fn build_fock_state(kind: BellKind, gamma: f64, cutoff: usize) -> Result<FockState> {
    FockState::from_squeezers(&kind.squeezers(), gamma, cutoff)
}

/// Exact photon-counting sampler: draws photon numbers from `|amp|²` and
/// thins each mode binomially.
pub struct FockSampler {
    support: Vec<[u32; 4]>,
    index: WeightedAliasIndex<f64>,
}

impl FockSampler {
    pub fn sample<R: Rng + ?Sized>(&self, eta: &[f64; 4], rng: &mut R) -> Result<PhotonTuple> {
        let n = self.support[self.index.sample(rng)];
        let mut out = [0u64; 4];
        for m in 0..4 {
            if !(0.0..=1.0).contains(&eta[m]) {
                return Err(Error::InvalidEfficiency { mode: m, value: eta[m] });
            }
            out[m] = if eta[m] == 1.0 || n[m] == 0 {
                if eta[m] == 0.0 {
                    0
                } else {
                    n[m] as u64
                }
            } else {
                Binomial::new(n[m] as u64, eta[m]).expect("valid binomial").sample(rng)
            };
        }
        Ok(PhotonTuple { n: out })
    }
}

pub fn sample_photon_tuple(state: &FockState, eta: [f64; 4], seed: u64) -> Result<PhotonTuple> {
    state.sampler().sample(&eta, &mut stream_rng(seed, FOCK_STREAM_TAG, 0))
}

/// `count` independent photon-counting events; deterministic for a given seed
/// regardless of the execution policy.
pub fn sample_photon_tuples(
    state: &FockState,
    eta: [f64; 4],
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<PhotonTuple>> {
    let sampler = state.sampler();
    let sizes = chunk_sizes(count, SAMPLE_CHUNK);
    let chunks = map_indexed(exec, sizes.len(), |c| {
        let mut rng = stream_rng(seed, FOCK_STREAM_TAG, c as u64);
        (0..sizes[c])
            .map(|_| sampler.sample(&eta, &mut rng))
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(count);
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}
