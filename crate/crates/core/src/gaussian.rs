//! Four-mode Gaussian states and the transformations needed to prepare and
//! measure polarization-entangled squeezed vacuum.
//!
//! Modes are ordered globally as `a1, b1, a2, b2`: horizontal and vertical
//! polarization at the first frequency, then at the second. The quadrature
//! vector is `(x0, p0, x1, p1, x2, p2, x3, p3)` with `x = (c + c†)/√2` and
//! `p = (c - c†)/(i√2)`, so the vacuum covariance is `I/2`.
//!
//! Transformations act in the Heisenberg picture: a Bogoliubov map
//! `c -> U c + V c† + α` sends the quadrature vector to `S r + m`, and the
//! moments to `S Σ Sᵀ` and `S mean + m`.

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Vec8 = SVector<f64, 8>;
pub type CMat2 = Matrix2<Complex64>;
pub type CMat4 = Matrix4<Complex64>;
pub type CVec4 = Vector4<Complex64>;

/// Allowed deviation of `u†u` from the identity for passive transforms.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Lowest admissible eigenvalue of `Σ + iΩ/2`, per unit covariance scale.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Relative asymmetry tolerated in a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// One of the four bosonic modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode(usize);

impl Mode {
    pub const A1: Mode = Mode(0);
    pub const B1: Mode = Mode(1);
    pub const A2: Mode = Mode(2);
    pub const B2: Mode = Mode(3);
    pub const ALL: [Mode; 4] = [Mode::A1, Mode::B1, Mode::A2, Mode::B2];

    pub fn new(index: usize) -> Result<Self> {
        if index < 4 {
            Ok(Mode(index))
        } else {
            Err(Error::InvalidMode(index))
        }
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Frequency band selector for polarization optics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    First,
    Second,
    Both,
}

impl Band {
    /// Offsets of the `(H, V)` mode pairs this selector touches.
    pub(crate) fn offsets(self) -> &'static [usize] {
        match self {
            Band::First => &[0],
            Band::Second => &[2],
            Band::Both => &[0, 2],
        }
    }
}

/// Ladder-operator moments of a Gaussian state.
///
/// `n[(i, j)] = ⟨δc_i† δc_j⟩` and `a[(i, j)] = ⟨δc_i δc_j⟩` are central moments;
/// `d[i] = ⟨c_i⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexCorrelations {
    pub n: CMat4,
    pub a: CMat4,
    pub d: CVec4,
}

impl ComplexCorrelations {
    /// `⟨c_i† c_j⟩` including the coherent part.
    pub fn full_n(&self) -> CMat4 {
        let mut out = self.n;
        for i in 0..4 {
            for j in 0..4 {
                out[(i, j)] += self.d[i].conj() * self.d[j];
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: Vec8,
    cov: Mat8,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn symplectic_form() -> Mat8 {
    let mut omega = Mat8::zeros();
    for m in 0..4 {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

/// Real quadrature image of the Bogoliubov map `c -> U c + V c†`.
pub fn bogoliubov_symplectic(u: &CMat4, v: &CMat4) -> Mat8 {
    let mut s = Mat8::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let plus = u[(i, j)] + v[(i, j)];
            let minus = u[(i, j)] - v[(i, j)];
            s[(2 * i, 2 * j)] = plus.re;
            s[(2 * i, 2 * j + 1)] = -minus.im;
            s[(2 * i + 1, 2 * j)] = plus.im;
            s[(2 * i + 1, 2 * j + 1)] = minus.re;
        }
    }
    s
}

/// Largest modulus among complex entries.
pub fn max_modulus<'a>(entries: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    entries.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|u†u - I|`.
pub fn unitarity_defect(u: &CMat2) -> f64 {
    max_modulus((u.adjoint() * u - CMat2::identity()).iter())
}

impl Default for GaussianState {
    fn default() -> Self {
        Self::vacuum()
    }
}

impl GaussianState {
    pub fn vacuum() -> Self {
        GaussianState {
            mean: Vec8::zeros(),
            cov: Mat8::identity() * 0.5,
        }
    }

    /// Builds a state from explicit moments, rejecting asymmetric or
    /// unphysical covariance matrices.
    pub fn from_moments(mean: Vec8, cov: Mat8) -> Result<Self> {
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("moments"));
        }
        let scale = cov.amax().max(1.0);
        let asym = (cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Unphysical(format!("asymmetry {asym:.3e}")));
        }
        let state = GaussianState {
            mean,
            cov: (cov + cov.transpose()) * 0.5,
        };
        let lowest = state.min_uncertainty_eigenvalue();
        if lowest < -PHYSICALITY_TOL * scale {
            return Err(Error::Unphysical(format!(
                "Σ + iΩ/2 has eigenvalue {lowest:.3e}"
            )));
        }
        Ok(state)
    }

    pub fn mean(&self) -> &Vec8 {
        &self.mean
    }

    pub fn cov(&self) -> &Mat8 {
        &self.cov
    }

    /// Smallest eigenvalue of the Hermitian matrix `Σ + iΩ/2`; non-negative
    /// for every physical state.
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        let omega = symplectic_form();
        let h = SMatrix::<Complex64, 8, 8>::from_fn(|i, j| c(self.cov[(i, j)], 0.5 * omega[(i, j)]));
        SymmetricEigen::new(h).eigenvalues.min()
    }

    /// `det(2Σ)`; equal to one for pure states.
    pub fn det_2cov(&self) -> f64 {
        (self.cov * 2.0).determinant()
    }

    pub fn purity(&self) -> f64 {
        1.0 / self.det_2cov().sqrt()
    }

    pub fn photon_mean(&self, mode: Mode) -> f64 {
        let m = mode.index();
        let (x, p) = (self.mean[2 * m], self.mean[2 * m + 1]);
        0.5 * (self.cov[(2 * m, 2 * m)] + self.cov[(2 * m + 1, 2 * m + 1)] + x * x + p * p) - 0.5
    }

    /// Applies the quadrature map `r -> S r`.
    pub fn transform(&self, s: &Mat8) -> Self {
        GaussianState {
            mean: s * self.mean,
            cov: s * self.cov * s.transpose(),
        }
    }

    /// General Bogoliubov transform `c -> U c + V c†`.
    pub fn bogoliubov(&self, u: &CMat4, v: &CMat4) -> Self {
        self.transform(&bogoliubov_symplectic(u, v))
    }

    /// Two-mode squeezer: `c_i -> c_i coshΓ + e^{iφ} c_j† sinhΓ` and the same
    /// with `i` and `j` exchanged.
    pub fn two_mode_squeeze(&self, i: Mode, j: Mode, gamma: f64, phase: f64) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidModePair(i.index(), j.index()));
        }
        if !gamma.is_finite() {
            return Err(Error::NonFinite("gamma"));
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        let (i, j) = (i.index(), j.index());
        let mut u = CMat4::identity();
        let mut v = CMat4::zeros();
        u[(i, i)] = c(gamma.cosh(), 0.0);
        u[(j, j)] = c(gamma.cosh(), 0.0);
        let off = Complex64::from_polar(gamma.sinh(), phase);
        v[(i, j)] = off;
        v[(j, i)] = off;
        Ok(self.bogoliubov(&u, &v))
    }

    /// Applies the 2×2 Jones matrix `u` to the `(H, V)` modes of the selected
    /// frequency band(s): `(a_j, b_j) -> u (a_j, b_j)`.
    pub fn passive_polarization(&self, u: &CMat2, band: Band) -> Result<Self> {
        let defect = unitarity_defect(u);
        if defect.is_nan() || defect >= UNITARITY_TOL {
            return Err(Error::NonUnitary(defect));
        }
        let mut full = CMat4::identity();
        for &o in band.offsets() {
            full.fixed_view_mut::<2, 2>(o, o).copy_from(u);
        }
        Ok(self.bogoliubov(&full, &CMat4::zeros()))
    }

    /// Independent beamsplitter loss on each mode with transmissions `eta`.
    pub fn loss(&self, eta: [f64; 4]) -> Result<Self> {
        for (mode, &e) in eta.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidEfficiency { mode, value: e });
            }
        }
        let t = Vec8::from_fn(|k, _| eta[k / 2].sqrt());
        let t_mat = Mat8::from_diagonal(&t);
        let mut cov = t_mat * self.cov * t_mat;
        for k in 0..8 {
            cov[(k, k)] += 0.5 * (1.0 - t[k] * t[k]);
        }
        Ok(GaussianState {
            mean: t_mat * self.mean,
            cov,
        })
    }

    /// Coherent displacement `c -> c + α`.
    pub fn displace(&self, alpha: &CVec4) -> Self {
        let mut mean = self.mean;
        for m in 0..4 {
            mean[2 * m] += std::f64::consts::SQRT_2 * alpha[m].re;
            mean[2 * m + 1] += std::f64::consts::SQRT_2 * alpha[m].im;
        }
        GaussianState {
            mean,
            cov: self.cov,
        }
    }

    pub fn correlations(&self) -> ComplexCorrelations {
        let s = &self.cov;
        let mut n = CMat4::zeros();
        let mut a = CMat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let xx = s[(2 * i, 2 * j)];
                let pp = s[(2 * i + 1, 2 * j + 1)];
                let xp = s[(2 * i, 2 * j + 1)];
                let px = s[(2 * i + 1, 2 * j)];
                let delta = if i == j { 0.5 } else { 0.0 };
                n[(i, j)] = c(0.5 * (xx + pp) - delta, 0.5 * (xp - px));
                a[(i, j)] = c(0.5 * (xx - pp), 0.5 * (xp + px));
            }
        }
        let d = CVec4::from_fn(|m, _| {
            c(self.mean[2 * m], self.mean[2 * m + 1]) / std::f64::consts::SQRT_2
        });
        ComplexCorrelations { n, a, d }
    }

    /// Inverse of [`GaussianState::correlations`]. The result is not checked
    /// for physicality.
    pub fn from_correlations(corr: &ComplexCorrelations) -> Self {
        let mut cov = Mat8::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let (n, a) = (corr.n[(i, j)], corr.a[(i, j)]);
                let delta = if i == j { 0.5 } else { 0.0 };
                cov[(2 * i, 2 * j)] = n.re + a.re + delta;
                cov[(2 * i + 1, 2 * j + 1)] = n.re - a.re + delta;
                cov[(2 * i, 2 * j + 1)] = a.im + n.im;
                cov[(2 * i + 1, 2 * j)] = a.im - n.im;
            }
        }
        let mean = Vec8::from_fn(|k, _| {
            let z = corr.d[k / 2] * std::f64::consts::SQRT_2;
            if k % 2 == 0 {
                z.re
            } else {
                z.im
            }
        });
        GaussianState { mean, cov }
    }

    /// `⟨Σ M_ij c_i† c_j⟩` for a Hermitian coefficient matrix `M`.
    pub fn quadratic_mean(&self, m: &CMat4) -> f64 {
        let full = self.correlations().full_n();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += m[(i, j)] * full[(i, j)];
            }
        }
        acc.re
    }

    /// Exact variance of `O = Σ M_ij c_i† c_j` by Wick factorization.
    ///
    /// With `c = d + δc`, `O - ⟨O⟩` splits into a part quadratic in `δc` and a
    /// linear part `L = Σ (w̄_j δc_j + w_j δc_j†)` with `w = M d`; odd moments
    /// vanish, so `Var O = Var Q + ⟨L²⟩`.
    pub fn quadratic_variance(&self, m: &CMat4) -> f64 {
        let ComplexCorrelations { n, a, d } = self.correlations();
        // For squeezed observables the terms are O(N^2) and cancel down to O(N),
        // so they are accumulated with error-free products and sums.
        // ⟨δc_j δc_k†⟩ = δ_jk + N_kj; the identity part is kept apart.
        let mut acc = Acc::default();
        for i in 0..4 {
            for j in 0..4 {
                let mij = m[(i, j)];
                if mij == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..4 {
                    for l in 0..4 {
                        let coef = mij * m[(k, l)];
                        if j == k {
                            acc.add_re2(coef, n[(i, l)]);
                        }
                        acc.add_re3(coef, n[(i, l)], n[(k, j)]);
                        acc.add_re3(coef, a[(i, k)].conj(), a[(j, l)]);
                    }
                }
            }
        }
        let w = m * d;
        for j in 0..4 {
            for k in 0..4 {
                acc.add_re3(w[j].conj(), w[k].conj(), a[(j, k)]);
                if j == k {
                    acc.add_re2(w[j].conj(), w[k]);
                }
                acc.add_re3(w[j].conj(), w[k], n[(k, j)]);
                acc.add_re3(w[j], w[k].conj(), n[(j, k)]);
                acc.add_re3(w[j], w[k], a[(j, k)].conj());
            }
        }
        acc.value()
    }
}

/// Double-length accumulator: products via FMA, sums via TwoSum.
#[derive(Default)]
struct Acc {
    hi: f64,
    lo: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        self.hi = s;
        self.lo += err;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.add(a.mul_add(b, -p));
    }

    fn add_prod3(&mut self, a: f64, b: f64, c: f64) {
        let p = b * c;
        let e = b.mul_add(c, -p);
        self.add_prod(a, p);
        self.add(a * e);
    }

    /// `Re(x y)`
    fn add_re2(&mut self, x: Complex64, y: Complex64) {
        self.add_prod(x.re, y.re);
        self.add_prod(-x.im, y.im);
    }

    /// `Re(x y z)`
    fn add_re3(&mut self, x: Complex64, y: Complex64, z: Complex64) {
        self.add_prod3(x.re, y.re, z.re);
        self.add_prod3(-x.re, y.im, z.im);
        self.add_prod3(-x.im, y.re, z.im);
        self.add_prod3(-x.im, y.im, z.re);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}
