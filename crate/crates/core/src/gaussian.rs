//! Multimode Gaussian states in transfer form.
//!
//! A state is stored as the linear map from the vacuum input modes `v_k` to
//! the current annihilation operators,
//!
//! ```text
//! a_i = Σ_k A[i][k] v_k + B[i][k] v_k† + d_i
//! ```
//!
//! so every linear-optical or parametric element is a matrix update on
//! `(A, B, d)`. Loss channels append one vacuum column per station; the number
//! of rows (physical modes) never changes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense complex matrix used throughout the engine.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

/// Number of detected optical modes: two frequencies times two polarizations.
pub const PHYSICAL_MODES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("a Gaussian state needs at least one mode")]
    NoModes,
    #[error("mode {mode} out of range for a {n_modes}-mode state")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    ShapeMismatch { expected: usize, rows: usize, cols: usize },
    #[error("(U, V) is not a valid Bogoliubov pair: |UU†-VV†-I| = {commutator:e}, |UVᵀ-(UVᵀ)ᵀ| = {symmetry:e}")]
    NotSymplectic { commutator: f64, symmetry: f64 },
    #[error("matrix is not unitary: |JJ†-I| = {residual:e}")]
    NotUnitary { residual: f64 },
    #[error("transmission {0} outside [0, 1]")]
    InvalidTransmission(f64),
    #[error("state invariant violated: |AA†-BB†-I| = {commutator:e}, |ABᵀ-(ABᵀ)ᵀ| = {symmetry:e}")]
    InvariantViolated { commutator: f64, symmetry: f64 },
    #[error("detection subset is empty")]
    EmptySubset,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Frequency {
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn other(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

/// One of the four physical modes. Row order is `sH, sV, iH, iV`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModeIndex {
    pub frequency: Frequency,
    pub polarization: Polarization,
}

impl ModeIndex {
    pub const SIGNAL_H: ModeIndex = ModeIndex::new(Frequency::Signal, Polarization::H);
    pub const SIGNAL_V: ModeIndex = ModeIndex::new(Frequency::Signal, Polarization::V);
    pub const IDLER_H: ModeIndex = ModeIndex::new(Frequency::Idler, Polarization::H);
    pub const IDLER_V: ModeIndex = ModeIndex::new(Frequency::Idler, Polarization::V);

    pub const ALL: [ModeIndex; PHYSICAL_MODES] = [Self::SIGNAL_H, Self::SIGNAL_V, Self::IDLER_H, Self::IDLER_V];

    pub const fn new(frequency: Frequency, polarization: Polarization) -> Self {
        ModeIndex {
            frequency,
            polarization,
        }
    }

    pub const fn index(self) -> usize {
        let f = match self.frequency {
            Frequency::Signal => 0,
            Frequency::Idler => 2,
        };
        let p = match self.polarization {
            Polarization::H => 0,
            Polarization::V => 1,
        };
        f + p
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl From<ModeIndex> for usize {
    fn from(m: ModeIndex) -> usize {
        m.index()
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fr = match self.frequency {
            Frequency::Signal => 's',
            Frequency::Idler => 'i',
        };
        let p = match self.polarization {
            Polarization::H => 'H',
            Polarization::V => 'V',
        };
        write!(f, "{fr}{p}")
    }
}

impl FromStr for ModeIndex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sH" => Ok(Self::SIGNAL_H),
            "sV" => Ok(Self::SIGNAL_V),
            "iH" => Ok(Self::IDLER_H),
            "iV" => Ok(Self::IDLER_V),
            other => Err(format!("unknown mode `{other}` (expected one of sH, sV, iH, iV)")),
        }
    }
}

impl TryFrom<String> for ModeIndex {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModeIndex> for String {
    fn from(m: ModeIndex) -> String {
        m.to_string()
    }
}

/// Tolerances used when checking element inputs and state invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSettings {
    /// Bound on `‖AA†−BB†−I‖∞` and `‖ABᵀ−(ABᵀ)ᵀ‖∞` after every element.
    pub invariant_tol: f64,
    /// Bound on the unitarity / symplecticity residual of element matrices.
    pub input_tol: f64,
    pub check_invariants: bool,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            invariant_tol: 1e-10,
            input_tol: 1e-12,
            check_invariants: true,
        }
    }
}

/// Residual norms of the two canonical-commutation invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantResiduals {
    /// `‖AA† − BB† − I‖∞`
    pub commutator: f64,
    /// `‖ABᵀ − (ABᵀ)ᵀ‖∞`
    pub symmetry: f64,
}

/// Mean and variance of a summed photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonStatistics {
    pub mean: f64,
    pub variance: f64,
}

/// Normally ordered fluctuation moments of the physical modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    /// `n[(i, j)] = ⟨δa_i† δa_j⟩`, Hermitian.
    pub n: CMatrix,
    /// `m[(i, j)] = ⟨δa_i δa_j⟩`, symmetric.
    pub m: CMatrix,
}

impl SecondMoments {
    /// Real quadrature covariance in `(x_1..x_n, p_1..p_n)` order with
    /// `x = a + a†`, so the vacuum has unit variance.
    pub fn quadrature_covariance(&self) -> DMatrix<f64> {
        let n = self.n.nrows();
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::i();
        // C = <δR δRᵀ> for R = (a, a†)
        let mut c = CMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for s in 0..n {
                c[(r, s)] = self.m[(r, s)];
                c[(r, n + s)] = self.n[(s, r)] + if r == s { one } else { Complex64::default() };
                c[(n + r, s)] = self.n[(r, s)];
                c[(n + r, n + s)] = self.m[(r, s)].conj();
            }
        }
        let mut t = CMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            t[(r, r)] = one;
            t[(r, n + r)] = one;
            t[(n + r, r)] = -i;
            t[(n + r, n + r)] = i;
        }
        let q = &t * c * t.transpose();
        DMatrix::from_fn(2 * n, 2 * n, |r, s| 0.5 * (q[(r, s)].re + q[(s, r)].re))
    }

    /// Symplectic eigenvalues (each listed once, ascending).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let sigma = self.quadrature_covariance();
        let n = self.n.nrows();
        let mut omega = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for k in 0..n {
            omega[(k, n + k)] = 1.0;
            omega[(n + k, k)] = -1.0;
        }
        let mut nu: Vec<f64> = (omega * sigma)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.im.abs())
            .collect();
        nu.sort_by(|a, b| a.total_cmp(b));
        // eigenvalues come in ±iν pairs
        nu.into_iter().step_by(2).collect()
    }

    /// Uncertainty-principle check: all symplectic eigenvalues ≥ 1 − tol.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.symplectic_eigenvalues().iter().all(|&v| v >= 1.0 - tol)
    }
}

/// `‖UU† − VV† − I‖∞` and `‖UVᵀ − (UVᵀ)ᵀ‖∞` for any transfer pair.
pub fn bogoliubov_residuals(u: &CMatrix, v: &CMatrix) -> InvariantResiduals {
    let (n, k) = u.shape();
    let (us, vs) = (u.as_slice(), v.as_slice());
    // UU† − VV† − I is Hermitian and UVᵀ − VUᵀ antisymmetric: visit each
    // pair once and credit both rows
    let mut row_c = vec![0.0f64; n];
    let mut row_s = vec![0.0f64; n];
    for i in 0..n {
        for j in i..n {
            let mut c = Complex64::new(if i == j { -1.0 } else { 0.0 }, 0.0);
            let mut s = Complex64::default();
            for col in 0..k {
                let (ui, uj) = (us[col * n + i], us[col * n + j]);
                let (vi, vj) = (vs[col * n + i], vs[col * n + j]);
                c += ui * uj.conj() - vi * vj.conj();
                s += ui * vj - uj * vi;
            }
            let (c, s) = (c.norm_sqr().sqrt(), s.norm_sqr().sqrt());
            row_c[i] += c;
            row_s[i] += s;
            if j != i {
                row_c[j] += c;
                row_s[j] += s;
            }
        }
    }
    // NaN must survive the max
    let worst = |rows: &[f64]| {
        rows.iter().fold(
            0.0f64,
            |m, &r| if m.is_nan() || r.is_nan() { f64::NAN } else { m.max(r) },
        )
    };
    InvariantResiduals {
        commutator: worst(&row_c),
        symmetry: worst(&row_s),
    }
}

/// `‖JJ† − I‖∞`
pub fn unitarity_residual(j: &CMatrix) -> f64 {
    bogoliubov_residuals(j, &CMatrix::zeros(j.nrows(), j.ncols())).commutator
}

/// `x·y + z·conj(w)` for small dense operands; `z`, `w` optional.
fn mul_add(x: &CMatrix, y: &CMatrix, zw: Option<(&CMatrix, &CMatrix)>) -> CMatrix {
    let (n, m) = (x.nrows(), y.ncols());
    let mut out = CMatrix::zeros(n, m);
    let o = out.as_mut_slice();
    let mut acc = |l: &CMatrix, r: &CMatrix, conj: bool| {
        let (ls, rs, k) = (l.as_slice(), r.as_slice(), l.ncols());
        for c in 0..m {
            for p in 0..k {
                let rv = if conj { rs[c * k + p].conj() } else { rs[c * k + p] };
                if rv == Complex64::default() {
                    continue;
                }
                for i in 0..n {
                    o[c * n + i] += ls[p * n + i] * rv;
                }
            }
        }
    };
    acc(x, y, false);
    if let Some((z, w)) = zw {
        acc(z, w, true);
    }
    out
}

/// Gaussian state as a Bogoliubov transfer from vacuum. Immutable: every
/// operation returns a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    a: CMatrix,
    b: CMatrix,
    d: CVector,
    settings: ValidationSettings,
}

impl GaussianState {
    /// Vacuum on `n_modes` modes: `A = I`, `B = 0`, `d = 0`.
    pub fn vacuum(n_modes: usize) -> Result<Self, EngineError> {
        if n_modes == 0 {
            return Err(EngineError::NoModes);
        }
        Ok(GaussianState {
            a: CMatrix::identity(n_modes, n_modes),
            b: CMatrix::zeros(n_modes, n_modes),
            d: CVector::zeros(n_modes),
            settings: ValidationSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: ValidationSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn settings(&self) -> ValidationSettings {
        self.settings
    }

    pub fn n_modes(&self) -> usize {
        self.a.nrows()
    }

    /// Number of vacuum inputs, physical plus loss ancillas.
    pub fn n_inputs(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn displacement(&self) -> &CVector {
        &self.d
    }

    fn check_mode(&self, mode: usize) -> Result<(), EngineError> {
        if mode >= self.n_modes() {
            return Err(EngineError::ModeOutOfRange {
                mode,
                n_modes: self.n_modes(),
            });
        }
        Ok(())
    }

    fn check_square(&self, m: &CMatrix) -> Result<(), EngineError> {
        let n = self.n_modes();
        if m.nrows() != n || m.ncols() != n {
            return Err(EngineError::ShapeMismatch {
                expected: n,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<Self, EngineError> {
        if self.settings.check_invariants {
            let r = self.invariant_residuals();
            let tol = self.settings.invariant_tol;
            // NaN must fail too
            if !(r.commutator <= tol && r.symmetry <= tol) {
                return Err(EngineError::InvariantViolated {
                    commutator: r.commutator,
                    symmetry: r.symmetry,
                });
            }
        }
        Ok(self)
    }

    fn d_matrix(&self) -> CMatrix {
        CMatrix::from_column_slice(self.d.len(), 1, self.d.as_slice())
    }

    pub fn invariant_residuals(&self) -> InvariantResiduals {
        bogoliubov_residuals(&self.a, &self.b)
    }

    /// Adds a coherent amplitude to one mode.
    pub fn displace(&self, mode: impl Into<usize>, amplitude: Complex64) -> Result<Self, EngineError> {
        let mode = mode.into();
        self.check_mode(mode)?;
        if !amplitude.is_finite() {
            return Err(EngineError::NonFinite("displacement amplitude"));
        }
        let mut next = self.clone();
        next.d[mode] += amplitude;
        Ok(next)
    }

    /// `a → U a + V a†` on the physical rows.
    pub fn apply_bogoliubov(&self, u: &CMatrix, v: &CMatrix) -> Result<Self, EngineError> {
        self.check_square(u)?;
        self.check_square(v)?;
        let r = bogoliubov_residuals(u, v);
        let tol = self.settings.input_tol;
        if !(r.commutator <= tol && r.symmetry <= tol) {
            return Err(EngineError::NotSymplectic {
                commutator: r.commutator,
                symmetry: r.symmetry,
            });
        }
        let a = mul_add(u, &self.a, Some((v, &self.b)));
        let b = mul_add(u, &self.b, Some((v, &self.a)));
        let d = mul_add(u, &self.d_matrix(), Some((v, &self.d_matrix())));
        let d = CVector::from_column_slice(d.as_slice());
        GaussianState {
            a,
            b,
            d,
            settings: self.settings,
        }
        .finish()
    }

    /// `a → J a` for a unitary (number-conserving) element.
    pub fn apply_passive(&self, j: &CMatrix) -> Result<Self, EngineError> {
        self.check_square(j)?;
        let residual = unitarity_residual(j);
        if !(residual <= self.settings.input_tol) {
            return Err(EngineError::NotUnitary { residual });
        }
        GaussianState {
            a: mul_add(j, &self.a, None),
            b: mul_add(j, &self.b, None),
            d: CVector::from_column_slice(mul_add(j, &self.d_matrix(), None).as_slice()),
            settings: self.settings,
        }
        .finish()
    }

    /// Beam splitter of amplitude transmission `t` against a fresh vacuum
    /// ancilla, which is appended as a new input column.
    pub fn apply_loss(&self, mode: impl Into<usize>, transmission: f64) -> Result<Self, EngineError> {
        let mode = mode.into();
        self.check_mode(mode)?;
        if !(0.0..=1.0).contains(&transmission) {
            return Err(EngineError::InvalidTransmission(transmission));
        }
        let reflection = (1.0 - transmission * transmission).sqrt();
        let cols = self.n_inputs();
        let mut a = self.a.clone().insert_column(cols, Complex64::default());
        let mut b = self.b.clone().insert_column(cols, Complex64::default());
        let mut d = self.d.clone();
        a.row_mut(mode).scale_mut(transmission);
        b.row_mut(mode).scale_mut(transmission);
        d[mode] *= transmission;
        a[(mode, cols)] = Complex64::new(reflection, 0.0);
        GaussianState {
            a,
            b,
            d,
            settings: self.settings,
        }
        .finish()
    }

    /// `apply_loss` on every mode at once, `transmissions[m]` for mode `m`;
    /// one ancilla column is appended per mode, in mode order.
    pub fn apply_losses(&self, transmissions: &[f64]) -> Result<Self, EngineError> {
        let n = self.n_modes();
        if transmissions.len() != n {
            return Err(EngineError::ShapeMismatch {
                expected: n,
                rows: transmissions.len(),
                cols: 1,
            });
        }
        if let Some(&t) = transmissions.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(EngineError::InvalidTransmission(t));
        }
        let cols = self.n_inputs();
        let mut a = CMatrix::zeros(n, cols + n);
        let mut b = CMatrix::zeros(n, cols + n);
        let mut d = self.d.clone();
        for (m, &t) in transmissions.iter().enumerate() {
            for c in 0..cols {
                a[(m, c)] = self.a[(m, c)] * t;
                b[(m, c)] = self.b[(m, c)] * t;
            }
            d[m] *= t;
            a[(m, cols + m)] = Complex64::new((1.0 - t * t).sqrt(), 0.0);
        }
        GaussianState {
            a,
            b,
            d,
            settings: self.settings,
        }
        .finish()
    }

    pub fn second_moments(&self) -> SecondMoments {
        let n = self.b.map(|z| z.conj()) * self.b.transpose();
        let m = &self.a * self.b.transpose();
        SecondMoments { n, m }
    }

    /// `⟨a_i† a_i⟩` including the coherent part.
    pub fn mean_photons(&self, mode: impl Into<usize>) -> Result<f64, EngineError> {
        let mode = mode.into();
        self.check_mode(mode)?;
        Ok(self.b.row(mode).norm_squared() + self.d[mode].norm_sqr())
    }

    /// Total `Σ_i ⟨a_i† a_i⟩` over every mode.
    pub fn total_photons(&self) -> f64 {
        self.b.norm_squared() + self.d.norm_squared()
    }

    /// Mean and variance of `N = Σ_{i∈S} a_i† a_i` by Wick contraction.
    pub fn photon_statistics(&self, subset: &[usize]) -> Result<PhotonStatistics, EngineError> {
        let modes: BTreeSet<usize> = subset.iter().copied().collect();
        if modes.is_empty() {
            return Err(EngineError::EmptySubset);
        }
        for &m in &modes {
            self.check_mode(m)?;
        }
        let idx: Vec<usize> = modes.into_iter().collect();
        let k = self.n_inputs();
        let nm = |i: usize, j: usize| -> Complex64 { (0..k).map(|c| self.b[(i, c)].conj() * self.b[(j, c)]).sum() };
        let mm = |i: usize, j: usize| -> Complex64 { (0..k).map(|c| self.a[(i, c)] * self.b[(j, c)]).sum() };

        let mut mean = 0.0;
        for &i in &idx {
            mean += nm(i, i).re + self.d[i].norm_sqr();
        }
        let mut variance = mean;
        for &i in &idx {
            for &j in &idx {
                let nij = nm(i, j);
                let mij = mm(i, j);
                let (di, dj) = (self.d[i], self.d[j]);
                variance += nij.norm_sqr()
                    + mij.norm_sqr()
                    + 2.0 * (di * dj.conj() * nij).re
                    + 2.0 * (di.conj() * dj.conj() * mij).re;
            }
        }
        if variance < 0.0 {
            log::warn!("photon-number variance {variance:e} clamped to zero");
            variance = 0.0;
        }
        Ok(PhotonStatistics { mean, variance })
    }
}
