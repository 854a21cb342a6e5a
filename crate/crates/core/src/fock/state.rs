//! Pure states on a truncated Fock space and the gates of the optical chain.
//!
//! Amplitudes are stored densely, mode 0 most significant:
//! `idx = Σ_k n_k · cutoff^(M−1−k)`. Every gate is the exponential of its
//! truncated generator, which stays (anti-)Hermitian after truncation, so
//! gates are exactly unitary and population that would leave the space is
//! reflected instead. [`FockState::leakage`] measures how much population
//! sits near the edge.

use nalgebra::Matrix2;
use num_complex::Complex64;
use thiserror::Error;

use super::expm::expm;
use crate::gaussian::{unitarity_residual, CMatrix, PhotonStatistics};

/// Default cap on the number of stored amplitudes, 2²⁵ (512 MiB). A state
/// with `M` modes at cutoff `C` needs `C^M` amplitudes; each loss station
/// adds one mode.
pub const DEFAULT_AMPLITUDE_BUDGET: usize = 1 << 25;

/// Converged states keep less than this probability within two levels of
/// any cutoff edge.
pub const LEAKAGE_TOL: f64 = 1e-8;

/// Allowed drift of the norm over a single gate.
pub const NORM_TOL: f64 = 1e-9;

/// Largest squeezing gain accepted by the oracle.
pub const MAX_SQUEEZE_GAIN: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("cutoff must be at least 3 levels, got {0}")]
    CutoffTooSmall(usize),
    #[error(
        "{modes} modes at cutoff {cutoff} need {required} amplitudes but the budget is {budget}; \
         reduce the cutoff or the number of loss stations"
    )]
    DimensionBudget {
        modes: usize,
        cutoff: usize,
        required: u128,
        budget: usize,
    },
    #[error("mode {mode} out of range for a state with {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("two-mode gate needs distinct modes, got ({0}, {0})")]
    SameMode(usize),
    #[error("squeezing gain {0} outside the oracle range [0, 0.6]")]
    GainOutOfRange(f64),
    #[error("transmission {0} outside [0, 1]")]
    InvalidTransmission(f64),
    #[error("matrix is not unitary: residual {residual:e}")]
    NotUnitary { residual: f64 },
    #[error("passive matrix is {size}×{size} but the state has {n_modes} modes")]
    ShapeMismatch { size: usize, n_modes: usize },
    #[error("norm drifted to {norm} over one gate")]
    NormDrift { norm: f64 },
    #[error("photon-number subset is empty")]
    EmptySubset,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Blocks of a two-mode gate: each entry holds pair-local indices
/// `n_i·C + n_j` and the matrix acting on them.
struct PairOp {
    blocks: Vec<(Vec<usize>, CMatrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    cutoff: usize,
    physical_modes: usize,
    n_modes: usize,
    amps: Vec<Complex64>,
    budget: usize,
    max_leakage: f64,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn required(cutoff: usize, modes: usize) -> u128 {
    (cutoff as u128).saturating_pow(modes as u32)
}

/// `H` with `exp(iH) = u` for a 2×2 unitary, via `u = e^{iφ}(cos θ − i sin θ n·σ)`.
pub fn hermitian_log(u: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let mut phi = det.arg() / 2.0;
    // W = [[a, −b*], [b, a*]] with a = cos θ − i sin θ n_z, b = sin θ (n_y − i n_x)
    let w = u * Complex64::from_polar(1.0, -phi);
    let mut a = (w[(0, 0)] + w[(1, 1)].conj()) * 0.5;
    let mut b = (w[(1, 0)] - w[(0, 1)].conj()) * 0.5;
    // keep θ ≤ π/2 so the division by sin θ stays well conditioned
    if a.re < 0.0 {
        a = -a;
        b = -b;
        phi += std::f64::consts::PI;
    }
    let sin_t = (a.im * a.im + b.norm_sqr()).sqrt();
    let id = Matrix2::identity();
    if sin_t == 0.0 {
        return id * c(phi);
    }
    let theta = sin_t.atan2(a.re);
    let nz = -a.im / sin_t;
    // n_x + i n_y = i b / sin θ
    let nxy = b * Complex64::new(0.0, 1.0 / sin_t);
    let n_sigma = Matrix2::new(c(nz), nxy.conj(), nxy, c(-nz));
    id * c(phi) - n_sigma * c(theta)
}

impl FockState {
    pub fn vacuum(n_modes: usize, cutoff: usize) -> Result<Self, FockError> {
        Self::vacuum_with_budget(n_modes, cutoff, DEFAULT_AMPLITUDE_BUDGET)
    }

    pub fn vacuum_with_budget(n_modes: usize, cutoff: usize, budget: usize) -> Result<Self, FockError> {
        if cutoff < 3 {
            return Err(FockError::CutoffTooSmall(cutoff));
        }
        let need = required(cutoff, n_modes);
        if need > budget as u128 {
            return Err(FockError::DimensionBudget {
                modes: n_modes,
                cutoff,
                required: need,
                budget,
            });
        }
        let mut amps = vec![Complex64::default(); need as usize];
        amps[0] = c(1.0);
        Ok(FockState {
            cutoff,
            physical_modes: n_modes,
            n_modes,
            amps,
            budget,
            max_leakage: 0.0,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Modes including loss ancillas.
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn physical_modes(&self) -> usize {
        self.physical_modes
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn stride(&self, mode: usize) -> usize {
        self.cutoff.pow((self.n_modes - 1 - mode) as u32)
    }

    fn index_of(&self, occupations: &[usize]) -> Option<usize> {
        if occupations.len() != self.n_modes || occupations.iter().any(|&n| n >= self.cutoff) {
            return None;
        }
        Some(occupations.iter().fold(0, |acc, &n| acc * self.cutoff + n))
    }

    /// Amplitude of `|n₀ n₁ …⟩`; zero outside the truncated space.
    pub fn amplitude(&self, occupations: &[usize]) -> Complex64 {
        self.index_of(occupations)
            .map_or(Complex64::default(), |i| self.amps[i])
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Probability of finding any mode within two levels of the cutoff.
    pub fn leakage(&self) -> f64 {
        let edge = self.cutoff.saturating_sub(2);
        let mut digits = vec![0usize; self.n_modes];
        let mut total = 0.0;
        for z in &self.amps {
            if digits.iter().any(|&n| n >= edge) {
                total += z.norm_sqr();
            }
            self.advance(&mut digits);
        }
        total
    }

    /// Largest leakage seen after any gate so far.
    pub fn max_leakage(&self) -> f64 {
        self.max_leakage
    }

    fn advance(&self, digits: &mut [usize]) {
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < self.cutoff {
                return;
            }
            *d = 0;
        }
    }

    fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode >= self.n_modes {
            return Err(FockError::ModeOutOfRange {
                mode,
                n_modes: self.n_modes,
            });
        }
        Ok(())
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<(), FockError> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        if i == j {
            return Err(FockError::SameMode(i));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), FockError> {
        let norm = self.norm();
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(FockError::NormDrift { norm });
        }
        self.max_leakage = self.max_leakage.max(self.leakage());
        Ok(())
    }

    /// Offsets of every basis state with zero occupation in `excluded`.
    fn bases(&self, excluded: &[usize]) -> Vec<usize> {
        let others: Vec<usize> = (0..self.n_modes).filter(|m| !excluded.contains(m)).collect();
        let strides: Vec<usize> = others.iter().map(|&m| self.stride(m)).collect();
        let count = self.cutoff.pow(others.len() as u32);
        let mut out = Vec::with_capacity(count);
        let mut digits = vec![0usize; others.len()];
        for _ in 0..count {
            out.push(digits.iter().zip(&strides).map(|(d, s)| d * s).sum());
            self.advance(&mut digits);
        }
        out
    }

    fn apply_single(&mut self, mode: usize, m: &CMatrix) {
        let cut = self.cutoff;
        let s = self.stride(mode);
        let mut buf = vec![Complex64::default(); cut];
        let mut out = vec![Complex64::default(); cut];
        for base in self.bases(&[mode]) {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = self.amps[base + n * s];
            }
            matvec(m, &buf, &mut out);
            for (n, o) in out.iter().enumerate() {
                self.amps[base + n * s] = *o;
            }
        }
    }

    fn apply_pair(&mut self, i: usize, j: usize, op: &PairOp) {
        let cut = self.cutoff;
        let (si, sj) = (self.stride(i), self.stride(j));
        let mut buf = vec![Complex64::default(); cut * cut];
        let mut inb = vec![Complex64::default(); cut * cut];
        let mut out = vec![Complex64::default(); cut * cut];
        for base in self.bases(&[i, j]) {
            let mut any = false;
            for ni in 0..cut {
                for nj in 0..cut {
                    let z = self.amps[base + ni * si + nj * sj];
                    any |= z != Complex64::default();
                    buf[ni * cut + nj] = z;
                }
            }
            if !any {
                continue;
            }
            for (idx, m) in &op.blocks {
                let l = idx.len();
                for (k, &p) in idx.iter().enumerate() {
                    inb[k] = buf[p];
                }
                matvec(m, &inb[..l], &mut out[..l]);
                for (k, &p) in idx.iter().enumerate() {
                    buf[p] = out[k];
                }
            }
            for ni in 0..cut {
                for nj in 0..cut {
                    self.amps[base + ni * si + nj * sj] = buf[ni * cut + nj];
                }
            }
        }
    }

    /// `D(α) = exp(α a† − α* a)` on one mode.
    pub fn displace(&mut self, mode: usize, alpha: Complex64) -> Result<(), FockError> {
        self.check_mode(mode)?;
        if !alpha.is_finite() {
            return Err(FockError::NonFinite("displacement amplitude"));
        }
        let cut = self.cutoff;
        let mut g = CMatrix::zeros(cut, cut);
        for n in 0..cut - 1 {
            let s = ((n + 1) as f64).sqrt();
            g[(n + 1, n)] = alpha * s;
            g[(n, n + 1)] = -alpha.conj() * s;
        }
        self.apply_single(mode, &expm(&g));
        self.finish()
    }

    /// `exp(sign·g·(a_i† a_j† − a_i a_j))`, which conserves `n_i − n_j`.
    pub fn two_mode_squeeze(&mut self, i: usize, j: usize, g: f64, sign: f64) -> Result<(), FockError> {
        self.check_pair(i, j)?;
        if !(0.0..=MAX_SQUEEZE_GAIN).contains(&g) {
            return Err(FockError::GainOutOfRange(g));
        }
        let cut = self.cutoff as isize;
        let mut blocks = Vec::with_capacity(2 * self.cutoff - 1);
        for k in -(cut - 1)..cut {
            let nj0 = (-k).max(0);
            let nj1 = (cut - 1).min(cut - 1 - k);
            let basis: Vec<(usize, usize)> = (nj0..=nj1).map(|nj| ((nj + k) as usize, nj as usize)).collect();
            let l = basis.len();
            let mut gen = CMatrix::zeros(l, l);
            for m in 0..l.saturating_sub(1) {
                let (ni, nj) = basis[m];
                let w = sign * g * (((ni + 1) * (nj + 1)) as f64).sqrt();
                gen[(m + 1, m)] = c(w);
                gen[(m, m + 1)] = c(-w);
            }
            let idx = basis.iter().map(|&(ni, nj)| ni * self.cutoff + nj).collect();
            blocks.push((idx, expm(&gen)));
        }
        self.apply_pair(i, j, &PairOp { blocks });
        self.finish()
    }

    /// Passive two-mode gate with `a_i → u₀₀ a_i + u₀₁ a_j`,
    /// `a_j → u₁₀ a_i + u₁₁ a_j`, as `exp(i Σ H_kl a_k† a_l)` with `u = exp(iH)`.
    pub fn apply_pair_unitary(&mut self, i: usize, j: usize, u: &Matrix2<Complex64>) -> Result<(), FockError> {
        self.check_pair(i, j)?;
        let residual = (u * u.adjoint() - Matrix2::identity()).camax();
        if !(residual <= 1e-10) {
            return Err(FockError::NotUnitary { residual });
        }
        let h = hermitian_log(u);
        let iu = Complex64::new(0.0, 1.0);
        let cut = self.cutoff;
        let mut blocks = Vec::with_capacity(2 * cut - 1);
        for s in 0..=2 * (cut - 1) {
            let n0 = s.saturating_sub(cut - 1);
            let n1 = s.min(cut - 1);
            let basis: Vec<usize> = (n0..=n1).collect();
            let l = basis.len();
            let mut gen = CMatrix::zeros(l, l);
            for (m, &n) in basis.iter().enumerate() {
                let rest = s - n;
                gen[(m, m)] = iu * (h[(0, 0)] * c(n as f64) + h[(1, 1)] * c(rest as f64));
                if m + 1 < l {
                    // a_i† a_j: |n, s−n⟩ → √((n+1)(s−n)) |n+1, s−n−1⟩
                    gen[(m + 1, m)] = iu * h[(0, 1)] * c((((n + 1) * rest) as f64).sqrt());
                }
                if m > 0 {
                    // a_j† a_i: |n, s−n⟩ → √(n(s−n+1)) |n−1, s−n+1⟩
                    gen[(m - 1, m)] = iu * h[(1, 0)] * c(((n * (rest + 1)) as f64).sqrt());
                }
            }
            let idx = basis.iter().map(|&n| n * cut + (s - n)).collect();
            blocks.push((idx, expm(&gen)));
        }
        self.apply_pair(i, j, &PairOp { blocks });
        self.finish()
    }

    /// `a_k → e^{iθ_k} a_k` on the first `phases.len()` modes.
    pub fn apply_phases(&mut self, phases: &[f64]) -> Result<(), FockError> {
        if phases.len() > self.n_modes {
            return Err(FockError::ShapeMismatch {
                size: phases.len(),
                n_modes: self.n_modes,
            });
        }
        let cut = self.cutoff;
        let tables: Vec<Vec<Complex64>> = phases
            .iter()
            .map(|&t| (0..cut).map(|n| Complex64::from_polar(1.0, t * n as f64)).collect())
            .collect();
        let mut digits = vec![0usize; self.n_modes];
        let mut amps = std::mem::take(&mut self.amps);
        for z in amps.iter_mut() {
            let mut f = c(1.0);
            for (t, &d) in tables.iter().zip(&digits) {
                f *= t[d];
            }
            *z *= f;
            self.advance(&mut digits);
        }
        self.amps = amps;
        self.finish()
    }

    /// `a → J a` on the first `J.nrows()` modes, decomposed into two-mode
    /// rotations and phases: `Q_K ⋯ Q_1 J = D`, applied as `D`, then
    /// `Q_K†`, …, `Q_1†`.
    pub fn apply_passive(&mut self, j: &CMatrix) -> Result<(), FockError> {
        let n = j.nrows();
        if n != j.ncols() || n > self.n_modes {
            return Err(FockError::ShapeMismatch {
                size: n,
                n_modes: self.n_modes,
            });
        }
        let residual = unitarity_residual(j);
        if !(residual <= 1e-10) {
            return Err(FockError::NotUnitary { residual });
        }
        let mut w = j.clone();
        let mut rotations = Vec::new();
        for col in 0..n {
            for q in (col + 1..n).rev() {
                let (x, y) = (w[(col, col)], w[(q, col)]);
                if y.norm() == 0.0 {
                    continue;
                }
                let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
                let g = Matrix2::new(x.conj() / r, y.conj() / r, -y / r, x / r);
                for k in 0..n {
                    let (a, b) = (w[(col, k)], w[(q, k)]);
                    w[(col, k)] = g[(0, 0)] * a + g[(0, 1)] * b;
                    w[(q, k)] = g[(1, 0)] * a + g[(1, 1)] * b;
                }
                rotations.push((col, q, g));
            }
        }
        let phases: Vec<f64> = (0..n).map(|k| w[(k, k)].arg()).collect();
        if phases.iter().any(|&p| p != 0.0) {
            self.apply_phases(&phases)?;
        }
        for (p, q, g) in rotations.into_iter().rev() {
            self.apply_pair_unitary(p, q, &g.adjoint())?;
        }
        Ok(())
    }

    /// Beam splitter of amplitude transmission `t` against a fresh vacuum
    /// ancilla appended as the last mode: `a → t a + √(1−t²) e`.
    pub fn apply_loss(&mut self, mode: usize, t: f64) -> Result<(), FockError> {
        self.check_mode(mode)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(FockError::InvalidTransmission(t));
        }
        let need = required(self.cutoff, self.n_modes + 1);
        if need > self.budget as u128 {
            return Err(FockError::DimensionBudget {
                modes: self.n_modes + 1,
                cutoff: self.cutoff,
                required: need,
                budget: self.budget,
            });
        }
        let mut amps = vec![Complex64::default(); need as usize];
        for (k, z) in self.amps.iter().enumerate() {
            amps[k * self.cutoff] = *z;
        }
        self.amps = amps;
        self.n_modes += 1;
        let r = (1.0 - t * t).sqrt();
        let ancilla = self.n_modes - 1;
        self.apply_pair_unitary(mode, ancilla, &Matrix2::new(c(t), c(r), c(-r), c(t)))
    }

    /// Exact mean and variance of `Σ_{k∈S} n_k`, summed over every other
    /// mode including ancillas.
    pub fn photon_statistics(&self, subset: &[usize]) -> Result<PhotonStatistics, FockError> {
        if subset.is_empty() {
            return Err(FockError::EmptySubset);
        }
        let mut modes = subset.to_vec();
        modes.sort_unstable();
        modes.dedup();
        for &m in &modes {
            self.check_mode(m)?;
        }
        let mut digits = vec![0usize; self.n_modes];
        let (mut m1, mut m2) = (0.0, 0.0);
        for z in &self.amps {
            let p = z.norm_sqr();
            if p != 0.0 {
                let n: usize = modes.iter().map(|&k| digits[k]).sum();
                m1 += p * n as f64;
                m2 += p * (n * n) as f64;
            }
            self.advance(&mut digits);
        }
        Ok(PhotonStatistics {
            mean: m1,
            variance: (m2 - m1 * m1).max(0.0),
        })
    }

    /// `a_mode` applied to `v` (a vector in this state's space).
    fn lower(&self, mode: usize, v: &[Complex64]) -> Vec<Complex64> {
        let s = self.stride(mode);
        let mut out = vec![Complex64::default(); v.len()];
        for base in self.bases(&[mode]) {
            for n in 0..self.cutoff - 1 {
                out[base + n * s] = v[base + (n + 1) * s] * ((n + 1) as f64).sqrt();
            }
        }
        out
    }

    fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
    }

    /// `⟨a_i⟩`.
    pub fn expect_a(&self, i: usize) -> Result<Complex64, FockError> {
        self.check_mode(i)?;
        Ok(Self::inner(&self.amps, &self.lower(i, &self.amps)))
    }

    /// `⟨a_i† a_j⟩`.
    pub fn expect_adag_a(&self, i: usize, j: usize) -> Result<Complex64, FockError> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        Ok(Self::inner(&self.lower(i, &self.amps), &self.lower(j, &self.amps)))
    }

    /// `⟨a_i a_j⟩`.
    pub fn expect_a_a(&self, i: usize, j: usize) -> Result<Complex64, FockError> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        let aj = self.lower(j, &self.amps);
        Ok(Self::inner(&self.amps, &self.lower(i, &aj)))
    }
}

fn matvec(m: &CMatrix, x: &[Complex64], out: &mut [Complex64]) {
    let l = x.len();
    let ms = m.as_slice();
    out[..l].fill(Complex64::default());
    for (col, &xv) in x.iter().enumerate() {
        if xv == Complex64::default() {
            continue;
        }
        let column = &ms[col * l..(col + 1) * l];
        for (o, &a) in out.iter_mut().zip(column) {
            *o += a * xv;
        }
    }
}
