//! Exact diagonalization of the fixed-source model on a truncated Fock space.
//!
//! Modes come either as `±f` pairs or as a lone mode along ẑ. A pair couples
//! to the spin only through its odd standing wave `b = (a_f − a_{−f})/√2`:
//!
//! ```text
//! H_pair   = ω (b†b + ½) + g B (f·σ)(b + b†) + ½ ω        (even partner is free)
//! H_single = ω (a†a + ½) + (g/√2) B (f·σ)(a + a†)
//! ```
//!
//! so the basis only enumerates the coupled channels and the free partners
//! enter through their zero point.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modes::ModeLattice;
use crate::scalar::{compensated_sum, Real, Reduction};

pub const DEFAULT_BASIS_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    /// Odd combination of a `±f` pair.
    Pair,
    /// A single mode along ẑ.
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel<T> {
    pub kind: ChannelKind,
    pub f: Vector3<T>,
    pub omega: T,
    pub b: T,
}

impl<T: Real> Channel<T> {
    /// Coefficient of `g (f·σ)(b + b†)`.
    pub fn coupling(&self) -> T {
        match self.kind {
            ChannelKind::Pair => self.b,
            ChannelKind::Single => self.b * T::lit(0.5).sqrt(),
        }
    }

    /// Lattice modes the channel stands for.
    pub fn multiplicity(&self) -> usize {
        match self.kind {
            ChannelKind::Pair => 2,
            ChannelKind::Single => 1,
        }
    }
}

/// The fixed-source problem on a small set of modes.
#[derive(Clone, Debug)]
pub struct OracleModel<T> {
    channels: Vec<Channel<T>>,
    free_zero_point: T,
}

impl<T: Real> OracleModel<T> {
    /// Group the lattice modes into channels. `b` holds one form factor per
    /// mode and must be even under `f → −f`.
    pub fn from_lattice(lattice: &ModeLattice<T>, b: &DVector<T>) -> Result<Self> {
        if b.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "{} form factors for {} modes",
                b.len(),
                lattice.len()
            )));
        }
        let mut channels = Vec::new();
        let mut free = Vec::new();
        let mut used = vec![false; lattice.len()];
        for (i, mode) in lattice.modes().iter().enumerate() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let neg = [-mode.n[0], -mode.n[1], -mode.n[2]];
            match lattice.index_of(neg) {
                Some(j) => {
                    used[j] = true;
                    let scale = T::one().max(b[i].abs());
                    if (b[i] - b[j]).abs() > T::lit(1e-14) * scale {
                        return Err(Error::InvalidParameter(format!(
                            "form factor is not even on the pair {:?}",
                            mode.n
                        )));
                    }
                    channels.push(Channel { kind: ChannelKind::Pair, f: mode.f, omega: mode.omega, b: b[i] });
                    free.push(mode.omega);
                }
                None => {
                    if mode.n[0] != 0 || mode.n[1] != 0 {
                        return Err(Error::InvalidParameter(format!(
                            "mode {:?} has no partner and does not lie along z",
                            mode.n
                        )));
                    }
                    channels.push(Channel { kind: ChannelKind::Single, f: mode.f, omega: mode.omega, b: b[i] });
                }
            }
        }
        Ok(Self { channels, free_zero_point: compensated_sum(free) * T::lit(0.5) })
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    /// Zero point of the pair partners that do not couple to the spin.
    pub fn free_zero_point(&self) -> T {
        self.free_zero_point
    }

    /// `½ Σ ω` over every lattice mode in the model.
    pub fn zero_point(&self) -> T {
        compensated_sum(self.channels.iter().map(|c| c.omega)) * T::lit(0.5) + self.free_zero_point
    }

    /// `−½ Σ B² f₃² / ω` over every lattice mode in the model.
    pub fn classical_coefficient(&self) -> T {
        -compensated_sum(
            self.channels
                .iter()
                .map(|c| T::lit(c.multiplicity() as f64) * c.b * c.b * c.f.z * c.f.z / c.omega),
        ) * T::lit(0.5)
    }

    /// True when every `f·σ` is real, i.e. no channel has a y component.
    pub fn is_real(&self) -> bool {
        self.channels.iter().all(|c| c.f.y == T::zero())
    }
}

/// Spin ⊗ truncated occupations of each channel.
///
/// State index is `spin + 2 Σ_c n_c (n_max+1)^c`; spin 0 is up along ẑ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    channels: usize,
    n_max: usize,
    size: usize,
}

impl FockBasis {
    pub fn new(channels: usize, n_max: usize, cap: usize) -> Result<Self> {
        let size = u32::try_from(channels)
            .ok()
            .and_then(|c| (n_max + 1).checked_pow(c))
            .and_then(|s| s.checked_mul(2));
        match size {
            Some(size) if size <= cap => Ok(Self { channels, n_max, size }),
            _ => Err(Error::BasisTooLarge { size: size.unwrap_or(usize::MAX), cap }),
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn index(&self, spin: usize, occupations: &[usize]) -> usize {
        let mut idx = 0;
        for &n in occupations.iter().rev() {
            idx = idx * (self.n_max + 1) + n;
        }
        spin + 2 * idx
    }

    pub fn decode(&self, index: usize) -> (usize, Vec<usize>) {
        let spin = index % 2;
        let mut rest = index / 2;
        let occ = (0..self.channels)
            .map(|_| {
                let n = rest % (self.n_max + 1);
                rest /= self.n_max + 1;
                n
            })
            .collect();
        (spin, occ)
    }
}

/// Assembled Hamiltonian; real whenever the spin couplings allow it.
#[derive(Clone, Debug)]
pub enum OracleHamiltonian<T: Real> {
    Real(DMatrix<T>),
    Complex(DMatrix<Complex<T>>),
}

impl<T: Real> OracleHamiltonian<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Real(h) => h.nrows(),
            Self::Complex(h) => h.nrows(),
        }
    }

    /// `‖H − H†‖_max`.
    pub fn hermiticity_residual(&self) -> T {
        match self {
            Self::Real(h) => (h - h.transpose()).amax(),
            Self::Complex(h) => {
                let d = h - h.adjoint();
                d.iter().fold(T::zero(), |acc, z| acc.max((z.re * z.re + z.im * z.im).sqrt()))
            }
        }
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut values: Vec<T> = match self {
            Self::Real(h) => h.symmetric_eigenvalues().iter().copied().collect(),
            Self::Complex(h) => h.symmetric_eigenvalues().iter().copied().collect(),
        };
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        values
    }
}

fn spin_matrix<T: Real>(f: &Vector3<T>) -> [[Complex<T>; 2]; 2] {
    let z = Complex::new(f.z, T::zero());
    [
        [z, Complex::new(f.x, -f.y)],
        [Complex::new(f.x, f.y), -z],
    ]
}

fn assemble_entries<T: Real>(model: &OracleModel<T>, basis: &FockBasis, g: T) -> Vec<(usize, usize, Complex<T>)> {
    let half = T::lit(0.5);
    let sigmas: Vec<_> = model.channels.iter().map(|c| spin_matrix(&c.f)).collect();
    let mut entries = Vec::new();
    for col in 0..basis.len() {
        let (spin, occ) = basis.decode(col);
        let mut diag = model.free_zero_point;
        for (c, ch) in model.channels.iter().enumerate() {
            diag += ch.omega * (T::lit(occ[c] as f64) + half);
        }
        entries.push((col, col, Complex::new(diag, T::zero())));
        for (c, ch) in model.channels.iter().enumerate() {
            let kappa = g * ch.coupling();
            let n = occ[c];
            let mut shifted = occ.clone();
            let mut push = |target_n: usize, amplitude: T| {
                shifted[c] = target_n;
                for s_out in 0..2 {
                    let value = sigmas[c][s_out][spin] * (kappa * amplitude);
                    if value != Complex::new(T::zero(), T::zero()) {
                        entries.push((basis.index(s_out, &shifted), col, value));
                    }
                }
            };
            if n < basis.n_max() {
                push(n + 1, T::lit((n + 1) as f64).sqrt());
            }
            if n > 0 {
                push(n - 1, T::lit(n as f64).sqrt());
            }
        }
    }
    entries
}

/// `H` on the truncated basis at coupling `g`; raising and lowering terms are
/// filled independently, so the Hermiticity residual is a real check.
pub fn build_fixed_source_hamiltonian<T: Real>(
    model: &OracleModel<T>,
    basis: &FockBasis,
    g: T,
) -> Result<OracleHamiltonian<T>> {
    if basis.channels() != model.channels.len() {
        return Err(Error::InvalidParameter(format!(
            "basis has {} channels, model has {}",
            basis.channels(),
            model.channels.len()
        )));
    }
    let dim = basis.len();
    let entries = assemble_entries(model, basis, g);
    if model.is_real() {
        let mut h = DMatrix::zeros(dim, dim);
        for (r, c, v) in entries {
            h[(r, c)] += v.re;
        }
        Ok(OracleHamiltonian::Real(h))
    } else {
        let mut h = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
        for (r, c, v) in entries {
            h[(r, c)] += v;
        }
        Ok(OracleHamiltonian::Complex(h))
    }
}

/// Smallest eigenvalue of a dense Hermitian matrix.
pub fn ground_energy_exact<T: Real>(h: &OracleHamiltonian<T>) -> T {
    h.eigenvalues()[0]
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions<T> {
    pub n_max: usize,
    pub cap: usize,
    /// Allowed change of `E_exact` between `n_max` and `n_max + 2`.
    pub tolerance: T,
    pub reduction: Reduction,
}

impl<T: Real> Default for OracleOptions<T> {
    fn default() -> Self {
        Self { n_max: 20, cap: DEFAULT_BASIS_CAP, tolerance: T::lit(1e-9), reduction: Reduction::Serial }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow<T> {
    pub g: T,
    pub e_exact: T,
    /// `E_exact` at `n_max + 2`.
    pub e_exact_refined: T,
    pub e_expansion: T,
    /// `E_exact − E_expansion`.
    pub residual: T,
    /// `residual − ½ Σ ω`.
    pub residual_beyond_zero_point: T,
    /// `residual / |E_expansion|`, or over `|E_exact|` when the expansion vanishes.
    pub relative_residual: T,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport<T> {
    pub rows: Vec<ComparisonRow<T>>,
    /// Power of `g` in the relative residual, fitted over converged rows.
    pub slope: Option<T>,
    pub classical_coefficient: T,
    pub zero_point: T,
    pub eps0: Option<T>,
}

/// Least-squares slope of `ln|y|` against `ln x`; `None` below two points.
pub fn fit_log_slope<T: Real>(points: &[(T, T)]) -> Option<T> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(T, T)> = points.iter().map(|&(x, y)| (x.ln(), y.abs().ln())).collect();
    let n = T::lit(logs.len() as f64);
    let mx = compensated_sum(logs.iter().map(|p| p.0)) / n;
    let my = compensated_sum(logs.iter().map(|p| p.1)) / n;
    let sxx = compensated_sum(logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    let sxy = compensated_sum(logs.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    if sxx == T::zero() {
        return None;
    }
    Some(sxy / sxx)
}

fn exact_at<T: Real>(model: &OracleModel<T>, g: T, n_max: usize, cap: usize) -> Result<T> {
    let basis = FockBasis::new(model.channels.len(), n_max, cap)?;
    Ok(ground_energy_exact(&build_fixed_source_hamiltonian(model, &basis, g)?))
}

/// Compare ED against `g² E_cl (+ g ε₀)` for each coupling.
///
/// Rows whose energy moves by more than the tolerance between `n_max` and
/// `n_max + 2` are flagged and left out of the slope fit.
pub fn compare_expansion<T: Real>(
    model: &OracleModel<T>,
    couplings: &[T],
    options: &OracleOptions<T>,
    eps0: Option<T>,
) -> Result<ComparisonReport<T>> {
    if couplings.is_empty() {
        return Err(Error::InvalidParameter("coupling list is empty".into()));
    }
    // fail on the larger basis before doing any work
    FockBasis::new(model.channels.len(), options.n_max + 2, options.cap)?;
    let classical = model.classical_coefficient();
    let zero_point = model.zero_point();
    let row = |&g: &T| -> Result<ComparisonRow<T>> {
        let e_exact = exact_at(model, g, options.n_max, options.cap)?;
        let e_exact_refined = exact_at(model, g, options.n_max + 2, options.cap)?;
        let converged = (e_exact - e_exact_refined).abs() <= options.tolerance * T::one().max(e_exact.abs());
        let e_expansion = g * g * classical + eps0.map_or(T::zero(), |e| g * e);
        let residual = e_exact - e_expansion;
        let scale = if e_expansion != T::zero() { e_expansion.abs() } else { e_exact.abs() };
        Ok(ComparisonRow {
            g,
            e_exact,
            e_exact_refined,
            e_expansion,
            residual,
            residual_beyond_zero_point: residual - zero_point,
            relative_residual: residual / scale,
            converged,
        })
    };
    let rows: Vec<ComparisonRow<T>> = match options.reduction {
        Reduction::Serial => couplings.iter().map(row).collect::<Result<_>>()?,
        Reduction::Parallel => couplings.par_iter().map(row).collect::<Result<_>>()?,
    };
    let fit: Vec<(T, T)> = rows.iter().filter(|r| r.converged).map(|r| (r.g, r.relative_residual)).collect();
    Ok(ComparisonReport { slope: fit_log_slope(&fit), rows, classical_coefficient: classical, zero_point, eps0 })
}
