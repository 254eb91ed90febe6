//! Momentum lattice, dispersion and source form factors.
//!
//! Momenta live on the cubic lattice `f = 2π n / L` inside a sphere of radius
//! `Λ`, with the `f = 0` mode left out: its coupling `f·σ` vanishes and it only
//! shifts the energy by the constant `μ/2`.

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{reduce, Real, Reduction};

/// One lattice mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode<T> {
    /// Integer lattice coordinates.
    pub n: [i32; 3],
    /// Momentum `2π n / L`.
    pub f: Vector3<T>,
    /// Dispersion `sqrt(μ² + f²)`.
    pub omega: T,
}

impl<T: Real> Mode<T> {
    pub fn f_sq(&self) -> T {
        self.f.norm_squared()
    }
}

/// The discretised field: modes `0 < |f| ≤ Λ` in a cubic box of side `L`.
#[derive(Clone, Debug)]
pub struct ModeLattice<T> {
    box_length: T,
    volume: T,
    meson_mass: T,
    cutoff: T,
    modes: Vec<Mode<T>>,
    reduction: Reduction,
}

/// Relativistic meson dispersion.
#[inline]
pub fn dispersion<T: Real>(meson_mass: T, f_sq: T) -> T {
    (meson_mass * meson_mass + f_sq).sqrt()
}

/// Enumerate the lattice. Modes are ordered lexicographically in `n`.
pub fn build_mode_lattice<T: Real>(box_length: T, meson_mass: T, cutoff: T) -> Result<ModeLattice<T>> {
    if !(box_length > T::zero()) {
        return Err(Error::InvalidParameter(format!("box length must be positive, got {box_length}")));
    }
    if !(meson_mass > T::zero()) {
        return Err(Error::InvalidParameter(format!("meson mass must be positive, got {meson_mass}")));
    }
    if !(cutoff > T::zero()) {
        return Err(Error::InvalidParameter(format!("cutoff must be positive, got {cutoff}")));
    }
    let unit = T::two_pi() / box_length;
    // |n|² ≤ (Λ/unit)², compared in f64 with a relative guard so that shells
    // sitting exactly on the cutoff are kept.
    let radius = (cutoff / unit).to_f64_lossy();
    let bound = radius * radius * (1.0 + 1e-12);
    if bound < 1.0 {
        return Err(Error::EmptyLattice { cutoff: cutoff.to_f64_lossy(), min_momentum: unit.to_f64_lossy() });
    }
    let reach = radius.floor() as i32;
    let mut modes = Vec::new();
    for n1 in -reach..=reach {
        for n2 in -reach..=reach {
            for n3 in -reach..=reach {
                let n_sq = n1 * n1 + n2 * n2 + n3 * n3;
                if n_sq == 0 || f64::from(n_sq) > bound {
                    continue;
                }
                let f = Vector3::new(
                    unit * T::lit(f64::from(n1)),
                    unit * T::lit(f64::from(n2)),
                    unit * T::lit(f64::from(n3)),
                );
                let omega = dispersion(meson_mass, f.norm_squared());
                modes.push(Mode { n: [n1, n2, n3], f, omega });
            }
        }
    }
    Ok(ModeLattice {
        box_length,
        volume: box_length * box_length * box_length,
        meson_mass,
        cutoff,
        modes,
        reduction: Reduction::Serial,
    })
}

impl<T: Real> ModeLattice<T> {
    /// Lattice restricted to an explicit list of modes (oracle subsets, tests).
    ///
    /// Each `n` must be a nonzero integer vector; the cutoff is set to the
    /// largest `|f|` in the list.
    pub fn from_indices(box_length: T, meson_mass: T, indices: &[[i32; 3]]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("mode list is empty".into()));
        }
        let unit = T::two_pi() / box_length;
        let mut modes = Vec::with_capacity(indices.len());
        let mut cutoff = T::zero();
        for &n in indices {
            if n == [0, 0, 0] {
                return Err(Error::InvalidParameter("the f = 0 mode is not part of the lattice".into()));
            }
            if modes.iter().any(|m: &Mode<T>| m.n == n) {
                return Err(Error::InvalidParameter(format!("mode {n:?} listed twice")));
            }
            let f = Vector3::new(
                unit * T::lit(f64::from(n[0])),
                unit * T::lit(f64::from(n[1])),
                unit * T::lit(f64::from(n[2])),
            );
            cutoff = cutoff.max(f.norm());
            modes.push(Mode { n, f, omega: dispersion(meson_mass, f.norm_squared()) });
        }
        Ok(Self {
            box_length,
            volume: box_length * box_length * box_length,
            meson_mass,
            cutoff,
            modes,
            reduction: Reduction::Serial,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    /// Same lattice with its modes listed in the given order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.modes.len());
        let mut out = self.clone();
        out.modes = order.iter().map(|&i| self.modes[i].clone()).collect();
        out
    }

    pub fn box_length(&self) -> T {
        self.box_length
    }

    pub fn volume(&self) -> T {
        self.volume
    }

    pub fn meson_mass(&self) -> T {
        self.meson_mass
    }

    pub fn cutoff(&self) -> T {
        self.cutoff
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `Σ_f term(index, mode)` under the lattice's reduction strategy.
    pub fn sum<F>(&self, term: F) -> T
    where
        F: Fn(usize, &Mode<T>) -> T + Sync,
    {
        reduce(self.modes.len(), self.reduction, |i| term(i, &self.modes[i]))
    }

    /// Mode vector `x_i = value(mode_i)`.
    pub fn map<F>(&self, value: F) -> DVector<T>
    where
        F: Fn(&Mode<T>) -> T,
    {
        DVector::from_iterator(self.modes.len(), self.modes.iter().map(value))
    }

    /// Index of the mode with lattice coordinates `n`.
    pub fn index_of(&self, n: [i32; 3]) -> Option<usize> {
        self.modes.iter().position(|m| m.n == n)
    }
}

/// Kind of smearing function for the particle source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Point,
    Gaussian,
}

/// Normalised, real, even source density `ρ(x)` given through its Fourier
/// transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceProfile<T> {
    pub kind: SourceKind,
    /// Gaussian width `R`; ignored for a point source.
    pub radius: T,
}

impl<T: Real> SourceProfile<T> {
    pub fn point() -> Self {
        Self { kind: SourceKind::Point, radius: T::zero() }
    }

    pub fn gaussian(radius: T) -> Result<Self> {
        if !(radius >= T::zero()) {
            return Err(Error::InvalidParameter(format!("source radius must be non-negative, got {radius}")));
        }
        Ok(Self { kind: SourceKind::Gaussian, radius })
    }

    /// Width entering the Fourier transform (zero for a point source).
    fn width(&self) -> T {
        match self.kind {
            SourceKind::Point => T::zero(),
            SourceKind::Gaussian => self.radius,
        }
    }

    /// `ρ̂(f) = ∫ ρ(x) e^{-i f·x} dx` as a function of `|f|²`.
    pub fn fourier(&self, f_sq: T) -> T {
        match self.kind {
            SourceKind::Point => T::one(),
            SourceKind::Gaussian => (-f_sq * self.radius * self.radius * T::lit(0.5)).exp(),
        }
    }

    /// `d ln ρ̂ / d(f²)`.
    pub fn fourier_log_slope(&self) -> T {
        let r = self.width();
        -r * r * T::lit(0.5)
    }
}

/// Closed-form coupling amplitude `B(f) = (V ω μ²)^{-1/2} ρ̂(f)`, usable off
/// the lattice so that gradients in `f` can be taken analytically.
#[derive(Clone, Copy, Debug)]
pub struct FormFactor<T> {
    pub volume: T,
    pub meson_mass: T,
    pub source: SourceProfile<T>,
}

impl<T: Real> FormFactor<T> {
    pub fn new(lattice: &ModeLattice<T>, source: SourceProfile<T>) -> Self {
        Self { volume: lattice.volume(), meson_mass: lattice.meson_mass(), source }
    }

    pub fn omega(&self, f_sq: T) -> T {
        dispersion(self.meson_mass, f_sq)
    }

    pub fn at(&self, f_sq: T) -> T {
        let omega = self.omega(f_sq);
        let mu = self.meson_mass;
        (self.volume * omega * mu * mu).sqrt().recip() * self.source.fourier(f_sq)
    }

    /// `d ln B / d(f²) = -1/(4ω²) + d ln ρ̂ / d(f²)`.
    pub fn log_slope(&self, f_sq: T) -> T {
        let omega = self.omega(f_sq);
        -(T::lit(4.0) * omega * omega).recip() + self.source.fourier_log_slope()
    }
}

/// `B_f` for one lattice mode.
pub fn form_factor<T: Real>(lattice: &ModeLattice<T>, source: &SourceProfile<T>, mode: &Mode<T>) -> T {
    FormFactor::new(lattice, *source).at(mode.f_sq())
}

/// `B_f` for every lattice mode, in lattice order.
pub fn form_factors<T: Real>(lattice: &ModeLattice<T>, source: &SourceProfile<T>) -> DVector<T> {
    let ff = FormFactor::new(lattice, *source);
    lattice.map(|m| ff.at(m.f_sq()))
}

/// A function of momentum with an analytic gradient.
///
/// Rotation generators differentiate in `f`, which has no meaning between
/// lattice points, so they only ever act on values of this trait.
pub trait ModeFunction<T: Real>: Sync {
    fn value(&self, f: &Vector3<T>) -> T;
    fn gradient(&self, f: &Vector3<T>) -> Vector3<T>;

    /// Values on every lattice mode.
    fn sample(&self, lattice: &ModeLattice<T>) -> DVector<T> {
        lattice.map(|m| self.value(&m.f))
    }
}
