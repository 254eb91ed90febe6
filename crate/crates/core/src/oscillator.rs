//! Order-g fluctuation Hamiltonian and its normal modes.
//!
//! The quadratic form assembled here is
//!
//! ```text
//! H₂ = p_λ²/2m + ½ λᵀ Κ λ + ½ Σ_f ω_f (P̃_f² + Q̃_f²) + Σ_f d_f·λ Q̃_f
//! Κ_{αβ} = Σ_f B_f u_f f₃ f_α f_β        d_{f,α} = B_f f₃ f_α
//! ```
//!
//! with `Q̃` restricted to the kernel of the constraint functionals `N` and
//! `P̃` to the kernel of `Mᵀ`. This is a reconstruction: `Κ` comes from the
//! second-order term of `exp(i f·λ/√g)` against the classical profile, `d`
//! from the first-order term, and linear momentum terms are dropped after the
//! `m c λ` phase shift. The form does not depend on `g`; callers scale `ε₀`
//! by `g`.
//!
//! Normal modes come from a Cholesky factor of the momentum block `T = L Lᵀ`
//! and a dense symmetric eigensolve of `Lᵀ V L`.

use nalgebra::{DMatrix, DVector};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::meanfield::MeanField;
use crate::modes::ModeLattice;
use crate::scalar::Real;

/// Number of particle-oscillation coordinates `λ_α`.
pub const LAMBDA_DIM: usize = 3;

/// `H = ½ pᵀ T p + ½ qᵀ V q`.
#[derive(Clone, Debug)]
pub struct QuadraticForm<T: Real> {
    /// `V`
    pub coordinate: DMatrix<T>,
    /// `T`
    pub momentum: DMatrix<T>,
    /// Leading coordinates that belong to the particle (3, or 0 for bare forms).
    pub lambda_dim: usize,
}

impl<T: Real> QuadraticForm<T> {
    pub fn new(coordinate: DMatrix<T>, momentum: DMatrix<T>) -> Result<Self> {
        if !coordinate.is_square() || coordinate.shape() != momentum.shape() {
            return Err(Error::InvalidParameter(format!(
                "block shapes {:?} and {:?} do not match",
                coordinate.shape(),
                momentum.shape()
            )));
        }
        Ok(Self { coordinate, momentum, lambda_dim: 0 })
    }

    pub fn dim(&self) -> usize {
        self.coordinate.nrows()
    }

    /// `max(‖V − Vᵀ‖, ‖T − Tᵀ‖)`.
    pub fn asymmetry(&self) -> T {
        (&self.coordinate - self.coordinate.transpose())
            .amax()
            .max((&self.momentum - self.momentum.transpose()).amax())
    }

    /// Apply an orthogonal change of basis `O` to the field coordinates,
    /// leaving the particle block alone.
    pub fn rebased(&self, orthogonal: &DMatrix<T>) -> Self {
        let d = self.dim();
        let mut full = DMatrix::identity(d, d);
        full.view_mut((self.lambda_dim, self.lambda_dim), orthogonal.shape()).copy_from(orthogonal);
        Self {
            coordinate: full.transpose() * &self.coordinate * &full,
            momentum: full.transpose() * &self.momentum * &full,
            lambda_dim: self.lambda_dim,
        }
    }
}

/// Knobs of the fluctuation Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct FluctuationOptions<T> {
    /// Multiplies the particle-field dipole block; 1 is the physical value.
    pub dipole_scale: T,
    /// Restrict field coordinates with the constraint projector.
    pub constrained: bool,
}

impl<T: Real> Default for FluctuationOptions<T> {
    fn default() -> Self {
        Self { dipole_scale: T::one(), constrained: true }
    }
}

/// Orthonormal basis of `ker N`, as columns.
pub fn kernel_basis<T: Real>(constraints: &ConstraintSet<T>) -> DMatrix<T> {
    let n = constraints.n();
    let modes = n.ncols();
    let gram = n.transpose() * n;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..modes).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
    let keep = modes - constraints.rank();
    DMatrix::from_fn(modes, keep, |r, c| eig.eigenvectors[(r, order[c])])
}

/// Particle curvature `Κ_{αβ} = Σ_f B_f u_f f₃ f_α f_β`.
pub fn particle_curvature<T: Real>(lattice: &ModeLattice<T>, mean_field: &MeanField<T>) -> DMatrix<T> {
    let (b, u) = (&mean_field.b, &mean_field.u);
    DMatrix::from_fn(LAMBDA_DIM, LAMBDA_DIM, |a, c| lattice.sum(|i, m| b[i] * u[i] * m.f.z * m.f[a] * m.f[c]))
}

/// Assemble the constrained quadratic form.
pub fn build_quadratic_form<T: Real>(
    lattice: &ModeLattice<T>,
    mean_field: &MeanField<T>,
    constraints: &ConstraintSet<T>,
    particle_mass: T,
    options: FluctuationOptions<T>,
) -> Result<QuadraticForm<T>> {
    if !(particle_mass > T::zero()) {
        return Err(Error::InvalidParameter(format!("particle mass must be positive, got {particle_mass}")));
    }
    if !(mean_field.velocity().abs() < T::one()) {
        return Err(Error::VelocityOutOfRange { speed: mean_field.velocity().to_f64_lossy() });
    }
    let modes = lattice.len();
    let curvature = particle_curvature(lattice, mean_field);
    let dipole = DMatrix::from_fn(modes, LAMBDA_DIM, |i, a| {
        let m = &lattice.modes()[i];
        options.dipole_scale * mean_field.b[i] * m.f.z * m.f[a]
    });
    let omega = DVector::from_iterator(modes, lattice.modes().iter().map(|m| m.omega));
    let weight = DMatrix::from_diagonal(&omega);

    let (coord_basis, momentum_basis) = if options.constrained {
        let e = kernel_basis(constraints);
        // F = Aᵀ E spans ker Mᵀ and is dual to E: Fᵀ E = Eᵀ A E = 1.
        let f = &e - constraints.n().transpose() * (constraints.m().transpose() * &e);
        (e, f)
    } else {
        (DMatrix::identity(modes, modes), DMatrix::identity(modes, modes))
    };
    let field = coord_basis.ncols();
    let dim = LAMBDA_DIM + field;

    let mut coordinate = DMatrix::zeros(dim, dim);
    coordinate.view_mut((0, 0), (LAMBDA_DIM, LAMBDA_DIM)).copy_from(&curvature);
    let cross = dipole.transpose() * &coord_basis;
    coordinate.view_mut((0, LAMBDA_DIM), (LAMBDA_DIM, field)).copy_from(&cross);
    coordinate.view_mut((LAMBDA_DIM, 0), (field, LAMBDA_DIM)).copy_from(&cross.transpose());
    let field_v = coord_basis.transpose() * &weight * &coord_basis;
    coordinate.view_mut((LAMBDA_DIM, LAMBDA_DIM), (field, field)).copy_from(&field_v);

    let mut momentum = DMatrix::zeros(dim, dim);
    for a in 0..LAMBDA_DIM {
        momentum[(a, a)] = particle_mass.recip();
    }
    let field_t = momentum_basis.transpose() * &weight * &momentum_basis;
    momentum.view_mut((LAMBDA_DIM, LAMBDA_DIM), (field, field)).copy_from(&field_t);

    // remove rounding asymmetry from the triple products
    let half = T::lit(0.5);
    let coordinate = (&coordinate + coordinate.transpose()) * half;
    let momentum = (&momentum + momentum.transpose()) * half;
    Ok(QuadraticForm { coordinate, momentum, lambda_dim: LAMBDA_DIM })
}

/// What to do with a vanishing restricted eigenvalue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroModePolicy {
    #[default]
    Error,
    Flag,
}

/// Restricted eigenvalues with `|λ| ≤ ZERO_TOLERANCE · max|λ|` count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct NormalModes<T: Real> {
    /// `ν₁ ≤ ν₂ ≤ …`
    pub frequencies: Vec<T>,
    /// `½ Σ ν_i`
    pub eps0: T,
    /// Maps `(q, p)` to normal coordinates `(Y, Π)` with `H = ½ Σ ν (Π² + Y²)`.
    pub transform: DMatrix<T>,
    /// Indices (into `frequencies`) of flagged zero modes.
    pub zero_modes: Vec<usize>,
}

impl<T: Real> NormalModes<T> {
    /// `‖S Ω Sᵀ − Ω‖_max` with `Ω = [[0, 1], [−1, 0]]`.
    pub fn symplectic_residual(&self) -> T {
        let d = self.frequencies.len();
        let omega = canonical_form::<T>(d);
        (&self.transform * &omega * self.transform.transpose() - omega).amax()
    }
}

/// Canonical antisymmetric form on `2d` phase-space coordinates.
pub fn canonical_form<T: Real>(d: usize) -> DMatrix<T> {
    let mut omega = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        omega[(i, d + i)] = T::one();
        omega[(d + i, i)] = -T::one();
    }
    omega
}

/// Normal-mode frequencies and the symplectic map to normal coordinates.
pub fn symplectic_diagonalize<T: Real>(form: &QuadraticForm<T>, policy: ZeroModePolicy) -> Result<NormalModes<T>> {
    let d = form.dim();
    let chol = form
        .momentum
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("momentum block is not positive definite".into()))?;
    let l = chol.l();
    let reduced = l.transpose() * &form.coordinate * &l;
    let reduced = (&reduced + reduced.transpose()) * T::lit(0.5);
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));

    let scale = eig.eigenvalues.amax();
    let tol = scale * T::lit(ZERO_TOLERANCE);
    let mut frequencies = Vec::with_capacity(d);
    let mut zero_modes = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        if lam < -tol {
            return Err(Error::UnstableSpectrum { eigenvalue: lam.to_f64_lossy() });
        }
        if lam.abs() <= tol {
            if policy == ZeroModePolicy::Error {
                return Err(Error::ZeroMode { eigenvalue: lam.to_f64_lossy() });
            }
            zero_modes.push(k);
            frequencies.push(T::zero());
        } else {
            frequencies.push(lam.sqrt());
        }
    }

    let u = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::InvalidParameter("singular Cholesky factor".into()))?;
    // zero modes are left unscaled
    let root = DVector::from_iterator(d, frequencies.iter().map(|&nu| if nu > T::zero() { nu.sqrt() } else { T::one() }));
    let top = DMatrix::from_diagonal(&root) * u.transpose() * l_inv;
    let bottom = DMatrix::from_diagonal(&root.map(|x| x.recip())) * u.transpose() * l.transpose();
    let mut transform = DMatrix::zeros(2 * d, 2 * d);
    transform.view_mut((0, 0), (d, d)).copy_from(&top);
    transform.view_mut((d, d), (d, d)).copy_from(&bottom);

    let eps0 = frequencies.iter().fold(T::zero(), |acc, &nu| acc + nu) * T::lit(0.5);
    Ok(NormalModes { frequencies, eps0, transform, zero_modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::MeanField;
    use crate::modes::{build_mode_lattice, FormFactor, SourceProfile};
    use nalgebra::dmatrix;
    use std::f64::consts::PI;

    fn pipeline(c: f64) -> (ModeLattice<f64>, MeanField<f64>, ConstraintSet<f64>) {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let form = FormFactor::new(&lat, SourceProfile::gaussian(0.7).unwrap());
        let mf = MeanField::new(&lat, form, c).unwrap();
        let cs = ConstraintSet::build(&lat, &mf.profile, &mf.profile).unwrap();
        (lat, mf, cs)
    }

    #[test]
    fn single_oscillator() {
        let form = QuadraticForm::new(dmatrix![2.25f64], dmatrix![1.0]).unwrap();
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        assert!((nm.frequencies[0] - 1.5).abs() <= 1e-15);
        assert!((nm.eps0 - 0.75).abs() <= 1e-15);
    }

    #[test]
    fn two_coupled_oscillators() {
        let (a, b) = (3.0f64, 1.2);
        let form = QuadraticForm::new(dmatrix![a, b; b, a], DMatrix::identity(2, 2)).unwrap();
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        assert!((nm.frequencies[0] - (a - b).sqrt()).abs() <= 1e-12);
        assert!((nm.frequencies[1] - (a + b).sqrt()).abs() <= 1e-12);
        assert!(nm.symplectic_residual() <= 1e-12);
    }

    #[test]
    fn zero_mode_is_flagged_or_rejected() {
        let form = QuadraticForm::new(dmatrix![0.0, 0.0; 0.0, 4.0], DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(symplectic_diagonalize(&form, ZeroModePolicy::Error), Err(Error::ZeroMode { .. })));
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Flag).unwrap();
        assert_eq!(nm.zero_modes, vec![0]);
        assert_eq!(nm.frequencies, vec![0.0, 2.0]);
        assert!(nm.symplectic_residual() <= 1e-14);
    }

    #[test]
    fn negative_curvature_is_unstable() {
        let form = QuadraticForm::new(dmatrix![-1.0, 0.0; 0.0, 4.0], DMatrix::identity(2, 2)).unwrap();
        match symplectic_diagonalize(&form, ZeroModePolicy::Flag) {
            Err(Error::UnstableSpectrum { eigenvalue }) => assert!((eigenvalue + 1.0).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_blocks_rejected() {
        assert!(QuadraticForm::new(DMatrix::<f64>::identity(2, 2), DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn pipeline_form_is_well_formed() {
        let (lat, mf, cs) = pipeline(0.3);
        let form = build_quadratic_form(&lat, &mf, &cs, 1.0, FluctuationOptions::default()).unwrap();
        assert_eq!(form.dim(), LAMBDA_DIM + lat.len() - cs.rank());
        assert!(form.asymmetry() <= 1e-13);
        assert!(form.momentum.clone().cholesky().is_some());
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        assert!(nm.symplectic_residual() <= 1e-10);
        assert!(nm.frequencies.windows(2).all(|w| w[0] <= w[1]));
        assert!(nm.frequencies[0] > 0.0);
    }

    #[test]
    fn frequencies_invariant_under_rebasing() {
        use rand::{Rng, SeedableRng};
        let (lat, mf, cs) = pipeline(0.2);
        let form = build_quadratic_form(&lat, &mf, &cs, 1.0, FluctuationOptions::default()).unwrap();
        let field = form.dim() - LAMBDA_DIM;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let raw = DMatrix::from_fn(field, field, |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        let a = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        let b = symplectic_diagonalize(&form.rebased(&q), ZeroModePolicy::Error).unwrap();
        for (x, y) in a.frequencies.iter().zip(&b.frequencies) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn particle_curvature_trace_at_rest() {
        let (lat, mf, _) = pipeline(0.0);
        let k = particle_curvature(&lat, &mf);
        let trace = k.trace();
        // independent: 3K with K = (1/3) Σ ω f² u², u = B f₃ / ω
        let three_k: f64 = lat
            .modes()
            .iter()
            .map(|m| {
                let b = mf.b[lat.index_of(m.n).unwrap()];
                let u = b * m.f.z / m.omega;
                m.omega * m.f_sq() * u * u
            })
            .sum();
        assert!((trace - three_k).abs() <= 1e-13 * three_k);
    }

    #[test]
    fn switching_off_dipole_decouples_the_particle() {
        let (lat, mf, cs) = pipeline(0.3);
        let opts = FluctuationOptions { dipole_scale: 0.0, constrained: true };
        let form = build_quadratic_form(&lat, &mf, &cs, 2.0, opts).unwrap();
        assert_eq!(form.coordinate.view((0, LAMBDA_DIM), (LAMBDA_DIM, form.dim() - LAMBDA_DIM)).amax(), 0.0);
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        let particle = particle_curvature(&lat, &mf).symmetric_eigen().eigenvalues / 2.0;
        for lam in particle.iter() {
            let nu = lam.sqrt();
            assert!(nm.frequencies.iter().any(|&f| (f - nu).abs() <= 1e-10 * nu));
        }
    }

    #[test]
    fn unprojected_field_matches_bare_frequencies() {
        let (lat, mf, cs) = pipeline(0.3);
        let opts = FluctuationOptions { dipole_scale: 0.0, constrained: false };
        let form = build_quadratic_form(&lat, &mf, &cs, 1.0, opts).unwrap();
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        let mut bare: Vec<f64> = lat.modes().iter().map(|m| m.omega).collect();
        bare.extend(particle_curvature(&lat, &mf).symmetric_eigen().eigenvalues.iter().map(|l| l.sqrt()));
        bare.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in nm.frequencies.iter().zip(&bare) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn unconstrained_form_has_translation_zero_modes_at_rest() {
        let (lat, mf, cs) = pipeline(0.0);
        let opts = FluctuationOptions { dipole_scale: 1.0, constrained: false };
        let form = build_quadratic_form(&lat, &mf, &cs, 1.0, opts).unwrap();
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Flag).unwrap();
        assert_eq!(nm.zero_modes.len(), 3);
        // the constraints lift them
        let constrained = build_quadratic_form(&lat, &mf, &cs, 1.0, FluctuationOptions::default()).unwrap();
        assert!(symplectic_diagonalize(&constrained, ZeroModePolicy::Error).is_ok());
    }

    #[test]
    fn zero_point_energy_drops_as_dipole_is_switched_on() {
        let (lat, mf, cs) = pipeline(0.2);
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let opts = FluctuationOptions { dipole_scale: k as f64 / 4.0, constrained: true };
            let form = build_quadratic_form(&lat, &mf, &cs, 1.0, opts).unwrap();
            let eps0 = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap().eps0;
            assert!(eps0 < last, "step {k}: {eps0} !< {last}");
            last = eps0;
        }
    }
}
