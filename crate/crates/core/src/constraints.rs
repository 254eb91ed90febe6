//! Collective-coordinate constraints.
//!
//! The six generators of the Euclidean group act on closed-form mode
//! functions: translations multiply by `f_α`, rotations act as
//! `−i ε_{αβγ} f_β ∂/∂f_γ`. Rotations are stored with the factor `−i`
//! stripped, i.e. as the real vector field `(f × ∇v)_α`; the mixing matrix
//! solved for in [`ConstraintSet::build`] absorbs the phase, so the
//! constraint algebra is unaffected.
//!
//! A generator that annihilates the profile (`J u ≡ 0`, e.g. rotation about
//! the symmetry axis of an axially symmetric profile) does not define a
//! collective direction. Such generators are reported as inactive and left
//! out of `N`, `M` and the projector.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::modes::{ModeFunction, ModeLattice};
use crate::scalar::Real;

/// Rows of `N` whose max-norm falls below this fraction of the largest row are
/// treated as identically zero.
pub const INACTIVE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Rotation,
    Translation,
}

/// One infinitesimal generator `J_α^i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Generator {
    pub kind: GeneratorKind,
    /// Axis index 0, 1, 2 for x, y, z.
    pub axis: usize,
}

impl Generator {
    /// Rotations about x, y, z followed by translations along x, y, z.
    pub const ALL: [Generator; 6] = [
        Generator { kind: GeneratorKind::Rotation, axis: 0 },
        Generator { kind: GeneratorKind::Rotation, axis: 1 },
        Generator { kind: GeneratorKind::Rotation, axis: 2 },
        Generator { kind: GeneratorKind::Translation, axis: 0 },
        Generator { kind: GeneratorKind::Translation, axis: 1 },
        Generator { kind: GeneratorKind::Translation, axis: 2 },
    ];

    /// `(J v)(f)` in the real convention described in the module docs.
    pub fn apply<T: Real>(&self, v: &dyn ModeFunction<T>, f: &Vector3<T>) -> T {
        match self.kind {
            GeneratorKind::Translation => f[self.axis] * v.value(f),
            GeneratorKind::Rotation => f.cross(&v.gradient(f))[self.axis],
        }
    }

    /// `J v` sampled on the lattice.
    pub fn act<T: Real>(&self, lattice: &ModeLattice<T>, v: &dyn ModeFunction<T>) -> DVector<T> {
        lattice.map(|m| self.apply(v, &m.f))
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = ["x", "y", "z"][self.axis];
        match self.kind {
            GeneratorKind::Rotation => write!(f, "rotation-{axis}"),
            GeneratorKind::Translation => write!(f, "translation-{axis}"),
        }
    }
}

/// Generator actions stacked as rows: `out[(g, f)] = (J_g v)(f)`.
pub fn generator_rows<T: Real>(
    lattice: &ModeLattice<T>,
    generators: &[Generator],
    v: &dyn ModeFunction<T>,
) -> DMatrix<T> {
    let mut out = DMatrix::zeros(generators.len(), lattice.len());
    for (r, g) in generators.iter().enumerate() {
        for (c, m) in lattice.modes().iter().enumerate() {
            out[(r, c)] = g.apply(v, &m.f);
        }
    }
    out
}

/// `N^i_{αf} = (J_α^i u)_f` for all six generators.
pub fn build_n<T: Real>(lattice: &ModeLattice<T>, u: &dyn ModeFunction<T>) -> DMatrix<T> {
    generator_rows(lattice, &Generator::ALL, u)
}

/// Six-by-six Gram matrix `Σ_f (J_a u)_f (J_b v)_f` over all generators.
pub fn full_gram<T: Real>(lattice: &ModeLattice<T>, u: &dyn ModeFunction<T>, v: &dyn ModeFunction<T>) -> DMatrix<T> {
    let n = build_n(lattice, u);
    let raw_m = generator_rows(lattice, &Generator::ALL, v).transpose();
    n * raw_m
}

/// Constraint functionals `N`, their dual vectors `M` with `N M = 1`, and the
/// projector `A = 1 − M N` kept in factored form.
#[derive(Clone, Debug)]
pub struct ConstraintSet<T: Real> {
    generators: Vec<Generator>,
    inactive: Vec<Generator>,
    /// `r × modes`
    n: DMatrix<T>,
    /// `modes × r`
    m: DMatrix<T>,
    gram: DMatrix<T>,
}

impl<T: Real> ConstraintSet<T> {
    /// Build `N` from the profile `u` and `M` from the ansatz `v`, mixing the
    /// ansatz columns so that `N M = 1` holds exactly.
    pub fn build(lattice: &ModeLattice<T>, u: &dyn ModeFunction<T>, v: &dyn ModeFunction<T>) -> Result<Self> {
        let all_n = build_n(lattice, u);
        let row_norm = |r: usize| all_n.row(r).amax();
        let largest = (0..6).map(row_norm).fold(T::zero(), |a, b| a.max(b));
        if largest == T::zero() {
            return Err(Error::SingularGram("the profile vanishes, no collective directions exist".into()));
        }
        let cut = largest * T::lit(INACTIVE_THRESHOLD);
        let (generators, inactive): (Vec<_>, Vec<_>) =
            Generator::ALL.iter().enumerate().partition(|(r, _)| row_norm(*r) > cut);
        let generators: Vec<Generator> = generators.into_iter().map(|(_, g)| *g).collect();
        let inactive: Vec<Generator> = inactive.into_iter().map(|(_, g)| *g).collect();

        let n = generator_rows(lattice, &generators, u);
        let raw_m = generator_rows(lattice, &generators, v).transpose();
        let gram = &n * &raw_m;

        let sv = gram.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > smax * T::lit(1e-12)) {
            return Err(Error::SingularGram(format!(
                "condition {:.3e} over {} active generators",
                (smax / smin).to_f64_lossy(),
                generators.len()
            )));
        }
        let inverse = gram
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularGram("Gram matrix is not invertible".into()))?;
        let m = raw_m * inverse;
        Ok(Self { generators, inactive, n, m, gram })
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// Generators that annihilate the profile.
    pub fn inactive(&self) -> &[Generator] {
        &self.inactive
    }

    /// Number of active constraints.
    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn n(&self) -> &DMatrix<T> {
        &self.n
    }

    pub fn m(&self) -> &DMatrix<T> {
        &self.m
    }

    /// Gram matrix of `N` against the unmixed ansatz columns.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn mode_count(&self) -> usize {
        self.n.ncols()
    }

    /// `A x = x − M (N x)`.
    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        x - &self.m * (&self.n * x)
    }

    /// `A` as a dense matrix. Only sensible for small lattices.
    pub fn projector(&self) -> DMatrix<T> {
        DMatrix::identity(self.mode_count(), self.mode_count()) - &self.m * &self.n
    }

    /// `‖N M − 1‖_max`.
    pub fn duality_residual(&self) -> T {
        let r = self.rank();
        (&self.n * &self.m - DMatrix::identity(r, r)).amax()
    }

    /// `(‖A M‖_max, ‖N A‖_max)`.
    pub fn projector_residuals(&self) -> (T, T) {
        let nm = &self.n * &self.m;
        let am = &self.m - &self.m * &nm;
        let na = &self.n - &nm * &self.n;
        (am.amax(), na.amax())
    }

    /// `max_k ‖A(A e_k) − A e_k‖_max` over the unit vectors `e_k`.
    pub fn idempotency_residual(&self) -> T {
        let mut worst = T::zero();
        for k in 0..self.mode_count() {
            let mut e = DVector::zeros(self.mode_count());
            e[k] = T::one();
            let once = self.project(&e);
            let twice = self.project(&once);
            worst = worst.max((twice - once).amax());
        }
        worst
    }

    /// Full residual report.
    pub fn residuals(&self) -> ConstraintResiduals<T> {
        let (am, na) = self.projector_residuals();
        ConstraintResiduals {
            active: self.rank(),
            duality: self.duality_residual(),
            projector_m: am,
            projector_n: na,
            idempotency: self.idempotency_residual(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResiduals<T> {
    pub active: usize,
    pub duality: T,
    pub projector_m: T,
    pub projector_n: T,
    pub idempotency: T,
}

/// Options for the fixed-point solve of `Ñ = −N − g⁻¹ N (J Q) Ñ`.
#[derive(Clone, Copy, Debug)]
pub struct IterationOptions<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for IterationOptions<T> {
    fn default() -> Self {
        Self { tolerance: T::lit(1e-12), max_iterations: 500 }
    }
}

/// Result of the `Ñ` iteration.
#[derive(Clone, Debug)]
pub struct NTilde<T: Real> {
    /// `r × modes`
    pub value: DMatrix<T>,
    /// Induced max-norm of `g⁻¹ N (J Q)`, an upper bound on the per-step
    /// error ratio.
    pub contraction_bound: T,
    /// Ratio of the last two successive-iterate differences, or zero when the
    /// iteration stopped after a single step.
    pub observed_ratio: T,
    /// `‖Ñ_{k+1} − Ñ_k‖_max` for every step taken.
    pub step_errors: Vec<T>,
}

/// `C_{ab} = Σ_l N_{a l} (J_b Q)_l` over the active generators.
pub fn coupling_matrix<T: Real>(
    constraints: &ConstraintSet<T>,
    lattice: &ModeLattice<T>,
    q: &dyn ModeFunction<T>,
) -> DMatrix<T> {
    let jq = generator_rows(lattice, constraints.generators(), q).transpose();
    constraints.n() * jq
}

/// Solve `Ñ = −N − (1/g) N (J Q) Ñ` by fixed-point iteration from `Ñ₀ = −N`.
pub fn iterate_ntilde<T: Real>(
    constraints: &ConstraintSet<T>,
    lattice: &ModeLattice<T>,
    q: &dyn ModeFunction<T>,
    g: T,
    options: IterationOptions<T>,
) -> Result<NTilde<T>> {
    if !(g > T::zero()) {
        return Err(Error::InvalidParameter(format!("coupling must be positive, got {g}")));
    }
    let c = coupling_matrix(constraints, lattice, q) / g;
    let bound = (0..c.nrows())
        .map(|r| c.row(r).iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::zero(), |a, b| a.max(b));
    let minus_n = -constraints.n();
    let mut current = minus_n.clone();
    let mut step_errors = Vec::new();
    for _ in 0..options.max_iterations {
        let next = &minus_n - &c * &current;
        let err = (&next - &current).amax();
        step_errors.push(err);
        current = next;
        if err < options.tolerance {
            let observed = match step_errors.len() {
                0 | 1 => T::zero(),
                k => {
                    let prev = step_errors[k - 2];
                    if prev > T::zero() {
                        step_errors[k - 1] / prev
                    } else {
                        T::zero()
                    }
                }
            };
            return Ok(NTilde { value: current, contraction_bound: bound, observed_ratio: observed, step_errors });
        }
    }
    Err(Error::NonConvergence { iterations: options.max_iterations, ratio: bound.to_f64_lossy() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::DriftProfile;
    use crate::modes::{build_mode_lattice, FormFactor, SourceProfile};
    use std::f64::consts::PI;

    /// `v(f) = f₃ φ(|f|)` with `φ(r) = exp(−r²/3)`.
    struct Axial;

    impl ModeFunction<f64> for Axial {
        fn value(&self, f: &Vector3<f64>) -> f64 {
            f.z * (-f.norm_squared() / 3.0).exp()
        }
        fn gradient(&self, f: &Vector3<f64>) -> Vector3<f64> {
            let phi = (-f.norm_squared() / 3.0).exp();
            let mut g = f * (-2.0 / 3.0 * f.z * phi);
            g.z += phi;
            g
        }
    }

    /// A generic non-symmetric test field.
    struct Lopsided;

    impl ModeFunction<f64> for Lopsided {
        fn value(&self, f: &Vector3<f64>) -> f64 {
            (0.3 * f.x + 0.2 * f.y * f.z).sin() * (-0.1 * f.norm_squared()).exp()
        }
        fn gradient(&self, f: &Vector3<f64>) -> Vector3<f64> {
            let arg = 0.3 * f.x + 0.2 * f.y * f.z;
            let env = (-0.1 * f.norm_squared()).exp();
            let d_arg = Vector3::new(0.3, 0.2 * f.z, 0.2 * f.y);
            d_arg * (arg.cos() * env) - f * (0.2 * arg.sin() * env)
        }
    }

    fn setup(c: f64) -> (ModeLattice<f64>, DriftProfile<f64>) {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let form = FormFactor::new(&lat, SourceProfile::gaussian(0.7).unwrap());
        (lat, DriftProfile::new(form, c).unwrap())
    }

    #[test]
    fn translation_rows_multiply_by_momentum() {
        let (lat, u) = setup(0.3);
        let n = build_n(&lat, &u);
        for (c, m) in lat.modes().iter().enumerate() {
            let uf = u.value(&m.f);
            for a in 0..3 {
                assert_eq!(n[(3 + a, c)], m.f[a] * uf);
            }
        }
    }

    #[test]
    fn rotation_about_symmetry_axis_annihilates_axial_profiles() {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let z_rot = Generator::ALL[2];
        assert!(z_rot.act(&lat, &Axial).amax() <= 1e-15);
        let (_, u) = setup(0.4);
        assert!(z_rot.act(&lat, &u).amax() <= 1e-17);
    }

    #[test]
    fn rotation_about_x_at_unit_y() {
        let f = Vector3::new(0.0, 1.0, 0.0);
        let (_, u) = setup(0.3);
        let x_rot = Generator::ALL[0];
        let analytic = x_rot.apply(&u, &f);
        let h = 1e-5;
        let d = |k: usize| {
            let mut p = f;
            let mut q = f;
            p[k] += h;
            q[k] -= h;
            (u.value(&p) - u.value(&q)) / (2.0 * h)
        };
        let fd = f.y * d(2) - f.z * d(1);
        assert!((analytic - fd).abs() <= 1e-8);
    }

    #[test]
    fn rotation_expectation_vanishes_on_reflection_symmetric_lattices() {
        let (lat, u) = setup(0.2);
        let v = u.sample(&lat);
        for g in &Generator::ALL[..3] {
            let s = v.dot(&g.act(&lat, &u));
            assert!(s.abs() <= 1e-15, "{g}: {s}");
        }
    }

    #[test]
    fn axial_profile_leaves_five_active_generators() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        assert_eq!(cs.rank(), 5);
        assert_eq!(cs.inactive(), &[Generator::ALL[2]]);
        let r = cs.residuals();
        assert!(r.duality <= 1e-10);
        assert!(r.projector_m <= 1e-10 && r.projector_n <= 1e-10);
        assert!(r.idempotency <= 1e-10);
    }

    #[test]
    fn generic_profile_keeps_all_six() {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let cs = ConstraintSet::build(&lat, &Lopsided, &Lopsided).unwrap();
        assert_eq!(cs.rank(), 6);
        assert!(cs.duality_residual() <= 1e-10);
        assert!(cs.idempotency_residual() <= 1e-10);
    }

    struct Zero;

    impl ModeFunction<f64> for Zero {
        fn value(&self, _: &Vector3<f64>) -> f64 {
            0.0
        }
        fn gradient(&self, _: &Vector3<f64>) -> Vector3<f64> {
            Vector3::zeros()
        }
    }

    #[test]
    fn vanishing_profile_is_rejected() {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 2.0).unwrap();
        let err = ConstraintSet::build(&lat, &Zero, &Zero).unwrap_err();
        assert!(matches!(err, Error::SingularGram(_)));
    }

    #[test]
    fn cross_block_of_gram_vanishes_at_rest() {
        let (lat, u) = setup(0.0);
        let gram = full_gram(&lat, &u, &u);
        for r in 0..3 {
            for t in 3..6 {
                assert!(gram[(r, t)].abs() <= 1e-15 && gram[(t, r)].abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn projector_annihilates_m_and_fixes_kernel() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        for k in 0..cs.rank() {
            let col = cs.m().column(k).into_owned();
            assert!(cs.project(&col).amax() <= 1e-10);
        }
        let x = DVector::from_fn(lat.len(), |i, _| ((i * 7 % 11) as f64 - 5.0) / 3.0);
        let in_kernel = cs.project(&x);
        assert!((cs.n() * &in_kernel).amax() <= 1e-10);
        assert!((cs.project(&in_kernel) - &in_kernel).amax() <= 1e-12);
    }

    #[test]
    fn ntilde_without_fluctuation_is_minus_n() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        let sol = iterate_ntilde(&cs, &lat, &Zero, 5.0, IterationOptions::default()).unwrap();
        assert_eq!(sol.value, -cs.n());
        assert_eq!(sol.step_errors.len(), 1);
    }

    #[test]
    fn ntilde_first_step_matches_expansion() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        let g = 50.0;
        let options = IterationOptions { tolerance: 1e-12, max_iterations: 1 };
        let c = coupling_matrix(&cs, &lat, &Lopsided);
        let expect = -cs.n() + &c * cs.n() / g;
        // one step from −N, whether or not it converges
        let one = match iterate_ntilde(&cs, &lat, &Lopsided, g, options) {
            Ok(s) => s.value,
            Err(_) => -cs.n() - &c * (-cs.n()) / g,
        };
        assert!((one - expect).amax() <= 1e-15);
    }

    #[test]
    fn ntilde_geometric_convergence_and_scaling() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        let c_norm = coupling_matrix(&cs, &lat, &Lopsided).abs().row_sum().max();
        let g = 4.0 * c_norm;
        let a = iterate_ntilde(&cs, &lat, &Lopsided, g, IterationOptions::default()).unwrap();
        let b = iterate_ntilde(&cs, &lat, &Lopsided, 2.0 * g, IterationOptions::default()).unwrap();
        assert!((a.contraction_bound / b.contraction_bound - 2.0).abs() < 1e-12);
        assert!((a.observed_ratio / b.observed_ratio - 2.0).abs() < 0.2);
        for sol in [&a, &b] {
            for w in sol.step_errors.windows(2) {
                assert!(w[1] <= sol.contraction_bound * w[0] * (1.0 + 1e-9) + 1e-300);
            }
        }
    }

    #[test]
    fn ntilde_reports_divergence() {
        let (lat, u) = setup(0.3);
        let cs = ConstraintSet::build(&lat, &u, &u).unwrap();
        let opts = IterationOptions { tolerance: 1e-12, max_iterations: 50 };
        match iterate_ntilde(&cs, &lat, &Lopsided, 1e-6, opts) {
            Err(Error::NonConvergence { ratio, .. }) => assert!(ratio > 1.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
