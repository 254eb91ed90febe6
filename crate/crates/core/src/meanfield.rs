//! Order-g² classical solution of the drifting particle.
//!
//! The drift velocity is kept along ẑ, which is also the axis the spin is
//! quantised on: the profile `u_f` is proportional to `f₃`, so the
//! polarisation `a = Σ B_f u_f f` points along ẑ as well.
//!
//! The field momenta are reconstructed as `α_f = i (f·c) u_f / ω_f`. This is
//! the choice that reproduces the `(f·c)² |u_f|² / ω_f` term of the ground-state
//! energy; its compatibility with the collective-coordinate constraints is
//! checked numerically through [`decompose_alpha`].

use nalgebra::{DVector, Vector3};
use num_complex::Complex;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::modes::{FormFactor, ModeFunction, ModeLattice};
use crate::scalar::Real;

/// Largest drift speed the velocity solver will consider.
pub const VELOCITY_GUARD: f64 = 0.99;

fn check_speed<T: Real>(c: &Vector3<T>) -> Result<()> {
    let speed = c.norm();
    if !(speed < T::one()) {
        return Err(Error::VelocityOutOfRange { speed: speed.to_f64_lossy() });
    }
    Ok(())
}

/// Closed form of the classical profile
/// `u(f) = ω B f₃ / (ω² − f₃² c²)` for drift `c ẑ`.
///
/// With `c = 0` this is the static profile `B f₃ / ω`.
#[derive(Clone, Copy, Debug)]
pub struct DriftProfile<T> {
    pub form: FormFactor<T>,
    pub velocity: T,
}

impl<T: Real> DriftProfile<T> {
    pub fn new(form: FormFactor<T>, velocity: T) -> Result<Self> {
        check_speed(&Vector3::new(T::zero(), T::zero(), velocity))?;
        Ok(Self { form, velocity })
    }

    fn denominator(&self, f: &Vector3<T>) -> T {
        let omega_sq = self.form.meson_mass * self.form.meson_mass + f.norm_squared();
        let fc = f.z * self.velocity;
        omega_sq - fc * fc
    }
}

impl<T: Real> ModeFunction<T> for DriftProfile<T> {
    fn value(&self, f: &Vector3<T>) -> T {
        let f_sq = f.norm_squared();
        let omega = self.form.omega(f_sq);
        omega * self.form.at(f_sq) * f.z / self.denominator(f)
    }

    fn gradient(&self, f: &Vector3<T>) -> Vector3<T> {
        let f_sq = f.norm_squared();
        let omega = self.form.omega(f_sq);
        let b = self.form.at(f_sq);
        let d = self.denominator(f);
        let u = omega * b * f.z / d;
        let two = T::lit(2.0);
        // ∂ ln(ω B) / ∂f_k = f_k (1/ω² + 2 d ln B / d f²)
        let radial = (omega * omega).recip() + two * self.form.log_slope(f_sq);
        let c_sq = self.velocity * self.velocity;
        let mut grad = f * (u * radial) - f * (u * two / d);
        grad.z += u * two * c_sq * f.z / d + omega * b / d;
        grad
    }
}

/// `u_f = ω_f B_f f₃ / (ω_f² − (f·c)²)` on every mode.
pub fn compute_profile<T: Real>(lattice: &ModeLattice<T>, b: &DVector<T>, c: &Vector3<T>) -> Result<DVector<T>> {
    check_speed(c)?;
    Ok(DVector::from_iterator(
        lattice.len(),
        lattice.modes().iter().zip(b.iter()).map(|(m, &bf)| {
            let fc = m.f.dot(c);
            m.omega * bf * m.f.z / (m.omega * m.omega - fc * fc)
        }),
    ))
}

/// `I_α = Σ_f f_α (f·c) |u_f|² / ω_f`.
pub fn momentum_integral<T: Real>(lattice: &ModeLattice<T>, u: &DVector<T>, c: &Vector3<T>) -> Vector3<T> {
    let component = |a: usize| {
        lattice.sum(|i, m| m.f[a] * m.f.dot(c) * u[i] * u[i] / m.omega)
    };
    Vector3::new(component(0), component(1), component(2))
}

/// `I₃` as a function of the drift speed along ẑ.
pub fn momentum_along_drift<T: Real>(lattice: &ModeLattice<T>, b: &DVector<T>, velocity: T) -> Result<T> {
    let c = Vector3::new(T::zero(), T::zero(), velocity);
    let u = compute_profile(lattice, b, &c)?;
    Ok(momentum_integral(lattice, &u, &c).z)
}

/// Drift speed `c₃` with `g² I₃(c₃) = P`, on the branch that starts at rest.
///
/// Bracketed on `[0, 0.99]`; secant steps are taken when they land inside the
/// bracket and otherwise the bracket is bisected.
pub fn solve_velocity<T: Real>(lattice: &ModeLattice<T>, b: &DVector<T>, g: T, momentum: T) -> Result<T> {
    if !(g > T::zero()) {
        return Err(Error::InvalidParameter(format!("coupling must be positive, got {g}")));
    }
    if momentum == T::zero() {
        return Ok(T::zero());
    }
    let target = momentum.abs();
    let g_sq = g * g;
    let residual = |c: T| -> Result<T> { Ok(g_sq * momentum_along_drift(lattice, b, c)? - target) };

    let mut lo = T::zero();
    let mut hi = T::lit(VELOCITY_GUARD);
    let mut r_lo = -target;
    let mut r_hi = residual(hi)?;
    if r_hi < T::zero() {
        return Err(Error::MomentumUnreachable { target: target.to_f64_lossy(), max: (r_hi + target).to_f64_lossy() });
    }
    let tol = T::lit(1e-13) * T::one().max(target);
    let mut root = hi;
    for _ in 0..200 {
        let secant = hi - r_hi * (hi - lo) / (r_hi - r_lo);
        let mid = (lo + hi) * T::lit(0.5);
        let width = hi - lo;
        // secant only when it lands well inside the bracket
        let guard = width * T::lit(0.01);
        let trial = if secant > lo + guard && secant < hi - guard { secant } else { mid };
        let r = residual(trial)?;
        root = trial;
        if r.abs() <= tol || width <= T::lit(4.0) * <T as Real>::epsilon() * hi {
            break;
        }
        if r < T::zero() {
            lo = trial;
            r_lo = r;
        } else {
            hi = trial;
            r_hi = r;
        }
        // keep the bracket shrinking even if the secant hugs one side
        if trial != mid {
            let rm = residual(mid)?;
            if rm < T::zero() {
                if mid > lo {
                    lo = mid;
                    r_lo = rm;
                }
            } else if mid < hi {
                hi = mid;
                r_hi = rm;
            }
        }
    }
    Ok(if momentum < T::zero() { -root } else { root })
}

/// `α_f = i (f·c) u_f / ω_f`.
pub fn alpha_coefficients<T: Real>(lattice: &ModeLattice<T>, u: &DVector<T>, c: &Vector3<T>) -> DVector<Complex<T>> {
    DVector::from_iterator(
        lattice.len(),
        lattice
            .modes()
            .iter()
            .zip(u.iter())
            .map(|(m, &uf)| Complex::new(T::zero(), m.f.dot(c) * uf / m.omega)),
    )
}

/// Split `α = s + i Σ N_{αf} x_α` into a part `s` obeying `Σ_f M_{fα} s_f = 0`
/// and the collective coefficients `x` (one per active generator).
pub fn decompose_alpha<T: Real>(
    constraints: &ConstraintSet<T>,
    alpha: &DVector<Complex<T>>,
) -> (DVector<Complex<T>>, DVector<T>) {
    // α is purely imaginary, so x = Mᵀ Im α and s = i (Im α − Nᵀ x).
    let im = alpha.map(|a| a.im);
    let x = constraints.m().transpose() * &im;
    let rest = &im - constraints.n().transpose() * &x;
    (rest.map(|v| Complex::new(T::zero(), v)), x)
}

/// `a = Σ_f B_f u_f f`.
pub fn polarization<T: Real>(lattice: &ModeLattice<T>, b: &DVector<T>, u: &DVector<T>) -> Vector3<T> {
    let component = |a: usize| lattice.sum(|i, m| b[i] * u[i] * m.f[a]);
    Vector3::new(component(0), component(1), component(2))
}

/// Spin doublet of the order-g² Hamiltonian with `a` along ẑ.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundDoublet<T> {
    /// `−a₃ + ½ Σ ω (|u|² + |α|²)`, spinor `(0, 1)`.
    pub lower: T,
    /// `+a₃ + ½ Σ ω (|u|² + |α|²)`, spinor `(1, 0)`.
    pub upper: T,
    pub lower_spinor: [T; 2],
    pub upper_spinor: [T; 2],
}

pub fn ground_doublet<T: Real>(
    lattice: &ModeLattice<T>,
    u: &DVector<T>,
    alpha: &DVector<Complex<T>>,
    a3: T,
) -> GroundDoublet<T> {
    let field = lattice.sum(|i, m| m.omega * (u[i] * u[i] + alpha[i].norm_sqr())) * T::lit(0.5);
    let (lower, upper) = (field - a3.abs(), field + a3.abs());
    let (lower_spinor, upper_spinor) = if a3 >= T::zero() {
        ([T::zero(), T::one()], [T::one(), T::zero()])
    } else {
        ([T::one(), T::zero()], [T::zero(), T::one()])
    };
    GroundDoublet { lower, upper, lower_spinor, upper_spinor }
}

/// Terms of the ground-state energy of the drifting particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalEnergy<T> {
    /// Coefficient of g²: `−Σ u B f₃ + ½ Σ |u|² (ω + (f·c)²/ω)`.
    pub field: T,
    /// `−½ m c²`.
    pub kinetic: T,
    /// `g ε₀`.
    pub fluctuation: T,
    pub total: T,
}

pub fn classical_energy<T: Real>(
    lattice: &ModeLattice<T>,
    u: &DVector<T>,
    b: &DVector<T>,
    c: &Vector3<T>,
    g: T,
    particle_mass: T,
    eps0: T,
) -> ClassicalEnergy<T> {
    let half = T::lit(0.5);
    let field = lattice.sum(|i, m| {
        let fc = m.f.dot(c);
        -u[i] * b[i] * m.f.z + half * u[i] * u[i] * (m.omega + fc * fc / m.omega)
    });
    let kinetic = -half * particle_mass * c.norm_squared();
    let fluctuation = g * eps0;
    ClassicalEnergy { field, kinetic, fluctuation, total: g * g * field + kinetic + fluctuation }
}

/// Classical solution for a drift speed along ẑ.
#[derive(Clone, Debug)]
pub struct MeanField<T> {
    pub b: DVector<T>,
    pub u: DVector<T>,
    pub alpha: DVector<Complex<T>>,
    pub c: Vector3<T>,
    pub momentum: Vector3<T>,
    pub a: Vector3<T>,
    pub profile: DriftProfile<T>,
}

impl<T: Real> MeanField<T> {
    pub fn new(lattice: &ModeLattice<T>, form: FormFactor<T>, velocity: T) -> Result<Self> {
        let profile = DriftProfile::new(form, velocity)?;
        let b = lattice.map(|m| form.at(m.f_sq()));
        let c = Vector3::new(T::zero(), T::zero(), velocity);
        let u = compute_profile(lattice, &b, &c)?;
        let alpha = alpha_coefficients(lattice, &u, &c);
        let momentum = momentum_integral(lattice, &u, &c);
        let a = polarization(lattice, &b, &u);
        Ok(Self { b, u, alpha, c, momentum, a, profile })
    }

    pub fn velocity(&self) -> T {
        self.c.z
    }

    pub fn doublet(&self, lattice: &ModeLattice<T>) -> GroundDoublet<T> {
        ground_doublet(lattice, &self.u, &self.alpha, self.a.z)
    }

    pub fn energy(&self, lattice: &ModeLattice<T>, g: T, particle_mass: T, eps0: T) -> ClassicalEnergy<T> {
        classical_energy(lattice, &self.u, &self.b, &self.c, g, particle_mass, eps0)
    }
}

/// Finite-difference residual of the group-velocity identity `∂E/∂P = c`
/// for `E(P) = g² E_field(c(P)) − ½ m c²`, evaluated at drift speed `velocity`.
///
/// Diagnostic only: the identity is not expected to hold at this order.
pub fn group_velocity_residual<T: Real>(
    lattice: &ModeLattice<T>,
    form: FormFactor<T>,
    g: T,
    particle_mass: T,
    velocity: T,
    step: T,
) -> Result<T> {
    let energy_and_momentum = |v: T| -> Result<(T, T)> {
        let mf = MeanField::new(lattice, form, v)?;
        let e = mf.energy(lattice, g, particle_mass, T::zero()).total;
        Ok((e, g * g * mf.momentum.z))
    };
    let (e_plus, p_plus) = energy_and_momentum(velocity + step)?;
    let (e_minus, p_minus) = energy_and_momentum(velocity - step)?;
    Ok((e_plus - e_minus) / (p_plus - p_minus) - velocity)
}
