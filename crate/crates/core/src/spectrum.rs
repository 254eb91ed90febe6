//! Spin-structure energies and assembled level tables.
//!
//! ```text
//! E = g² E₀ + g ε₀ + E₂ + g⁻¹ E₃ + g⁻² E₄
//! E₃ = ¾ K² √(m/γ)
//! E₄ = ½ N² (j(j+1) + m_z + ¾)
//! K  = ⅓ Σ ω f² |v|²        γ = ⅓ Σ B² f² f₃² / (ω² − (f·c)²)
//! N² = ⅓ Σ ω |f × ∇v|²
//! ```
//!
//! `E₃` is implemented exactly as written, including the first power of the
//! denominator in `γ`; its dimensions are unusual and are not repaired here.
//! `v` is the classical profile `u` unless the static profile is selected.
//! The `E₂` column only carries the kinetic term `−½ m c²` and the bare field
//! zero point `½ Σ ω`; it is a partial value.

use std::fmt;

use nalgebra::{DVector, Vector3};
use num_traits::{FromPrimitive, Num};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result, Stage, StageExt};
use crate::meanfield::{solve_velocity, DriftProfile, MeanField};
use crate::modes::{build_mode_lattice, FormFactor, ModeFunction, ModeLattice, SourceProfile};
use crate::oscillator::{build_quadratic_form, symplectic_diagonalize, FluctuationOptions, ZeroModePolicy};
use crate::scalar::{Real, Reduction};

/// Total angular momentum `j` and its z-projection `m_z`, stored doubled so
/// that half-odd-integers stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinQuantumNumbers {
    twice_j: u32,
    twice_m: i32,
}

impl SpinQuantumNumbers {
    /// `j = twice_j / 2`, `m_z = twice_m / 2`; `j` must be half-odd and
    /// `|m_z| ≤ j` with `j − m_z` integral.
    pub fn new(twice_j: u32, twice_m: i32) -> Result<Self> {
        let valid = twice_j % 2 == 1
            && twice_m.unsigned_abs() <= twice_j
            && (i64::from(twice_j) - i64::from(twice_m)) % 2 == 0;
        if !valid {
            return Err(Error::InvalidQuantumNumbers { j: half(i64::from(twice_j)), m: half(i64::from(twice_m)) });
        }
        Ok(Self { twice_j, twice_m })
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    pub fn twice_m(&self) -> i32 {
        self.twice_m
    }

    pub fn j<T: Real>(&self) -> T {
        T::lit(f64::from(self.twice_j) / 2.0)
    }

    pub fn m<T: Real>(&self) -> T {
        T::lit(f64::from(self.twice_m) / 2.0)
    }

    /// All `2j + 1` states of the multiplet, ordered by `m_z`.
    pub fn multiplet(twice_j: u32) -> Result<Vec<Self>> {
        let tj = i32::try_from(twice_j).map_err(|_| Error::InvalidParameter("j too large".into()))?;
        (-tj..=tj).step_by(2).map(|tm| Self::new(twice_j, tm)).collect()
    }

    /// `j(j+1) + m_z + ¾` as the exact fraction `numerator / 4`.
    pub fn e4_bracket_quarters(&self) -> i64 {
        let tj = i64::from(self.twice_j);
        tj * (tj + 2) + 2 * i64::from(self.twice_m) + 3
    }
}

fn half(twice: i64) -> String {
    if twice % 2 == 0 {
        format!("{}", twice / 2)
    } else {
        format!("{twice}/2")
    }
}

impl fmt::Display for SpinQuantumNumbers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j={} m={}", half(i64::from(self.twice_j)), half(i64::from(self.twice_m)))
    }
}

/// `(K, γ)` for profile values `v` on the lattice.
pub fn compute_k_gamma<T: Real>(lattice: &ModeLattice<T>, v: &DVector<T>, b: &DVector<T>, c: &Vector3<T>) -> (T, T) {
    let third = T::lit(1.0 / 3.0);
    let k = lattice.sum(|i, m| m.omega * m.f_sq() * v[i] * v[i]) * third;
    let gamma = lattice.sum(|i, m| {
        let fc = m.f.dot(c);
        b[i] * b[i] * m.f_sq() * m.f.z * m.f.z / (m.omega * m.omega - fc * fc)
    }) * third;
    (k, gamma)
}

/// `E₃ = ¾ K² √(m/γ)`.
pub fn energy_e3<T: Real>(k: T, gamma: T, particle_mass: T) -> Result<T> {
    if !(gamma > T::zero()) {
        return Err(Error::NonPositiveGamma(gamma.to_f64_lossy()));
    }
    if !(particle_mass > T::zero()) {
        return Err(Error::InvalidParameter(format!("particle mass must be positive, got {particle_mass}")));
    }
    Ok(T::lit(0.75) * k * k * (particle_mass / gamma).sqrt())
}

/// `N² = ⅓ Σ ω |f × ∇v|²` with the gradient taken analytically.
pub fn compute_nsq<T: Real>(lattice: &ModeLattice<T>, v: &dyn ModeFunction<T>) -> T {
    lattice.sum(|_, m| m.omega * m.f.cross(&v.gradient(&m.f)).norm_squared()) * T::lit(1.0 / 3.0)
}

/// `E₄ = ½ N² (j(j+1) + m_z + ¾)`.
///
/// Generic over any numeric type so that level structure can be checked in
/// exact rational arithmetic.
pub fn energy_e4<T>(nsq: T, q: SpinQuantumNumbers) -> T
where
    T: Num + FromPrimitive + Copy,
{
    let quarters = T::from_i64(q.e4_bracket_quarters()).expect("bracket fits the numeric type");
    let eight = T::from_i64(8).expect("small integer");
    nsq * quarters / eight
}

/// Which profile plays the role of `v` in `K` and `N²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProfileChoice {
    /// The drifting classical profile `u`.
    #[default]
    Drift,
    /// The static profile `B f₃ / ω`.
    Static,
}

/// How the drift velocity is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drift<T> {
    /// Velocity along ẑ, the same for every coupling.
    Velocity(T),
    /// Total momentum along ẑ; the velocity is solved per coupling.
    Momentum(T),
}

/// Inputs to a full spectrum run.
#[derive(Clone, Debug)]
pub struct SpectrumConfig<T> {
    pub box_length: T,
    pub meson_mass: T,
    pub cutoff: T,
    pub source: SourceProfile<T>,
    pub particle_mass: T,
    pub couplings: Vec<T>,
    pub drift: Drift<T>,
    /// Largest `2j` in the table; all half-odd `j` up to it are listed.
    pub twice_j_max: u32,
    pub profile: ProfileChoice,
    /// Include `g ε₀` from the fluctuation spectrum.
    pub fluctuations: bool,
    pub reduction: Reduction,
}

impl<T: Real> Default for SpectrumConfig<T> {
    fn default() -> Self {
        Self {
            box_length: T::two_pi(),
            meson_mass: T::one(),
            cutoff: T::lit(3.0),
            source: SourceProfile { kind: crate::modes::SourceKind::Gaussian, radius: T::lit(0.7) },
            particle_mass: T::one(),
            couplings: vec![T::lit(4.0), T::lit(8.0), T::lit(16.0)],
            drift: Drift::Velocity(T::lit(0.2)),
            twice_j_max: 5,
            profile: ProfileChoice::Drift,
            fluctuations: true,
            reduction: Reduction::Serial,
        }
    }
}

/// Per-coupling quantities shared by all rows at that coupling.
#[derive(Clone, Debug)]
pub struct GridPoint<T: Real> {
    pub g: T,
    pub velocity: T,
    pub momentum: T,
    pub a3: T,
    pub k: T,
    pub gamma: T,
    pub nsq: T,
    pub e0_classical: T,
    pub eps0: T,
    pub e3: T,
    pub active_constraints: usize,
    pub frequencies: Vec<T>,
}

/// One `(g, j, m_z)` entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow<T> {
    pub g: T,
    pub c: T,
    pub spin: SpinQuantumNumbers,
    pub a3: T,
    pub e0_classical: T,
    pub eps0: T,
    pub e2_kinetic: T,
    pub e2_zero_point: T,
    pub e2_part: T,
    pub e3: T,
    pub e4: T,
    pub e_total: T,
}

/// `g² e0 + g ε₀ + e2 + e3/g + e4/g²`, in this evaluation order.
pub fn assemble_total<T: Real>(g: T, e0: T, eps0: T, e2: T, e3: T, e4: T) -> T {
    g * g * e0 + g * eps0 + e2 + e3 / g + e4 / (g * g)
}

impl<T: Real> SpectrumRow<T> {
    /// Difference between `e_total` and a fresh assembly of the components.
    pub fn assembly_residual(&self) -> T {
        self.e_total - assemble_total(self.g, self.e0_classical, self.eps0, self.e2_part, self.e3, self.e4)
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumTable<T: Real> {
    pub points: Vec<GridPoint<T>>,
    pub rows: Vec<SpectrumRow<T>>,
}

/// Run the whole chain (lattice, mean field, constraints, fluctuations, spin
/// terms) for every coupling and every `(j, m_z)`.
pub fn assemble_table<T: Real>(config: &SpectrumConfig<T>) -> Result<SpectrumTable<T>> {
    if config.couplings.is_empty() {
        return Err(Error::InvalidParameter("coupling list is empty".into()));
    }
    if config.twice_j_max % 2 == 0 {
        return Err(Error::InvalidParameter(format!("2 j_max must be odd, got {}", config.twice_j_max)));
    }
    let lattice = build_mode_lattice(config.box_length, config.meson_mass, config.cutoff)
        .stage(Stage::Modes)?
        .with_reduction(config.reduction);
    let form = FormFactor::new(&lattice, config.source);
    let b = lattice.map(|m| form.at(m.f_sq()));
    let half = T::lit(0.5);
    let zero_point = lattice.sum(|_, m| m.omega) * half;
    let multiplets: Vec<Vec<SpinQuantumNumbers>> = (1..=config.twice_j_max)
        .step_by(2)
        .map(SpinQuantumNumbers::multiplet)
        .collect::<Result<_>>()
        .stage(Stage::Spectrum)?;

    let mut points = Vec::with_capacity(config.couplings.len());
    let mut rows = Vec::new();
    for &g in &config.couplings {
        if !(g > T::zero()) {
            return Err(Error::InvalidParameter(format!("coupling must be positive, got {g}")).at(Stage::MeanField));
        }
        let velocity = match config.drift {
            Drift::Velocity(c) => c,
            Drift::Momentum(p) => solve_velocity(&lattice, &b, g, p).stage(Stage::MeanField)?,
        };
        let mf = MeanField::new(&lattice, form, velocity).stage(Stage::MeanField)?;
        let constraints = ConstraintSet::build(&lattice, &mf.profile, &mf.profile).stage(Stage::Constraints)?;

        let (eps0, frequencies) = if config.fluctuations {
            let qf = build_quadratic_form(&lattice, &mf, &constraints, config.particle_mass, FluctuationOptions::default())
                .stage(Stage::Oscillator)?;
            let nm = symplectic_diagonalize(&qf, ZeroModePolicy::Error).stage(Stage::Oscillator)?;
            (nm.eps0, nm.frequencies)
        } else {
            (T::zero(), Vec::new())
        };

        let v_profile = match config.profile {
            ProfileChoice::Drift => mf.profile,
            ProfileChoice::Static => DriftProfile::new(form, T::zero()).stage(Stage::Spectrum)?,
        };
        let v = v_profile.sample(&lattice);
        let (k, gamma) = compute_k_gamma(&lattice, &v, &mf.b, &mf.c);
        let e3 = energy_e3(k, gamma, config.particle_mass).stage(Stage::Spectrum)?;
        let nsq = compute_nsq(&lattice, &v_profile);

        let energy = mf.energy(&lattice, g, config.particle_mass, eps0);
        let e2_kinetic = energy.kinetic;
        let e2_part = e2_kinetic + zero_point;
        for multiplet in &multiplets {
            for &spin in multiplet {
                let e4 = energy_e4(nsq, spin);
                rows.push(SpectrumRow {
                    g,
                    c: velocity,
                    spin,
                    a3: mf.a.z,
                    e0_classical: energy.field,
                    eps0,
                    e2_kinetic,
                    e2_zero_point: zero_point,
                    e2_part,
                    e3,
                    e4,
                    e_total: assemble_total(g, energy.field, eps0, e2_part, e3, e4),
                });
            }
        }
        points.push(GridPoint {
            g,
            velocity,
            momentum: g * g * mf.momentum.z,
            a3: mf.a.z,
            k,
            gamma,
            nsq,
            e0_classical: energy.field,
            eps0,
            e3,
            active_constraints: constraints.rank(),
            frequencies,
        });
    }
    Ok(SpectrumTable { points, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::form_factors;
    use std::f64::consts::PI;

    #[test]
    fn quantum_number_validation() {
        assert!(SpinQuantumNumbers::new(1, -1).is_ok());
        assert!(SpinQuantumNumbers::new(3, 3).is_ok());
        assert!(SpinQuantumNumbers::new(2, 0).is_err());
        assert!(SpinQuantumNumbers::new(3, 5).is_err());
        assert!(SpinQuantumNumbers::new(3, 0).is_err());
        assert_eq!(SpinQuantumNumbers::multiplet(5).unwrap().len(), 6);
        assert_eq!(SpinQuantumNumbers::new(3, -1).unwrap().to_string(), "j=3/2 m=-1/2");
    }

    #[test]
    fn e3_examples() {
        assert_eq!(energy_e3(0.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(energy_e3(1.0, 1.0, 1.0).unwrap(), 0.75);
        let a = energy_e3(0.3f64, 0.7, 1.3).unwrap();
        let b = energy_e3(0.6, 0.7, 1.3).unwrap();
        assert!((b - 4.0 * a).abs() <= 1e-15);
        assert!(matches!(energy_e3(1.0, 0.0, 1.0), Err(Error::NonPositiveGamma(_))));
        assert!(energy_e3(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn e4_examples() {
        let q = SpinQuantumNumbers::new(3, 3).unwrap();
        assert_eq!(energy_e4(2.0, q), 6.0);
        let low = SpinQuantumNumbers::new(1, -1).unwrap();
        assert_eq!(energy_e4(5.0, low), 2.5);
    }

    #[test]
    fn k_gamma_at_rest_and_single_pair() {
        let lat = ModeLattice::from_indices(2.0 * PI, 1.0, &[[0, 0, -1], [0, 0, 1]]).unwrap();
        let b = DVector::from_element(2, 0.1);
        let w = 2f64.sqrt();
        let u = lat.map(|m| 0.1 * m.f.z / m.omega);
        let (k, gamma) = compute_k_gamma(&lat, &u, &b, &Vector3::zeros());
        let k_ref = (1.0 / 3.0) * 2.0 * w * (0.1 / w).powi(2);
        let gamma_ref = (1.0 / 3.0) * 2.0 * 0.01 / 2.0;
        assert!((k - k_ref).abs() <= 1e-17);
        assert!((gamma - gamma_ref).abs() <= 1e-17);
        let (k0, _) = compute_k_gamma(&lat, &DVector::zeros(2), &b, &Vector3::zeros());
        assert_eq!(k0, 0.0);
    }

    struct Radial;

    impl ModeFunction<f64> for Radial {
        fn value(&self, f: &Vector3<f64>) -> f64 {
            (-f.norm_squared()).exp()
        }
        fn gradient(&self, f: &Vector3<f64>) -> Vector3<f64> {
            f * (-2.0 * (-f.norm_squared()).exp())
        }
    }

    #[test]
    fn nsq_vanishes_for_radial_profiles() {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        assert!(compute_nsq(&lat, &Radial) <= 1e-30);
    }

    #[test]
    fn nsq_is_nonnegative_and_cubic_invariant() {
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let form = FormFactor::new(&lat, SourceProfile::gaussian(0.7).unwrap());
        let prof = DriftProfile::new(form, 0.3).unwrap();
        let nsq = compute_nsq(&lat, &prof);
        assert!(nsq > 0.0);
        // swap x and y: a ẑ-preserving cubic element, realised as a permutation of the modes
        let order: Vec<usize> =
            lat.modes().iter().map(|m| lat.index_of([m.n[1], m.n[0], m.n[2]]).unwrap()).collect();
        let swapped = lat.permuted(&order);
        let nsq2 = compute_nsq(&swapped, &prof);
        assert!((nsq - nsq2).abs() <= 1e-12 * nsq);
    }

    #[test]
    fn table_assembly_identity_and_shape() {
        let config = SpectrumConfig::<f64> { couplings: vec![4.0, 8.0], ..Default::default() };
        let table = assemble_table(&config).unwrap();
        assert_eq!(table.rows.len(), 2 * (2 + 4 + 6));
        for row in &table.rows {
            assert_eq!(row.assembly_residual(), 0.0);
        }
    }

    #[test]
    fn table_static_row_matches_hand_sum() {
        let config = SpectrumConfig::<f64> {
            couplings: vec![5.0],
            drift: Drift::Velocity(0.0),
            ..Default::default()
        };
        let table = assemble_table(&config).unwrap();
        let lat = build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap();
        let b = form_factors(&lat, &SourceProfile::gaussian(0.7).unwrap());
        let stat: f64 = -0.5 * lat.modes().iter().enumerate().map(|(i, m)| b[i] * b[i] * m.f.z * m.f.z / m.omega).sum::<f64>();
        let e0 = table.points[0].e0_classical;
        assert!((e0 - stat).abs() <= 1e-12 * stat.abs());
        assert_eq!(table.rows[0].e2_kinetic, 0.0);
    }

    #[test]
    fn momentum_drift_is_solved_per_coupling() {
        let config = SpectrumConfig::<f64> { couplings: vec![4.0, 8.0], drift: Drift::Momentum(0.02), ..Default::default() };
        let table = assemble_table(&config).unwrap();
        assert!(table.points[0].velocity > table.points[1].velocity);
        for p in &table.points {
            assert!((p.momentum - 0.02).abs() <= 1e-10);
        }
    }

    #[test]
    fn errors_carry_stage() {
        let config = SpectrumConfig::<f64> { cutoff: 0.1, ..Default::default() };
        let err = assemble_table(&config).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Modes));
        let config = SpectrumConfig::<f64> { drift: Drift::Velocity(1.5), ..Default::default() };
        assert_eq!(assemble_table(&config).unwrap_err().stage(), Some(Stage::MeanField));
        let config = SpectrumConfig::<f64> { drift: Drift::Momentum(1e6), ..Default::default() };
        assert_eq!(assemble_table(&config).unwrap_err().stage(), Some(Stage::MeanField));
    }

    #[test]
    fn splitting_shrinks_with_coupling() {
        let config = SpectrumConfig::<f64> { couplings: vec![4.0, 8.0], twice_j_max: 3, ..Default::default() };
        let table = assemble_table(&config).unwrap();
        let spread = |g: f64| {
            let es: Vec<f64> = table.rows.iter().filter(|r| r.g == g && r.spin.twice_j() == 3).map(|r| r.e_total).collect();
            es.iter().cloned().fold(f64::MIN, f64::max) - es.iter().cloned().fold(f64::MAX, f64::min)
        };
        let ratio = spread(4.0) / spread(8.0);
        assert!((ratio - 4.0).abs() <= 1e-6, "{ratio}");
    }
}
