use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use proptest::prelude::*;
use strongcoupling_core::meanfield::{momentum_along_drift, solve_velocity};
use strongcoupling_core::modes::form_factors;
use strongcoupling_core::oscillator::{symplectic_diagonalize, QuadraticForm, ZeroModePolicy};
use strongcoupling_core::spectrum::energy_e4;
use strongcoupling_core::{
    build_mode_lattice, ConstraintSet, FormFactor, MeanField, ModeLattice64, SourceProfile, SpinQuantumNumbers,
};

fn lattice() -> ModeLattice64 {
    build_mode_lattice(2.0 * PI, 1.0, 3.0).unwrap()
}

#[test]
fn gaussian_source_transform_matches_quadrature() {
    let r = 0.7;
    let source = SourceProfile::gaussian(r).unwrap();
    // ρ factorises, so the 3d transform along ẑ reduces to a 1d cosine integral
    let n = 4000;
    let half_width = 14.0 * r;
    let h = 2.0 * half_width / n as f64;
    for f in [0.5, 1.0, 2.0, 3.0] {
        let mut acc = 0.0;
        for k in 0..=n {
            let z = -half_width + h * k as f64;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * (-z * z / (2.0 * r * r)).exp() * (f * z).cos();
        }
        let quad = acc * h / (2.0 * PI * r * r).sqrt();
        let exact = source.fourier(f * f);
        assert!((quad - exact).abs() <= 1e-10 * exact, "f={f}: {quad} vs {exact}");
    }
}

#[test]
fn e4_level_structure_is_exact() {
    let nsq = Ratio::new(7_i64, 3);
    for twice_j in [1_u32, 3, 5] {
        let levels: Vec<Ratio<i64>> = SpinQuantumNumbers::multiplet(twice_j)
            .unwrap()
            .into_iter()
            .map(|q| energy_e4(nsq, q))
            .collect();
        assert_eq!(levels.len(), twice_j as usize + 1);
        for w in levels.windows(2) {
            assert_eq!(w[1] - w[0], nsq / 2);
        }
        let j = Ratio::new(i64::from(twice_j), 2);
        let low = energy_e4(nsq, SpinQuantumNumbers::new(twice_j, -1).unwrap());
        assert_eq!(low, nsq / 2 * (j * (j + 1) + Ratio::new(1, 4)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projector_annihilates_constraints(c in 0.0f64..0.6, seed in proptest::collection::vec(-1.0f64..1.0, 122)) {
        let lat = lattice();
        let form = FormFactor::new(&lat, SourceProfile::gaussian(0.7).unwrap());
        let mf = MeanField::new(&lat, form, c).unwrap();
        let cs = ConstraintSet::build(&lat, &mf.profile, &mf.profile).unwrap();
        let x = DVector::from_vec(seed);
        let ax = cs.project(&x);
        let scale = x.amax().max(1.0);
        prop_assert!((cs.n() * &ax).amax() <= 1e-10 * scale);
        prop_assert!((cs.project(&ax) - &ax).amax() <= 1e-10 * scale);
    }

    #[test]
    fn velocity_round_trip(c in 0.02f64..0.9, g in 1.0f64..20.0) {
        let lat = lattice();
        let b = form_factors(&lat, &SourceProfile::gaussian(0.7).unwrap());
        let p = g * g * momentum_along_drift(&lat, &b, c).unwrap();
        let back = solve_velocity(&lat, &b, g, p).unwrap();
        prop_assert!((back - c).abs() <= 1e-8);
    }

    #[test]
    fn e4_equispaced_for_any_rational(num in 1i64..1000, den in 1i64..1000, twice_j in (0u32..6).prop_map(|k| 2 * k + 1)) {
        let nsq = Ratio::new(num, den);
        let levels: Vec<_> = SpinQuantumNumbers::multiplet(twice_j).unwrap().into_iter().map(|q| energy_e4(nsq, q)).collect();
        for w in levels.windows(2) {
            prop_assert_eq!(w[1] - w[0], nsq / 2);
        }
    }

    #[test]
    fn random_positive_forms_diagonalize_symplectically(entries in proptest::collection::vec(-1.0f64..1.0, 32)) {
        let a = DMatrix::from_row_slice(4, 4, &entries[..16]);
        let b = DMatrix::from_row_slice(4, 4, &entries[16..]);
        let v = &a * a.transpose() + DMatrix::identity(4, 4) * 0.5;
        let t = &b * b.transpose() + DMatrix::identity(4, 4) * 0.5;
        let form = QuadraticForm::new(v, t).unwrap();
        let nm = symplectic_diagonalize(&form, ZeroModePolicy::Error).unwrap();
        prop_assert!(nm.frequencies.iter().all(|&w| w > 0.0));
        prop_assert!(nm.symplectic_residual() <= 1e-10);
    }
}
