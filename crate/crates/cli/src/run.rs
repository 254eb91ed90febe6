//! Subcommand bodies. Each returns the tables it produced; writing them out is
//! left to the caller.

use nalgebra::DVector;
use strongcoupling_core::constraints::{build_n, full_gram};
use strongcoupling_core::meanfield::solve_velocity;
use strongcoupling_core::modes::{form_factors, SourceKind, SourceProfile};
use strongcoupling_core::oracle::compare_expansion;
use strongcoupling_core::spectrum::{assemble_table, compute_k_gamma, compute_nsq, Drift, ProfileChoice};
use strongcoupling_core::{
    build_mode_lattice, ConstraintSet, DriftProfile, Error, FormFactor, MeanField, ModeFunction, ModeLattice64,
    OracleModel, OracleOptions, Reduction, Stage,
};

use crate::config::{RunConfig, ScanParameter};
use crate::output::{Cell, Table};

/// Tables plus non-fatal warnings.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

fn reduction(serial: bool) -> Reduction {
    if serial {
        Reduction::Serial
    } else {
        Reduction::Parallel
    }
}

fn source_profile(cfg: &RunConfig) -> Result<SourceProfile<f64>, Error> {
    match cfg.source.kind {
        SourceKind::Point => Ok(SourceProfile::point()),
        SourceKind::Gaussian => SourceProfile::gaussian(cfg.source.radius),
    }
}

fn lattice(cfg: &RunConfig, serial: bool) -> Result<ModeLattice64, Error> {
    Ok(build_mode_lattice(cfg.box_length, cfg.meson_mass, cfg.cutoff).map_err(|e| e.at(Stage::Modes))?
        .with_reduction(reduction(serial)))
}

/// Full level table, per-coupling summary and fluctuation frequencies.
pub fn run_spectrum(cfg: &RunConfig, serial: bool) -> Result<Outcome, Error> {
    let table = assemble_table(&cfg.spectrum_config(reduction(serial)))?;
    let mut rows = Table::new(
        "spectrum",
        vec![
            "g", "c", "j", "m_z", "a3", "E0_classical", "eps0", "E2_kinetic", "E2_zero_point", "E2_part", "E3",
            "E4", "E_total",
        ],
    );
    for r in &table.rows {
        rows.push(vec![
            r.g.into(),
            r.c.into(),
            (f64::from(r.spin.twice_j()) / 2.0).into(),
            (f64::from(r.spin.twice_m()) / 2.0).into(),
            r.a3.into(),
            r.e0_classical.into(),
            r.eps0.into(),
            r.e2_kinetic.into(),
            r.e2_zero_point.into(),
            r.e2_part.into(),
            r.e3.into(),
            r.e4.into(),
            r.e_total.into(),
        ]);
    }
    let mut points = Table::new(
        "spectrum_points",
        vec!["g", "c", "P", "a3", "K", "gamma", "N2", "E0_classical", "eps0", "E3", "active_constraints", "n_frequencies"],
    );
    let mut tables = vec![rows];
    for (i, p) in table.points.iter().enumerate() {
        points.push(vec![
            p.g.into(),
            p.velocity.into(),
            p.momentum.into(),
            p.a3.into(),
            p.k.into(),
            p.gamma.into(),
            p.nsq.into(),
            p.e0_classical.into(),
            p.eps0.into(),
            p.e3.into(),
            p.active_constraints.into(),
            p.frequencies.len().into(),
        ]);
        if cfg.fluctuations {
            let mut freq = Table::new(format!("frequencies_{i}"), vec!["index", "nu"]);
            freq.summary.push(("g", p.g.into()));
            for (k, nu) in p.frequencies.iter().enumerate() {
                freq.push(vec![k.into(), (*nu).into()]);
            }
            tables.push(freq);
        }
    }
    tables.insert(1, points);
    Ok(Outcome { tables, warnings: Vec::new() })
}

/// Oracle model for the configured mode subset; `oracle.B` overrides the
/// lattice form factors.
pub fn oracle_model(cfg: &RunConfig) -> Result<OracleModel<f64>, Error> {
    let lat = ModeLattice64::from_indices(cfg.box_length, cfg.meson_mass, &cfg.oracle_modes)
        .map_err(|e| e.at(Stage::Oracle))?;
    let b = match &cfg.oracle_b {
        Some(v) if v.len() == 1 => DVector::from_element(lat.len(), v[0]),
        Some(v) => DVector::from_column_slice(v),
        None => form_factors(&lat, &source_profile(cfg).map_err(|e| e.at(Stage::Modes))?),
    };
    OracleModel::from_lattice(&lat, &b).map_err(|e| e.at(Stage::Oracle))
}

pub fn run_oracle_compare(cfg: &RunConfig, serial: bool) -> Result<Outcome, Error> {
    let model = oracle_model(cfg)?;
    let options = OracleOptions {
        n_max: cfg.oracle_n_max,
        cap: cfg.oracle_cap,
        tolerance: cfg.oracle_tolerance,
        reduction: reduction(serial),
    };
    let report = compare_expansion(&model, &cfg.couplings, &options, cfg.oracle_eps0).map_err(|e| e.at(Stage::Oracle))?;
    let mut table = Table::new(
        "oracle",
        vec![
            "g",
            "E_exact",
            "E_exact_refined",
            "E_expansion",
            "residual",
            "residual_beyond_zero_point",
            "relative_residual",
            "converged",
        ],
    );
    let mut warnings = Vec::new();
    for r in &report.rows {
        if !r.converged {
            warnings.push(format!(
                "g = {}: ground energy moved by {:e} between n_max = {} and {}; row excluded from the fit",
                r.g,
                (r.e_exact - r.e_exact_refined).abs(),
                cfg.oracle_n_max,
                cfg.oracle_n_max + 2
            ));
        }
        table.push(vec![
            r.g.into(),
            r.e_exact.into(),
            r.e_exact_refined.into(),
            r.e_expansion.into(),
            r.residual.into(),
            r.residual_beyond_zero_point.into(),
            r.relative_residual.into(),
            r.converged.into(),
        ]);
    }
    table.summary = vec![
        ("slope", report.slope.into()),
        ("classical_coefficient", report.classical_coefficient.into()),
        ("zero_point", report.zero_point.into()),
        ("eps0", report.eps0.into()),
        ("channels", model.channels().len().into()),
        ("n_max", cfg.oracle_n_max.into()),
    ];
    Ok(Outcome { tables: vec![table], warnings })
}

struct ScanPoint {
    modes: usize,
    values: [f64; 5],
}

fn scan_point(cfg: &RunConfig, serial: bool) -> Result<ScanPoint, Error> {
    let lat = lattice(cfg, serial)?;
    let source = source_profile(cfg).map_err(|e| e.at(Stage::Modes))?;
    let form = FormFactor::new(&lat, source);
    let velocity = match cfg.drift {
        Drift::Velocity(c) => c,
        Drift::Momentum(p) => {
            let b = lat.map(|m| form.at(m.f_sq()));
            solve_velocity(&lat, &b, cfg.couplings[0], p).map_err(|e| e.at(Stage::MeanField))?
        }
    };
    let mf = MeanField::new(&lat, form, velocity).map_err(|e| e.at(Stage::MeanField))?;
    let v_profile = match cfg.profile {
        ProfileChoice::Drift => mf.profile,
        ProfileChoice::Static => DriftProfile::new(form, 0.0).map_err(|e| e.at(Stage::Spectrum))?,
    };
    let v = v_profile.sample(&lat);
    let (k, gamma) = compute_k_gamma(&lat, &v, &mf.b, &mf.c);
    let nsq = compute_nsq(&lat, &v_profile);
    let e0 = mf.energy(&lat, 1.0, cfg.particle_mass, 0.0).field;
    Ok(ScanPoint { modes: lat.len(), values: [k, gamma, nsq, mf.a.z, e0] })
}

/// Lattice sums across a list of cutoffs or source radii. A radius of zero
/// means a point source.
pub fn run_scan(cfg: &RunConfig, serial: bool) -> Result<Outcome, Error> {
    let name = match cfg.scan_parameter {
        ScanParameter::Cutoff => "Lambda",
        ScanParameter::Radius => "R",
    };
    let mut table = Table::new(
        "scan",
        vec![
            name, "n_modes", "K", "gamma", "N2", "a3", "E0_classical", "delta_K", "delta_gamma", "delta_N2",
            "delta_a3", "delta_E0_classical",
        ],
    );
    let mut previous: Option<[f64; 5]> = None;
    for &x in &cfg.scan_values {
        let mut point_cfg = cfg.clone();
        match cfg.scan_parameter {
            ScanParameter::Cutoff => point_cfg.cutoff = x,
            ScanParameter::Radius if x == 0.0 => point_cfg.source.kind = SourceKind::Point,
            ScanParameter::Radius => {
                point_cfg.source.kind = SourceKind::Gaussian;
                point_cfg.source.radius = x;
            }
        }
        let p = scan_point(&point_cfg, serial)?;
        let mut row: Vec<Cell> = vec![x.into(), p.modes.into()];
        row.extend(p.values.iter().map(|&v| Cell::from(v)));
        match previous {
            Some(prev) => row.extend(prev.iter().zip(&p.values).map(|(a, b)| Cell::from(((b - a) / a).abs()))),
            None => row.extend(std::iter::repeat_n(Cell::Empty, 5)),
        }
        table.push(row);
        previous = Some(p.values);
    }
    Ok(Outcome { tables: vec![table], warnings: Vec::new() })
}

pub fn run_dump_lattice(cfg: &RunConfig, serial: bool) -> Result<Outcome, Error> {
    let lat = lattice(cfg, serial)?;
    let b = form_factors(&lat, &source_profile(cfg).map_err(|e| e.at(Stage::Modes))?);
    let mut table = Table::new("lattice", vec!["n1", "n2", "n3", "f1", "f2", "f3", "omega", "B"]);
    for (i, m) in lat.modes().iter().enumerate() {
        table.push(vec![
            m.n[0].into(),
            m.n[1].into(),
            m.n[2].into(),
            m.f.x.into(),
            m.f.y.into(),
            m.f.z.into(),
            m.omega.into(),
            b[i].into(),
        ]);
    }
    table.summary = vec![("n_modes", lat.len().into()), ("volume", lat.volume().into())];
    Ok(Outcome { tables: vec![table], warnings: Vec::new() })
}

/// Duality and projector residuals of the active constraint set at each drift
/// speed, next to the literal six-generator duality residual.
pub fn run_constraints_check(cfg: &RunConfig, serial: bool) -> Result<Outcome, Error> {
    let lat = lattice(cfg, serial)?;
    let source = source_profile(cfg).map_err(|e| e.at(Stage::Modes))?;
    let form = FormFactor::new(&lat, source);
    let mut table = Table::new(
        "constraints",
        vec![
            "c", "active", "inactive", "duality", "projector_m", "projector_n", "idempotency", "gram6_rank",
            "duality6_literal",
        ],
    );
    let mut warnings = Vec::new();
    for &c in &cfg.constraint_velocities {
        let mf = MeanField::new(&lat, form, c).map_err(|e| e.at(Stage::MeanField))?;
        let cs = ConstraintSet::build(&lat, &mf.profile, &mf.profile).map_err(|e| e.at(Stage::Constraints))?;
        let res = cs.residuals();
        let literal = literal_six(&lat, &mf.profile);
        if literal.0 < 6 {
            warnings.push(format!(
                "c = {c}: the six-generator Gram matrix has rank {}; duality holds on the {} active generators only",
                literal.0,
                cs.rank()
            ));
        }
        table.push(vec![
            c.into(),
            res.active.into(),
            Cell::Text(cs.inactive().iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ")),
            res.duality.into(),
            res.projector_m.into(),
            res.projector_n.into(),
            res.idempotency.into(),
            literal.0.into(),
            literal.1.into(),
        ]);
    }
    Ok(Outcome { tables: vec![table], warnings })
}

/// Rank of the full 6×6 Gram matrix and `‖N M − 1₆‖_max` for the best
/// (pseudo-inverse) dual `M`.
pub fn literal_six(lat: &ModeLattice64, u: &dyn ModeFunction<f64>) -> (usize, f64) {
    let n = build_n(lat, u);
    let gram = full_gram(lat, u, u);
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    let rank = gram.clone().svd(false, false).rank(1e-12 * scale);
    let pinv = gram.pseudo_inverse(1e-12 * scale).expect("svd of a symmetric matrix");
    let m = n.transpose() * pinv;
    let residual = (&n * m - nalgebra::DMatrix::identity(6, 6)).amax();
    (rank, residual)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_six_duality_is_obstructed_by_axial_symmetry() {
        let cfg = RunConfig::default();
        let lat = lattice(&cfg, true).unwrap();
        let form = FormFactor::new(&lat, SourceProfile::gaussian(0.7).unwrap());
        let mf = MeanField::new(&lat, form, 0.2).unwrap();
        let (rank, residual) = literal_six(&lat, &mf.profile);
        assert_eq!(rank, 5);
        assert!((residual - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn scan_single_point_has_no_deltas() {
        let cfg = RunConfig { scan_values: vec![3.0], ..Default::default() };
        let out = run_scan(&cfg, true).unwrap();
        assert_eq!(out.tables[0].rows.len(), 1);
        assert!(out.tables[0].column("delta_K").unwrap().iter().all(|c| **c == Cell::Empty));
    }

    #[test]
    fn lattice_dump_shape() {
        let out = run_dump_lattice(&RunConfig::default(), true).unwrap();
        assert_eq!(out.tables[0].rows.len(), 122);
    }
}
