//! Flat `section.key = value` run configuration.
//!
//! Unknown keys, unparsable values and out-of-range settings are collected
//! into one [`ConfigError`] before anything is computed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use strongcoupling_core::modes::{SourceKind, SourceProfile};
use strongcoupling_core::oracle::DEFAULT_BASIS_CAP;
use strongcoupling_core::spectrum::{Drift, ProfileChoice, SpectrumConfig};
use strongcoupling_core::Reduction;

pub const KEYS: &[&str] = &[
    "lattice.L",
    "lattice.mu",
    "lattice.Lambda",
    "source.kind",
    "source.R",
    "coupling.g",
    "particle.mass",
    "drift.c",
    "drift.P",
    "spectrum.j_max",
    "spectrum.profile_v",
    "spectrum.fluctuations",
    "oracle.modes",
    "oracle.B",
    "oracle.n_max",
    "oracle.cap",
    "oracle.tolerance",
    "oracle.eps0",
    "scan.parameter",
    "scan.values",
    "constraints.c",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.problems.len())?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanParameter {
    Cutoff,
    Radius,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub box_length: f64,
    pub meson_mass: f64,
    pub cutoff: f64,
    pub source: SourceProfile<f64>,
    pub couplings: Vec<f64>,
    pub particle_mass: f64,
    pub drift: Drift<f64>,
    pub twice_j_max: u32,
    pub profile: ProfileChoice,
    pub fluctuations: bool,
    pub oracle_modes: Vec<[i32; 3]>,
    pub oracle_b: Option<Vec<f64>>,
    pub oracle_n_max: usize,
    pub oracle_cap: usize,
    pub oracle_tolerance: f64,
    pub oracle_eps0: Option<f64>,
    pub scan_parameter: ScanParameter,
    pub scan_values: Vec<f64>,
    pub constraint_velocities: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            box_length: 2.0 * PI,
            meson_mass: 1.0,
            cutoff: 3.0,
            source: SourceProfile { kind: SourceKind::Gaussian, radius: 0.7 },
            couplings: vec![4.0, 8.0, 16.0],
            particle_mass: 1.0,
            drift: Drift::Velocity(0.2),
            twice_j_max: 5,
            profile: ProfileChoice::Drift,
            fluctuations: true,
            oracle_modes: vec![[0, 0, 1], [0, 0, -1], [1, 0, 0], [-1, 0, 0]],
            oracle_b: None,
            oracle_n_max: 20,
            oracle_cap: DEFAULT_BASIS_CAP,
            oracle_tolerance: 1e-9,
            oracle_eps0: None,
            scan_parameter: ScanParameter::Cutoff,
            scan_values: vec![2.0, 3.0, 4.0],
            constraint_velocities: vec![0.0, 0.1, 0.3, 0.5],
        }
    }
}

fn parse_f64(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<f64> {
    match raw.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => {
            problems.push(format!("{key}: expected a finite number, got `{raw}`"));
            None
        }
    }
}

fn parse_list(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<Vec<f64>> {
    let before = problems.len();
    let values: Vec<f64> =
        raw.split(',').filter(|s| !s.trim().is_empty()).filter_map(|s| parse_f64(key, s, problems)).collect();
    if problems.len() > before {
        return None;
    }
    if values.is_empty() {
        problems.push(format!("{key}: list is empty"));
        return None;
    }
    Some(values)
}

fn parse_usize(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<usize> {
    raw.trim().parse().map_err(|_| problems.push(format!("{key}: expected a non-negative integer, got `{raw}`"))).ok()
}

fn parse_bool(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<bool> {
    match raw.trim() {
        "true" | "on" | "yes" => Some(true),
        "false" | "off" | "no" => Some(false),
        _ => {
            problems.push(format!("{key}: expected true or false, got `{raw}`"));
            None
        }
    }
}

/// `5/2` or `2.5` → 5.
fn parse_twice_half_odd(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<u32> {
    let raw = raw.trim();
    let twice = if let Some((num, den)) = raw.split_once('/') {
        match (num.trim().parse::<u32>(), den.trim()) {
            (Ok(n), "2") => Some(n),
            _ => None,
        }
    } else {
        raw.parse::<f64>().ok().filter(|x| (2.0 * x).fract() == 0.0 && *x > 0.0).map(|x| (2.0 * x) as u32)
    };
    match twice {
        Some(t) if t % 2 == 1 => Some(t),
        _ => {
            problems.push(format!("{key}: expected a positive half-odd integer such as 5/2, got `{raw}`"));
            None
        }
    }
}

fn parse_modes(key: &str, raw: &str, problems: &mut Vec<String>) -> Option<Vec<[i32; 3]>> {
    let mut modes = Vec::new();
    for triple in raw.split(';').filter(|s| !s.trim().is_empty()) {
        let parts: Vec<Result<i32, _>> = triple.split_whitespace().map(str::parse).collect();
        match parts.as_slice() {
            [Ok(a), Ok(b), Ok(c)] => modes.push([*a, *b, *c]),
            _ => {
                problems.push(format!("{key}: expected `n1 n2 n3` triples separated by `;`, got `{}`", triple.trim()));
                return None;
            }
        }
    }
    if modes.is_empty() {
        problems.push(format!("{key}: list is empty"));
        return None;
    }
    Some(modes)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { problems: vec![format!("cannot read {}: {e}", path.display())] })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut problems = Vec::new();
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                problems.push(format!("line {}: unknown key `{key}`", lineno + 1));
                continue;
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                problems.push(format!("line {}: `{key}` given twice", lineno + 1));
            }
        }

        let mut cfg = RunConfig::default();
        let p = &mut problems;
        for (key, raw) in &entries {
            let key = key.as_str();
            match key {
                "lattice.L" => cfg.box_length = parse_f64(key, raw, p).unwrap_or(cfg.box_length),
                "lattice.mu" => cfg.meson_mass = parse_f64(key, raw, p).unwrap_or(cfg.meson_mass),
                "lattice.Lambda" => cfg.cutoff = parse_f64(key, raw, p).unwrap_or(cfg.cutoff),
                "source.kind" => match raw.as_str() {
                    "gaussian" => cfg.source.kind = SourceKind::Gaussian,
                    "point" => cfg.source.kind = SourceKind::Point,
                    other => p.push(format!("source.kind: expected gaussian or point, got `{other}`")),
                },
                "source.R" => cfg.source.radius = parse_f64(key, raw, p).unwrap_or(cfg.source.radius),
                "coupling.g" => cfg.couplings = parse_list(key, raw, p).unwrap_or_default(),
                "particle.mass" => cfg.particle_mass = parse_f64(key, raw, p).unwrap_or(cfg.particle_mass),
                "drift.c" => {
                    if let Some(c) = parse_f64(key, raw, p) {
                        cfg.drift = Drift::Velocity(c);
                    }
                }
                "drift.P" => {
                    if let Some(m) = parse_f64(key, raw, p) {
                        cfg.drift = Drift::Momentum(m);
                    }
                }
                "spectrum.j_max" => cfg.twice_j_max = parse_twice_half_odd(key, raw, p).unwrap_or(cfg.twice_j_max),
                "spectrum.profile_v" => match raw.as_str() {
                    "drift" => cfg.profile = ProfileChoice::Drift,
                    "static" => cfg.profile = ProfileChoice::Static,
                    other => p.push(format!("spectrum.profile_v: expected drift or static, got `{other}`")),
                },
                "spectrum.fluctuations" => cfg.fluctuations = parse_bool(key, raw, p).unwrap_or(cfg.fluctuations),
                "oracle.modes" => cfg.oracle_modes = parse_modes(key, raw, p).unwrap_or_default(),
                "oracle.B" => cfg.oracle_b = parse_list(key, raw, p),
                "oracle.n_max" => cfg.oracle_n_max = parse_usize(key, raw, p).unwrap_or(cfg.oracle_n_max),
                "oracle.cap" => cfg.oracle_cap = parse_usize(key, raw, p).unwrap_or(cfg.oracle_cap),
                "oracle.tolerance" => cfg.oracle_tolerance = parse_f64(key, raw, p).unwrap_or(cfg.oracle_tolerance),
                "oracle.eps0" => cfg.oracle_eps0 = parse_f64(key, raw, p),
                "scan.parameter" => match raw.as_str() {
                    "Lambda" => cfg.scan_parameter = ScanParameter::Cutoff,
                    "R" => cfg.scan_parameter = ScanParameter::Radius,
                    other => p.push(format!("scan.parameter: expected Lambda or R, got `{other}`")),
                },
                "scan.values" => cfg.scan_values = parse_list(key, raw, p).unwrap_or_default(),
                "constraints.c" => cfg.constraint_velocities = parse_list(key, raw, p).unwrap_or_default(),
                _ => unreachable!("key list checked above"),
            }
        }
        if entries.contains_key("drift.c") && entries.contains_key("drift.P") {
            problems.push("drift.c and drift.P are mutually exclusive".into());
        }
        cfg.validate(&mut problems);
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError { problems })
        }
    }

    fn validate(&self, problems: &mut Vec<String>) {
        let positive = [
            ("lattice.L", self.box_length),
            ("lattice.mu", self.meson_mass),
            ("lattice.Lambda", self.cutoff),
            ("particle.mass", self.particle_mass),
            ("oracle.tolerance", self.oracle_tolerance),
        ];
        for (key, x) in positive {
            if !(x > 0.0) {
                problems.push(format!("{key}: must be positive, got {x}"));
            }
        }
        if self.source.kind == SourceKind::Gaussian && !(self.source.radius > 0.0) {
            problems.push(format!("source.R: must be positive for a gaussian source, got {}", self.source.radius));
        }
        if self.couplings.iter().any(|&g| !(g > 0.0)) {
            problems.push("coupling.g: every coupling must be positive".into());
        }
        if let Drift::Velocity(c) = self.drift {
            if !(c.abs() < strongcoupling_core::meanfield::VELOCITY_GUARD) {
                problems.push(format!("drift.c: must satisfy |c| < 0.99, got {c}"));
            }
        }
        if self.constraint_velocities.iter().any(|c| !(c.abs() < strongcoupling_core::meanfield::VELOCITY_GUARD)) {
            problems.push("constraints.c: every velocity must satisfy |c| < 0.99".into());
        }
        if self.oracle_modes.iter().any(|n| *n == [0, 0, 0]) {
            problems.push("oracle.modes: the zero mode is not allowed".into());
        }
        for n in &self.oracle_modes {
            let partnered = self.oracle_modes.contains(&[-n[0], -n[1], -n[2]]);
            if !partnered && (n[0] != 0 || n[1] != 0) {
                problems.push(format!("oracle.modes: `{} {} {}` has no partner and does not lie along z", n[0], n[1], n[2]));
            }
        }
        if let Some(b) = &self.oracle_b {
            if b.len() != 1 && b.len() != self.oracle_modes.len() {
                problems.push(format!(
                    "oracle.B: give one value or one per mode ({} modes, {} values)",
                    self.oracle_modes.len(),
                    b.len()
                ));
            }
        }
        if self.scan_values.iter().any(|&x| !(x >= 0.0)) {
            problems.push("scan.values: values must be non-negative".into());
        }
        if self.scan_parameter == ScanParameter::Cutoff && self.scan_values.iter().any(|&x| x == 0.0) {
            problems.push("scan.values: a cutoff of zero leaves no modes".into());
        }
    }

    /// Pin the source at rest.
    pub fn fixed_source(mut self) -> Self {
        self.drift = Drift::Velocity(0.0);
        self.constraint_velocities = vec![0.0];
        self
    }

    pub fn spectrum_config(&self, reduction: Reduction) -> SpectrumConfig<f64> {
        SpectrumConfig {
            box_length: self.box_length,
            meson_mass: self.meson_mass,
            cutoff: self.cutoff,
            source: self.source,
            particle_mass: self.particle_mass,
            couplings: self.couplings.clone(),
            drift: self.drift,
            twice_j_max: self.twice_j_max,
            profile: self.profile,
            fluctuations: self.fluctuations,
            reduction,
        }
    }

    /// Every effective setting as sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let mut lines = BTreeMap::new();
        lines.insert("lattice.L", self.box_length.to_string());
        lines.insert("lattice.mu", self.meson_mass.to_string());
        lines.insert("lattice.Lambda", self.cutoff.to_string());
        lines.insert(
            "source.kind",
            match self.source.kind {
                SourceKind::Gaussian => "gaussian",
                SourceKind::Point => "point",
            }
            .to_string(),
        );
        lines.insert("source.R", self.source.radius.to_string());
        lines.insert("coupling.g", list(&self.couplings));
        lines.insert("particle.mass", self.particle_mass.to_string());
        match self.drift {
            Drift::Velocity(c) => lines.insert("drift.c", c.to_string()),
            Drift::Momentum(p) => lines.insert("drift.P", p.to_string()),
        };
        lines.insert("spectrum.j_max", format!("{}/2", self.twice_j_max));
        lines.insert("spectrum.profile_v", profile_name(self.profile).to_string());
        lines.insert("spectrum.fluctuations", self.fluctuations.to_string());
        lines.insert(
            "oracle.modes",
            self.oracle_modes.iter().map(|n| format!("{} {} {}", n[0], n[1], n[2])).collect::<Vec<_>>().join("; "),
        );
        if let Some(b) = &self.oracle_b {
            lines.insert("oracle.B", list(b));
        }
        lines.insert("oracle.n_max", self.oracle_n_max.to_string());
        lines.insert("oracle.cap", self.oracle_cap.to_string());
        lines.insert("oracle.tolerance", self.oracle_tolerance.to_string());
        if let Some(e) = self.oracle_eps0 {
            lines.insert("oracle.eps0", e.to_string());
        }
        lines.insert(
            "scan.parameter",
            match self.scan_parameter {
                ScanParameter::Cutoff => "Lambda",
                ScanParameter::Radius => "R",
            }
            .to_string(),
        );
        lines.insert("scan.values", list(&self.scan_values));
        lines.insert("constraints.c", list(&self.constraint_velocities));
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn profile_name(p: ProfileChoice) -> &'static str {
    match p {
        ProfileChoice::Drift => "drift",
        ProfileChoice::Static => "static",
    }
}
