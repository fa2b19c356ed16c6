//! Run configuration: a flat `key = value` file plus `--key value`
//! overrides from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mhd_core::timestepper::{Scheme, SimParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Conserve,
    Converge,
    Compare,
    Solve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Conserve => "conserve",
            Experiment::Converge => "converge",
            Experiment::Compare => "compare",
            Experiment::Solve => "solve",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conserve" => Ok(Experiment::Conserve),
            "converge" => Ok(Experiment::Converge),
            "compare" => Ok(Experiment::Compare),
            "solve" => Ok(Experiment::Solve),
            _ => Err(format!("unknown experiment {s:?}")),
        }
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Main => "main",
        Scheme::Reference => "reference",
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "main" => Ok(Scheme::Main),
        "reference" => Ok(Scheme::Reference),
        _ => Err(format!("unknown scheme {s:?}, expected main or reference")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Subdivisions per axis.
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub re_inv: f64,
    pub rm_inv: f64,
    pub coupling: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub krylov_tol: f64,
    pub krylov_maxit: usize,
    pub scheme: Scheme,
    pub output_dir: PathBuf,
    /// Steps between VTK dumps in `solve`; 0 dumps only the final state.
    pub dump_every: usize,
    /// Mesh list of the convergence study.
    pub meshes: Vec<usize>,
}

/// Recognised keys, in manifest order.
pub const KEYS: [&str; 15] = [
    "experiment",
    "n",
    "dt",
    "t_end",
    "re_inv",
    "rm_inv",
    "coupling",
    "picard_tol",
    "picard_max",
    "krylov_tol",
    "krylov_maxit",
    "scheme",
    "output_dir",
    "dump_every",
    "meshes",
];

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        let sim = SimParams::default();
        RunConfig {
            experiment,
            n: 8,
            dt: 0.005,
            t_end: 1.0,
            re_inv: 0.0,
            rm_inv: 0.0,
            coupling: 1.0,
            picard_tol: sim.picard_tol,
            picard_max: sim.picard_max,
            krylov_tol: sim.krylov_tol,
            krylov_maxit: sim.krylov_maxit,
            scheme: Scheme::Main,
            output_dir: PathBuf::from("out"),
            dump_every: 0,
            meshes: vec![4, 8, 16],
        }
    }

    /// Number of time steps, `t_end / dt` rounded.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            dt: self.dt,
            re_inv: self.re_inv,
            rm_inv: self.rm_inv,
            coupling: self.coupling,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
            krylov_tol: self.krylov_tol,
            krylov_maxit: self.krylov_maxit,
            scheme: self.scheme,
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "experiment" => {
                let e: Experiment = value.parse().map_err(|e| CliError::Config(format!("experiment: {e}")))?;
                if e != self.experiment {
                    return Err(CliError::Config(format!(
                        "config is for {}, but {} was requested",
                        e.name(),
                        self.experiment.name()
                    )));
                }
            }
            "n" => self.n = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "re_inv" => self.re_inv = num(key, value)?,
            "rm_inv" => self.rm_inv = num(key, value)?,
            "coupling" => self.coupling = num(key, value)?,
            "picard_tol" => self.picard_tol = num(key, value)?,
            "picard_max" => self.picard_max = num(key, value)?,
            "krylov_tol" => self.krylov_tol = num(key, value)?,
            "krylov_maxit" => self.krylov_maxit = num(key, value)?,
            "scheme" => self.scheme = parse_scheme(value).map_err(CliError::Config)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "dump_every" => self.dump_every = num(key, value)?,
            "meshes" => {
                self.meshes = value
                    .split(',')
                    .map(|s| num::<usize>(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines. Blank lines and `#` comments are skipped,
    /// and a key may appear only once.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", lineno + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if seen.contains(&k) {
                return Err(CliError::Config(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
            seen.push(k);
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(CliError::Config(format!("expected --key, got {flag:?}")));
            };
            let value = it
                .next()
                .ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Checks ranges and the time grid.
    pub fn validate(&self) -> Result<(), CliError> {
        self.sim_params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(CliError::Config(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        positive("n", self.n)?;
        if self.meshes.is_empty() {
            return Err(CliError::Config("meshes must list at least one mesh".into()));
        }
        for &m in &self.meshes {
            positive("meshes", m)?;
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CliError::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(CliError::Config(format!(
                "t_end = {} is not a whole number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// Defaults, then the file, then the overrides; validated.
    pub fn resolve(experiment: Experiment, file_text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::new(experiment);
        cfg.apply_text(file_text)?;
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The manifest form: every key, one per line, values in shortest
/// round-trip notation.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let meshes: Vec<String> = self.meshes.iter().map(|m| m.to_string()).collect();
        let values = [
            self.experiment.name().to_string(),
            self.n.to_string(),
            self.dt.to_string(),
            self.t_end.to_string(),
            self.re_inv.to_string(),
            self.rm_inv.to_string(),
            self.coupling.to_string(),
            self.picard_tol.to_string(),
            self.picard_max.to_string(),
            self.krylov_tol.to_string(),
            self.krylov_maxit.to_string(),
            scheme_name(self.scheme).to_string(),
            self.output_dir.display().to_string(),
            self.dump_every.to_string(),
            meshes.join(","),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
