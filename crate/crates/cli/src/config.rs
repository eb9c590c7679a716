//! Run configuration in flat `section.key = value` form.
//!
//! Blank lines and text after `#` are ignored. Every key is optional and
//! falls back to the reference instance. Angles are in radians.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector5;
use purcell_core::solver::{InitialGuess, Method, ProblemSpec, SolverConfig};
use purcell_core::GroupElement;

use crate::error::CliError;
use crate::tables;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Degrees,
    Radians,
}

impl Units {
    /// Factor from radians to export units.
    pub fn angle_scale(self) -> f64 {
        match self {
            Units::Degrees => 180.0 / std::f64::consts::PI,
            Units::Radians => 1.0,
        }
    }
}

impl FromStr for Units {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deg" | "degrees" => Ok(Units::Degrees),
            "rad" | "radians" => Ok(Units::Radians),
            _ => Err(format!("expected deg or rad, got {s:?}")),
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Degrees => "deg",
            Units::Radians => "rad",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SeedKind {
    Zero,
    #[default]
    Sinusoid,
    /// Controls read from `solver.seed_file`.
    File,
}

/// Initial guess of the direct solver.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub kind: SeedKind,
    pub amplitude: f64,
    pub periods: u32,
    pub counterclockwise: bool,
    pub file: Option<PathBuf>,
}

impl Default for Seed {
    fn default() -> Self {
        match InitialGuess::DOUBLE_LOOP {
            InitialGuess::Sinusoid { amplitude, periods, counterclockwise } => {
                Self { kind: SeedKind::Sinusoid, amplitude, periods, counterclockwise, file: None }
            }
            _ => unreachable!(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    /// Solver settings; `initial_guess` is built from `seed`.
    pub solver: SolverConfig,
    pub seed: Seed,
    pub output_dir: PathBuf,
    pub units: Units,
    /// Sampling interval of the phase-portrait table in seconds.
    pub phase_interval: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: ProblemSpec::default(),
            solver: SolverConfig::default(),
            seed: Seed::default(),
            output_dir: PathBuf::from("out"),
            units: Units::Degrees,
            phase_interval: 5.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("invalid value {value:?} for key {key}, expected true or false"))),
    }
}

fn parse_method(key: &str, value: &str) -> Result<Method, CliError> {
    match value {
        "direct" => Ok(Method::Direct),
        "shooting" => Ok(Method::Shooting),
        _ => Err(CliError::Config(format!("invalid value {value:?} for key {key}, expected direct or shooting"))),
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Direct => "direct",
        Method::Shooting => "shooting",
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if let Some(file) = &config.seed.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.seed.file = Some(base.join(file));
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {line:?}", number + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Assigns one key. Unknown keys are an error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let spec = &mut self.spec;
        let solver = &mut self.solver;
        match key {
            "geometry.len0" => spec.geometry.len0 = parse(key, value)?,
            "geometry.len1" => spec.geometry.len1 = parse(key, value)?,
            "geometry.len2" => spec.geometry.len2 = parse(key, value)?,
            "geometry.drag_tangential" => spec.geometry.drag_tangential = parse(key, value)?,
            "geometry.drag_normal" => spec.geometry.drag_normal = parse(key, value)?,
            "discretization.h" => spec.params.h = parse(key, value)?,
            "discretization.steps" => spec.params.steps = parse(key, value)?,
            "target.alpha1" => spec.alpha_bar.0[0] = parse(key, value)?,
            "target.alpha2" => spec.alpha_bar.0[1] = parse(key, value)?,
            "target.x" => spec.g_bar.x = parse(key, value)?,
            "target.y" => spec.g_bar.y = parse(key, value)?,
            "target.theta" => spec.g_bar.theta = parse(key, value)?,
            "initial.x" => spec.initial_pose.x = parse(key, value)?,
            "initial.y" => spec.initial_pose.y = parse(key, value)?,
            "initial.theta" => spec.initial_pose.theta = parse(key, value)?,
            "solver.method" => solver.method = parse_method(key, value)?,
            "solver.max_outer_iterations" => solver.max_outer_iterations = parse(key, value)?,
            "solver.max_inner_iterations" => solver.max_inner_iterations = parse(key, value)?,
            "solver.max_newton_iterations" => solver.max_newton_iterations = parse(key, value)?,
            "solver.constraint_tolerance" => solver.constraint_tolerance = parse(key, value)?,
            "solver.stationarity_tolerance" => solver.stationarity_tolerance = parse(key, value)?,
            "solver.initial_penalty" => solver.initial_penalty = parse(key, value)?,
            "solver.penalty_growth" => solver.penalty_growth = parse(key, value)?,
            "solver.penalty_cap" => solver.penalty_cap = parse(key, value)?,
            "solver.backtracking_ratio" => solver.backtracking_ratio = parse(key, value)?,
            "solver.sufficient_decrease" => solver.sufficient_decrease = parse(key, value)?,
            "solver.lbfgs_memory" => solver.lbfgs_memory = parse(key, value)?,
            "solver.shooting_seed" => {
                solver.shooting_seed = if value == "none" {
                    None
                } else {
                    let parts: Vec<f64> =
                        value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_, _>>()?;
                    if parts.len() != 5 {
                        return Err(CliError::Config(format!("{key} needs 5 comma-separated values")));
                    }
                    Some(Vector5::from_vec(parts))
                }
            }
            "solver.seed" => {
                self.seed.kind = match value {
                    "zero" => SeedKind::Zero,
                    "sinusoid" => SeedKind::Sinusoid,
                    "file" => SeedKind::File,
                    _ => {
                        return Err(CliError::Config(format!(
                            "invalid value {value:?} for key {key}, expected zero, sinusoid or file"
                        )))
                    }
                }
            }
            "solver.seed_amplitude" => self.seed.amplitude = parse(key, value)?,
            "solver.seed_periods" => self.seed.periods = parse(key, value)?,
            "solver.seed_counterclockwise" => self.seed.counterclockwise = parse_bool(key, value)?,
            "solver.seed_file" => self.seed.file = Some(PathBuf::from(value)),
            "output.directory" => self.output_dir = PathBuf::from(value),
            "output.units" => self.units = value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))?,
            "output.phase_interval" => self.phase_interval = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Problem and solver settings with the seed resolved.
    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let initial_guess = match self.seed.kind {
            SeedKind::Zero => InitialGuess::Zero,
            SeedKind::Sinusoid => InitialGuess::Sinusoid {
                amplitude: self.seed.amplitude,
                periods: self.seed.periods,
                counterclockwise: self.seed.counterclockwise,
            },
            SeedKind::File => {
                let path = self
                    .seed
                    .file
                    .as_ref()
                    .ok_or_else(|| CliError::Config("solver.seed = file needs solver.seed_file".into()))?;
                InitialGuess::Controls(tables::read_controls(path)?)
            }
        };
        let config = SolverConfig { initial_guess, ..self.solver.clone() };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.phase_interval.is_finite() && self.phase_interval > 0.0) {
            return Err(CliError::Config(format!(
                "output.phase_interval must be positive, got {}",
                self.phase_interval
            )));
        }
        Ok(())
    }

    /// Text that [`RunConfig::parse`] maps back to `self`.
    pub fn render(&self) -> String {
        let s = &self.spec;
        let c = &self.solver;
        let g: &GroupElement = &s.g_bar;
        let p = &s.initial_pose;
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("geometry.len0", format!("{:?}", s.geometry.len0));
        put("geometry.len1", format!("{:?}", s.geometry.len1));
        put("geometry.len2", format!("{:?}", s.geometry.len2));
        put("geometry.drag_tangential", format!("{:?}", s.geometry.drag_tangential));
        put("geometry.drag_normal", format!("{:?}", s.geometry.drag_normal));
        put("discretization.h", format!("{:?}", s.params.h));
        put("discretization.steps", s.params.steps.to_string());
        put("target.alpha1", format!("{:?}", s.alpha_bar.alpha1()));
        put("target.alpha2", format!("{:?}", s.alpha_bar.alpha2()));
        put("target.x", format!("{:?}", g.x));
        put("target.y", format!("{:?}", g.y));
        put("target.theta", format!("{:?}", g.theta));
        put("initial.x", format!("{:?}", p.x));
        put("initial.y", format!("{:?}", p.y));
        put("initial.theta", format!("{:?}", p.theta));
        put("solver.method", method_name(c.method).into());
        put("solver.max_outer_iterations", c.max_outer_iterations.to_string());
        put("solver.max_inner_iterations", c.max_inner_iterations.to_string());
        put("solver.max_newton_iterations", c.max_newton_iterations.to_string());
        put("solver.constraint_tolerance", format!("{:?}", c.constraint_tolerance));
        put("solver.stationarity_tolerance", format!("{:?}", c.stationarity_tolerance));
        put("solver.initial_penalty", format!("{:?}", c.initial_penalty));
        put("solver.penalty_growth", format!("{:?}", c.penalty_growth));
        put("solver.penalty_cap", format!("{:?}", c.penalty_cap));
        put("solver.backtracking_ratio", format!("{:?}", c.backtracking_ratio));
        put("solver.sufficient_decrease", format!("{:?}", c.sufficient_decrease));
        put("solver.lbfgs_memory", c.lbfgs_memory.to_string());
        put(
            "solver.shooting_seed",
            match &c.shooting_seed {
                None => "none".into(),
                Some(z) => z.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "),
            },
        );
        put(
            "solver.seed",
            match self.seed.kind {
                SeedKind::Zero => "zero",
                SeedKind::Sinusoid => "sinusoid",
                SeedKind::File => "file",
            }
            .into(),
        );
        put("solver.seed_amplitude", format!("{:?}", self.seed.amplitude));
        put("solver.seed_periods", self.seed.periods.to_string());
        put("solver.seed_counterclockwise", self.seed.counterclockwise.to_string());
        if let Some(file) = &self.seed.file {
            put("solver.seed_file", file.display().to_string());
        }
        put("output.directory", self.output_dir.display().to_string());
        put("output.units", self.units.to_string());
        put("output.phase_interval", format!("{:?}", self.phase_interval));
        out
    }
}
