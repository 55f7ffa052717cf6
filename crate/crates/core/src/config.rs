//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comments run to the end of the line
//! [model]
//! alpha = 1.0          # required
//! kappa = 0.5
//! preset = gaussian-bump-v
//! [grid]
//! ndim = 2
//! cells = 64           # one value for every axis, or one per axis
//! [stepper]
//! scheme = imex
//! t_end = 20
//! [monitors]
//! every = 0.1
//! [sweep]
//! alphas = 0.8, 1.0, 1.5
//! seeds = 1 2 3
//! ```
//!
//! Lists accept commas and/or whitespace as separators. Every key other
//! than `alpha` has a default.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use thiserror::Error;

use crate::grid::{Grid, GridError};
use crate::model::{Coefficients, Params};
use crate::monitors::ClassifierConfig;
use crate::stepper::{RunOptions, Scheme, StepControl};
use crate::sweep::{Preset, Scenario, SweepSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: malformed line '{text}' (expected `[section]` or `key = value`)")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: key '{key}' appears before any section header")]
    NoSection { line: usize, key: String },
    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key '{key}' in [{section}] (first set on line {first_line})")]
    Duplicate {
        line: usize,
        first_line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: '{key}' expects {expected}, got '{value}'")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: invalid value for '{key}': {constraint}")]
    Invalid {
        line: usize,
        key: String,
        constraint: String,
    },
    #[error("{}: missing required key '{key}' in [{section}]", match .section_line { Some(l) => format!("line {l}"), None => "end of input".to_string() })]
    Missing {
        section_line: Option<usize>,
        section: String,
        key: String,
    },
}

const SECTIONS: [(&str, &[&str]); 5] = [
    (
        "model",
        &[
            "alpha",
            "kappa",
            "d_u",
            "d_v",
            "d_w",
            "decay_u",
            "decay_v",
            "decay_w",
            "production",
            "preset",
            "seed",
        ],
    ),
    ("grid", &["ndim", "cells", "lengths"]),
    (
        "stepper",
        &[
            "scheme",
            "dt_max",
            "cfl_advect",
            "cfl_react",
            "solver_tol",
            "max_halvings",
            "t_end",
        ],
    ),
    (
        "monitors",
        &[
            "every",
            "growth_factor",
            "tail_slope",
            "window_fraction",
            "output_dir",
            "snapshot_times",
        ],
    ),
    ("sweep", &["alphas", "seeds", "perturbation", "jobs"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub coeffs: Coefficients,
    pub preset: Preset,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub ndim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub control: StepControl,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub every: f64,
    pub classifier: ClassifierConfig,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Empty means "sweep over `[model] alpha` only".
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub perturbation: f64,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub stepper: StepperConfig,
    pub monitors: MonitorConfig,
    pub sweep: SweepConfig,
}

struct Entry<'a> {
    value: &'a str,
    line: usize,
}

struct Entries<'a> {
    map: HashMap<(&'static str, &'static str), Entry<'a>>,
    section_lines: HashMap<&'static str, usize>,
}

impl<'a> Entries<'a> {
    fn get(&self, section: &'static str, key: &'static str) -> Option<&Entry<'a>> {
        self.map.get(&(section, key))
    }

    fn parse<T: std::str::FromStr>(
        &self,
        section: &'static str,
        key: &'static str,
        expected: &'static str,
    ) -> Result<Option<(T, usize)>, ConfigError> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(|v| Some((v, e.line)))
            .map_err(|_| ConfigError::Type {
                line: e.line,
                key: key.into(),
                expected,
                value: e.value.into(),
            })
    }

    fn number(
        &self,
        section: &'static str,
        key: &'static str,
    ) -> Result<Option<(f64, usize)>, ConfigError> {
        match self.parse::<f64>(section, key, "a number")? {
            Some((v, line)) if !v.is_finite() => Err(ConfigError::Invalid {
                line,
                key: key.into(),
                constraint: format!("must be finite (got {v})"),
            }),
            other => Ok(other),
        }
    }

    fn list<T: std::str::FromStr>(
        &self,
        section: &'static str,
        key: &'static str,
        expected: &'static str,
    ) -> Result<Option<(Vec<T>, usize)>, ConfigError> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>().map_err(|_| ConfigError::Type {
                    line: e.line,
                    key: key.into(),
                    expected,
                    value: t.into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| Some((v, e.line)))
    }
}

fn per_axis<T: Copy>(
    values: Vec<T>,
    ndim: usize,
    line: usize,
    key: &str,
) -> Result<Vec<T>, ConfigError> {
    if values.len() == 1 {
        Ok(vec![values[0]; ndim])
    } else if values.len() == ndim {
        Ok(values)
    } else {
        Err(invalid(
            line,
            key,
            format!("expected 1 or {ndim} values, got {}", values.len()),
        ))
    }
}

fn invalid(line: usize, key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        line,
        key: key.into(),
        constraint: constraint.into(),
    }
}

fn tokenize(text: &str) -> Result<Entries<'_>, ConfigError> {
    let mut map: HashMap<(&'static str, &'static str), Entry<'_>> = HashMap::new();
    let mut section_lines = HashMap::new();
    let mut current: Option<(&'static str, &'static [&'static str])> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            let (sec, keys) = SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| {
                ConfigError::UnknownSection {
                    line,
                    section: name.into(),
                }
            })?;
            section_lines.entry(*sec).or_insert(line);
            current = Some((sec, keys));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: content.into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: content.into(),
            });
        }
        let (section, keys) = current.ok_or_else(|| ConfigError::NoSection {
            line,
            key: key.into(),
        })?;
        let key = *keys
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                section: section.into(),
                key: key.into(),
            })?;
        if let Some(first) = map.get(&(section, key)) {
            return Err(ConfigError::Duplicate {
                line,
                first_line: first.line,
                section: section.into(),
                key: key.into(),
            });
        }
        map.insert((section, key), Entry { value, line });
    }
    Ok(Entries { map, section_lines })
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let e = tokenize(text)?;

    // [model]
    let (alpha, alpha_line) = e
        .number("model", "alpha")?
        .ok_or_else(|| ConfigError::Missing {
            section_line: e.section_lines.get("model").copied(),
            section: "model".into(),
            key: "alpha".into(),
        })?;
    if alpha < 0.0 {
        return Err(invalid(
            alpha_line,
            "alpha",
            format!("alpha must be >= 0 (got {alpha})"),
        ));
    }
    let kappa = match e.number("model", "kappa")? {
        Some((k, line)) if k < 0.0 => {
            return Err(invalid(
                line,
                "kappa",
                format!("kappa must be >= 0 (got {k})"),
            ))
        }
        Some((k, _)) => k,
        None => 1.0,
    };
    let mut coeffs = Coefficients::default();
    for (key, slot) in [
        ("d_u", &mut coeffs.d_u),
        ("d_v", &mut coeffs.d_v),
        ("d_w", &mut coeffs.d_w),
        ("decay_u", &mut coeffs.decay_u),
        ("decay_v", &mut coeffs.decay_v),
        ("decay_w", &mut coeffs.decay_w),
        ("production", &mut coeffs.production),
    ] {
        if let Some((v, line)) = e.number("model", key)? {
            if v <= 0.0 {
                return Err(invalid(line, key, format!("{key} must be > 0 (got {v})")));
            }
            *slot = v;
        }
    }
    let preset = match e.get("model", "preset") {
        Some(entry) => entry
            .value
            .parse::<Preset>()
            .map_err(|err| invalid(entry.line, "preset", err.to_string()))?,
        None => Preset::GaussianBumpV,
    };
    let seed = e
        .parse::<u64>("model", "seed", "a nonnegative integer")?
        .map_or(0, |(s, _)| s);

    // [grid]
    let (ndim, ndim_line) = e
        .parse::<usize>("grid", "ndim", "an integer")?
        .unwrap_or((1, 0));
    if !(1..=3).contains(&ndim) {
        return Err(invalid(
            ndim_line,
            "ndim",
            format!("ndim must be 1, 2 or 3 (got {ndim})"),
        ));
    }
    let (cells, cells_line) = match e.list::<usize>("grid", "cells", "a list of integers")? {
        Some((v, line)) => (per_axis(v, ndim, line, "cells")?, line),
        None => (vec![64; ndim], 0),
    };
    let (lengths, lengths_line) = match e.list::<f64>("grid", "lengths", "a list of numbers")? {
        Some((v, line)) => (per_axis(v, ndim, line, "lengths")?, line),
        None => (vec![1.0; ndim], 0),
    };
    if let Err(err) = Grid::new(&cells, &lengths) {
        let line = match err {
            GridError::InvalidLength { .. } => lengths_line,
            _ => cells_line,
        };
        let key = if line == lengths_line && line != 0 {
            "lengths"
        } else {
            "cells"
        };
        return Err(invalid(line, key, err.to_string()));
    }

    // [stepper]
    let mut control = StepControl::default();
    if let Some(entry) = e.get("stepper", "scheme") {
        control.scheme = entry
            .value
            .parse::<Scheme>()
            .map_err(|msg| invalid(entry.line, "scheme", msg))?;
    }
    for (key, slot) in [
        ("dt_max", &mut control.dt_max),
        ("cfl_advect", &mut control.cfl_advect),
        ("cfl_react", &mut control.cfl_react),
        ("solver_tol", &mut control.solver_tol),
    ] {
        if let Some((v, _)) = e.number("stepper", key)? {
            *slot = v;
        }
    }
    if let Some((n, _)) = e.parse::<usize>("stepper", "max_halvings", "a nonnegative integer")? {
        control.max_halvings = n;
    }
    if let Err(msg) = control.validate() {
        let key = ["dt_max", "cfl_advect", "cfl_react", "solver_tol"]
            .into_iter()
            .find(|k| msg.starts_with(k))
            .unwrap_or("dt_max");
        let line = e.get("stepper", key).map_or(0, |en| en.line);
        return Err(invalid(line, key, msg));
    }
    let t_end = match e.number("stepper", "t_end")? {
        Some((t, line)) if t < 0.0 => {
            return Err(invalid(
                line,
                "t_end",
                format!("t_end must be >= 0 (got {t})"),
            ))
        }
        Some((t, _)) => t,
        None => 10.0,
    };

    // [monitors]
    let positive = |key: &'static str, default: f64| -> Result<f64, ConfigError> {
        match e.number("monitors", key)? {
            Some((v, line)) if v <= 0.0 => {
                Err(invalid(line, key, format!("{key} must be > 0 (got {v})")))
            }
            Some((v, _)) => Ok(v),
            None => Ok(default),
        }
    };
    let defaults = ClassifierConfig::default();
    let every = positive("every", 0.1)?;
    let classifier = ClassifierConfig {
        growth_factor: positive("growth_factor", defaults.growth_factor)?,
        tail_slope: positive("tail_slope", defaults.tail_slope)?,
        window_fraction: positive("window_fraction", defaults.window_fraction)?,
    };
    if classifier.window_fraction > 1.0 {
        let line = e.get("monitors", "window_fraction").map_or(0, |en| en.line);
        return Err(invalid(
            line,
            "window_fraction",
            "window_fraction must be <= 1",
        ));
    }
    let output_dir = match e.get("monitors", "output_dir") {
        Some(en) if en.value.is_empty() => {
            return Err(invalid(
                en.line,
                "output_dir",
                "output_dir must not be empty",
            ))
        }
        Some(en) => PathBuf::from(en.value),
        None => PathBuf::from("out"),
    };
    let snapshot_times = match e.list::<f64>("monitors", "snapshot_times", "a list of numbers")? {
        Some((v, line)) => {
            if let Some(t) = v.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                return Err(invalid(
                    line,
                    "snapshot_times",
                    format!("times must be finite and >= 0 (got {t})"),
                ));
            }
            v
        }
        None => Vec::new(),
    };

    // [sweep]
    let alphas = match e.list::<f64>("sweep", "alphas", "a list of numbers")? {
        Some((v, line)) => {
            if let Some(a) = v.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
                return Err(invalid(
                    line,
                    "alphas",
                    format!("alpha must be >= 0 (got {a})"),
                ));
            }
            v
        }
        None => Vec::new(),
    };
    let seeds = e
        .list::<u64>("sweep", "seeds", "a list of nonnegative integers")?
        .map_or_else(Vec::new, |(v, _)| v);
    let perturbation = match e.number("sweep", "perturbation")? {
        Some((p, line)) if p < 0.0 => {
            return Err(invalid(
                line,
                "perturbation",
                format!("perturbation must be >= 0 (got {p})"),
            ))
        }
        Some((p, _)) => p,
        None => 0.05,
    };
    let jobs = match e.parse::<usize>("sweep", "jobs", "a positive integer")? {
        Some((0, line)) => return Err(invalid(line, "jobs", "jobs must be >= 1")),
        Some((n, _)) => Some(n),
        None => None,
    };

    Ok(Config {
        model: ModelConfig {
            alpha,
            kappa,
            coeffs,
            preset,
            seed,
        },
        grid: GridConfig {
            ndim,
            cells,
            lengths,
        },
        stepper: StepperConfig { control, t_end },
        monitors: MonitorConfig {
            every,
            classifier,
            output_dir,
            snapshot_times,
        },
        sweep: SweepConfig {
            alphas,
            seeds,
            perturbation,
            jobs,
        },
    })
}

fn join<T: fmt::Debug>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Config {
    pub fn params(&self) -> Params {
        Params::with_coefficients(self.model.alpha, self.model.kappa, self.model.coeffs)
            .expect("validated at parse time")
    }

    pub fn grid(&self) -> Grid {
        Grid::new(&self.grid.cells, &self.grid.lengths).expect("validated at parse time")
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            snapshot_times: self.monitors.snapshot_times.clone(),
            ..RunOptions::new(self.stepper.t_end, self.monitors.every)
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let alpha_values = if self.sweep.alphas.is_empty() {
            vec![self.model.alpha]
        } else {
            self.sweep.alphas.clone()
        };
        SweepSpec {
            alpha_values,
            scenario: Scenario {
                grid: self.grid(),
                kappa: self.model.kappa,
                coeffs: self.model.coeffs,
                preset: self.model.preset,
                t_end: self.stepper.t_end,
                monitor_every: self.monitors.every,
                control: self.stepper.control,
            },
            seeds: self.sweep.seeds.clone(),
            perturbation: self.sweep.perturbation,
            classifier: self.monitors.classifier,
        }
    }

    /// Serializes every setting, defaults included; [`parse_config`] reads it back unchanged.
    pub fn to_config_string(&self) -> String {
        let m = &self.model;
        let c = &m.coeffs;
        let s = &self.stepper.control;
        let mut out = String::new();
        let _ = writeln!(out, "[model]");
        let _ = writeln!(out, "alpha = {:?}", m.alpha);
        let _ = writeln!(out, "kappa = {:?}", m.kappa);
        for (key, v) in c.named() {
            let _ = writeln!(out, "{key} = {v:?}");
        }
        let _ = writeln!(out, "preset = {}", m.preset);
        let _ = writeln!(out, "seed = {}", m.seed);
        let _ = writeln!(out, "\n[grid]");
        let _ = writeln!(out, "ndim = {}", self.grid.ndim);
        let _ = writeln!(out, "cells = {}", join(&self.grid.cells));
        let _ = writeln!(out, "lengths = {}", join(&self.grid.lengths));
        let _ = writeln!(out, "\n[stepper]");
        let _ = writeln!(out, "scheme = {}", s.scheme);
        let _ = writeln!(out, "dt_max = {:?}", s.dt_max);
        let _ = writeln!(out, "cfl_advect = {:?}", s.cfl_advect);
        let _ = writeln!(out, "cfl_react = {:?}", s.cfl_react);
        let _ = writeln!(out, "solver_tol = {:?}", s.solver_tol);
        let _ = writeln!(out, "max_halvings = {}", s.max_halvings);
        let _ = writeln!(out, "t_end = {:?}", self.stepper.t_end);
        let mon = &self.monitors;
        let _ = writeln!(out, "\n[monitors]");
        let _ = writeln!(out, "every = {:?}", mon.every);
        let _ = writeln!(out, "growth_factor = {:?}", mon.classifier.growth_factor);
        let _ = writeln!(out, "tail_slope = {:?}", mon.classifier.tail_slope);
        let _ = writeln!(
            out,
            "window_fraction = {:?}",
            mon.classifier.window_fraction
        );
        let _ = writeln!(out, "output_dir = {}", mon.output_dir.display());
        let _ = writeln!(out, "snapshot_times = {}", join(&mon.snapshot_times));
        let sw = &self.sweep;
        let _ = writeln!(out, "\n[sweep]");
        let _ = writeln!(out, "alphas = {}", join(&sw.alphas));
        let _ = writeln!(out, "seeds = {}", join(&sw.seeds));
        let _ = writeln!(out, "perturbation = {:?}", sw.perturbation);
        if let Some(j) = sw.jobs {
            let _ = writeln!(out, "jobs = {j}");
        }
        out
    }
}
