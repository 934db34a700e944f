//! Run configuration: a TOML file with one section per module.
//!
//! ```toml
//! scenario = "two_slit"
//! seed = 2024
//!
//! [grid]
//! axes = [[-24.0, 24.0, 256], [-32.0, 32.0, 256]]
//! hbar = 1.0
//! masses = [1.0, 1.0]
//!
//! [propagator]
//! dt = 0.01
//! t_final = 6.0
//! snapshot_times = [0.0, 3.0, 6.0]
//! snapshot_every = 10
//!
//! [ensemble]
//! n = 200
//! dt_traj = 0.01
//! init = "uniform_in_slits"
//! workers = 4
//!
//! [subsystem]
//! x0 = 1.0
//! y0 = 0.5
//!
//! [measurement]
//! alpha_sq = 0.36
//!
//! [output]
//! dir = "out/two_slit"
//! plots = true
//!
//! [tolerances]
//! ks = 0.02
//! ```
//!
//! Every key except `scenario` and `seed` is optional. Unknown keys are errors.

use std::path::{Path, PathBuf};

use pilotwave::scenarios::{InitKind, ScenarioParams, TOLERANCE_KEYS};
use toml::{Table, Value};

use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub params: ScenarioParams,
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub plots: bool,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.params.seed
    }
}

/// All problems found in a config file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}", .0.join("\n"))]
pub struct ConfigErrors(pub Vec<String>);

impl ConfigErrors {
    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|e| e.contains(needle))
    }
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("grid", &["axes", "hbar", "masses"]),
    (
        "propagator",
        &["dt", "t_final", "snapshot_times", "snapshot_every"],
    ),
    ("ensemble", &["n", "dt_traj", "init", "workers"]),
    ("subsystem", &["x0", "y0"]),
    ("measurement", &["alpha_sq"]),
    ("output", &["dir", "plots"]),
    ("tolerances", &TOLERANCE_KEYS),
];

pub fn parse_config(path: &Path, registry: &Registry) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    parse_config_str(&text, registry)
}

pub fn parse_config_str(text: &str, registry: &Registry) -> Result<RunConfig, ConfigErrors> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message())]))?;
    let mut p = Parser::default();

    for (key, value) in &table {
        match (key.as_str(), value) {
            ("scenario" | "seed", _) => {}
            (name, Value::Table(_)) if SECTIONS.iter().any(|(s, _)| *s == name) => {}
            (name, _) => p.err(name, "unknown key"),
        }
    }

    let scenario = match table.get("scenario") {
        None => {
            p.err("scenario", "missing");
            String::new()
        }
        Some(Value::String(s)) => {
            if registry.get(s).is_none() {
                p.err(
                    "scenario",
                    format!(
                        "unknown scenario `{s}` (known: {})",
                        registry.ids().join(", ")
                    ),
                );
            }
            s.clone()
        }
        Some(_) => {
            p.err("scenario", "expected a string");
            String::new()
        }
    };
    let seed = match table.get("seed") {
        None => {
            p.err("seed", "missing; runs require an explicit seed");
            0
        }
        Some(v) => p.uint("seed", v).unwrap_or(0) as u64,
    };

    let mut params = ScenarioParams::with_seed(seed);
    let mut workers = None;
    let mut output_dir = PathBuf::from("out");
    let mut plots = true;

    for (section, keys) in SECTIONS {
        let Some(Value::Table(body)) = table.get(section) else {
            continue;
        };
        for (key, value) in body {
            let field = format!("{section}.{key}");
            if !keys.contains(&key.as_str()) {
                p.err(&field, "unknown key");
                continue;
            }
            match (section, key.as_str()) {
                ("grid", "axes") => params.axes = p.axes(&field, value),
                ("grid", "hbar") => params.hbar = p.positive(&field, value),
                ("grid", "masses") => {
                    params.masses = p.list(&field, value, |p, f, v| p.positive(f, v));
                }
                ("propagator", "dt") => params.dt = p.positive(&field, value),
                ("propagator", "t_final") => params.t_final = p.positive(&field, value),
                ("propagator", "snapshot_times") => {
                    params.snapshot_times = p.list(&field, value, |p, f, v| {
                        p.float(f, v).filter(|t| {
                            let ok = *t >= 0.0;
                            if !ok {
                                p.err(f, "must be ≥ 0");
                            }
                            ok
                        })
                    });
                }
                ("propagator", "snapshot_every") => {
                    params.snapshot_every = p.count(&field, value, "must be ≥ 1")
                }
                ("ensemble", "n") => params.n = p.count(&field, value, "ensemble size must be ≥ 1"),
                ("ensemble", "dt_traj") => params.dt_traj = p.positive(&field, value),
                ("ensemble", "init") => {
                    params.init = match value.as_str() {
                        Some("equilibrium") => Some(InitKind::Equilibrium),
                        Some("uniform_in_slits") => Some(InitKind::UniformInSlits),
                        _ => {
                            p.err(&field, "expected \"equilibrium\" or \"uniform_in_slits\"");
                            None
                        }
                    }
                }
                ("ensemble", "workers") => workers = p.count(&field, value, "must be ≥ 1"),
                ("subsystem", "x0") => params.x0 = p.float(&field, value),
                ("subsystem", "y0") => params.y0 = p.float(&field, value),
                ("measurement", "alpha_sq") => {
                    params.alpha_sq = p.float(&field, value).filter(|a| {
                        let ok = (0.0..=1.0).contains(a);
                        if !ok {
                            p.err(&field, "must lie in [0, 1]");
                        }
                        ok
                    })
                }
                ("output", "dir") => match value.as_str() {
                    Some(d) if !d.is_empty() => output_dir = PathBuf::from(d),
                    _ => p.err(&field, "expected a non-empty string"),
                },
                ("output", "plots") => match value.as_bool() {
                    Some(b) => plots = b,
                    None => p.err(&field, "expected true or false"),
                },
                ("tolerances", name) => {
                    if let Some(v) = p.positive(&field, value) {
                        params.tolerances.insert(name.to_string(), v);
                    }
                }
                _ => unreachable!("keys are checked against SECTIONS"),
            }
        }
    }

    if let (Some(times), Some(t_final)) = (&params.snapshot_times, params.t_final) {
        if times.iter().any(|&t| t > t_final) {
            p.err("propagator.snapshot_times", "snapshot after t_final");
        }
    }
    if let (Some(axes), Some(masses)) = (&params.axes, &params.masses) {
        if axes.len() != masses.len() {
            p.err(
                "grid.masses",
                format!("{} masses for {} axes", masses.len(), axes.len()),
            );
        }
    }

    if p.errors.is_empty() {
        Ok(RunConfig {
            scenario,
            params,
            workers,
            output_dir,
            plots,
        })
    } else {
        Err(ConfigErrors(p.errors))
    }
}

#[derive(Default)]
struct Parser {
    errors: Vec<String>,
}

impl Parser {
    fn err(&mut self, field: &str, reason: impl std::fmt::Display) {
        self.errors.push(format!("{field}: {reason}"));
    }

    fn float(&mut self, field: &str, v: &Value) -> Option<f64> {
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => {
                self.err(field, "expected a number");
                return None;
            }
        };
        if !x.is_finite() {
            self.err(field, "must be finite");
            return None;
        }
        Some(x)
    }

    fn positive(&mut self, field: &str, v: &Value) -> Option<f64> {
        let x = self.float(field, v)?;
        if x <= 0.0 {
            self.err(field, "must be > 0");
            return None;
        }
        Some(x)
    }

    fn uint(&mut self, field: &str, v: &Value) -> Option<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            Value::Integer(_) => {
                self.err(field, "must be ≥ 0");
                None
            }
            _ => {
                self.err(field, "expected an integer");
                None
            }
        }
    }

    fn count(&mut self, field: &str, v: &Value, zero: &str) -> Option<usize> {
        match self.uint(field, v)? {
            0 => {
                self.err(field, zero);
                None
            }
            n => Some(n),
        }
    }

    fn list<T>(
        &mut self,
        field: &str,
        v: &Value,
        mut item: impl FnMut(&mut Self, &str, &Value) -> Option<T>,
    ) -> Option<Vec<T>> {
        let Some(arr) = v.as_array() else {
            self.err(field, "expected an array");
            return None;
        };
        let before = self.errors.len();
        let out: Vec<T> = arr
            .iter()
            .enumerate()
            .filter_map(|(i, x)| item(self, &format!("{field}[{i}]"), x))
            .collect();
        (self.errors.len() == before).then_some(out)
    }

    fn axes(&mut self, field: &str, v: &Value) -> Option<Vec<(f64, f64, usize)>> {
        let axes = self.list(field, v, |p, f, a| {
            let parts = a.as_array().filter(|x| x.len() == 3);
            let Some(parts) = parts else {
                p.err(f, "expected [lower, upper, points]");
                return None;
            };
            let lo = p.float(f, &parts[0])?;
            let hi = p.float(f, &parts[1])?;
            let n = p.count(f, &parts[2], "axis needs at least one point")?;
            if hi <= lo {
                p.err(f, "upper bound must exceed lower bound");
                return None;
            }
            Some((lo, hi, n))
        })?;
        if axes.is_empty() {
            self.err(field, "at least one axis");
            return None;
        }
        Some(axes)
    }
}
