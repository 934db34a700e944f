use std::path::{Path, PathBuf};

use pilotwave::scenarios::{Check, Details, Diagnostics, ScenarioOutcome, ScenarioParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::export::{write_density, write_results, write_trajectories};
use crate::registry::Registry;
use crate::svg;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Result rows drawn in `histogram.svg`.
const HISTOGRAM_QUANTITIES: [&str; 4] = ["pushforward", "projector", "sampled", "screen_marginal"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunStatus {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub failures: Vec<String>,
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    scenario: &'a str,
    workers: Option<usize>,
    plots: bool,
    params: &'a ScenarioParams,
}

#[derive(Serialize)]
struct Report<'a> {
    scenario: &'a str,
    seed: u64,
    passed: bool,
    exit_code: i32,
    failures: &'a [String],
    checks: &'a [Check],
    diagnostics: Option<&'a Diagnostics>,
    details: Option<&'a Details>,
    artifacts: &'a [String],
    config: ConfigEcho<'a>,
}

/// Runs the configured scenario and writes every artifact into the output
/// directory. `report.json` is written on every path, including failures.
pub fn run(config: &RunConfig, registry: &Registry) -> std::io::Result<RunStatus> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;

    let outcome = match registry.get(&config.scenario) {
        None => Err((
            EXIT_CONFIG,
            format!("unknown scenario `{}`", config.scenario),
        )),
        Some(entry) => {
            let go = || entry.run(&config.params);
            let result = match config.workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(std::io::Error::other)?
                    .install(go),
                None => go(),
            };
            result.map_err(|e| {
                let code = match e {
                    pilotwave::Error::Config { .. } => EXIT_CONFIG,
                    _ => EXIT_GATE,
                };
                (code, e.to_string())
            })
        }
    };

    let (exit_code, failures, artifacts) = match &outcome {
        Ok(out) => {
            let artifacts = write_artifacts(&dir, out, config.plots)?;
            let failures = out.failures();
            let code = if failures.is_empty() {
                EXIT_PASS
            } else {
                EXIT_GATE
            };
            (code, failures, artifacts)
        }
        Err((code, message)) => (*code, vec![message.clone()], Vec::new()),
    };
    let ok = outcome.as_ref().ok();
    let mut artifacts = artifacts;
    artifacts.push("report.json".into());
    let report = Report {
        scenario: &config.scenario,
        seed: config.seed(),
        passed: exit_code == EXIT_PASS,
        exit_code,
        failures: &failures,
        checks: ok.map_or(&[], |o| o.checks.as_slice()),
        diagnostics: ok.map(|o| &o.diagnostics),
        details: ok.map(|o| &o.details),
        artifacts: &artifacts,
        config: ConfigEcho {
            scenario: &config.scenario,
            workers: config.workers,
            plots: config.plots,
            params: &config.params,
        },
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json)?;
    log::info!(
        "{}: exit {exit_code}, artifacts in {}",
        config.scenario,
        dir.display()
    );

    Ok(RunStatus {
        exit_code,
        out_dir: dir,
        failures,
        artifacts,
    })
}

fn write_artifacts(dir: &Path, out: &ScenarioOutcome, plots: bool) -> std::io::Result<Vec<String>> {
    let mut names = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> std::io::Result<()> {
        std::fs::write(dir.join(&name), bytes)?;
        names.push(name);
        Ok(())
    };

    if let Some(ens) = &out.ensemble {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, ens).map_err(std::io::Error::other)?;
        put("trajectories.csv".into(), buf)?;
        if plots {
            if let Some(s) = svg::trajectory_fan(ens) {
                put("trajectories.svg".into(), s.into_bytes())?;
            }
        }
    }
    for (k, (t, d)) in out.densities.iter().enumerate() {
        let mut buf = Vec::new();
        write_density(&mut buf, *t, d).map_err(std::io::Error::other)?;
        put(format!("density_t{k}.csv"), buf)?;
        if plots {
            if let Some(s) = svg::density_map(*t, d) {
                put(format!("density_t{k}.svg"), s.into_bytes())?;
            }
        }
    }
    let mut buf = Vec::new();
    write_results(&mut buf, &out.results).map_err(std::io::Error::other)?;
    put("results.csv".into(), buf)?;
    if plots {
        if let Some(s) = svg::histogram(&out.results, &HISTOGRAM_QUANTITIES) {
            put("histogram.svg".into(), s.into_bytes())?;
        }
    }
    Ok(names)
}
