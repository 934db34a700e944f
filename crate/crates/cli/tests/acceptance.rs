//! Acceptance gates. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gate fails. Runtimes count against each gate's limit.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use pilotwave::guidance::velocity_field;
use pilotwave::measurement::{run_experiment, PointerModel};
use pilotwave::propagator::{eigen_residual, PropagatorPlan};
use pilotwave::scenarios::{run_scenario, Details, InitKind, ScenarioParams};
use pilotwave::subsystem::{
    run_branching_universe, run_stationary_universe, universe_field, universe_grid,
    BranchingUniverse, StationaryUniverse,
};
use pilotwave::wavefield::{gaussian, GridSpec, Potential, WaveField};
use pilotwave_cli::{parse_config_str, run, Registry};

type Gate = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    body: fn() -> Gate,
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "eigenrelation",
            limit: secs(1),
            body: eigenrelation,
        },
        Criterion {
            id: 2,
            name: "environment trajectory",
            limit: secs(1),
            body: environment_trajectory,
        },
        Criterion {
            id: 3,
            name: "emergent Schrödinger evolution",
            limit: secs(5),
            body: emergent_evolution,
        },
        Criterion {
            id: 4,
            name: "equivariance",
            limit: secs(120),
            body: equivariance,
        },
        Criterion {
            id: 5,
            name: "two-slit phenomenology",
            limit: secs(60),
            body: two_slit,
        },
        Criterion {
            id: 6,
            name: "POVM agreement",
            limit: secs(60),
            body: povm,
        },
        Criterion {
            id: 7,
            name: "unitarity and reversibility",
            limit: secs(30),
            body: unitarity,
        },
        Criterion {
            id: 8,
            name: "velocity-field identities",
            limit: secs(10),
            body: velocity_identities,
        },
        Criterion {
            id: 9,
            name: "branching universe",
            limit: secs(60),
            body: branching,
        },
        Criterion {
            id: 10,
            name: "determinism",
            limit: None,
            body: determinism,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.body));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let limit = c
            .limit
            .map_or(String::new(), |l| format!(" ≤ {} s", l.as_secs()));
        println!(
            "criterion {:>2} {} {}: {}; {:.2} s{}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            limit
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn wrapped_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn eigenrelation() -> Gate {
    let g = universe_grid(64).map_err(err)?;
    let psi = universe_field(&g).map_err(err)?;
    let r = eigen_residual(&psi, &Potential::zero(&g), 2.0).map_err(err)?;
    Ok((r < 1e-8, format!("residual {r:.2e} < 1e-8")))
}

fn environment_trajectory() -> Gate {
    let cfg = StationaryUniverse {
        sample_times: (0..=100).map(|k| 0.05 * k as f64).collect(),
        dt_traj: 1e-3,
        ..Default::default()
    };
    let run = run_stationary_universe(&cfg).map_err(err)?;
    let traj = &run.trajectory;
    let worst = traj
        .times
        .iter()
        .zip(&traj.positions)
        .map(|(t, q)| wrapped_gap(q[1], cfg.y0 - t, 2.0 * PI))
        .fold(0.0, f64::max);
    let covered = traj.times.last().copied().unwrap_or(0.0);
    Ok((
        worst < 1e-6 && (covered - 5.0).abs() < 1e-9 && traj.times.len() > 100,
        format!(
            "max |Y(t) − (y0 − t)| {worst:.2e} < 1e-6 over {} times to t = {covered}",
            traj.times.len()
        ),
    ))
}

fn emergent_evolution() -> Gate {
    let run = run_stationary_universe(&StationaryUniverse::default()).map_err(err)?;
    let r = &run.report;
    let sampled = r.entries.iter().filter(|e| e.distance.is_some()).count();
    Ok((
        r.max_distance < 1e-6 && sampled >= 50,
        format!(
            "max projective distance {:.2e} < 1e-6 at {sampled} times",
            r.max_distance
        ),
    ))
}

fn equivariance() -> Gate {
    let params = ScenarioParams {
        n: Some(10_000),
        init: Some(InitKind::Equilibrium),
        ..ScenarioParams::with_seed(2024)
    };
    let out = run_scenario("two_slit", &params).map_err(err)?;
    let Details::TwoSlit(s) = &out.details else {
        return Err("unexpected details".into());
    };
    let eq = s.equivariance.as_ref().ok_or("no equivariance report")?;
    let bound = 1.63 / (eq.samples as f64).sqrt();
    let worst = eq.max_ks();
    let ok = eq.samples == 10_000
        && eq.entries.len() >= 2
        && eq.entries.iter().all(|e| e.ks.iter().all(|&k| k < bound));
    Ok((
        ok,
        format!(
            "max KS {worst:.4} < {bound:.4} at {} snapshots (n = {})",
            eq.entries.len(),
            eq.samples
        ),
    ))
}

fn two_slit() -> Gate {
    let params = ScenarioParams {
        n: Some(200),
        init: Some(InitKind::UniformInSlits),
        ..ScenarioParams::with_seed(5)
    };
    let out = run_scenario("two_slit", &params).map_err(err)?;
    let Details::TwoSlit(s) = &out.details else {
        return Err("unexpected details".into());
    };
    let contrast = s.fringe_contrast.unwrap_or(0.0);
    let p = &s.slit_passage;
    let ok = p.single_slit == 200
        && p.outside == 0
        && p.never_crossed == 0
        && s.axis_crossings == 0
        && contrast > 5.0;
    Ok((
        ok,
        format!(
            "single-slit {}/200, axis crossings {}, fringe contrast {contrast:.1} > 5",
            p.single_slit, s.axis_crossings
        ),
    ))
}

fn povm() -> Gate {
    let alpha_sq: f64 = 0.36;
    let spec = PointerModel::default().spec().map_err(err)?;
    let g = spec.system_grid().clone();
    let packet = |c: f64| WaveField::from_fn(&g, |q| gaussian(q[0], c, 0.7, 0.0));
    let psi = WaveField::linear_combination(&[
        (
            Complex64::new(alpha_sq.sqrt(), 0.0),
            &packet(-5.0).map_err(err)?,
        ),
        (
            Complex64::new((1.0 - alpha_sq).sqrt(), 0.0),
            &packet(5.0).map_err(err)?,
        ),
    ])
    .map_err(err)?
    .normalized()
    .map_err(err)?;
    // projector oracle ‖P_z ψ‖², summed directly over the half lines
    let dx = g.spacing(0);
    let mut oracle = [0.0, 0.0];
    for (j, a) in psi.amplitudes().iter().enumerate() {
        oracle[usize::from(g.coord(0, j) >= 0.0)] += a.norm_sqr() * dx;
    }
    let d = run_experiment(&spec, &psi).map_err(err)?;
    let measured = [
        d.mass("-").ok_or("no - bin")?,
        d.mass("+").ok_or("no + bin")?,
    ];
    let vs_oracle = (measured[0] - oracle[0])
        .abs()
        .max((measured[1] - oracle[1]).abs());
    let vs_target = (measured[0] - 0.36).abs().max((measured[1] - 0.64).abs());

    let out = run_scenario(
        "pointer_measurement",
        &ScenarioParams {
            alpha_sq: Some(alpha_sq),
            ..ScenarioParams::with_seed(1)
        },
    )
    .map_err(err)?;
    let Details::PointerMeasurement(s) = &out.details else {
        return Err("unexpected details".into());
    };
    let bilinear = s
        .bilinearity
        .iter()
        .map(|b| b.max_deviation)
        .fold(0.0, f64::max);
    let ok = vs_oracle < 2e-3 && vs_target < 2e-3 && s.bilinearity.len() == 3 && bilinear < 1e-8;
    Ok((
        ok,
        format!(
            "masses [{:.4}, {:.4}], |Δ| vs projectors {vs_oracle:.1e} < 2e-3, bilinearity {bilinear:.1e} < 1e-8 over {} probes",
            measured[0],
            measured[1],
            s.bilinearity.len()
        ),
    ))
}

fn unitarity() -> Gate {
    let g =
        GridSpec::new(&[(-16.0, 16.0, 128), (-16.0, 16.0, 128)], 1.0, &[1.0, 1.5]).map_err(err)?;
    let v = Potential::from_fn(&g, |q| 0.025 * (q[0] * q[0] + 0.5 * q[1] * q[1])).map_err(err)?;
    let plan = PropagatorPlan::new(0.01, v).map_err(err)?;
    let psi0 = WaveField::from_fn(&g, |q| {
        gaussian(q[0], -3.0, 1.0, 1.5) * gaussian(q[1], 2.0, 1.3, -0.8)
    })
    .map_err(err)?
    .normalized()
    .map_err(err)?;
    let mut f = psi0.clone();
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        plan.step_in_place(&mut f).map_err(err)?;
        drift = drift.max((f.norm() - 1.0).abs());
    }
    let back = plan.reversed();
    for _ in 0..10_000 {
        back.step_in_place(&mut f).map_err(err)?;
    }
    let returned = f.max_abs_diff(&psi0).map_err(err)?;
    Ok((
        drift < 1e-9 && returned < 1e-8,
        format!("max |‖ψ‖ − 1| {drift:.1e} < 1e-9 over 10^4 steps, forward-backward {returned:.1e} < 1e-8"),
    ))
}

fn velocity_identities() -> Gate {
    let g = GridSpec::new(&[(-8.0, 8.0, 64), (-8.0, 8.0, 64)], 1.0, &[1.0, 2.0]).map_err(err)?;
    let lattice = 2.0 * PI / 16.0;
    let (k0, k1) = (3.0 * lattice, -5.0 * lattice);

    // plane wave: v = ħk/m everywhere
    let plane = WaveField::from_fn(&g, |q| Complex64::from_polar(1.0, k0 * q[0] + k1 * q[1]))
        .map_err(err)?;
    let vp = velocity_field(&plane).map_err(err)?;
    let mut plane_err: f64 = 0.0;
    for (a, expect) in [(0, k0 / 1.0), (1, k1 / 2.0)] {
        plane_err = vp
            .component(a)
            .iter()
            .map(|v| (v - expect).abs())
            .fold(plane_err, f64::max);
    }
    let off = vp.at(&[0.123, -4.56]).map_err(err)?.velocity;
    plane_err = plane_err
        .max((off[0] - k0).abs())
        .max((off[1] - k1 / 2.0).abs());

    // a packet that is smooth and periodic on the box, checked where it carries density
    let packet = |q: &[f64]| {
        gaussian(q[0], 0.3, 0.7, 2.0 * lattice) * gaussian(q[1], -0.2, 0.7, -3.0 * lattice)
    };
    let psi = WaveField::from_fn(&g, packet).map_err(err)?;
    let peak = psi.density().peak();
    let live: Vec<usize> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > 1e-6 * peak)
        .map(|(i, _)| i)
        .collect();
    let base = velocity_field(&psi).map_err(err)?;
    let gap = |other: &pilotwave::guidance::VelocityField, shift: [f64; 2]| -> f64 {
        let mut m: f64 = 0.0;
        for &i in &live {
            for (a, s) in shift.iter().enumerate() {
                m = m.max((other.component(a)[i] - base.component(a)[i] - s).abs());
            }
        }
        m
    };
    let scaled = psi.scaled(Complex64::from_polar(2.5, 0.7));
    let invariance = gap(&velocity_field(&scaled).map_err(err)?, [0.0, 0.0]);

    // boost by u: multiply by exp(i m u·q / ħ) with m u on the lattice
    let (p0, p1) = (2.0 * lattice, 1.0 * lattice);
    let boosted = WaveField::from_fn(&g, |q| {
        packet(q) * Complex64::from_polar(1.0, p0 * q[0] + p1 * q[1])
    })
    .map_err(err)?;
    let boost = gap(
        &velocity_field(&boosted).map_err(err)?,
        [p0 / 1.0, p1 / 2.0],
    );

    // real field with a nodal line: no motion anywhere it carries density
    let real = WaveField::from_fn(&g, |q| {
        Complex64::new(packet(q).norm() * (q[0] * PI / 8.0).cos(), 0.0)
    })
    .map_err(err)?;
    let vr = velocity_field(&real).map_err(err)?;
    let real_peak = real.density().peak();
    let still = real
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > 1e-6 * real_peak)
        .flat_map(|(i, _)| [vr.component(0)[i], vr.component(1)[i]])
        .fold(0.0, |m: f64, v| m.max(v.abs()));

    let ok = plane_err < 1e-10 && invariance < 1e-10 && boost < 1e-8 && still < 1e-12;
    Ok((
        ok,
        format!(
            "plane wave {plane_err:.1e} < 1e-10, phase/scale {invariance:.1e} < 1e-10, boost {boost:.1e} < 1e-8, real field max |v| {still:.1e}"
        ),
    ))
}

fn branching() -> Gate {
    let cfg = BranchingUniverse::default();
    let run = run_branching_universe(&cfg).map_err(err)?;
    let r = &run.report;
    let packet = cfg.packets[0];
    let m = cfg.mass_y;
    // free Gaussian: center c + v t, width σ √(1 + (ħ t / (2 m σ²))²)
    let mut worst: f64 = 0.0;
    for e in &r.entries {
        let t = e.time;
        let center = packet.center + packet.velocity * t;
        let width =
            packet.width * (1.0 + (t / (2.0 * m * packet.width * packet.width)).powi(2)).sqrt();
        worst = worst.max((e.environment[0] - center).abs() / width);
    }
    let covered = r.entries.last().map_or(0.0, |e| e.time);
    let ok = r.tracked == Some(true)
        && worst < 3.0
        && r.max_distance < 1e-3
        && (covered - 2.0).abs() < 1e-9;
    Ok((
        ok,
        format!(
            "branch {:?}, max |Y − c(t)|/σ(t) {worst:.2} < 3, max projective distance {:.1e} < 1e-3 over [0, {covered:.2}]",
            r.branch.as_deref().unwrap_or("none"),
            r.max_distance
        ),
    ))
}

fn read_rows(path: &std::path::Path) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(err)?;
    rdr.records()
        .map(|r| {
            let r = r.map_err(err)?;
            r.iter().map(|x| x.parse::<f64>().map_err(err)).collect()
        })
        .collect()
}

fn determinism() -> Gate {
    let tmp = tempfile::tempdir().map_err(err)?;
    let registry = Registry::builtin();
    let text = "scenario = \"two_slit\"\nseed = 99\n[ensemble]\nn = 200\ninit = \"uniform_in_slits\"\n[output]\nplots = false\n";
    let base = parse_config_str(text, &registry).map_err(err)?;
    let mut dirs = Vec::new();
    for (name, workers) in [("a", None), ("b", None), ("w1", Some(1)), ("w4", Some(4))] {
        let mut c = base.clone();
        c.output_dir = tmp.path().join(name);
        c.workers = workers;
        let status = run(&c, &registry).map_err(err)?;
        if status.exit_code != 0 {
            return Err(format!("run {name} failed: {:?}", status.failures));
        }
        dirs.push(c.output_dir);
    }
    let bytes = |d: &std::path::Path| std::fs::read(d.join("trajectories.csv")).map_err(err);
    let identical = bytes(&dirs[0])? == bytes(&dirs[1])?;
    let (w1, w4) = (
        read_rows(&dirs[2].join("trajectories.csv"))?,
        read_rows(&dirs[3].join("trajectories.csv"))?,
    );
    let same_shape = w1.len() == w4.len() && !w1.is_empty();
    let gap = w1
        .iter()
        .zip(&w4)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok((
        identical && same_shape && gap <= 1e-12,
        format!(
            "repeat runs byte-identical: {identical}; 1 vs 4 workers max coordinate gap {gap:.1e} ≤ 1e-12 over {} rows",
            w1.len()
        ),
    ))
}
