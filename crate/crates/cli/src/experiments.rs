//! Experiment drivers. Each writes its outputs under `output_dir` together
//! with a manifest of the resolved configuration.

use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use mhd_core::assembly::AnalyticField;
use mhd_core::diagnostics::{DiagnosticsRecord, Monitor};
use mhd_core::geom::Vec3;
use mhd_core::io::{write_field_csv, write_fields};
use mhd_core::mms::{run_convergence, ConvergenceParams, ErrorTable, ExactSolution};
use mhd_core::timestepper::{MhdState, Scheme, SimParams, Sources, Stepper};
use mhd_core::DeRham;

use crate::config::{Experiment, RunConfig};
use crate::output::{write_error_table, write_file, write_timeseries};
use crate::CliError;

/// Initial velocity of the helicity experiments.
pub fn initial_velocity(p: Vec3) -> Vec3 {
    let z = p[2] * (p[2] - 1.0);
    let (x, y) = (PI * (p[0] - 0.5), PI * (p[1] - 0.5));
    [-x.sin() * y.cos() * z, x.cos() * y.sin() * z, 0.0]
}

/// Initial magnetic field of the helicity experiments.
pub fn initial_magnetic(p: Vec3) -> Vec3 {
    let (x, y) = (PI * p[0], PI * p[1]);
    [-x.sin() * y.cos(), x.cos() * y.sin(), 0.0]
}

/// What a run produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// One diagnostics series per simulated scheme.
    pub series: Vec<(Scheme, Vec<DiagnosticsRecord>)>,
    pub table: Option<ErrorTable>,
    pub files: Vec<PathBuf>,
    /// Set when a step failed; the series hold the steps before it.
    pub failure: Option<String>,
}

struct Trajectory {
    records: Vec<DiagnosticsRecord>,
    last: MhdState,
    failure: Option<String>,
}

/// Runs the helicity-experiment data for `steps` steps. `on_state` sees the
/// initial state and every accepted step.
fn simulate(
    complex: &DeRham,
    params: SimParams,
    steps: usize,
    mut on_state: impl FnMut(&MhdState) -> Result<(), CliError>,
) -> Result<Trajectory, CliError> {
    let stepper = Stepper::new(complex, params.clone())?;
    let src = Sources::none();
    let mut state = stepper.initial_state(
        AnalyticField::Vector(&initial_velocity),
        AnalyticField::Vector(&initial_magnetic),
        0.0,
        &src,
    )?;
    let mut monitor = Monitor::new(complex, params, src)?;
    let mut records = vec![monitor.observe(&state, None)?];
    on_state(&state)?;
    let report_every = (steps / 10).max(1);
    for k in 1..=steps {
        let (next, picard) = match stepper.step(&state, &src) {
            Ok(v) => v,
            Err(e) => {
                return Ok(Trajectory {
                    records,
                    last: state,
                    failure: Some(format!("step {k}: {e}")),
                })
            }
        };
        records.push(monitor.observe(&next, Some(&picard))?);
        state = next;
        on_state(&state)?;
        if k % report_every == 0 {
            let r = records.last().expect("nonempty");
            info!("step {k}/{steps}: energy {:.6e} hm {:.3e} hc {:.3e}", r.energy, r.helicity_magnetic, r.helicity_cross);
        }
    }
    Ok(Trajectory {
        records,
        last: state,
        failure: None,
    })
}

fn scheme_tag(s: Scheme) -> &'static str {
    match s {
        Scheme::Main => "main",
        Scheme::Reference => "reference",
    }
}

fn save_timeseries(dir: &Path, name: &str, records: &[DiagnosticsRecord], out: &mut Outcome) -> Result<(), CliError> {
    let path = dir.join(name);
    write_file(&path, |f| write_timeseries(BufWriter::new(f), records))?;
    out.files.push(path);
    Ok(())
}

fn dump_state(dir: &Path, complex: &DeRham, state: &MhdState, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(format!("fields_{:06}.vtk", state.step));
    write_file(&path, |f| Ok(write_fields(BufWriter::new(f), complex, &state.u, &state.b)?))?;
    out.push(path);
    Ok(())
}

/// Runs one experiment. Nothing is written unless `cfg` is valid.
pub fn run_experiment(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut out = Outcome::default();
    let manifest = dir.join("manifest");
    write_file(&manifest, |f| Ok(std::io::Write::write_all(f, cfg.to_string().as_bytes())?))?;
    out.files.push(manifest);

    match cfg.experiment {
        Experiment::Conserve => {
            let complex = DeRham::structured(cfg.n)?;
            let traj = simulate(&complex, cfg.sim_params(), cfg.steps(), |_| Ok(()))?;
            save_timeseries(dir, "timeseries.csv", &traj.records, &mut out)?;
            out.series.push((cfg.scheme, traj.records));
            out.failure = traj.failure;
        }
        Experiment::Compare => {
            let complex = DeRham::structured(cfg.n)?;
            for scheme in [Scheme::Main, Scheme::Reference] {
                info!("{} scheme", scheme_tag(scheme));
                let params = SimParams { scheme, ..cfg.sim_params() };
                let traj = simulate(&complex, params, cfg.steps(), |_| Ok(()))?;
                save_timeseries(dir, &format!("timeseries_{}.csv", scheme_tag(scheme)), &traj.records, &mut out)?;
                out.series.push((scheme, traj.records));
                if traj.failure.is_some() {
                    out.failure = traj.failure;
                    break;
                }
            }
        }
        Experiment::Solve => {
            let complex = DeRham::structured(cfg.n)?;
            let mut dumps = Vec::new();
            let every = cfg.dump_every;
            let traj = simulate(&complex, cfg.sim_params(), cfg.steps(), |s| {
                if every > 0 && s.step % every == 0 {
                    dump_state(dir, &complex, s, &mut dumps)?;
                }
                Ok(())
            })?;
            if every == 0 || traj.last.step % every != 0 {
                dump_state(dir, &complex, &traj.last, &mut dumps)?;
            }
            out.files.extend(dumps);
            for (name, field) in [("u_final.csv", &traj.last.u), ("b_final.csv", &traj.last.b)] {
                let path = dir.join(name);
                write_file(&path, |f| Ok(write_field_csv(BufWriter::new(f), field)?))?;
                out.files.push(path);
            }
            save_timeseries(dir, "timeseries.csv", &traj.records, &mut out)?;
            out.series.push((cfg.scheme, traj.records));
            out.failure = traj.failure;
        }
        Experiment::Converge => {
            let exact = ExactSolution::new(cfg.re_inv, cfg.rm_inv, cfg.coupling);
            let params = ConvergenceParams {
                sim: SimParams { scheme: Scheme::Main, ..cfg.sim_params() },
                t_end: cfg.t_end,
            };
            let table = run_convergence(&exact, &params, &cfg.meshes)?;
            let path = dir.join("convergence.csv");
            write_file(&path, |f| write_error_table(BufWriter::new(f), &table))?;
            out.files.push(path);
            out.table = Some(table);
        }
    }
    Ok(out)
}
