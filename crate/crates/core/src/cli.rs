//! Command implementations behind the `owc-alloc` binary. Each command
//! returns its results and writes deterministic CSV files into the output
//! directory.
//!
//! Files written (`<name>` is the scenario name, `<st>` is `on` or `off`):
//!
//! - `solve`: `exact_<name>.csv`, `exact_<name>_summary.csv`
//! - `train`: `ql_<name>_<st>.csv`, `ql_<name>_<st>_report.csv`,
//!   `ql_<name>_<st>_trace.csv`
//! - `compare`: `compare_<name>.csv`
//! - `heatmap`: `heatmap_<name>_<st>.csv`

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    electrical_signal_power, received_optical_power, steered_spot_center, thermal_noise_power,
    ApId, Point3, UserPose,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::exact::{solve_exact, ExactError, OptimalSolution, TIE_RTOL};
use crate::qlearning::{train, Environment, QlError, TrainReport};
use crate::sinr::{linear_to_db, Assignment, SinrError, SinrReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Ql(#[from] QlError),
    #[error("cannot write {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("grid step must be a positive number, got {0}")]
    GridStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteeringChoice {
    Off,
    On,
    #[default]
    Both,
}

impl SteeringChoice {
    pub fn settings(self) -> &'static [bool] {
        match self {
            SteeringChoice::Off => &[false],
            SteeringChoice::On => &[true],
            SteeringChoice::Both => &[false, true],
        }
    }
}

impl FromStr for SteeringChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" => Ok(SteeringChoice::Off),
            "on" => Ok(SteeringChoice::On),
            "both" => Ok(SteeringChoice::Both),
            other => Err(format!("expected on, off or both, got `{other}`")),
        }
    }
}

fn steering_label(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub steering: SteeringChoice,
    /// Overrides `ql.rng_seed` when set.
    pub seed: Option<u64>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            steering: SteeringChoice::Both,
            seed: None,
        }
    }
}

fn file_stem(cfg: &ScenarioConfig) -> String {
    cfg.name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let wrap = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut out = BufWriter::new(File::create(&path).map_err(wrap)?);
    body(&mut out).and_then(|_| out.flush()).map_err(wrap)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub steering: bool,
    pub solution: OptimalSolution,
}

/// Exact optimum for each requested steering setting.
pub fn cmd_solve(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<SolveOutcome>, CliError> {
    let scene = cfg.to_scene()?;
    let outcomes = opts
        .steering
        .settings()
        .iter()
        .map(|&steering| {
            Ok(SolveOutcome {
                steering,
                solution: solve_exact(&scene, steering, cfg.threshold_db)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let stem = file_stem(cfg);
    write_file(&opts.out_dir, &format!("exact_{stem}.csv"), |w| {
        writeln!(w, "steering,{}", SinrReport::CSV_HEADER)?;
        for o in &outcomes {
            let prefix = format!("{},", steering_label(o.steering));
            o.solution
                .report
                .write_csv_rows(&mut *w, cfg.threshold_db, &prefix)?;
        }
        Ok(())
    })?;
    write_file(&opts.out_dir, &format!("exact_{stem}_summary.csv"), |w| {
        writeln!(w, "steering,{}", OptimalSolution::SUMMARY_HEADER)?;
        for o in &outcomes {
            o.solution
                .write_summary_row(&mut *w, &format!("{},", steering_label(o.steering)))?;
        }
        Ok(())
    })?;
    Ok(outcomes)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steering: bool,
    pub report: TrainReport,
    pub greedy: Assignment,
    pub sinr: SinrReport,
    pub exact_objective: f64,
    /// Greedy objective within [`TIE_RTOL`] of the exact optimum.
    pub matches_exact: bool,
}

/// Trains one Q-table per requested steering setting and checks the greedy
/// action against the exact optimum.
pub fn cmd_train(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<TrainOutcome>, CliError> {
    let scene = cfg.to_scene()?;
    let mut hp = cfg.ql;
    if let Some(seed) = opts.seed {
        hp.rng_seed = seed;
    }
    let stem = file_stem(cfg);
    let mut outcomes = Vec::new();
    for &steering in opts.steering.settings() {
        let env = Environment::new(&scene, steering, cfg.threshold_db)?;
        let (_, report) = train(&env, &hp)?;
        let exact = solve_exact(&scene, steering, cfg.threshold_db)?;
        let sinr = env.report(report.greedy_action_index);
        let matches_exact = (report.greedy_objective_linear - exact.objective_linear).abs()
            <= TIE_RTOL * exact.objective_linear.abs();
        let label = steering_label(steering);

        write_file(&opts.out_dir, &format!("ql_{stem}_{label}.csv"), |w| {
            sinr.write_csv(&mut *w, cfg.threshold_db)
        })?;
        write_file(
            &opts.out_dir,
            &format!("ql_{stem}_{label}_report.csv"),
            |w| {
                writeln!(
                    w,
                    "{},exact_objective_linear,matches_exact",
                    TrainReport::CSV_HEADER
                )?;
                let mut row = Vec::new();
                report.write_csv_row(&mut row, "")?;
                let row = String::from_utf8(row).expect("utf-8");
                writeln!(
                    w,
                    "{},{},{}",
                    row.trim_end(),
                    exact.objective_linear,
                    matches_exact
                )
            },
        )?;
        write_file(
            &opts.out_dir,
            &format!("ql_{stem}_{label}_trace.csv"),
            |w| report.write_trace_csv(&mut *w),
        )?;

        outcomes.push(TrainOutcome {
            steering,
            greedy: env.actions.get(report.greedy_action_index).clone(),
            report,
            sinr,
            exact_objective: exact.objective_linear,
            matches_exact,
        });
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    QLearning,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::QLearning => "ql",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKind {
    User {
        user_id: usize,
        serving: ApId,
    },
    /// Linear sum; `sinr_db` is `10·log10` of it.
    Sum,
    /// Sum of per-user dB values (no linear counterpart).
    SumOfDb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub steering: bool,
    pub kind: RowKind,
    pub sinr_linear: Option<f64>,
    pub sinr_db: f64,
}

pub const COMPARE_HEADER: &str = "method,steering,user_id,array,ap,sinr_linear,sinr_db";

impl CompareRow {
    fn write<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        let (user, array, ap) = match self.kind {
            RowKind::User { user_id, serving } => (
                user_id.to_string(),
                serving.array.to_string(),
                serving.ap.to_string(),
            ),
            RowKind::Sum => ("sum".into(), String::new(), String::new()),
            RowKind::SumOfDb => ("sum_of_db".into(), String::new(), String::new()),
        };
        let linear = self.sinr_linear.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{user},{array},{ap},{linear},{}",
            self.method.label(),
            steering_label(self.steering),
            self.sinr_db
        )
    }
}

fn compare_rows(method: Method, steering: bool, report: &SinrReport) -> Vec<CompareRow> {
    let mut rows: Vec<CompareRow> = report
        .rows
        .iter()
        .map(|r| CompareRow {
            method,
            steering,
            kind: RowKind::User {
                user_id: r.user_id,
                serving: r.serving,
            },
            sinr_linear: Some(r.sinr_linear),
            sinr_db: r.sinr_db,
        })
        .collect();
    rows.push(CompareRow {
        method,
        steering,
        kind: RowKind::Sum,
        sinr_linear: Some(report.sum_sinr_linear),
        sinr_db: report.sum_sinr_db,
    });
    rows.push(CompareRow {
        method,
        steering,
        kind: RowKind::SumOfDb,
        sinr_linear: None,
        sinr_db: report.sum_of_db(),
    });
    rows
}

/// Exact and Q-learning allocations side by side for each steering setting.
pub fn cmd_compare(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<CompareRow>, CliError> {
    let scene = cfg.to_scene()?;
    let mut hp = cfg.ql;
    if let Some(seed) = opts.seed {
        hp.rng_seed = seed;
    }
    let mut rows = Vec::new();
    for &steering in opts.steering.settings() {
        let exact = solve_exact(&scene, steering, cfg.threshold_db)?;
        rows.extend(compare_rows(Method::Exact, steering, &exact.report));
        let env = Environment::new(&scene, steering, cfg.threshold_db)?;
        let (_, report) = train(&env, &hp)?;
        rows.extend(compare_rows(
            Method::QLearning,
            steering,
            &env.report(report.greedy_action_index),
        ));
    }
    write_file(
        &opts.out_dir,
        &format!("compare_{}.csv", file_stem(cfg)),
        |w| {
            writeln!(w, "{COMPARE_HEADER}")?;
            rows.iter().try_for_each(|r| r.write(w))
        },
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapPoint {
    pub x: f64,
    pub y: f64,
    pub best_ap: ApId,
    pub sinr_db: f64,
}

pub const HEATMAP_HEADER: &str = "x,y,best_ap,sinr_db";

fn grid_axis(extent: f64, step: f64) -> Vec<f64> {
    let n = (extent / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Best single-AP SINR for a lone probe receiver at every grid point of the
/// receiving plane. With no other active AP the SINR is signal over noise.
pub fn heatmap(
    cfg: &ScenarioConfig,
    grid_step_m: f64,
    steering: bool,
) -> Result<Vec<HeatmapPoint>, CliError> {
    if !(grid_step_m.is_finite() && grid_step_m > 0.0) {
        return Err(CliError::GridStep(grid_step_m));
    }
    cfg.validate()?;
    let beam = cfg.beam_params();
    let rx = cfg.receiver;
    let aps = cfg.access_points();
    let noise = thermal_noise_power(&rx);
    let z = cfg.room.rx_plane_height_m;
    let xs = grid_axis(cfg.room.width_m, grid_step_m);
    let ys = grid_axis(cfg.room.length_m, grid_step_m);
    let points: Vec<(f64, f64)> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
        .collect();

    points
        .par_iter()
        .map(|&(x, y)| {
            let probe = UserPose::new(1, Point3::new(x, y, z));
            let mut best: Option<(ApId, f64)> = None;
            for ap in &aps {
                let spot = if steering {
                    steered_spot_center(ap, &probe, cfg.steering.max_deg)
                } else {
                    ap.nominal_spot_center
                };
                let optical = received_optical_power(&beam, ap, spot, &probe, &rx)
                    .map_err(SinrError::from)?;
                let sinr = electrical_signal_power(optical, &rx) / noise;
                if best.is_none_or(|(_, b)| sinr > b) {
                    best = Some((ap.id, sinr));
                }
            }
            let (best_ap, sinr) = best.expect("at least one access point");
            Ok(HeatmapPoint {
                x,
                y,
                best_ap,
                sinr_db: linear_to_db(sinr),
            })
        })
        .collect()
}

pub fn cmd_heatmap(
    cfg: &ScenarioConfig,
    grid_step_m: f64,
    opts: &RunOptions,
) -> Result<Vec<(bool, Vec<HeatmapPoint>)>, CliError> {
    let stem = file_stem(cfg);
    opts.steering
        .settings()
        .iter()
        .map(|&steering| {
            let points = heatmap(cfg, grid_step_m, steering)?;
            write_file(
                &opts.out_dir,
                &format!("heatmap_{stem}_{}.csv", steering_label(steering)),
                |w| {
                    writeln!(w, "{HEATMAP_HEADER}")?;
                    for p in &points {
                        writeln!(w, "{},{},{},{}", p.x, p.y, p.best_ap, p.sinr_db)?;
                    }
                    Ok(())
                },
            )?;
            Ok((steering, points))
        })
        .collect()
}
