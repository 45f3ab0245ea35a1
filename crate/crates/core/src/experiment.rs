//! Named presets for the beat experiments, run summaries, and `(h, λ)` sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{beat_metrics, suppression_ratio, BeatMetrics};
use crate::config::SimulationConfig;
use crate::duffing::{simulate, ControllerTrace, DuffingControlConfig};
use crate::dynamics::StepSize;
use crate::error::{Error, Result};
use crate::io::{format_value, write_csv, write_svg};
use crate::trajectory::Trajectory;

/// Suppression is measured from this fraction of the run onward, after the first beat.
pub const SUPPRESSION_WINDOW_START: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Free beats, control held at `u = ζ`.
    Fig1,
    /// `h = 0.01`, `λ = 1`.
    Fig2,
    /// `h = 0.001`, `λ = 1`.
    Fig3,
    /// `h = 0.001`, `λ = 10`: same `λh` as `Fig2`.
    Fig4,
    /// `h = 0.001`, `λ = 0.1`.
    Fig5,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig1, Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
        }
    }

    pub fn config(self) -> SimulationConfig {
        let (h, lambda, enabled) = match self {
            Preset::Fig1 => (0.01, 1.0, false),
            Preset::Fig2 => (0.01, 1.0, true),
            Preset::Fig3 => (0.001, 1.0, true),
            Preset::Fig4 => (0.001, 10.0, true),
            Preset::Fig5 => (0.001, 0.1, true),
        };
        let base = SimulationConfig::default();
        SimulationConfig {
            h: StepSize::new(h).expect("positive"),
            control: DuffingControlConfig { lambda, ..base.control },
            control_enabled: enabled,
            preset_name: Some(self.name().to_string()),
            output_stride: default_stride(h),
            ..base
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// One output sample per 0.01 time units.
pub fn default_stride(h: f64) -> usize {
    ((0.01 / h).round() as usize).max(1)
}

/// Scalar results of one run, also used as a sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub h: f64,
    pub lambda: f64,
    /// `λ·h`
    pub lambda_h: f64,
    pub control_enabled: bool,
    pub exchange_depth: f64,
    pub exchange_cycles: usize,
    /// Max `x₂` envelope over the suppression window.
    pub late_envelope_x2: f64,
    pub suppression_ratio: f64,
    pub max_abs_u: f64,
    /// `max |u_k − u₀|`
    pub max_control_excursion: f64,
    pub rms_displacement: f64,
    pub mean_energy: f64,
    pub fallback_steps: usize,
    pub diverged: bool,
    pub error: Option<String>,
}

impl RunSummary {
    pub const HEADER: [&'static str; 16] = [
        "label",
        "h",
        "lambda",
        "lambda_h",
        "control_enabled",
        "exchange_depth",
        "exchange_cycles",
        "late_envelope_x2",
        "suppression_ratio",
        "max_abs_u",
        "max_control_excursion",
        "rms_displacement",
        "mean_energy",
        "fallback_steps",
        "diverged",
        "error",
    ];

    fn failed(label: String, cfg: &SimulationConfig, err: &Error) -> Self {
        Self {
            label,
            h: cfg.h.get(),
            lambda: cfg.control.lambda,
            lambda_h: cfg.control.lambda * cfg.h.get(),
            control_enabled: cfg.control_enabled,
            exchange_depth: f64::NAN,
            exchange_cycles: 0,
            late_envelope_x2: f64::NAN,
            suppression_ratio: f64::NAN,
            max_abs_u: f64::NAN,
            max_control_excursion: f64::NAN,
            rms_displacement: f64::NAN,
            mean_energy: f64::NAN,
            fallback_steps: 0,
            diverged: matches!(err, Error::Divergence { .. }),
            error: Some(err.to_string()),
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            format_value(self.h),
            format_value(self.lambda),
            format_value(self.lambda_h),
            self.control_enabled.to_string(),
            format_value(self.exchange_depth),
            self.exchange_cycles.to_string(),
            format_value(self.late_envelope_x2),
            format_value(self.suppression_ratio),
            format_value(self.max_abs_u),
            format_value(self.max_control_excursion),
            format_value(self.rms_displacement),
            format_value(self.mean_energy),
            self.fallback_steps.to_string(),
            self.diverged.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: SimulationConfig,
    pub trajectory: Trajectory,
    pub trace: ControllerTrace,
    pub metrics: BeatMetrics,
    /// Same configuration with the control held at `u₀`.
    pub baseline: BeatMetrics,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn label(&self) -> String {
        label_of(&self.config)
    }
}

fn label_of(cfg: &SimulationConfig) -> String {
    cfg.preset_name
        .clone()
        .unwrap_or_else(|| format!("h{}_lambda{}", cfg.h.get(), cfg.control.lambda))
}

/// Simulates `cfg` and its uncontrolled baseline, then summarizes.
pub fn run_config(cfg: &SimulationConfig) -> Result<RunOutcome> {
    let (trajectory, trace) = simulate(cfg)?;
    let metrics = beat_metrics(&trajectory, &cfg.params)?;
    let baseline = if cfg.control_enabled {
        let mut free = cfg.clone();
        free.control_enabled = false;
        let (free_traj, _) = simulate(&free)?;
        beat_metrics(&free_traj, &cfg.params)?
    } else {
        metrics.clone()
    };

    let t0 = cfg.initial.t;
    let window = (t0 + SUPPRESSION_WINDOW_START * (cfg.t_end - t0), cfg.t_end);
    let u0 = cfg.control.u0;
    let summary = RunSummary {
        label: label_of(cfg),
        h: cfg.h.get(),
        lambda: cfg.control.lambda,
        lambda_h: cfg.control.lambda * cfg.h.get(),
        control_enabled: cfg.control_enabled,
        exchange_depth: metrics.exchange_depth,
        exchange_cycles: metrics.exchange_cycles,
        late_envelope_x2: metrics.max_envelope_x2_between(window.0, window.1),
        suppression_ratio: suppression_ratio(&metrics, &baseline, window.0, window.1),
        max_abs_u: trajectory.u.iter().map(|u| u.abs()).fold(0.0, f64::max),
        max_control_excursion: trajectory.u.iter().map(|u| (u - u0).abs()).fold(0.0, f64::max),
        rms_displacement: metrics.rms_displacement,
        mean_energy: metrics.mean_energy,
        fallback_steps: trace.fallback_count(),
        diverged: false,
        error: None,
    };
    Ok(RunOutcome {
        config: cfg.clone(),
        trajectory,
        trace,
        metrics,
        baseline,
        summary,
    })
}

/// Files written for one run.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub config: PathBuf,
    pub summary: PathBuf,
}

/// Writes `<label>.csv` (strided), `<label>.svg`, `<label>.cfg` and `<label>_summary.csv`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let label = outcome.label();
    let files = RunFiles {
        csv: dir.join(format!("{label}.csv")),
        svg: dir.join(format!("{label}.svg")),
        config: dir.join(format!("{label}.cfg")),
        summary: dir.join(format!("{label}_summary.csv")),
    };
    let strided = outcome.trajectory.strided(outcome.config.output_stride);
    write_csv(&strided, &files.csv)?;
    let title = format!(
        "{label}: h = {}, λ = {}{}",
        outcome.config.h.get(),
        outcome.config.control.lambda,
        if outcome.config.control_enabled { "" } else { ", no control" }
    );
    write_svg(&strided, &files.svg, &title)?;
    outcome.config.save(&files.config)?;
    write_summary_csv(std::slice::from_ref(&outcome.summary), &files.summary)?;
    Ok(files)
}

pub fn run_preset(preset: Preset, out_dir: &Path) -> Result<(RunOutcome, RunFiles)> {
    let outcome = run_config(&preset.config())?;
    let files = write_outputs(&outcome, out_dir)?;
    Ok((outcome, files))
}

/// How the `λ` axis of a sweep is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaAxis {
    /// Every `λ` with every `h`.
    Free(Vec<f64>),
    /// `λ = λ₀ / h` for every `λ₀` and `h`, holding `λh` fixed.
    Locked(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Everything except `h` and `λ` comes from here.
    pub base: SimulationConfig,
    pub steps: Vec<f64>,
    pub lambdas: LambdaAxis,
}

impl SweepSpec {
    /// Cell configurations in row order: `h` outer, `λ` inner.
    pub fn cells(&self) -> Result<Vec<SimulationConfig>> {
        let axis = match &self.lambdas {
            LambdaAxis::Free(v) | LambdaAxis::Locked(v) => v,
        };
        if self.steps.is_empty() || axis.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        let mut cells = Vec::with_capacity(self.steps.len() * axis.len());
        for &h in &self.steps {
            for &l in axis {
                let mut cfg = self.base.clone();
                cfg.h = StepSize::new(h)?;
                cfg.control.lambda = match self.lambdas {
                    LambdaAxis::Free(_) => l,
                    LambdaAxis::Locked(_) => l / h,
                };
                cfg.control_enabled = true;
                cfg.preset_name = Some(format!("h{h}_lambda{}", cfg.control.lambda));
                cells.push(cfg);
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

// Not derivable: the default variant depends on the feature set.
#[allow(clippy::derivable_impls)]
impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// One summary row per cell in deterministic order. A cell that fails to run
/// (divergence, invalid parameters) yields a flagged row instead of an error.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunSummary>> {
    run_sweep_with(spec, Execution::default())
}

pub fn run_sweep_with(spec: &SweepSpec, execution: Execution) -> Result<Vec<RunSummary>> {
    let cells = spec.cells()?;
    let run_cell = |cfg: &SimulationConfig| match run_config(cfg) {
        Ok(outcome) => outcome.summary,
        Err(err) => RunSummary::failed(label_of(cfg), cfg, &err),
    };
    let rows = match execution {
        Execution::Sequential => cells.iter().map(run_cell).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            cells.par_iter().map(run_cell).collect()
        }
    };
    Ok(rows)
}

pub fn write_summary_csv(rows: &[RunSummary], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RunSummary::HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}
