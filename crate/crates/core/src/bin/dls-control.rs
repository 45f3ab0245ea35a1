use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dls_control::analysis::{compare_lambda_h, map_jacobian_spectrum, q_estimate};
use dls_control::experiment::{run_config, write_outputs, write_summary_csv, LambdaAxis, RunSummary, SweepSpec};
use dls_control::io::read_csv;
use dls_control::{run_sweep, DuffingParams, Preset, SimulationConfig, StepSize, SystemState, Trajectory};

#[derive(Parser)]
#[command(name = "dls-control", version, about = "Damped least-squares beat suppression experiments")]
struct Cli {
    /// Reserved; every run is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Overrides {
    /// Sampling time step.
    #[arg(long)]
    h: Option<f64>,
    /// Damping constant λ of the least-squares update.
    #[arg(long)]
    lambda: Option<f64>,
    /// Set λ = λ₀ / h.
    #[arg(long, conflicts_with = "lambda")]
    lambda0: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Hold u at u₀.
    #[arg(long)]
    no_control: bool,
    /// Write every sample instead of one per 0.01 time units.
    #[arg(long)]
    full_resolution: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut SimulationConfig) -> Result<()> {
        if let Some(h) = self.h {
            cfg.h = StepSize::new(h)?;
            cfg.output_stride = dls_control::experiment::default_stride(h);
        }
        if let Some(l) = self.lambda {
            cfg.control.lambda = l;
        }
        if let Some(l0) = self.lambda0 {
            cfg.control.lambda = l0 / cfg.h.get();
        }
        if let Some(t) = self.t_end {
            cfg.t_end = t;
        }
        if self.no_control {
            cfg.control_enabled = false;
        }
        if self.full_resolution {
            cfg.output_stride = 1;
        }
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset (fig1..fig5) and write CSV, SVG, config and summary.
    Preset {
        name: Preset,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep a grid of step sizes and damping constants.
    Sweep {
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.001")]
        h: Vec<f64>,
        /// Comma-separated damping constants.
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
        lambda: Vec<f64>,
        /// Comma-separated λh products; overrides --lambda and locks λ = λ₀/h.
        #[arg(long, value_delimiter = ',')]
        lambda0: Option<Vec<f64>>,
        #[arg(long = "t-end", default_value_t = 200.0)]
        t_end: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Compare the control traces of two runs (preset names or trajectory CSV files).
    Compare { run_a: String, run_b: String },
    /// Linearized spectrum of the sampled loop.
    Spectrum {
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        u: f64,
        #[arg(long, default_value_t = 0.0)]
        x1: f64,
        #[arg(long, default_value_t = 0.0)]
        x2: f64,
        #[arg(long, default_value_t = 0.0)]
        v1: f64,
        #[arg(long, default_value_t = 0.0)]
        v2: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        zeta: Option<f64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preset {
            name,
            out_dir,
            overrides,
        } => {
            let mut cfg = name.config();
            overrides.apply(&mut cfg)?;
            execute(&cfg, &out_dir)
        }
        Command::Run {
            config,
            out_dir,
            overrides,
        } => {
            let mut cfg = SimulationConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            overrides.apply(&mut cfg)?;
            execute(&cfg, &out_dir)
        }
        Command::Sweep {
            h,
            lambda,
            lambda0,
            t_end,
            out_dir,
        } => {
            let base = SimulationConfig {
                t_end,
                ..SimulationConfig::default()
            };
            let lambdas = match lambda0 {
                Some(l0) => LambdaAxis::Locked(l0),
                None => LambdaAxis::Free(lambda),
            };
            let spec = SweepSpec {
                base,
                steps: h,
                lambdas,
            };
            let rows = run_sweep(&spec)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("sweep.csv");
            write_summary_csv(&rows, &path)?;
            print_summaries(&rows);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Compare { run_a, run_b } => {
            let a = load_run(&run_a)?;
            let b = load_run(&run_b)?;
            let c = compare_lambda_h(&a, &b)?;
            println!("grid points      {}", c.grid_points);
            println!("rms difference   {:.6e}", c.rms_difference);
            println!("rms (coarse)     {:.6e}", c.rms_coarse);
            println!("rms (fine)       {:.6e}", c.rms_fine);
            println!("relative rms     {:.6}", c.relative_rms);
            println!("max deviation    {:.6e}", c.max_deviation);
            Ok(())
        }
        Command::Spectrum {
            h,
            lambda,
            u,
            x1,
            x2,
            v1,
            v2,
            epsilon,
            zeta,
        } => {
            let mut p = DuffingParams::reference();
            if let Some(e) = epsilon {
                p.epsilon = e;
            }
            if let Some(z) = zeta {
                p.zeta = z;
            }
            p.validate()?;
            let cfg = dls_control::DuffingControlConfig::new(lambda, u)?;
            let at = SystemState::new(vec![x1, x2], vec![v1, v2], 0.0)?;
            let report = map_jacobian_spectrum(&p, &cfg, StepSize::new(h)?, &at, u)?;
            println!("characteristic roots p_i:");
            for r in &report.char_roots {
                println!("  {:+.10} {:+.10}i", r.re, r.im);
            }
            println!("map eigenvalues (|mu|):");
            for z in &report.eigenvalues {
                println!("  {:+.10} {:+.10}i   ({:.10})", z.re, z.im, z.norm());
            }
            println!("increment eigenvalues q = mu - 1:");
            for z in &report.increment_eigenvalues {
                println!("  {:+.10} {:+.10}i", z.re, z.im);
            }
            println!("spectral radius  {:.12}", report.spectral_radius);
            println!("verdict          {:?}", report.attraction_verdict);
            match q_estimate(p.omega, v2, lambda) {
                Ok(q) => println!("q estimate       {q:.10}"),
                Err(e) => println!("q estimate       {e}"),
            }
            Ok(())
        }
    }
}

fn execute(cfg: &SimulationConfig, out_dir: &Path) -> Result<()> {
    let outcome = run_config(cfg)?;
    let files = write_outputs(&outcome, out_dir)?;
    print_summaries(std::slice::from_ref(&outcome.summary));
    for p in [&files.csv, &files.svg, &files.config, &files.summary] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn load_run(spec: &str) -> Result<Trajectory> {
    if let Ok(preset) = spec.parse::<Preset>() {
        return Ok(run_config(&preset.config())?.trajectory);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("`{spec}` is neither a preset name nor an existing CSV file");
    }
    read_csv(path).with_context(|| format!("reading {spec}"))
}

fn print_summaries(rows: &[RunSummary]) {
    println!(
        "{:<24} {:>8} {:>9} {:>8} {:>7} {:>6} {:>10} {:>10} {:>10} {:>10}",
        "label", "h", "lambda", "lambda*h", "depth", "cycles", "late env2", "suppress", "max|u-u0|", "rms |x|"
    );
    for r in rows {
        if let Some(err) = &r.error {
            println!("{:<24} {:>8} {:>9} FAILED: {err}", r.label, r.h, r.lambda);
            continue;
        }
        println!(
            "{:<24} {:>8} {:>9} {:>8.4} {:>7.1} {:>6} {:>10.5} {:>10.4} {:>10.4} {:>10.5}",
            r.label,
            r.h,
            r.lambda,
            r.lambda_h,
            r.exchange_depth,
            r.exchange_cycles,
            r.late_envelope_x2,
            r.suppression_ratio,
            r.max_control_excursion,
            r.rms_displacement
        );
    }
}
