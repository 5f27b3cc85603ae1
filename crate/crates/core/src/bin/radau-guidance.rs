use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use radau_guidance::config::{preset, CampaignConfig, PRESETS};
use radau_guidance::guidance::{run_mission, solve_reference, Method};
use radau_guidance::monte_carlo::{run_campaign, summarize};
use radau_guidance::report;
use radau_guidance::{Error, Result};

const WORKERS_ENV: &str = "RADAU_GUIDANCE_WORKERS";

#[derive(Parser)]
#[command(
    name = "radau-guidance",
    version,
    about = "Desensitized optimal guidance by Radau collocation"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Weights {
    /// Named (q, beta) case, see `presets`.
    #[arg(long)]
    preset: Option<String>,
    /// Terminal sensitivity weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Parameter standard deviation as a fraction of nominal.
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference problem and write its trajectory.
    Solve {
        #[command(flatten)]
        weights: Weights,
        /// Solve the problem without the sensitivity penalty.
        #[arg(long)]
        plain: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fly one closed-loop (or open-loop) mission on a perturbed plant.
    Mission {
        #[command(flatten)]
        weights: Weights,
        #[arg(long)]
        alpha_tilde: f64,
        /// OC, DOC, OG or DOG.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo campaign and write records, summary and plot.
    Campaign {
        #[command(flatten)]
        weights: Weights,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the named (q, beta) cases.
    Presets,
}

fn load(cli_config: Option<&PathBuf>, w: &Weights) -> Result<CampaignConfig> {
    let mut cfg = match cli_config {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(name) = &w.preset {
        let p = preset(name)?;
        cfg.preset = Some(name.clone());
        cfg.mc.q = p.q;
        cfg.mc.beta = p.beta;
    }
    if let Some(b) = w.beta {
        cfg.mc.beta = b;
    }
    if let Some(q) = w.q {
        cfg.mc.q = q;
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        cfg.mc.workers = v.trim().parse().map_err(|_| {
            Error::Config(format!("{WORKERS_ENV}: expected a worker count, got '{v}'"))
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Presets => {
            println!("name   q     beta");
            for p in PRESETS {
                println!("{:<6} {:<5} {}", p.name, p.q, p.beta);
            }
        }
        Command::Solve {
            weights,
            plain,
            out,
        } => {
            let cfg = load(cli.config.as_ref(), &weights)?;
            let setup = cfg.mission_setup()?;
            let reference = solve_reference(&setup, !plain)?;
            let traj = reference.trajectory();
            let path = out.unwrap_or_else(|| cfg.output_dir.join("solve.csv"));
            report::write_trajectory_csv(traj, &path)?;
            println!("beta           {}", if plain { 0.0 } else { cfg.mc.beta });
            println!("q              {}", cfg.mc.q);
            println!("iterations     {}", reference.outcome.iterations());
            println!("objective      {}", report::fmt_f64(traj.objective));
            println!(
                "base objective {}",
                report::fmt_f64(reference.base_objective)
            );
            println!(
                "x(t0)          {}",
                report::fmt_f64(traj.initial_state()[0])
            );
            println!("x(tf)          {}", report::fmt_f64(traj.final_state()[0]));
            if let Some(s) = traj.sensitivity_at(traj.time_span().1)? {
                println!("S(tf)          {}", report::fmt_f64(s[(0, 0)]));
            }
            println!("wrote {}", path.display());
        }
        Command::Mission {
            weights,
            alpha_tilde,
            method,
            out,
        } => {
            let cfg = load(cli.config.as_ref(), &weights)?;
            let method = method.unwrap_or(cfg.method);
            let setup = cfg.mission_setup()?;
            let reference = solve_reference(&setup, method.is_desensitized())?;
            let p = DVector::from_element(1, alpha_tilde);
            let result = run_mission(&setup, method, &p, &reference)?;
            let path = out.unwrap_or_else(|| {
                cfg.output_dir.join(format!(
                    "mission_{}.csv",
                    method.as_str().to_ascii_lowercase()
                ))
            });
            report::write_mission_csv(&result, &path)?;
            println!("method      {method}");
            println!("alpha_tilde {}", report::fmt_f64(alpha_tilde));
            println!("x(tf)       {}", report::fmt_f64(result.final_state[0]));
            println!("epsilon     {}", report::fmt_f64(result.epsilon[0]));
            println!("iterations  {}", result.iterations);
            println!("wrote {}", path.display());
        }
        Command::Campaign {
            weights,
            runs,
            seed,
            workers,
            out_dir,
        } => {
            let mut cfg = load(cli.config.as_ref(), &weights)?;
            if let Some(r) = runs {
                cfg.mc.runs = r;
            }
            if let Some(s) = seed {
                cfg.mc.seed = s;
            }
            if let Some(w) = workers {
                cfg.mc.workers = w;
            }
            cfg.validate()?;
            let dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let setup = cfg.mission_setup()?;
            let records = run_campaign(&cfg.mc, &setup)?;
            let summary = summarize(&records)?;
            report::write_records_csv(&records, &dir.join("records.csv"))?;
            report::write_summary(&summary, &dir.join("summary.csv"))?;
            report::emit_scatter_svg(&records, &dir.join("scatter.svg"))?;
            println!(
                "q = {}, beta = {}, runs = {}, seed = {}",
                cfg.mc.q, cfg.mc.beta, cfg.mc.runs, cfg.mc.seed
            );
            println!(
                "{:<4} {:>4} {:>6} {:>12} {:>12} {:>12} {:>12}",
                "", "ok", "failed", "mean", "median", "std", "max|eps|"
            );
            for s in &summary {
                match s.stats {
                    Some(st) => println!(
                        "{:<4} {:>4} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                        s.method.as_str(),
                        s.ok,
                        s.failures,
                        st.mean,
                        st.median,
                        st.std,
                        st.max_abs
                    ),
                    None => println!("{:<4} {:>4} {:>6}", s.method.as_str(), s.ok, s.failures),
                }
            }
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
