use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use empart::asymptotics::{
    bracketing_holds_exact, figure_rows, predicted_error_ratio, reduction_ratio, sphere_time_bound,
};
use empart::experiments::{verify_sphere_optimality, SchemeOutcome};
use empart::model::BUILTIN_MODELS;
use empart::schemes::{moving_sphere_bounds_hold, SchemeState};
use empart::{
    parse_config_with_overrides, run_monte_carlo, write_csv, ExperimentConfig, RngStream,
    SchemeKind, SchemeSpec,
};

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "EMPART_WORKERS";

#[derive(Parser)]
#[command(
    name = "empart",
    version,
    about = "Euler-Maruyama schemes on random partitions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write its moment report as CSV.
    Run(ExperimentArgs),
    /// Run an experiment and print its moments with schemes side by side.
    Table(ExperimentArgs),
    /// Write the reduction-ratio curve as CSV: d, r(d), d/(d+2).
    Figure {
        #[arg(long, default_value_t = 30)]
        max_d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run quick property checks and print pass/fail per check.
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Sample count for the sphere-exit check.
        #[arg(long, default_value_t = 20_000)]
        samples: u64,
    },
    /// List builtin models and their parameters.
    ListModels,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set paths=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output path; overrides the `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading config file {}", self.config.display()))?;
        let overrides = self
            .overrides
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                    .ok_or_else(|| anyhow!("override `{s}`: expected KEY=VALUE"))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = parse_config_with_overrides(&text, &overrides)
            .map_err(|e| anyhow!("config {}: {e}", self.config.display()))?;
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn init_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value
        .parse()
        .ok()
        .filter(|w| *w >= 1)
        .ok_or_else(|| anyhow!("{WORKERS_ENV}: `{value}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context(WORKERS_ENV)?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("out: cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.load()?;
    let outcomes = run_monte_carlo(&cfg)?;
    let mut out = open_output(cfg.out.as_deref())?;
    write_csv(&outcomes, &mut out).context("out: writing CSV")?;
    out.flush().context("out: writing CSV")?;
    for o in &outcomes {
        eprintln!(
            "{} n={}: mean steps {:.2}, wall time {:.2}s",
            o.label(),
            o.spec.n,
            o.mean_steps,
            o.wall_time.as_secs_f64()
        );
    }
    Ok(())
}

fn table(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.load()?;
    let d = cfg.build_model()?.noise_dim();
    let outcomes = run_monte_carlo(&cfg)?;
    let mut out = open_output(cfg.out.as_deref())?;
    write_table(&cfg, d, &outcomes, &mut out)?;
    out.flush()?;
    Ok(())
}

type MomentField = fn(&empart::MomentReport) -> f64;

fn write_table(
    cfg: &ExperimentConfig,
    d: usize,
    outcomes: &[SchemeOutcome],
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(
        out,
        "model {}, t = {}, {} paths, seed {}",
        cfg.model, cfg.horizon, cfg.paths, cfg.seed
    )?;
    write!(out, "{:<12}", "")?;
    for o in outcomes {
        write!(out, "{:>26}", format!("{} n={}", o.label(), o.spec.n))?;
    }
    writeln!(out)?;
    let coords = outcomes.first().map_or(0, |o| o.reports.len());
    for i in 0..coords {
        let rows: [(&str, MomentField); 4] = [
            ("E[E]", |r| r.mean),
            ("E[E^2]", |r| r.m2),
            ("E[E^3]", |r| r.m3),
            ("E[E^4]", |r| r.m4),
        ];
        for (label, get) in rows {
            write!(out, "{:<12}", format!("{label} x{}", i + 1))?;
            for o in outcomes {
                write!(out, "{:>26.4e}", get(&o.reports[i]))?;
            }
            writeln!(out)?;
        }
    }
    write!(out, "{:<12}", "mean steps")?;
    for o in outcomes {
        write!(out, "{:>26.2}", o.mean_steps)?;
    }
    writeln!(out)?;
    write!(out, "{:<12}", "wall time s")?;
    for o in outcomes {
        write!(out, "{:>26.2}", o.wall_time.as_secs_f64())?;
    }
    writeln!(out)?;
    if let [a, b, ..] = outcomes {
        if let Ok(predicted) = predicted_error_ratio(&b.spec, &a.spec, d) {
            let empirical: Vec<String> = b
                .reports
                .iter()
                .zip(&a.reports)
                .map(|(rb, ra)| format!("{:.4}", rb.m2 / ra.m2))
                .collect();
            writeln!(
                out,
                "E[E^2] ratio {}/{}: empirical {}, predicted {predicted:.4}",
                b.label(),
                a.label(),
                empirical.join(", ")
            )?;
        }
    }
    Ok(())
}

fn figure(max_d: usize, out: Option<&Path>) -> Result<()> {
    if max_d == 0 {
        bail!("max-d must be >= 1");
    }
    let mut w = open_output(out)?;
    writeln!(w, "d,r,bound")?;
    for row in figure_rows(max_d) {
        writeln!(w, "{},{:.6},{:.6}", row.d, row.r, row.lower_bound)?;
    }
    w.flush()?;
    Ok(())
}

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn verify_checks(seed: u64, samples: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let bracket_failures: Vec<usize> = (1..=100).filter(|&d| !bracketing_holds_exact(d)).collect();
    checks.push(Check {
        name: "bracketing d/(d+2) < r(d) < d/(d+1), d = 1..100".into(),
        pass: bracket_failures.is_empty(),
        detail: format!("failures {bracket_failures:?}"),
    });

    let two = verify_sphere_optimality(2, 1.0, samples, 2.5e-4, seed)?;
    let tol = 4.0 * two.std_error / two.bound + 0.01;
    checks.push(Check {
        name: "sphere exit attains the quartic bound, d = 2".into(),
        pass: two.relative_gap().abs() <= tol,
        detail: format!(
            "{:.4} vs {:.4} (tolerance {:.1}%)",
            two.estimate,
            two.bound,
            100.0 * tol
        ),
    });
    let one = verify_sphere_optimality(1, 1.0, 1000, 2.5e-4, seed)?;
    checks.push(Check {
        name: "sphere exit attains the quartic bound, d = 1".into(),
        pass: one.relative_gap().abs() <= 1e-9,
        detail: format!("{:.6} vs {:.6}", one.estimate, one.bound),
    });

    for d in 1..=3 {
        let draws = 200_000u64;
        let spec = SchemeSpec::new(SchemeKind::MovingSphere, 1)?;
        let mut rng = RngStream::new(seed, d as u64);
        let state = SchemeState::default();
        let (mut dt, mut w4, mut violations) = (0.0, 0.0, 0u64);
        for _ in 0..draws {
            let step = spec.next_step(&state, &[0.0], d, &mut rng)?;
            dt += step.dt;
            w4 += step.dw[0].powi(4);
            if !(step.dt <= sphere_time_bound(d)
                && moving_sphere_bounds_hold(step.dt, &step.dw, 1, 1.0))
            {
                violations += 1;
            }
        }
        let (dt, w4) = (dt / draws as f64, w4 / draws as f64);
        let target = 3.0 * reduction_ratio(d);
        checks.push(Check {
            name: format!("moving-sphere moments, d = {d}"),
            pass: (dt - 1.0).abs() < 0.01 && (w4 / target - 1.0).abs() < 0.02 && violations == 0,
            detail: format!(
                "E[dt] {dt:.4}, E[dw^4] {w4:.4} vs {target:.4}, bound violations {violations}"
            ),
        });
    }
    Ok(checks)
}

fn verify(seed: u64, samples: u64) -> Result<bool> {
    if samples < 1000 {
        bail!("samples must be >= 1000");
    }
    let checks = verify_checks(seed, samples)?;
    let mut all = true;
    for c in &checks {
        println!(
            "{}: {} ({})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
        all &= c.pass;
    }
    Ok(all)
}

fn list_models() {
    for m in BUILTIN_MODELS {
        println!("{}: {}", m.name, m.description);
        for p in m.params {
            println!(
                "  model.params.{} (default {}): {}",
                p.name, p.default, p.description
            );
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    init_workers()?;
    match cli.command {
        Command::Run(args) => run(&args).map(|_| true),
        Command::Table(args) => table(&args).map(|_| true),
        Command::Figure { max_d, out } => figure(max_d, out.as_deref()).map(|_| true),
        Command::Verify { seed, samples } => verify(seed, samples),
        Command::ListModels => {
            list_models();
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
