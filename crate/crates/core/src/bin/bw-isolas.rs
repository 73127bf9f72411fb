use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use bw_isolas::dispersion::{collision_ladder, solve_collision, ModelSetup};
use bw_isolas::error::Error;
use bw_isolas::ffh::{self, DEFAULT_MODES};
use bw_isolas::perturbation::isola_asymptotics;
use bw_isolas::report::{self, Dataset, Format};
use bw_isolas::stokes::stokes_coefficients;

#[derive(Parser, Debug)]
#[command(
    name = "bw-isolas",
    version,
    about = "High-frequency instabilities of Stokes waves in a bidirectional Whitham model"
)]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    /// Fourier truncation: modes -N..=N.
    #[arg(long, global = true, default_value_t = DEFAULT_MODES)]
    modes: usize,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Method {
    Numeric,
    Asymptotic,
    Both,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha_min: f64,
    #[arg(long, default_value_t = 5.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 400)]
    points: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recompute the published Floquet intervals at eps = 1e-3.
    Table1,
    /// Fit width, growth and numeric/asymptotic gap against amplitude.
    Convergence {
        #[arg(long, allow_hyphen_values = true)]
        p: i64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_value = "2.5e-4,5e-4,7.5e-4,1e-3")]
        epsilons: Vec<f64>,
    },
    /// Signed S_3 over aspect ratio, with its roots.
    SweepS3(SweepArgs),
    /// Signed S_2 over aspect ratio, with its roots.
    SweepS2(SweepArgs),
    /// Eigenvalues over a uniform grid of Floquet exponents.
    Spectrum {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        mu_min: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        mu_max: f64,
        #[arg(long, default_value_t = 101)]
        mu_steps: usize,
    },
    /// One isola by direct computation, asymptotics, or both.
    Isola {
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        #[arg(long, allow_hyphen_values = true)]
        p: i64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Direct isola points against the asymptotic ellipse.
    Curves {
        #[arg(long, allow_hyphen_values = true)]
        p: i64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Stokes wave profile, or its coefficients with --coeffs.
    Stokes {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        coeffs: bool,
    },
    /// Collision point for one offset, or the ladder 2..=PMAX with --ladder.
    Collision {
        #[arg(long)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "ladder")]
        p: Option<i64>,
        #[arg(long)]
        ladder: Option<i64>,
    },
}

struct Outcome {
    dataset: Dataset,
    default_format: Format,
    pass: bool,
}

fn outcome(dataset: Dataset, default_format: Format) -> Outcome {
    Outcome {
        dataset,
        default_format,
        pass: true,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let modes = cli.modes;
    Ok(match &cli.command {
        Command::Table1 => {
            let rows = report::reproduce_table1(modes)?;
            let pass = rows.iter().all(|r| r.numeric_pass && r.asymptotic_pass);
            for r in &rows {
                eprintln!(
                    "alpha={} p={} numeric {} ({:.2e}) asymptotic {} ({:.2e})",
                    r.record.alpha,
                    r.record.p,
                    if r.numeric_pass { "PASS" } else { "FAIL" },
                    r.numeric_error,
                    if r.asymptotic_pass { "PASS" } else { "FAIL" },
                    r.asymptotic_error
                );
            }
            Outcome {
                dataset: report::table1_dataset(&rows, modes)?,
                default_format: Format::Csv,
                pass,
            }
        }
        Command::Convergence { p, alpha, epsilons } => {
            let r = report::convergence_study(*p, *alpha, epsilons, modes)?;
            outcome(report::convergence_dataset(&r)?, Format::Json)
        }
        Command::SweepS3(a) => outcome(
            report::sweep_dataset(&report::s_sweep(3, a.alpha_min, a.alpha_max, a.points)?)?,
            Format::Csv,
        ),
        Command::SweepS2(a) => outcome(
            report::sweep_dataset(&report::s_sweep(2, a.alpha_min, a.alpha_max, a.points)?)?,
            Format::Csv,
        ),
        Command::Spectrum {
            alpha,
            epsilon,
            mu_min,
            mu_max,
            mu_steps,
        } => {
            if *mu_steps < 1 || mu_min > mu_max {
                return Err(Error::InvalidInput("need mu-steps >= 1 and mu-min <= mu-max".into()).into());
            }
            let series = stokes_coefficients(&ModelSetup::new(*alpha)?)?;
            let grid: Vec<f64> = if *mu_steps == 1 {
                vec![*mu_min]
            } else {
                (0..*mu_steps)
                    .map(|i| mu_min + (mu_max - mu_min) * i as f64 / (*mu_steps - 1) as f64)
                    .collect()
            };
            let slices = ffh::scan(&series, *epsilon, &grid, modes)?;
            outcome(report::spectrum_dataset(*alpha, *epsilon, &slices, modes)?, Format::Csv)
        }
        Command::Isola {
            method,
            p,
            alpha,
            epsilon,
        } => {
            let setup = ModelSetup::new(*alpha)?;
            let series = stokes_coefficients(&setup)?;
            let collision = solve_collision(*p, &setup)?;
            let asym = isola_asymptotics(&collision, &series)?;
            match method {
                Method::Asymptotic => outcome(report::asymptotic_isola_dataset(&asym, *epsilon)?, Format::Json),
                Method::Numeric => {
                    let seed = report::asymptotic_seed(&asym, *epsilon);
                    let m = ffh::extract_isola(&series, *epsilon, &seed, modes)?;
                    outcome(report::numeric_isola_dataset(*alpha, &m)?, Format::Json)
                }
                Method::Both => outcome(
                    report::comparison_dataset(&report::compare(*p, *alpha, *epsilon, modes)?)?,
                    Format::Json,
                ),
            }
        }
        Command::Curves { p, alpha, epsilon } => {
            let c = report::curve_comparison(*p, *alpha, *epsilon, modes)?;
            outcome(report::curves_dataset(&c, modes)?, Format::Csv)
        }
        Command::Stokes {
            alpha,
            epsilon,
            samples,
            coeffs,
        } => {
            let series = stokes_coefficients(&ModelSetup::new(*alpha)?)?;
            if *coeffs {
                outcome(report::coefficients_dataset(&series)?, Format::Json)
            } else {
                if *samples == 0 {
                    return Err(Error::InvalidInput("samples must be positive".into()).into());
                }
                outcome(report::stokes_dataset(&series, *epsilon, *samples)?, Format::Csv)
            }
        }
        Command::Collision { alpha, p, ladder } => {
            let setup = ModelSetup::new(*alpha)?;
            let points = match ladder {
                Some(pmax) => collision_ladder(*pmax, &setup)?,
                None => vec![solve_collision(p.expect("required by clap"), &setup)?],
            };
            outcome(report::collision_dataset(&points)?, Format::Json)
        }
    })
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<Error>(),
        Some(
            Error::InvalidAlpha(_)
                | Error::InvalidInput(_)
                | Error::NoCollision { .. }
                | Error::UnsupportedOrder(_)
                | Error::TooFewModes { .. }
        )
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = run(&cli).and_then(|o| {
        let format = match cli.format {
            Some(OutputFormat::Csv) => Format::Csv,
            Some(OutputFormat::Json) => Format::Json,
            None => o.default_format,
        };
        let text = report::emit(&o.dataset, cli.out.as_deref(), format).context("writing output")?;
        if cli.out.is_none() {
            print!("{text}");
        }
        Ok(o.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
