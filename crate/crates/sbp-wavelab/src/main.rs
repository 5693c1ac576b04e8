//! Command line front end of the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use sbp_core::interface2d::InterfaceMethod;
use sbp_core::operators::Variant;
use sbp_wavelab::cases::Case;
use sbp_wavelab::config::Settings;
use sbp_wavelab::convergence::{run_convergence, BASE_N};
use sbp_wavelab::criteria::{self, Outcome};
use sbp_wavelab::table::Table;

#[derive(Parser, Debug)]
#[command(name = "sbp-wavelab", version, about = "Experiments with fourth-order summation-by-parts wave solvers")]
struct Cli {
    /// Directory for CSV copies of every printed table.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// File of key=value overrides of the default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    All,
    Gp,
    Sat,
    GpRemoved,
    SatAdded,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CaseArg {
    Snell,
    Smooth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    GpImproved,
    GpOriginal,
    Sat3,
    Int6,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the operator variants, the ghost transforms and the borrowing constants.
    VerifyOperators {
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
        /// Grid size; the default checks 12, 16 and 33.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Largest stable time step of the selected probes.
    CflProbe {
        /// Comma separated substrings of probe labels, or `all`.
        #[arg(long, default_value = "all")]
        case: String,
    },
    /// Convergence table of one coupling on one problem.
    Converge {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Refinement levels starting at 81 coarse points per column.
        #[arg(long)]
        levels: Option<usize>,
        /// Allow levels finer than 641 coarse points per column.
        #[arg(long)]
        full: bool,
    },
    /// Long run at a large time step with the error history.
    EnergyLongtime {
        /// Final time.
        #[arg(long = "T")]
        t: Option<f64>,
    },
    /// Condition numbers and nonzeros of the ghost point systems.
    CondStudy,
    /// Every acceptance check with one PASS or FAIL line each.
    Acceptance,
}

/// Finest default level: 640 coarse intervals per row.
const DEFAULT_MAX_LEVELS: usize = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(tables: &[Table], out: &Option<PathBuf>, prefix: &str) -> Result<()> {
    for (k, t) in tables.iter().enumerate() {
        print!("{}", t.render());
        println!();
        if let Some(dir) = out {
            let name = if tables.len() == 1 { prefix.to_string() } else { format!("{prefix}-{}", k + 1) };
            t.write_csv(dir, &name)?;
        }
    }
    Ok(())
}

fn report(o: &Outcome, out: &Option<PathBuf>, prefix: &str) -> Result<bool> {
    emit(&o.tables, out, prefix)?;
    println!("{}", o.line());
    Ok(o.passed)
}

fn run(cli: Cli) -> Result<bool> {
    let settings = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let out = &cli.out;
    match cli.command {
        Command::VerifyOperators { variant, n } => {
            let variants: Vec<Variant> = match variant {
                VariantArg::All => Variant::ALL.to_vec(),
                VariantArg::Gp => vec![Variant::WithGhost],
                VariantArg::Sat => vec![Variant::NoGhost],
                VariantArg::GpRemoved => vec![Variant::GhostRemoved],
                VariantArg::SatAdded => vec![Variant::GhostAdded],
            };
            let sizes = n.map_or(vec![12, 16, 33], |n| vec![n]);
            let (ok1, d1, t1) = criteria::operator_certificates(&settings, &sizes, &variants)?;
            emit(&t1, out, "certificates")?;
            println!("{} certificates: {d1}", if ok1 { "PASS" } else { "FAIL" });
            let ok2 = report(&criteria::run(2, &settings)?, out, "transforms")?;
            let ok3 = report(&criteria::run(3, &settings)?, out, "borrowing")?;
            Ok(ok1 && ok2 && ok3)
        }
        Command::CflProbe { case } => {
            let (ok, detail, tables) = criteria::stability_thresholds(&settings, &case)?;
            emit(&tables, out, "cfl")?;
            println!("{} stability thresholds: {detail}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Command::Converge { case, method, levels, full } => {
            let case = match case {
                CaseArg::Snell => Case::Snell,
                CaseArg::Smooth => Case::Smooth,
            };
            let method = match method {
                MethodArg::GpImproved => InterfaceMethod::GpImproved,
                MethodArg::GpOriginal => InterfaceMethod::GpOriginal,
                MethodArg::Sat3 => InterfaceMethod::Sat3,
                MethodArg::Int6 => InterfaceMethod::Int6,
            };
            let mut levels = levels.unwrap_or(settings.levels);
            if !full && levels > DEFAULT_MAX_LEVELS {
                eprintln!(
                    "capping at {DEFAULT_MAX_LEVELS} levels ({}^2 coarse points); pass --full for finer grids",
                    (BASE_N << (DEFAULT_MAX_LEVELS - 1)) + 1
                );
                levels = DEFAULT_MAX_LEVELS;
            }
            let rows = run_convergence(case, method, levels)?;
            let (ok, t) = criteria::judge_convergence(case, method, &rows);
            emit(&[t], out, &format!("converge-{}-{}", case.name(), method))?;
            println!("{} convergence {} {method}", if ok { "PASS" } else { "FAIL" }, case.name());
            Ok(ok)
        }
        Command::EnergyLongtime { t } => {
            let mut s = settings.clone();
            if let Some(t) = t {
                s.longtime_time = t;
            }
            let o = criteria::run(9, &s)?;
            if let Some(dir) = out {
                for t in &o.tables {
                    t.write_csv(dir, "longtime")?;
                }
            }
            if let Some(t) = o.tables.first() {
                let every = (t.rows.len() / 25).max(1);
                let mut short = Table::new(&t.name, &["t", "error", "energy"]);
                short.rows = t.rows.iter().step_by(every).cloned().collect();
                print!("{}", short.render());
            }
            println!("{}", o.line());
            Ok(o.passed)
        }
        Command::CondStudy => report(&criteria::run(8, &settings)?, out, "conditioning"),
        Command::Acceptance => {
            let mut all = true;
            for id in 1..=criteria::TITLES.len() {
                let o = criteria::run(id, &settings)?;
                if let Some(dir) = out {
                    for (k, t) in o.tables.iter().enumerate() {
                        t.write_csv(dir, &format!("criterion{id}-{}", k + 1))?;
                    }
                }
                println!("{}", o.line());
                all &= o.passed;
            }
            Ok(all)
        }
    }
}
