use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::grid::{riemannian_distance, Node, ScalarField};
use crate::operators::{infinity_x_residual_field, max_form_residual, min_form_residual};
use crate::problem::Problem;
use crate::solvers::{solve_dirichlet_infinity, solve_jensen, SolveReport};
use crate::verify::{
    check_comparison, check_log_gradient_bound, eikonal_check, harnack_suite, uniqueness_probe, CheckReport,
    CutoffField, UNIQUENESS_TOL,
};

use super::{export_field, import_field, load_problem, read_report, report_path, write_report};

const COMPARISON_SHIFT: f64 = 0.1;
const COMPARISON_TOL: f64 = 1e-6;
const HARNACK_BALLS: usize = 5;
const HARNACK_SEED: u64 = 7;
const HARNACK_TOL: f64 = 0.1;
const LOG_GRADIENT_TOL: f64 = 0.1;
const UNIQUENESS_STARTS: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "vexlap", version, about = "Variable-exponent infinity-Laplace solver and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem in a config file and write the field and a report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the Jensen parameter.
        #[arg(long, allow_hyphen_values = true)]
        epsilon: Option<f64>,
        /// Drop schedule entries above this `k`.
        #[arg(long)]
        k_max: Option<f64>,
    },
    /// Residual fields of a stored solution.
    Residual {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lattice distance from a source node.
    Distance {
        #[arg(long)]
        config: PathBuf,
        /// Source node as `i,j`.
        #[arg(long, value_parser = parse_node)]
        source: Node,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a check; exits 0 iff it passes.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Source node `i,j` for the eikonal suite.
        #[arg(long, value_parser = parse_node, default_value = "0,0")]
        source: Node,
        /// Excluded radius around the source for the eikonal suite.
        #[arg(long, default_value_t = 0.2)]
        exclusion: f64,
    },
    /// Print a stored solve report (or the report next to a field file).
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Comparison,
    Harnack,
    /// Log-gradient bound with a tent cutoff at the centre.
    Lemma41,
    Uniqueness,
    Eikonal,
}

fn parse_node(s: &str) -> std::result::Result<Node, String> {
    let (i, j) = s.split_once(',').ok_or("expected `i,j`")?;
    let idx = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok(Node::new(idx(i)?, idx(j)?))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 failed check or runtime error, 2 usage.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().ansi().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Solves with the equation selected by the problem's `epsilon`.
pub fn solve(problem: &Problem, init: Option<&ScalarField>) -> Result<(ScalarField, SolveReport)> {
    if problem.spec.epsilon == 0.0 {
        solve_dirichlet_infinity(problem, init)
    } else {
        solve_jensen(problem, init)
    }
}

fn print_check(out: &mut dyn Write, r: &CheckReport) -> Result<bool> {
    write!(out, "{r}")?;
    Ok(r.ok())
}

fn sup_abs(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}{ext}"))
}

/// Runs one check suite with the command-line defaults. `source` and
/// `exclusion` are used by the eikonal suite only.
pub fn verify_suite(problem: &Problem, suite: Suite, source: Node, exclusion: f64) -> Result<CheckReport> {
    let g = &problem.grid;
    match suite {
        Suite::Comparison => {
            let (u, _) = solve(problem, None)?;
            let raised = problem.with_boundary_values(|_, v| v + COMPARISON_SHIFT);
            let (v, _) = solve(&raised, None)?;
            Ok(check_comparison(&u, &v, g, COMPARISON_TOL))
        }
        Suite::Harnack => {
            let (u, _) = solve(problem, None)?;
            harnack_suite(&u, problem, HARNACK_BALLS, HARNACK_SEED, HARNACK_TOL)
        }
        Suite::Lemma41 => {
            let (u, _) = solve(problem, None)?;
            let (cx, cy) = (0.5 * (g.xmin + g.xmax), 0.5 * (g.ymin + g.ymax));
            let radius = 0.35 * (g.xmax - g.xmin).min(g.ymax - g.ymin);
            let zeta = CutoffField::tent(g, cx, cy, radius)?;
            check_log_gradient_bound(&u, &zeta, &problem.p, &problem.frame, g, LOG_GRADIENT_TOL)
        }
        Suite::Uniqueness => uniqueness_probe(problem, UNIQUENESS_STARTS, UNIQUENESS_TOL),
        Suite::Eikonal => {
            if source.i >= g.nx || source.j >= g.ny {
                return Err(Error::InvalidInput("eikonal source outside the lattice".into()));
            }
            let d = riemannian_distance(&problem.frame, g, source)?;
            Ok(eikonal_check(&d, &problem.frame, g, exclusion))
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Solve {
            config,
            out: path,
            epsilon,
            k_max,
        } => {
            let mut problem = load_problem(&config)?;
            if let Some(e) = epsilon {
                if !e.is_finite() {
                    return Err(Error::InvalidInput("epsilon must be finite".into()));
                }
                problem.spec.epsilon = e;
            }
            if let Some(km) = k_max {
                problem.spec.solver.k_schedule.retain(|&k| k <= km);
                if problem.spec.solver.k_schedule.is_empty() {
                    return Err(Error::InvalidInput(format!("no schedule entry is <= k-max {km}")));
                }
            }
            let (u, report) = solve(&problem, None)?;
            export_field(&u, &problem.grid, &path)?;
            let rp = report_path(&path);
            write_report(&report, &rp)?;
            writeln!(out, "wrote {} and {}", path.display(), rp.display())?;
            Ok(true)
        }
        Command::Residual { config, input, out: path } => {
            let problem = load_problem(&config)?;
            let u = import_field(&input, &problem.grid)?;
            let (g, fr, p, eps) = (&problem.grid, &problem.frame, &problem.p, problem.spec.epsilon);
            let r = infinity_x_residual_field(&u, fr, g, p)?;
            export_field(&r, g, &path)?;
            writeln!(out, "infinity_residual_sup = {:e}", sup_abs(&r))?;
            if eps > 0.0 {
                let m = min_form_residual(&u, fr, g, p, eps)?;
                export_field(&m, g, with_suffix(&path, "min"))?;
                writeln!(out, "min_form_residual_sup = {:e}", sup_abs(&m))?;
            } else if eps < 0.0 {
                let m = max_form_residual(&u, fr, g, p, eps)?;
                export_field(&m, g, with_suffix(&path, "max"))?;
                writeln!(out, "max_form_residual_sup = {:e}", sup_abs(&m))?;
            }
            Ok(true)
        }
        Command::Distance { config, source, out: path } => {
            let problem = load_problem(&config)?;
            let g = &problem.grid;
            if source.i >= g.nx || source.j >= g.ny {
                return Err(Error::InvalidInput(format!(
                    "source ({}, {}) outside the {}x{} lattice",
                    source.i, source.j, g.nx, g.ny
                )));
            }
            let d = riemannian_distance(&problem.frame, g, source)?;
            export_field(&d, g, &path)?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(true)
        }
        Command::Verify {
            config,
            suite,
            source,
            exclusion,
        } => {
            let problem = load_problem(&config)?;
            print_check(out, &verify_suite(&problem, suite, source, exclusion)?)
        }
        Command::Report { input } => {
            let path = if input.extension().is_some_and(|e| e == "csv") {
                report_path(&input)
            } else {
                input
            };
            let report = read_report(&path)?;
            let text = toml::to_string(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
            write!(out, "{text}")?;
            Ok(true)
        }
    }
}
