//! Command-line interface.
//!
//! Five subcommands share one JSON config: `cell` (effective data), `micro`
//! (one oscillating solve), `macro` (the effective solve), `sweep` (the
//! full ε study), and `limits` (two-scale and interface functionals).
//! Outputs land under `--out`. With `--check` every run also verifies its
//! structural invariants and exits 4 when any fail; solver failures exit 3,
//! configuration problems exit 2.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::coeffs::CoefficientSet;
use crate::config::{parse_eps, Config};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::GridField;
use crate::geometry::CellGeometry;
use crate::harness::{
    interface_limit_test, run_sweep, two_scale_test, InterfaceSequence, LimitTestResult,
    Sequence, SolveAudit, TestFn,
};
use crate::homogenize::{homogenize, EffectiveSource};
use crate::problems::{solve_macro, solve_micro};
use crate::report;
use crate::solver::SolverOptions;

#[derive(Parser)]
#[command(
    name = "perihom",
    about = "Periodic homogenization of a two-phase interface problem on the unit square"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the periodic cell problems and write the effective data.
    Cell {
        #[command(flatten)]
        common: Common,
        /// Also dump the corrector fields as CSV.
        #[arg(long)]
        fields: bool,
    },
    /// Solve the oscillating-coefficient problem at one ε.
    Micro {
        #[command(flatten)]
        common: Common,
        /// ε as "1/n".
        #[arg(long)]
        eps: String,
    },
    /// Solve the effective problem on the sweep's finest grid.
    Macro {
        #[command(flatten)]
        common: Common,
    },
    /// Run the ε-sweep and write the convergence report.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the two-scale and interface limit functionals.
    Limits {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Path to the JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Verify invariants after the run; any violation exits with code 4.
    #[arg(long)]
    check: bool,
}

/// Everything a subcommand needs, derived once from the config document.
struct Ctx {
    geom: CellGeometry,
    coeffs: CoefficientSet,
    opts: SolverOptions,
    eps_ns: Vec<usize>,
    m: usize,
    config_hash: u64,
    out: PathBuf,
    check: bool,
}

impl Ctx {
    fn new(common: &Common) -> Result<Ctx> {
        let text = std::fs::read_to_string(&common.config).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", common.config.display()))
        })?;
        let cfg = Config::from_json(&text)?;
        let ctx = Ctx {
            geom: cfg.geometry()?,
            coeffs: cfg.coefficients()?,
            opts: cfg.solver_options()?,
            eps_ns: cfg.eps_ns()?,
            m: cfg.m(),
            config_hash: report::fnv1a64(text.as_bytes()),
            out: common.out.clone(),
            check: common.check,
        };
        std::fs::create_dir_all(&ctx.out)?;
        Ok(ctx)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finest_n(&self) -> usize {
        self.eps_ns.iter().copied().max().unwrap_or(1)
    }
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = dispatch(cli.command);
    match &outcome {
        Ok(violations) => {
            for v in violations {
                eprintln!("check failed: {v}");
            }
        }
        Err(err) => eprintln!("perihom: {err}"),
    }
    outcome_code(&outcome)
}

/// Maps a dispatch outcome to the process exit code: 0 for a clean run,
/// 2 for configuration and domain errors, 3 for runtime failures, 4 for a
/// run whose outputs were written but whose `--check` audit found
/// violations.
fn outcome_code(outcome: &Result<Vec<String>>) -> i32 {
    match outcome {
        Ok(violations) if violations.is_empty() => 0,
        Ok(_) => 4,
        Err(Error::Config(_) | Error::Domain(_)) => 2,
        Err(
            Error::Contract(_)
            | Error::Resource(_)
            | Error::Convergence { .. }
            | Error::Io(_),
        ) => 3,
    }
}

/// Executes one subcommand; the returned list holds `--check` violations
/// (always empty when `--check` was not requested).
fn dispatch(cmd: Command) -> Result<Vec<String>> {
    match cmd {
        Command::Cell { common, fields } => {
            let ctx = Ctx::new(&common)?;
            let hom = homogenize(&ctx.geom, &ctx.coeffs, ctx.m, &ctx.opts)?;
            ctx.write("ahom.json", &report::ahom_json(&hom))?;
            if fields {
                ctx.write("correctors.csv", &report::correctors_csv(&hom))?;
            }
            if !ctx.check {
                return Ok(Vec::new());
            }
            let mut violations = hom.invariant_violations(&ctx.coeffs);
            violations.extend(energy_violations(hom.solve_info.iter().enumerate().map(
                |(j, info)| SolveAudit { label: format!("cell corrector {}", j + 1), info: *info },
            )));
            Ok(violations)
        }
        Command::Micro { common, eps } => {
            let ctx = Ctx::new(&common)?;
            let n = parse_eps(&eps)?;
            let sol = solve_micro(&ctx.geom, &ctx.coeffs, n, ctx.m, &ctx.opts)?;
            ctx.write(&format!("micro_eps_{n}.csv"), &report::field_csv(&sol.field))?;
            ctx.write(&format!("micro_eps_{n}.json"), &report::micro_summary_json(&sol))?;
            if !ctx.check {
                return Ok(Vec::new());
            }
            let mut violations = boundary_violations(&sol.field);
            violations.extend(energy_violations([SolveAudit {
                label: format!("micro 1/{n}"),
                info: sol.info,
            }]));
            Ok(violations)
        }
        Command::Macro { common } => {
            let ctx = Ctx::new(&common)?;
            let hom = homogenize(&ctx.geom, &ctx.coeffs, ctx.m, &ctx.opts)?;
            let source = EffectiveSource {
                vol_frac: hom.vol_frac,
                f1: ctx.coeffs.f1().clone(),
                f2: ctx.coeffs.f2().clone(),
                i_gamma: hom.i_gamma,
            };
            let cells = ctx.finest_n() * ctx.m;
            let sol = solve_macro(hom.a_hom, &source, cells, &ctx.opts)?;
            ctx.write("macro.csv", &report::field_csv(&sol.field))?;
            ctx.write("macro.json", &report::macro_summary_json(&sol))?;
            if !ctx.check {
                return Ok(Vec::new());
            }
            let mut violations = boundary_violations(&sol.field);
            violations.extend(energy_violations([SolveAudit {
                label: "macro".into(),
                info: sol.info,
            }]));
            Ok(violations)
        }
        Command::Sweep { common } => {
            let ctx = Ctx::new(&common)?;
            let outcome = run_sweep(&ctx.geom, &ctx.coeffs, &ctx.eps_ns, ctx.m, &ctx.opts)?;
            ctx.write("report.csv", &report::sweep_csv(&outcome, ctx.config_hash))?;
            ctx.write("ahom.json", &report::ahom_json(&outcome.hom))?;
            if !ctx.check {
                return Ok(Vec::new());
            }
            let mut violations = outcome.invariant_violations();
            violations.extend(outcome.hom.invariant_violations(&ctx.coeffs));
            violations.extend(energy_violations(outcome.audits.iter().cloned()));
            // Geometry canary: the interface-measure identity must be exact.
            let identity = interface_limit_test(
                "interface-measure-identity",
                &ctx.geom,
                &InterfaceSequence::One,
                &TestFn::One,
                &ctx.eps_ns,
                ctx.m,
                None,
            )?;
            if identity.gap != 0.0 {
                violations.push(format!(
                    "interface-measure identity has gap {:.3e}, expected exactly 0",
                    identity.gap
                ));
            }
            Ok(violations)
        }
        Command::Limits { common } => {
            let ctx = Ctx::new(&common)?;
            let results = limit_suite(&ctx)?;
            ctx.write("limits.json", &report::limits_json(&results))?;
            if !ctx.check {
                return Ok(Vec::new());
            }
            let mut violations = Vec::new();
            for r in &results {
                violations.extend(r.invariant_violations());
                if r.id == "interface-measure-identity" && r.gap != 0.0 {
                    violations.push(format!("{}: gap {:.3e}, expected exactly 0", r.id, r.gap));
                }
                if r.id.starts_with("oscillate-") && r.reliable && r.gap > 0.02 {
                    violations.push(format!(
                        "{}: gap {:.3e} exceeds the two-scale tolerance 0.02",
                        r.id, r.gap
                    ));
                }
            }
            Ok(violations)
        }
    }
}

/// The standard limit-functional catalog: the two oscillating two-scale
/// functionals on the sweep's finest grid, the exact interface-measure
/// identity, and one interface functional with a genuine x-dependence.
fn limit_suite(ctx: &Ctx) -> Result<Vec<LimitTestResult>> {
    let quad = ctx.finest_n() * ctx.m;
    let x1 = Expr::Poly { c00: 0.0, c10: 1.0, c01: 0.0 };
    Ok(vec![
        two_scale_test(
            "oscillate-vs-one",
            &Sequence::Oscillate,
            &TestFn::One,
            &ctx.eps_ns,
            quad,
            None,
        )?,
        two_scale_test(
            "oscillate-vs-cos2piy1",
            &Sequence::Oscillate,
            &TestFn::CosY1Macro(Expr::Const(1.0)),
            &ctx.eps_ns,
            quad,
            None,
        )?,
        interface_limit_test(
            "interface-measure-identity",
            &ctx.geom,
            &InterfaceSequence::One,
            &TestFn::One,
            &ctx.eps_ns,
            ctx.m,
            None,
        )?,
        interface_limit_test(
            "interface-vs-x1",
            &ctx.geom,
            &InterfaceSequence::One,
            &TestFn::Macro(x1),
            &ctx.eps_ns,
            ctx.m,
            None,
        )?,
    ])
}

fn energy_violations(audits: impl IntoIterator<Item = SolveAudit>) -> Vec<String> {
    audits
        .into_iter()
        .filter(|a| !(a.info.energy_gap <= 1e-8))
        .map(|a| {
            format!(
                "{}: energy identity gap {:.3e} exceeds 1e-8",
                a.label, a.info.energy_gap
            )
        })
        .collect()
}

fn boundary_violations(field: &GridField) -> Vec<String> {
    let np = field.cells_per_side() + 1;
    let vals = field.values();
    let mut out = Vec::new();
    for iy in 0..np {
        for ix in 0..np {
            let on_boundary = ix == 0 || iy == 0 || ix == np - 1 || iy == np - 1;
            if on_boundary && vals[iy * np + ix] != 0.0 {
                out.push(format!(
                    "boundary node ({ix}, {iy}) holds {} instead of 0",
                    vals[iy * np + ix]
                ));
            }
        }
    }
    out
}
