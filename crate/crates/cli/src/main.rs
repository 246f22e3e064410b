//! `spreadmaps`: validate, compose, coarsen and verify instance files, and
//! tabulate ω.
//!
//! Reports are JSON on standard output (or `-o`). A command that cannot
//! produce its report writes `{"error": {...}}` to standard error.
//!
//! Exit codes: 0 pass, 1 usage or I/O, 2 validation failure, 3 tolerance
//! failure, 4 truncation insufficient, 5 schema error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod failure;
mod instance;
mod suites;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use spreadmaps::io::to_json;
use spreadmaps::mc::{mc_verify, McSettings};
use spreadmaps::poisson::omega;
use spreadmaps::{Complex64, InstanceFile, MellinGrid, Partition, Payload};

use failure::{Failure, EXIT_PASS, EXIT_TOLERANCE, EXIT_VALIDATION};
use instance::{load, Overrides, Poly};
use suites::{Input, Suite};

#[derive(Parser)]
#[command(
    name = "spreadmaps",
    version,
    about = "Measure-valued spreading maps: checks and ω tables"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Tolerance for residual and equality checks [default: 1e-9]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Multiplicity cap, overrides the file policy
    #[arg(long, global = true)]
    cap: Option<u32>,
    /// Allowed omitted Poisson mass, overrides the file policy
    #[arg(long, global = true)]
    tail: Option<f64>,
    /// Normed-exponent series tail, overrides the file policy
    #[arg(long = "series-tail", global = true)]
    series_tail: Option<f64>,
    /// Mellin exponents as `re:im` pairs, comma separated, e.g. `0:0,1:0,0:1`
    #[arg(long = "mellin-grid", global = true, value_parser = parse_grid)]
    mellin_grid: Option<MellinGrid>,
}

#[derive(Subcommand)]
enum Command {
    /// Check marginal laws; exit 2 if a residual exceeds --tol
    Validate { path: PathBuf },
    /// Compose Q ∘ P (first P, then Q)
    Compose {
        q: PathBuf,
        p: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Group finite points; partitions are comma-separated group labels
    Coarsen {
        path: PathBuf,
        #[arg(long = "source-partition", value_parser = parse_partition)]
        source_partition: Partition,
        #[arg(long = "target-partition", value_parser = parse_partition)]
        target_partition: Partition,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Re-emit an instance file in canonical form
    Canonical {
        path: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Identity polymorphism on the source or target space of an instance
    Identity {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "target")]
        side: Side,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Truncated ω matrix with its truncation certificate
    Omega {
        path: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write `phi,psi,position,mass` rows
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a verification suite on one instance, or on P and Q
    Verify {
        path: PathBuf,
        path_q: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare sampled Poisson routings with the ω entries
    McVerify {
        path: PathBuf,
        #[arg(long, default_value_t = McSettings::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = McSettings::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = McSettings::default().streams)]
        streams: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Side {
    Source,
    Target,
}

fn parse_grid(text: &str) -> Result<MellinGrid, String> {
    let points = text
        .split(',')
        .map(|item| {
            let (re, im) = item.split_once(':').unwrap_or((item, "0"));
            let re: f64 = re.trim().parse().map_err(|e| format!("{item}: {e}"))?;
            let im: f64 = im.trim().parse().map_err(|e| format!("{item}: {e}"))?;
            Ok(Complex64::new(re, im))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(MellinGrid(points))
}

fn parse_partition(text: &str) -> Result<Partition, String> {
    let labels = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("{s}: {e}")))
        .collect::<Result<Vec<_>, String>>()?;
    Partition::new(labels).map_err(|e| e.to_string())
}

/// Report text plus exit code.
struct Done {
    text: String,
    code: u8,
}

fn report(value: Value, passed: bool, fail_code: u8) -> Done {
    Done {
        text: to_json(&value),
        code: if passed { EXIT_PASS } else { fail_code },
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn poly_of(path: &Path) -> Result<(Poly, InstanceFile), Failure> {
    let file = load(path)?;
    let poly = Poly::from_payload(file.payload.clone(), path)?;
    Ok((poly, file))
}

fn require_valid(poly: &Poly, path: &Path, tol: f64) -> Result<(), Failure> {
    let v = poly.validate(tol);
    if v.accepted {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "{}: marginal residual {:e} exceeds {tol:e}",
            path.display(),
            v.max_residual()
        )))
    }
}

fn emit_instance(payload: Payload, file: &InstanceFile, out: Option<&Path>) -> Result<(), Failure> {
    let result = InstanceFile {
        payload,
        policy: file.policy,
    };
    write_out(out, &result.to_json())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let g = cli.global;
    let overrides = Overrides {
        tol: g.tol,
        cap: g.cap,
        tail: g.tail,
        series_tail: g.series_tail,
        mellin_grid: g.mellin_grid,
    };
    match cli.command {
        Command::Validate { path } => {
            let file = load(&path)?;
            let settings = overrides.settings(&file.policy)?;
            let (residuals, passed) = match &file.payload {
                Payload::Measure(m) => (
                    json!({"atoms": m.len(), "total_mass": m.total_mass(), "first_moment": m.first_moment()}),
                    true,
                ),
                other => {
                    let v = Poly::from_payload(other.clone(), &path)?.validate(settings.tol);
                    (serde_json::to_value(v).expect("plain struct"), v.accepted)
                }
            };
            let done = report(
                json!({
                    "command": "validate",
                    "path": path.display().to_string(),
                    "kind": file.payload.kind(),
                    "settings": settings,
                    "residuals": residuals,
                    "passed": passed,
                }),
                passed,
                EXIT_VALIDATION,
            );
            write_out(None, &done.text)?;
            Ok(done.code)
        }
        Command::Compose { q, p, out } => {
            let (pp, pfile) = poly_of(&p)?;
            let (qq, _) = poly_of(&q)?;
            let settings = overrides.settings(&pfile.policy)?;
            require_valid(&pp, &p, settings.tol)?;
            require_valid(&qq, &q, settings.tol)?;
            let r = qq.after(&pp)?;
            emit_instance(r.into_payload(), &pfile, out.as_deref())?;
            Ok(EXIT_PASS)
        }
        Command::Coarsen {
            path,
            source_partition,
            target_partition,
            out,
        } => {
            let (poly, file) = poly_of(&path)?;
            let settings = overrides.settings(&file.policy)?;
            require_valid(&poly, &path, settings.tol)?;
            if source_partition.len() != poly.source_len() || target_partition.len() != poly.target_len() {
                return Err(Failure::schema(format!(
                    "partitions of sizes {}, {} do not fit a {}×{} instance",
                    source_partition.len(),
                    target_partition.len(),
                    poly.source_len(),
                    poly.target_len()
                )));
            }
            let c = poly.coarsen(&source_partition, &target_partition)?;
            emit_instance(c.into_payload(), &file, out.as_deref())?;
            Ok(EXIT_PASS)
        }
        Command::Canonical { path, out } => {
            let file = load(&path)?;
            write_out(out.as_deref(), &file.to_json())?;
            Ok(EXIT_PASS)
        }
        Command::Identity { path, side, out } => {
            let (poly, file) = poly_of(&path)?;
            let id = poly.identity(matches!(side, Side::Target));
            emit_instance(id.into_payload(), &file, out.as_deref())?;
            Ok(EXIT_PASS)
        }
        Command::Omega { path, out, csv } => {
            let (poly, file) = poly_of(&path)?;
            let settings = overrides.settings(&file.policy)?;
            require_valid(&poly, &path, settings.tol)?;
            let result = omega(&poly.to_bordered(), &settings.policy)?;
            if let Some(csv_path) = &csv {
                write_out(Some(csv_path), &omega_csv(&result.matrix))?;
            }
            let m = &result.matrix;
            let passed = result.validation.accepted;
            let done = report(
                json!({
                    "command": "omega",
                    "path": path.display().to_string(),
                    "settings": settings,
                    "source_configs": m.source_configs,
                    "target_configs": m.target_configs,
                    "source_masses": m.poly.source().masses(),
                    "target_masses": m.poly.target().masses(),
                    "entries": m.poly.entries(),
                    "certificate": result.certificate,
                    "validation": result.validation,
                    "passed": passed,
                }),
                passed,
                EXIT_TOLERANCE,
            );
            write_out(out.as_deref(), &done.text)?;
            Ok(done.code)
        }
        Command::Verify {
            path,
            path_q,
            suite,
            out,
        } => {
            let file = load(&path)?;
            let settings = overrides.settings(&file.policy)?;
            let second = path_q.as_deref().map(load).transpose()?;
            let input = match (file.payload, second) {
                (Payload::Measure(m), None) => Input::Measures(vec![m]),
                (
                    Payload::Measure(m),
                    Some(InstanceFile {
                        payload: Payload::Measure(n),
                        ..
                    }),
                ) => Input::Measures(vec![m, n]),
                (payload, second) => {
                    let p = Poly::from_payload(payload, &path)?;
                    let q = match (second, &path_q) {
                        (Some(f), Some(qp)) => Some(Poly::from_payload(f.payload, qp)?),
                        _ => None,
                    };
                    Input::Polys(p, q)
                }
            };
            let checks = suites::run(suite, input, &settings)?;
            let passed = checks.iter().all(|c| c.passed);
            let done = report(
                json!({
                    "command": "verify",
                    "suite": suite,
                    "paths": std::iter::once(&path).chain(path_q.as_ref()).map(|p| p.display().to_string()).collect::<Vec<_>>(),
                    "settings": settings,
                    "checks": checks,
                    "passed": passed,
                }),
                passed,
                EXIT_TOLERANCE,
            );
            write_out(out.as_deref(), &done.text)?;
            Ok(done.code)
        }
        Command::McVerify {
            path,
            samples,
            seed,
            streams,
            out,
        } => {
            let (poly, file) = poly_of(&path)?;
            let settings = overrides.settings(&file.policy)?;
            require_valid(&poly, &path, settings.tol)?;
            let mc = McSettings {
                samples,
                seed,
                streams,
                ..McSettings::default()
            };
            let result = mc_verify(&poly.to_bordered(), &settings.policy, &mc)?;
            let passed = result.passed;
            let done = report(
                json!({
                    "command": "mc-verify",
                    "path": path.display().to_string(),
                    "settings": settings,
                    "report": result,
                    "passed": passed,
                }),
                passed,
                EXIT_TOLERANCE,
            );
            write_out(out.as_deref(), &done.text)?;
            Ok(done.code)
        }
    }
}

fn omega_csv(m: &spreadmaps::poisson::OmegaMatrix) -> String {
    let mut s = String::from("phi,psi,position,mass\n");
    for (phi, row) in m.source_configs.iter().zip(m.poly.entries()) {
        for (psi, e) in m.target_configs.iter().zip(row) {
            for a in e.atoms() {
                s.push_str(&format!("\"{phi}\",\"{psi}\",{},{}\n", a.position, a.mass));
            }
        }
    }
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                failure::EXIT_GENERAL
            } else {
                EXIT_PASS
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code)
        }
    }
}
