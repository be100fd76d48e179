//! Command-line front end. [`run`] returns the process exit code: 0 when
//! everything passes, 1 when a check fails or quadrature does not
//! converge, 2 for usage and document errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::chen::{holonomy, transport_series, transport_step, word_label};
use crate::error::Error;
use crate::forms::DifferentialForm;
use crate::membranes::integrate_membrane;
use crate::chen::iterated_path_integral;
use crate::quadrature::Estimate;
use crate::report::{round12, Report, Rounded};
use crate::scene::Scene;
use crate::shuffles;

#[derive(Debug, Parser)]
#[command(name = "iterint", version, about = "Iterated integrals over paths and membranes")]
struct Cli {
    /// Print a human-readable table instead of JSON.
    #[arg(long, global = true)]
    table: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterated integral of the listed 1-forms along a path.
    IntegratePath {
        document: PathBuf,
        #[arg(long)]
        path: String,
        /// Comma-separated form names, in integration order.
        #[arg(long, value_delimiter = ',', required = true)]
        forms: Vec<String>,
    },
    /// Iterated integral of a labeled integrand over a membrane.
    IntegrateMembrane {
        document: PathBuf,
        #[arg(long)]
        membrane: String,
        #[arg(long)]
        integrand: String,
    },
    /// Transport series coefficients up to a level.
    Signature {
        document: PathBuf,
        #[arg(long)]
        path: String,
        /// Alphabet of 1-forms; defaults to dx1..dxd.
        #[arg(long, value_delimiter = ',')]
        forms: Vec<String>,
        #[arg(long)]
        level: usize,
    },
    /// Holonomy of a matrix connection, or one transport step `(int w theta^n) theta(end)`.
    Transport {
        document: PathBuf,
        #[arg(long)]
        path: String,
        #[arg(long, conflicts_with_all = ["w", "theta"])]
        connection: Option<String>,
        /// Picard iterations for the holonomy.
        #[arg(long, default_value_t = 6)]
        level: usize,
        #[arg(long, requires = "theta")]
        w: Option<String>,
        #[arg(long, requires = "w")]
        theta: Option<String>,
        #[arg(long, default_value_t = 1)]
        steps: usize,
    },
    /// Run the checks of one suite, or `all`.
    Verify {
        suite: String,
        /// A document, or a directory whose `*.json` documents are all run.
        document: PathBuf,
    },
    /// Count or list shuffle permutations.
    Shuffles {
        action: ShuffleAction,
        /// First block sizes, comma-separated per direction.
        first: String,
        /// Second block sizes, comma-separated per direction.
        second: String,
        #[arg(long, value_enum)]
        family: Option<Family>,
        /// Copies of the second block for the transport family.
        #[arg(long, default_value_t = 1)]
        copies: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShuffleAction {
    Count,
    List,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    /// Plain shuffles in every direction.
    Product,
    /// Boundary-fixing shuffles in every direction.
    Barred,
    /// Barred, with the first direction fixed to concatenation.
    Glue,
    /// One first block and `copies` second blocks; last direction fixed.
    Transport,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            2
        }
    }
}

fn load(path: &PathBuf) -> Result<Scene, String> {
    Scene::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct Integral {
    value: Rounded,
    error: Rounded,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

/// Non-convergence becomes a failed result; other errors are usage errors.
fn integral(result: crate::Result<Estimate>) -> Result<Integral, String> {
    match result {
        Ok(e) => Ok(Integral {
            value: Rounded(Some(e.value)),
            error: Rounded(e.error),
            converged: true,
            message: None,
        }),
        Err(e @ Error::NonConvergence { value, estimate }) => Ok(Integral {
            value: Rounded(Some(value)),
            error: Rounded(Some(estimate)),
            converged: false,
            message: Some(e.to_string()),
        }),
        Err(e) => Err(e.to_string()),
    }
}

fn emit_integral(i: &Integral, table: bool, out: &mut dyn Write) -> Result<i32, String> {
    if table {
        let error = i.error.0.map_or("-".to_string(), |e| format!("{e:.3e}"));
        writeln!(out, "value  {:.12e}\nerror  {error}", i.value.0.unwrap_or(f64::NAN)).map_err(io)?;
        if let Some(m) = &i.message {
            writeln!(out, "{m}").map_err(io)?;
        }
    } else {
        writeln!(out, "{}", pretty(i)).map_err(io)?;
    }
    Ok(if i.converged { 0 } else { 1 })
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn io(e: std::io::Error) -> String {
    e.to_string()
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, String> {
    match &cli.command {
        Command::IntegratePath { document, path, forms } => {
            let scene = load(document)?;
            let g = scene.membrane(path)?;
            let forms = scene.form_list(forms)?;
            let i = integral(iterated_path_integral(g, &forms, &scene.path_cfg))?;
            emit_integral(&i, cli.table, out)
        }
        Command::IntegrateMembrane {
            document,
            membrane,
            integrand,
        } => {
            let scene = load(document)?;
            let g = scene.membrane(membrane)?;
            let i = scene.integrand(integrand)?;
            let i = integral(integrate_membrane(g, &i.integrand, &scene.membrane_cfg))?;
            emit_integral(&i, cli.table, out)
        }
        Command::Signature {
            document,
            path,
            forms,
            level,
        } => {
            let scene = load(document)?;
            let g = scene.membrane(path)?;
            let alphabet = if forms.is_empty() {
                (0..scene.dimension).map(|i| DifferentialForm::coordinate(scene.dimension, i)).collect()
            } else {
                scene.form_list(forms)?
            };
            let series = match transport_series(g, &alphabet, *level, &scene.path_cfg) {
                Ok(s) => s,
                Err(e @ Error::NonConvergence { .. }) => {
                    writeln!(out, "{}", pretty(&json!({"converged": false, "message": e.to_string()}))).map_err(io)?;
                    return Ok(1);
                }
                Err(e) => return Err(e.to_string()),
            };
            let mut words: Vec<_> = series.coefficients().iter().collect();
            words.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(b.0)));
            if cli.table {
                for (w, v) in words {
                    let label = if w.is_empty() { "()".to_string() } else { word_label(w) };
                    writeln!(out, "{label:<12} {v:.12e}").map_err(io)?;
                }
            } else {
                let coefficients: Vec<_> = words
                    .into_iter()
                    .map(|(w, v)| json!({"word": w.iter().map(|l| l + 1).collect::<Vec<_>>(), "value": round12(*v)}))
                    .collect();
                let doc = json!({"alphabet": alphabet.len(), "level": level, "coefficients": coefficients});
                writeln!(out, "{}", pretty(&doc)).map_err(io)?;
            }
            Ok(0)
        }
        Command::Transport {
            document,
            path,
            connection,
            level,
            w,
            theta,
            steps,
        } => {
            let scene = load(document)?;
            let g = scene.membrane(path)?;
            let result = match (connection, w, theta) {
                (Some(c), _, _) => {
                    let conn = scene.connection(c)?;
                    holonomy(g, conn, *level, &scene.path_cfg).map(|h| {
                        let rows: Vec<Vec<f64>> =
                            (0..h.nrows()).map(|r| (0..h.ncols()).map(|c| round12(h[(r, c)])).collect()).collect();
                        json!({"holonomy": rows})
                    })
                }
                (None, Some(w), Some(theta)) => {
                    transport_step(g, scene.form(w)?, scene.form(theta)?, *steps, &scene.path_cfg).map(|t| {
                        let cov: serde_json::Map<String, serde_json::Value> = t
                            .iter()
                            .map(|(k, v)| {
                                let key = k.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
                                (key, json!(round12(*v)))
                            })
                            .collect();
                        json!({"covector": cov})
                    })
                }
                _ => return Err("give --connection, or --w with --theta".into()),
            };
            match result {
                Ok(v) => {
                    writeln!(out, "{}", pretty(&v)).map_err(io)?;
                    Ok(0)
                }
                Err(e @ Error::NonConvergence { .. }) => {
                    writeln!(out, "{}", pretty(&json!({"converged": false, "message": e.to_string()}))).map_err(io)?;
                    Ok(1)
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::Verify { suite, document } => {
            let report = if document.is_dir() {
                verify_dir(document, suite)?
            } else {
                load(document)?.verify(suite)?
            };
            let text = if cli.table { report.to_table() } else { report.to_json() };
            write!(out, "{text}").map_err(io)?;
            if !cli.table {
                writeln!(out).map_err(io)?;
            }
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Shuffles {
            action,
            first,
            second,
            family,
            copies,
        } => shuffles_command(*action, first, second, *family, *copies, out),
    }
}

/// Every top-level `*.json` document in `dir`, in file-name order; check
/// names are prefixed with the file stem.
fn verify_dir(dir: &PathBuf, suite: &str) -> Result<Report, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("{}: no documents", dir.display()));
    }
    let mut checks = Vec::new();
    for f in &files {
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for mut c in load(f)?.verify(suite)?.checks {
            c.name = format!("{stem}/{}", c.name);
            checks.push(c);
        }
    }
    Ok(Report::new(checks))
}

fn tuple(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("'{s}' is not a comma-separated list of sizes")))
        .collect()
}

fn shuffles_command(
    action: ShuffleAction,
    first: &str,
    second: &str,
    family: Option<Family>,
    copies: usize,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let (k1, k2) = (tuple(first)?, tuple(second)?);
    if k1.len() != k2.len() {
        return Err("both tuples need the same number of directions".into());
    }
    let family = family.unwrap_or(Family::Product);
    if matches!(family, Family::Transport) && copies == 0 {
        return Err("--copies must be positive".into());
    }
    if let ShuffleAction::Count = action {
        let n = match family {
            Family::Product | Family::Barred => shuffles::count_product(&k1, &k2),
            Family::Glue => shuffles::count_sh1(&k1, &k2),
            Family::Transport => shuffles::count_shn(&k1, &k2, copies),
        };
        writeln!(out, "{n}").map_err(io)?;
        return Ok(0);
    }
    let list = match family {
        Family::Product => shuffles::enumerate_product(&k1, &k2, false),
        Family::Barred => shuffles::enumerate_product(&k1, &k2, true),
        Family::Glue => shuffles::enumerate_sh1(&k1, &k2),
        Family::Transport => shuffles::enumerate_shn(&k1, &k2, copies),
    }
    .map_err(|e| e.to_string())?;
    for rho in list {
        let line: Vec<String> = rho
            .iter()
            .map(|p| p.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
            .collect();
        writeln!(out, "{}", line.join(" | ")).map_err(io)?;
    }
    Ok(0)
}
