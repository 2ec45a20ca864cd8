//! Command-line front end for the `clt-lab` numerical laboratory.
//!
//! One subcommand per laboratory operation:
//!
//! * `haar`     — truncated step-function expansion of a source distribution;
//! * `dn`       — windowed distance between the lattice law and its Gaussian
//!                weight, with optional `n` sweeps and per-point dumps;
//! * `cltgap`   — the full pipeline gap with its error-budget components;
//! * `riemann`  — the discrete Gaussian sum over a lattice window;
//! * `boxmass`  — Gaussian mass of the centered hyperplane box;
//! * `mc`       — Monte Carlo estimate of `E f(S_n/sqrt n)`.
//!
//! Every run validates its whole configuration up front and rejects bad
//! input with a single aggregated diagnostic, then writes exactly one report
//! document (JSON envelope or CSV with a provenance comment) to standard
//! output or `--out`. JSON envelopes carry `version`, the resolved `config`,
//! and the `report`; CSV documents carry the same provenance in their first
//! comment line. Identical configuration produces byte-identical output.
//!
//! Failures print a one-line machine-readable error object to standard
//! error: validation, domain, and precision errors exit with status 2,
//! budget refusals with 3, and numerical-accuracy failures with 4.

use clap::{Parser, Subcommand, ValueEnum};
use clt_lab::convergence::{clt_gap, compute_dn, dn_terms, monte_carlo_gap};
use clt_lab::distributions::{DiscreteTable, DistributionSpec};
use clt_lab::functions::TestFunction;
use clt_lab::gaussian::{box_deficit_bound, gaussian_riemann_sum, hyperplane_box_mass};
use clt_lab::haar::truncate_expansion;
use clt_lab::report::{
    delta_report_json, delta_sweep_csv, dn_report_json, dn_sweep_csv, dn_terms_csv,
    expansion_to_csv, expansion_to_json, fmt_g17, mc_report_json, riemann_report_json,
};
use clt_lab::{Error, ExecConfig};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "clt-lab",
    version,
    about = "Numerical laboratory for a central-limit convergence-rate construction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 1 (the default) reproduces every sum bit for bit.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Maximum number of candidate lattice points an enumeration may visit.
    #[arg(long, global = true, default_value_t = 100_000_000)]
    budget: u64,
    /// Output document format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report to this path instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated expansion of a source distribution on 2^(M+1) cells.
    Haar {
        /// Distribution: `twopoint`, `uniform`, `normal`, or a table-file
        /// path (one `probability value` pair per line).
        #[arg(long)]
        dist: String,
        /// Truncation level M; scales 0..=M are kept.
        #[arg(long = "M")]
        level: u32,
    },
    /// Windowed distance between the lattice law and its Gaussian weight.
    Dn {
        /// Number of cells (a power of two dividing every n).
        #[arg(long)]
        m: usize,
        /// Sample count; a comma-separated list sweeps several n in one CSV.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        /// Window halfwidth in units of sqrt(n).
        #[arg(long)]
        b: f64,
        /// Replace the exact pmf with its corrected log-expansion surrogate.
        #[arg(long)]
        use_stirling: bool,
        /// Emit one CSV row per lattice point instead of the summary.
        #[arg(long)]
        terms: bool,
    },
    /// Full pipeline gap between the lattice expectation and the Gaussian
    /// reference, with its error-budget components.
    Cltgap {
        /// Distribution: name or table-file path (as in `haar`).
        #[arg(long)]
        dist: String,
        /// Truncation level M; the lattice has m = 2^(M+1) cells.
        #[arg(long = "M")]
        level: u32,
        /// Sample count; a comma-separated list sweeps several n in one CSV.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        /// Window halfwidth in units of sqrt(n); selected from epsilon when
        /// omitted.
        #[arg(long)]
        b: Option<f64>,
        /// Mass budget driving the automatic window selection.
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Test function registry name.
        #[arg(long)]
        f: String,
        /// Grid step for the reference box-mass quadrature.
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        /// Acknowledge that `xsq` is unbounded and exempt from the
        /// bounded-function error budgets.
        #[arg(long)]
        allow_unbounded: bool,
    },
    /// Discrete Gaussian sum over the lattice window of an expansion.
    Riemann {
        /// Distribution: name or table-file path (as in `haar`).
        #[arg(long)]
        dist: String,
        /// Truncation level M; the lattice has m = 2^(M+1) cells.
        #[arg(long = "M")]
        level: u32,
        /// Sample count.
        #[arg(long)]
        n: u64,
        /// Window halfwidth in units of sqrt(n).
        #[arg(long)]
        b: f64,
        /// Test function registry name.
        #[arg(long)]
        f: String,
        /// Acknowledge the unbounded `xsq` function.
        #[arg(long)]
        allow_unbounded: bool,
    },
    /// Gaussian mass of the centered box on the zero-sum hyperplane.
    Boxmass {
        /// Number of cells (2 to 4).
        #[arg(long)]
        m: usize,
        /// Box halfwidth.
        #[arg(long)]
        b: f64,
        /// Midpoint-grid step for the 3- and 4-cell quadrature.
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
    },
    /// Monte Carlo estimate of E f(S_n/sqrt n) for the raw distribution.
    Mc {
        /// Distribution: name or table-file path (as in `haar`).
        #[arg(long)]
        dist: String,
        /// Summands per trial.
        #[arg(long)]
        n: u64,
        /// Independent trials.
        #[arg(long)]
        trials: u64,
        /// Seed for the per-trial deterministic substreams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test function registry name.
        #[arg(long)]
        f: String,
        /// Acknowledge the unbounded `xsq` function.
        #[arg(long)]
        allow_unbounded: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// A terminal failure: what kind, what happened, which exit status.
struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn validation(message: String) -> Self {
        Failure { kind: "validation", message, code: 2 }
    }

    fn io(message: String) -> Self {
        Failure { kind: "io", message, code: 2 }
    }

    /// The one-line machine-readable error object printed to stderr.
    fn to_json(&self) -> String {
        format!(
            "{{\"error\":{{\"kind\":\"{}\",\"message\":{}}}}}",
            self.kind,
            json_string(&self.message)
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match &e {
            Error::Domain(_) => ("domain", 2),
            Error::Precision(_) => ("precision", 2),
            Error::Budget(_) => ("budget", 3),
            Error::Numeric(_) => ("numeric", 4),
        };
        let message = match e {
            Error::Domain(m) | Error::Precision(m) | Error::Budget(m) | Error::Numeric(m) => m,
        };
        Failure { kind, message, code }
    }
}

/// Serializes a string as a JSON string literal.
fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                write!(out, "\\u{:04x}", c as u32).expect("string write");
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Collects every configuration problem so the user sees them all at once.
struct Validator {
    problems: Vec<String>,
}

impl Validator {
    fn new() -> Self {
        Validator { problems: Vec::new() }
    }

    fn check(&mut self, ok: bool, problem: &str) {
        if !ok {
            self.problems.push(problem.to_string());
        }
    }

    /// Absorbs a library-side validation result, keeping its message.
    fn take<T>(&mut self, r: Result<T, Error>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                let msg = match e {
                    Error::Domain(m)
                    | Error::Precision(m)
                    | Error::Budget(m)
                    | Error::Numeric(m) => m,
                };
                self.problems.push(msg);
                None
            }
        }
    }

    fn finish(self) -> Result<(), Failure> {
        if self.problems.is_empty() {
            Ok(())
        } else {
            Err(Failure::validation(self.problems.join("; ")))
        }
    }
}

/// Resolves `--dist`: a registry name, or anything else as a table path.
fn parse_dist(spec: &str, v: &mut Validator) -> Option<DistributionSpec> {
    match spec {
        "twopoint" => Some(DistributionSpec::TwoPoint),
        "uniform" => Some(DistributionSpec::Uniform),
        "normal" => Some(DistributionSpec::Normal),
        path => match std::fs::read_to_string(path) {
            Ok(text) => v.take(DiscreteTable::from_table_str(&text)).map(DistributionSpec::Discrete),
            Err(e) => {
                v.problems.push(format!(
                    "distribution `{path}` is not a registry name and not a readable \
                     table file: {e}"
                ));
                None
            }
        },
    }
}

fn parse_function(spec: &str, allow_unbounded: bool, v: &mut Validator) -> Option<TestFunction> {
    v.take(TestFunction::parse(spec, allow_unbounded))
}

/// Formats a comma-separated n list the same way in configs and provenance.
fn n_list(ns: &[u64]) -> String {
    let mut s = String::new();
    for (i, n) in ns.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{n}").expect("string write");
    }
    s
}

/// Wraps a report object in the versioned JSON envelope.
fn envelope(config: &str, report: &str) -> String {
    format!("{{\"version\":\"{VERSION}\",\"config\":{config},\"report\":{report}}}\n")
}

/// Provenance line embedded in CSV documents: version plus resolved config.
fn provenance(command: &str, fields: &str) -> String {
    format!("clt-lab {VERSION} {command} {fields} format=csv")
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    let mut v = Validator::new();
    v.check(cli.threads >= 1, "threads must be at least 1");
    v.check(cli.budget >= 1, "budget must be at least 1");
    let cfg = ExecConfig { threads: cli.threads, lattice_budget: cli.budget };
    let tail = format!(
        "\"format\":\"{}\",\"threads\":{},\"budget\":{}",
        cli.format.name(),
        cli.threads,
        cli.budget
    );

    match &cli.command {
        Command::Haar { dist, level } => {
            v.check(
                *level <= 20,
                "truncation level exceeds the supported maximum 20",
            );
            let d = parse_dist(dist, &mut v);
            v.finish()?;
            let exp = truncate_expansion(&d.expect("validated"), *level)?;
            let config = format!(
                "{{\"command\":\"haar\",\"dist\":{},\"M\":{level},{tail}}}",
                json_string(dist)
            );
            Ok(match cli.format {
                Format::Json => envelope(&config, &expansion_to_json(&exp)),
                Format::Csv => expansion_to_csv(
                    &exp,
                    &provenance("haar", &format!("dist={dist} M={level}")),
                ),
            })
        }
        Command::Dn { m, n, b, use_stirling, terms } => {
            v.check(*m >= 2, "m must have at least two cells");
            v.check(n.iter().all(|&x| x >= 1), "every n must be positive");
            v.check(b.is_finite() && *b > 0.0, "b must be positive and finite");
            v.check(
                n.len() == 1 || cli.format == Format::Csv || *terms,
                "a json document carries one report; pass --format csv for an n sweep",
            );
            v.check(
                !*terms || cli.format == Format::Csv,
                "per-term dumps are csv only",
            );
            v.check(
                !*terms || n.len() == 1,
                "per-term dumps cover a single n",
            );
            v.finish()?;
            let fields = format!(
                "m={m} n={} b={} use_stirling={use_stirling}",
                n_list(n),
                fmt_g17(*b)
            );
            if *terms {
                let t = dn_terms(n[0], *m, *b, *use_stirling, &cfg)?;
                return Ok(dn_terms_csv(&t, *m, &provenance("dn", &format!("{fields} terms=true"))));
            }
            let mut rows = Vec::with_capacity(n.len());
            for &nn in n {
                rows.push(compute_dn(nn, *m, *b, *use_stirling, &cfg)?);
            }
            Ok(match cli.format {
                Format::Json => {
                    let config = format!(
                        "{{\"command\":\"dn\",\"m\":{m},\"n\":[{}],\"b\":{},\"use_stirling\":{use_stirling},{tail}}}",
                        n_list(n),
                        fmt_g17(*b)
                    );
                    envelope(&config, &dn_report_json(&rows[0]))
                }
                Format::Csv => dn_sweep_csv(&rows, &provenance("dn", &fields)),
            })
        }
        Command::Cltgap {
            dist,
            level,
            n,
            b,
            epsilon,
            f,
            grid_step,
            allow_unbounded,
        } => {
            v.check(
                *level <= 20,
                "truncation level exceeds the supported maximum 20",
            );
            v.check(n.iter().all(|&x| x >= 1), "every n must be positive");
            if let Some(b) = b {
                v.check(b.is_finite() && *b > 0.0, "b must be positive and finite");
            }
            v.check(
                epsilon.is_finite() && *epsilon > 0.0 && *epsilon < 1.0,
                "epsilon must lie in (0, 1)",
            );
            v.check(
                grid_step.is_finite() && *grid_step > 0.0,
                "grid-step must be positive and finite",
            );
            v.check(
                n.len() == 1 || cli.format == Format::Csv,
                "a json document carries one report; pass --format csv for an n sweep",
            );
            let d = parse_dist(dist, &mut v);
            let func = parse_function(f, *allow_unbounded, &mut v);
            v.finish()?;
            let exp = truncate_expansion(&d.expect("validated"), *level)?;
            let func = func.expect("validated");
            let mut rows = Vec::with_capacity(n.len());
            for &nn in n {
                rows.push((nn, clt_gap(exp.outcomes(), nn, &func, *epsilon, *b, *grid_step, &cfg)?));
            }
            let b_text = match b {
                Some(b) => fmt_g17(*b),
                None => "null".to_string(),
            };
            Ok(match cli.format {
                Format::Json => {
                    let config = format!(
                        "{{\"command\":\"cltgap\",\"dist\":{},\"M\":{level},\"n\":[{}],\"b\":{b_text},\"epsilon\":{},\"f\":{},\"grid_step\":{},\"allow_unbounded\":{allow_unbounded},{tail}}}",
                        json_string(dist),
                        n_list(n),
                        fmt_g17(*epsilon),
                        json_string(f),
                        fmt_g17(*grid_step)
                    );
                    envelope(&config, &delta_report_json(&rows[0].1))
                }
                Format::Csv => {
                    let fields = format!(
                        "dist={dist} M={level} n={} b={b_text} epsilon={} f={f} grid_step={}",
                        n_list(n),
                        fmt_g17(*epsilon),
                        fmt_g17(*grid_step)
                    );
                    delta_sweep_csv(&rows, &provenance("cltgap", &fields))
                }
            })
        }
        Command::Riemann { dist, level, n, b, f, allow_unbounded } => {
            v.check(
                *level <= 20,
                "truncation level exceeds the supported maximum 20",
            );
            v.check(*n >= 1, "n must be positive");
            v.check(b.is_finite() && *b > 0.0, "b must be positive and finite");
            let d = parse_dist(dist, &mut v);
            let func = parse_function(f, *allow_unbounded, &mut v);
            v.finish()?;
            let exp = truncate_expansion(&d.expect("validated"), *level)?;
            let r = gaussian_riemann_sum(exp.outcomes(), *n, *b, &func.expect("validated"), &cfg)?;
            let config = format!(
                "{{\"command\":\"riemann\",\"dist\":{},\"M\":{level},\"n\":{n},\"b\":{},\"f\":{},\"allow_unbounded\":{allow_unbounded},{tail}}}",
                json_string(dist),
                fmt_g17(*b),
                json_string(f)
            );
            Ok(match cli.format {
                Format::Json => envelope(&config, &riemann_report_json(&r)),
                Format::Csv => format!(
                    "# {}\nvalue,mass,lattice_points\n{},{},{}\n",
                    provenance(
                        "riemann",
                        &format!("dist={dist} M={level} n={n} b={} f={f}", fmt_g17(*b))
                    ),
                    fmt_g17(r.value),
                    fmt_g17(r.mass),
                    r.lattice_points
                ),
            })
        }
        Command::Boxmass { m, b, grid_step } => {
            v.check(*m >= 2, "m must have at least two cells");
            v.check(b.is_finite() && *b > 0.0, "b must be positive and finite");
            v.check(
                grid_step.is_finite() && *grid_step > 0.0,
                "grid-step must be positive and finite",
            );
            v.finish()?;
            let mass = hyperplane_box_mass(*m, *b, *grid_step)?;
            let deficit = box_deficit_bound(*m, *b);
            let config = format!(
                "{{\"command\":\"boxmass\",\"m\":{m},\"b\":{},\"grid_step\":{},{tail}}}",
                fmt_g17(*b),
                fmt_g17(*grid_step)
            );
            let report = format!(
                "{{\"mass\":{},\"deficit_bound\":{}}}",
                fmt_g17(mass),
                fmt_g17(deficit)
            );
            Ok(match cli.format {
                Format::Json => envelope(&config, &report),
                Format::Csv => format!(
                    "# {}\nm,b,grid_step,mass,deficit_bound\n{m},{},{},{},{}\n",
                    provenance(
                        "boxmass",
                        &format!("m={m} b={} grid_step={}", fmt_g17(*b), fmt_g17(*grid_step))
                    ),
                    fmt_g17(*b),
                    fmt_g17(*grid_step),
                    fmt_g17(mass),
                    fmt_g17(deficit)
                ),
            })
        }
        Command::Mc { dist, n, trials, seed, f, allow_unbounded } => {
            v.check(*n >= 1, "n must be positive");
            v.check(*trials >= 2, "at least two trials are needed for a standard error");
            let d = parse_dist(dist, &mut v);
            let func = parse_function(f, *allow_unbounded, &mut v);
            v.finish()?;
            let r = monte_carlo_gap(
                &d.expect("validated"),
                *n,
                &func.expect("validated"),
                *trials,
                *seed,
                &cfg,
            )?;
            let config = format!(
                "{{\"command\":\"mc\",\"dist\":{},\"n\":{n},\"trials\":{trials},\"seed\":{seed},\"f\":{},\"allow_unbounded\":{allow_unbounded},{tail}}}",
                json_string(dist),
                json_string(f)
            );
            Ok(match cli.format {
                Format::Json => envelope(&config, &mc_report_json(&r)),
                Format::Csv => format!(
                    "# {}\nestimate,std_error,reference_value,gap,trials,seed\n{},{},{},{},{trials},{seed}\n",
                    provenance(
                        "mc",
                        &format!("dist={dist} n={n} trials={trials} seed={seed} f={f}")
                    ),
                    fmt_g17(r.estimate),
                    fmt_g17(r.std_error),
                    fmt_g17(r.reference_value),
                    fmt_g17(r.gap)
                ),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let failure = Failure::validation(e.to_string());
            eprintln!("{}", failure.to_json());
            return ExitCode::from(failure.code);
        }
    };
    let document = match execute(&cli) {
        Ok(doc) => doc,
        Err(f) => {
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.code);
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &document)
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write as _;
            std::io::stdout()
                .write_all(document.as_bytes())
                .map_err(|e| Failure::io(format!("cannot write standard output: {e}")))
        }
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_onto_the_documented_exit_codes() {
        let cases = [
            (Error::domain("x"), "domain", 2),
            (Error::precision("x"), "precision", 2),
            (Error::budget("x"), "budget", 3),
            (Error::numeric("x"), "numeric", 4),
        ];
        for (e, kind, code) in cases {
            let f = Failure::from(e);
            assert_eq!(f.kind, kind);
            assert_eq!(f.code, code);
        }
    }

    #[test]
    fn error_objects_are_single_line_json() {
        let f = Failure::validation("bad \"quote\"; path C:\\tmp\nnext".to_string());
        let text = f.to_json();
        assert!(!text.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["error"]["kind"].as_str(), Some("validation"));
        assert_eq!(
            v["error"]["message"].as_str(),
            Some("bad \"quote\"; path C:\\tmp\nnext")
        );
    }

    #[test]
    fn json_strings_escape_control_characters() {
        assert_eq!(json_string("a\u{1}b"), "\"a\\u0001b\"");
        assert_eq!(json_string("plain"), "\"plain\"");
    }

    #[test]
    fn validator_aggregates_every_problem_into_one_message() {
        let mut v = Validator::new();
        v.check(false, "first");
        v.check(true, "skipped");
        v.check(false, "second");
        let err = v.finish().unwrap_err();
        assert_eq!(err.message, "first; second");
        assert_eq!(err.code, 2);
    }
}
