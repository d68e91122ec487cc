//! Command-line driver: model ingestion, analysis, bound series, oracle
//! checks, and figure-ready CSV export.
//!
//! Exit codes: 0 success, 2 validation or input failure, 3 bad structural
//! set, 4 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use openmap::escape::{self, BoundMatrixPair, EscapeSeries, SeriesRow};
use openmap::graph::{self, StructuralSet, TransitionGraph};
use openmap::model::{validate, ModelFile, OpenMapModel};
use openmap::oracle;
use openmap::reduction;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BAD_SET: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "openmap",
    version,
    about = "Escape and survival statistics for open one-dimensional Markov maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model and print its report, transition graph, and matrices
    Analyze {
        /// Model JSON file
        model: PathBuf,
        /// Also dump the reduced system over this structural set (e.g. "v1,v3,v4")
        #[arg(long)]
        set: Option<String>,
        /// Decimal places for matrix display
        #[arg(long, default_value_t = 2)]
        precision: usize,
    },
    /// Escape series as CSV, optionally sharpened over structural sets
    Bounds {
        model: PathBuf,
        /// Largest time step
        #[arg(long = "n", default_value_t = 30)]
        n_max: usize,
        /// Explicit structural set, e.g. "v1,v3,v4"
        #[arg(long, conflicts_with_all = ["auto", "all"])]
        set: Option<String>,
        /// Pick the canonical structural set (smallest, then lexicographic)
        #[arg(long, conflicts_with = "all")]
        auto: bool,
        /// One CSV block per structural set plus a tightening report
        #[arg(long)]
        all: bool,
        /// Cap on enumerated structural sets
        #[arg(long, default_value_t = 16)]
        limit: usize,
        /// Output file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep raw values instead of clamping to [0, 1]
        #[arg(long)]
        no_clamp: bool,
    },
    /// Exact escape measures from the cylinder oracle (depth <= 14)
    Exact {
        model: PathBuf,
        #[arg(long = "n", default_value_t = 10)]
        n_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate structural sets of the transition graph
    StructuralSets {
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        limit: usize,
    },
    /// Monte Carlo first-entry estimates (seeded, reproducible)
    Simulate {
        model: PathBuf,
        #[arg(long = "n", default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check matrices, bounds, reductions, and the delayed return map
    Verify {
        model: PathBuf,
        #[arg(long = "n", default_value_t = 50)]
        n_max: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on structural sets to check
        #[arg(long, default_value_t = 8)]
        max_sets: usize,
        /// Corrupt one matrix entry to exercise the failure path
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze {
            model,
            set,
            precision,
        } => cmd_analyze(&model, set.as_deref(), precision),
        Command::Bounds {
            model,
            n_max,
            set,
            auto,
            all,
            limit,
            out,
            no_clamp,
        } => cmd_bounds(&model, n_max, set.as_deref(), auto, all, limit, out, !no_clamp),
        Command::Exact { model, n_max, out } => cmd_exact(&model, n_max, out),
        Command::StructuralSets { model, limit } => cmd_structural_sets(&model, limit),
        Command::Simulate {
            model,
            n_max,
            samples,
            seed,
            out,
        } => cmd_simulate(&model, n_max, samples, seed, out),
        Command::Verify {
            model,
            n_max,
            samples,
            seed,
            max_sets,
            inject_fault,
        } => cmd_verify(&model, n_max, samples, seed, max_sets, inject_fault),
    }
}

fn load_model(path: &Path) -> Result<OpenMapModel, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_VALIDATION, format!("cannot read {}: {e}", path.display())))?;
    let file = ModelFile::from_json(&text)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let report = validate(&file);
    if !report.accepted() {
        let mut msg = report.render();
        msg.push_str("model rejected");
        return Err(Failure::new(EXIT_VALIDATION, msg));
    }
    OpenMapModel::from_file(&file).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))
}

fn parse_structural(
    graph: &TransitionGraph,
    selector: &str,
) -> Result<StructuralSet, Failure> {
    let vertices = graph::parse_selector(selector)
        .map_err(|e| Failure::new(EXIT_BAD_SET, e))?;
    StructuralSet::new(graph, &vertices).map_err(|e| Failure::new(EXIT_BAD_SET, e.to_string()))
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(&path, text)
            .map_err(|e| Failure::new(EXIT_VALIDATION, format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn matrices_block(pair: &BoundMatrixPair, precision: usize) -> String {
    let m = pair.lower.nrows();
    let labels: Vec<String> = (1..=m).map(|i| i.to_string()).collect();
    let mut out = String::new();
    if pair.exact {
        out.push_str("weighted transition matrix:\n");
        out.push_str(&escape::format_matrix(&pair.lower, &labels, precision));
    } else {
        out.push_str("lower transition matrix:\n");
        out.push_str(&escape::format_matrix(&pair.lower, &labels, precision));
        out.push_str("upper transition matrix:\n");
        out.push_str(&escape::format_matrix(&pair.upper, &labels, precision));
    }
    out
}

fn cmd_analyze(path: &Path, selector: Option<&str>, precision: usize) -> Result<(), Failure> {
    let model = load_model(path)?;
    let graph = graph::build_graph(&model);
    let pair = escape::build_matrices(&model)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let classes = escape::classify(&pair);

    let mut out = model.report().render();
    out.push('\n');
    out.push_str(&graph.to_dot());
    out.push('\n');
    out.push_str(&matrices_block(&pair, precision));
    out.push_str(&format!("lower side: {}\n", classes.lower));
    out.push_str(&format!("upper side: {}\n", classes.upper));
    if let Some(selector) = selector {
        let set = parse_structural(&graph, selector)?;
        let reduced = reduction::build_reduced(&model, &set)
            .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
        out.push('\n');
        out.push_str(&reduced.render(precision));
    }
    print!("{out}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    path: &Path,
    n_max: usize,
    selector: Option<&str>,
    auto: bool,
    all: bool,
    limit: usize,
    out: Option<PathBuf>,
    clamp: bool,
) -> Result<(), Failure> {
    let model = load_model(path)?;
    let graph = graph::build_graph(&model);
    let pair = escape::build_matrices(&model)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let base = escape::escape_series(&pair, n_max);

    let text = if all {
        let sets = graph::enumerate_structural_sets(&graph, limit);
        let mut text = String::new();
        for set in &sets {
            let reduced = reduction::build_reduced(&model, set)
                .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
            let series = reduction::improved_series(&reduced, n_max);
            text.push_str(&format!("# S = {}\n", set.label()));
            text.push_str(&escape::csv_with_reduced(&base, &series, clamp));
        }
        let report = reduction::compare(&model, &sets, n_max)
            .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
        for line in report.to_string().lines() {
            text.push_str(&format!("# {line}\n"));
        }
        text
    } else {
        let chosen = if let Some(selector) = selector {
            Some(parse_structural(&graph, selector)?)
        } else if auto {
            graph::enumerate_structural_sets(&graph, 1).into_iter().next()
        } else {
            None
        };
        match chosen {
            Some(set) => {
                let reduced = reduction::build_reduced(&model, &set)
                    .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
                let series = reduction::improved_series(&reduced, n_max);
                escape::csv_with_reduced(&base, &series, clamp)
            }
            None => base.to_csv(clamp),
        }
    };
    emit(out, &text)
}

fn oracle_series(x: &[f64], y: &[f64]) -> EscapeSeries {
    let rows = x
        .iter()
        .zip(y)
        .enumerate()
        .map(|(n, (&xv, &yv))| SeriesRow {
            n,
            x_lower: xv,
            x_upper: xv,
            y_lower: yv,
            y_upper: yv,
            exact: true,
        })
        .collect();
    EscapeSeries { rows, exact: true }
}

fn cmd_exact(path: &Path, n_max: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    let model = load_model(path)?;
    let exact = oracle::exact_escape_measure(&model, n_max)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    emit(out, &oracle_series(&exact.x, &exact.y).to_csv(true))
}

fn cmd_structural_sets(path: &Path, limit: usize) -> Result<(), Failure> {
    let model = load_model(path)?;
    let graph = graph::build_graph(&model);
    for set in graph::enumerate_structural_sets(&graph, limit) {
        let complement: Vec<String> = set
            .complement()
            .iter()
            .map(|v| format!("v{}", v + 1))
            .collect();
        println!(
            "{}  |S|={}  complement={{{}}}",
            set.label(),
            set.len(),
            complement.join(",")
        );
    }
    Ok(())
}

fn cmd_simulate(
    path: &Path,
    n_max: usize,
    samples: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let model = load_model(path)?;
    let mc = oracle::monte_carlo_escape(&model, samples, n_max, seed);
    let mut text = String::from(
        "n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact,X_stderr,Y_stderr\n",
    );
    let mut cumulative = 0.0;
    for n in 0..mc.estimates.len() {
        cumulative += mc.estimates[n];
        let p = 1.0 - cumulative;
        let y_stderr = (cumulative * (1.0 - cumulative) / samples.max(1) as f64).sqrt();
        text.push_str(&format!(
            "{n},{x},{x},{y},{y},{p},{p},false,{xs},{ys}\n",
            x = mc.estimates[n],
            y = cumulative,
            p = p,
            xs = mc.stderr[n],
            ys = y_stderr,
        ));
    }
    emit(out, &text)
}

fn cmd_verify(
    path: &Path,
    n_max: usize,
    samples: usize,
    seed: u64,
    max_sets: usize,
    inject_fault: bool,
) -> Result<(), Failure> {
    let model = load_model(path)?;
    let graph = graph::build_graph(&model);
    let mut pair = escape::build_matrices(&model)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    if inject_fault {
        let m = pair.upper.nrows();
        if let Some((r, c)) = (0..m * m)
            .map(|k| (k / m, k % m))
            .find(|&(r, c)| pair.upper[(r, c)] > 0.0)
        {
            pair.upper[(r, c)] *= 0.5;
            pair.lower[(r, c)] *= 0.5;
            println!("injected fault at matrix entry ({}, {})", r + 1, c + 1);
        }
    }
    let fail = |msg: String| Failure::new(EXIT_VERIFY, format!("verification FAILED: {msg}"));
    let slack = 1e-12;

    let base = escape::escape_series(&pair, n_max);
    let oracle_depth = n_max.min(12);
    let exact = oracle::exact_escape_measure(&model, oracle_depth)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    if pair.exact {
        for n in 0..=oracle_depth {
            let row = &base.rows[n];
            if (row.x_lower - exact.x[n]).abs() > 1e-10 || (row.y_lower - exact.y[n]).abs() > 1e-10 {
                return Err(fail(format!(
                    "exact series disagrees with the cylinder oracle at n={n}: {} vs {}",
                    row.x_lower, exact.x[n]
                )));
            }
        }
        println!("ok: matrix series equals the cylinder oracle for n <= {oracle_depth}");
    } else {
        for n in 0..=oracle_depth {
            let row = &base.rows[n];
            if exact.x[n] < row.x_lower - slack || exact.x[n] > row.x_upper + slack {
                return Err(fail(format!(
                    "oracle value {} escapes the bounds [{}, {}] at n={n}",
                    exact.x[n], row.x_lower, row.x_upper
                )));
            }
        }
        println!("ok: cylinder oracle lies inside the bounds for n <= {oracle_depth}");
    }

    let sets = graph::enumerate_structural_sets(&graph, max_sets);
    for set in &sets {
        let reduced = reduction::build_reduced(&model, set)
            .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
        let series = reduction::improved_series(&reduced, n_max);
        for (r, b) in series.rows.iter().zip(&base.rows) {
            let chain = r.x_lower >= b.x_lower - slack
                && r.x_upper <= b.x_upper + slack
                && r.y_lower >= b.y_lower - slack
                && r.y_upper <= b.y_upper + slack;
            if !chain {
                return Err(fail(format!(
                    "reduced bounds for {} escape the base bounds at n={}",
                    set.label(),
                    r.n
                )));
            }
        }
        for n in 0..=oracle_depth {
            let r = &series.rows[n];
            if exact.x[n] < r.x_lower - slack - 1e-10 || exact.x[n] > r.x_upper + slack + 1e-10 {
                return Err(fail(format!(
                    "oracle value {} escapes the reduced bounds [{}, {}] of {} at n={n}",
                    exact.x[n],
                    r.x_lower,
                    r.x_upper,
                    set.label()
                )));
            }
        }
        let lemma = oracle::lemma1_check(&model, set, samples, n_max.max(50), seed);
        if !lemma.passed() {
            let m = lemma.mismatches[0];
            return Err(fail(format!(
                "delayed return map disagrees on {} at x={} (direct {:?}, delayed {:?})",
                set.label(),
                m.point,
                m.direct,
                m.delayed
            )));
        }
        println!(
            "ok: {} sandwich and delayed-return checks passed",
            set.label()
        );
    }

    if samples > 0 {
        if let Some(set) = sets.first() {
            let reduced = reduction::build_reduced(&model, set)
                .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
            let series = reduction::improved_series(&reduced, n_max.min(10));
            let mc = oracle::monte_carlo_escape(&model, samples, n_max.min(10), seed);
            for (n, row) in series.rows.iter().enumerate() {
                let sigma = mc.stderr[n];
                if mc.estimates[n] < row.x_lower - 4.0 * sigma - slack
                    || mc.estimates[n] > row.x_upper + 4.0 * sigma + slack
                {
                    return Err(fail(format!(
                        "Monte Carlo estimate {} outside [{} - 4s, {} + 4s] at n={n}",
                        mc.estimates[n], row.x_lower, row.x_upper
                    )));
                }
            }
            println!(
                "ok: Monte Carlo estimates stay within the sharpened bounds ({} samples)",
                samples
            );
        }
    }

    println!("verification passed");
    Ok(())
}
