//! Command-line front end: synthesize data, fit tree density models,
//! sample and evaluate them, and run the experiment harness.
//!
//! Exit codes: 0 on success (and all spec thresholds met), 1 when an
//! experiment threshold fails, 2 on usage or input errors. All randomness
//! flows from `--seed`; output files are byte-identical across runs and
//! worker counts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use treedens::density::{default_root, fit_tree_density, root_and_order, TreeDensityModel};
use treedens::evaluation::{
    identification_experiment, l1_distance_grid, l1_distance_mc, rate_experiment, ExperimentConfig,
    IdentificationReport, RateReport,
};
use treedens::ground_truth::{FgmTreeTruth, TruthSpec};
use treedens::histograms::{csv_header, Dataset, Partition1D};
use treedens::mi::{default_bin_widths, mi_matrix};
use treedens::stats::fnv1a64;
use treedens::tree::{max_spanning_tree, mi_gap, SpanningTree};

#[derive(Parser)]
#[command(name = "treedens", version, about = "Spanning-tree density estimation")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    /// Results never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a tree density model to a CSV dataset
    Fit(FitArgs),
    /// Draw samples from a fitted model
    Sample(SampleArgs),
    /// Estimate the L1 distance between a model and a reference
    Eval(EvalArgs),
    /// Run an identification or rate experiment from a spec file
    Experiment(ExperimentArgs),
    /// Generate a synthetic dataset with known ground truth
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV (one observation per row, numeric columns)
    #[arg(long)]
    input: PathBuf,
    /// Output model JSON path
    #[arg(long)]
    output: PathBuf,
    /// Input CSV has a header row
    #[arg(long)]
    has_header: bool,
    /// Density bin-width constant: h = c1 * n^(-1/4)
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// MI bin-width constant: h' = c2 * n^(-1/4)
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Explicit density bin width (overrides --c1)
    #[arg(long)]
    h: Option<f64>,
    /// Explicit MI bin width (overrides --c2)
    #[arg(long = "h-prime")]
    h_prime: Option<f64>,
    /// Root vertex override, 1-based (default: maximum degree)
    #[arg(long)]
    root: Option<usize>,
    /// Candidate-edge mask file ("i j" per line, 1-based)
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Also export the MI matrix as CSV
    #[arg(long = "mi-out")]
    mi_out: Option<PathBuf>,
    /// Also export the selected tree as an edge list
    #[arg(long = "tree-out")]
    tree_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    /// Fitted model JSON
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path
    #[arg(long)]
    output: PathBuf,
    /// Number of rows to draw
    #[arg(short, long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMethod {
    Mc,
    Grid,
}

#[derive(Args)]
struct EvalArgs {
    /// Fitted model JSON
    #[arg(long)]
    model: PathBuf,
    /// Ground-truth spec JSON (as written by synth)
    #[arg(long, conflicts_with = "ref_model")]
    truth: Option<PathBuf>,
    /// Second model JSON to compare against
    #[arg(long = "ref-model")]
    ref_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalMethod::Mc)]
    method: EvalMethod,
    /// Monte-Carlo sample count
    #[arg(short, long, default_value_t = 1_000_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output prefix: writes `<prefix>.csv` and `<prefix>.json`
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Ground-truth family (only "fgm")
    #[arg(long, default_value = "fgm")]
    family: String,
    /// Tree shape: "chain", "star", or a 1-based edge-list file
    #[arg(long, default_value = "chain")]
    tree: String,
    /// Dimension
    #[arg(short, long)]
    d: usize,
    /// Per-edge couplings "a1,a2,..." or a single value for all edges
    #[arg(long)]
    couplings: String,
    /// Number of rows to generate
    #[arg(short, long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth provenance JSON path (default: `<output>.truth.json`)
    #[arg(long = "truth-out")]
    truth_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn digest(text: &str) -> String {
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

/// One-line provenance stamp embedded at the top of CSV and edge-list
/// outputs; readers skip `#` lines.
fn provenance_line(command: &str, detail: &serde_json::Value) -> String {
    format!("# treedens {command} {detail}\n")
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode> {
    let t0 = Instant::now();
    let csv = read_file(&args.input)?;
    let input_digest = digest(&csv);
    let data = Dataset::parse_csv(&csv, args.has_header)?;
    let n = data.n();
    let d = data.d();

    let bw = default_bin_widths(n, args.c1, args.c2)?;
    let h = args.h.unwrap_or(bw.h);
    let h_prime = args.h_prime.unwrap_or(bw.h_prime);
    if args.h.is_none() && args.h_prime.is_none() {
        for w in &bw.warnings {
            eprintln!("warning: {w}");
        }
    } else {
        // re-check the consistency heuristics for explicit overrides
        let nf = n as f64;
        if nf * h_prime * h_prime < 10.0 {
            eprintln!(
                "warning: n*h'^2 = {:.3} is small for n = {n}; MI estimates may be unreliable",
                nf * h_prime * h_prime
            );
        }
        let log_n = if n > 1 { nf.ln() } else { 1.0 };
        if nf * h * h / log_n < 10.0 {
            eprintln!(
                "warning: n*h^2/ln(n) = {:.3} is small for n = {n}; density estimates may be unreliable",
                nf * h * h / log_n
            );
        }
    }

    let (lo, hi) = data.value_range();
    for width in [h, h_prime] {
        let partition = Partition1D::new(width)?;
        if !(partition.indexable(lo) && partition.indexable(hi)) {
            bail!(
                "bin width {width} cannot index the data range [{lo}, {hi}]; \
                 increase the bin width"
            );
        }
    }

    let mask_text = args.mask.as_ref().map(|p| read_file(p)).transpose()?;
    let mask_edges = mask_text
        .as_ref()
        .map(|t| SpanningTree::parse_edge_pairs(t))
        .transpose()?;
    let t_read = t0.elapsed();

    let t1 = Instant::now();
    let mi = mi_matrix(&data, Partition1D::new(h_prime)?, mask_edges.as_deref())?;
    let t_mi = t1.elapsed();

    let t2 = Instant::now();
    let tree = max_spanning_tree(&mi)?;
    let t_kruskal = t2.elapsed();

    let root = match args.root {
        Some(r) => {
            if r == 0 || r > d {
                bail!("--root must be a 1-based vertex in 1..={d}");
            }
            r - 1
        }
        None => default_root(&tree),
    };
    let t3 = Instant::now();
    let order = root_and_order(&tree, root)?;
    let mut model = fit_tree_density(&data, &order, Partition1D::new(h)?)?;
    let t_fit = t3.elapsed();

    model.set_provenance(serde_json::json!({
        "command": "fit",
        "input": args.input.display().to_string(),
        "input_digest": input_digest,
        "has_header": args.has_header,
        "c1": args.c1,
        "c2": args.c2,
        "h": h,
        "h_prime": h_prime,
        "root": root + 1,
        "mask_digest": mask_text.as_deref().map(digest),
        "seed": args.seed,
    }));
    write_file(&args.output, &model.to_json())?;

    let stamp = serde_json::json!({
        "input_digest": input_digest, "h": h, "h_prime": h_prime, "seed": args.seed,
    });
    if let Some(path) = &args.mi_out {
        let body = provenance_line("fit mi-matrix", &stamp) + &mi.to_csv();
        write_file(path, &body)?;
    }
    if let Some(path) = &args.tree_out {
        let body = provenance_line("fit tree", &stamp) + &tree.to_edge_list_text();
        write_file(path, &body)?;
    }

    println!("n: {n}");
    println!("d: {d}");
    println!("h: {h}");
    println!("h_prime: {h_prime}");
    println!("root: {}", root + 1);
    print!("tree:");
    for &(i, j) in tree.edges() {
        print!(" {}-{}", i + 1, j + 1);
    }
    println!();
    match mi_gap(&mi) {
        Ok(gap) => {
            match gap.delta {
                Some(delta) => println!("mi_gap_delta: {delta}"),
                None => println!("mi_gap_delta: undefined (all weights tied)"),
            }
            println!("mi_tied_pairs: {}", gap.tied_pairs);
        }
        Err(_) => println!("mi_gap_delta: undefined (single pair)"),
    }
    println!("input_digest: {input_digest}");
    println!("model: {}", args.output.display());
    println!(
        "timing_ms: read {:.1} / mi-histograms {:.1} / kruskal {:.3} / density-fit {:.1}",
        t_read.as_secs_f64() * 1e3,
        t_mi.as_secs_f64() * 1e3,
        t_kruskal.as_secs_f64() * 1e3,
        t_fit.as_secs_f64() * 1e3
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode> {
    let model_text = read_file(&args.input)?;
    let model = TreeDensityModel::from_json(&model_text)?;
    let body = if args.m == 0 {
        csv_header(model.d(), None)
    } else {
        model.sample(args.seed, args.m)?.to_csv()
    };
    let stamp = serde_json::json!({
        "model_digest": digest(&model_text), "m": args.m, "seed": args.seed,
    });
    write_file(&args.output, &(provenance_line("sample", &stamp) + &body))?;
    println!("rows: {}", args.m);
    println!("output: {}", args.output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let model_text = read_file(&args.model)?;
    let model = TreeDensityModel::from_json(&model_text)?;
    println!("model_digest: {}", digest(&model_text));

    enum Reference {
        Truth(FgmTreeTruth),
        Model(TreeDensityModel),
    }
    let reference = match (&args.truth, &args.ref_model) {
        (Some(path), None) => {
            let text = read_file(path)?;
            println!("reference_digest: {}", digest(&text));
            let spec: TruthSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing truth spec {}", path.display()))?;
            Reference::Truth(spec.to_truth()?)
        }
        (None, Some(path)) => {
            let text = read_file(path)?;
            println!("reference_digest: {}", digest(&text));
            Reference::Model(TreeDensityModel::from_json(&text)?)
        }
        _ => bail!("exactly one of --truth or --ref-model is required"),
    };

    match args.method {
        EvalMethod::Mc => {
            let est = match &reference {
                Reference::Truth(gt) => l1_distance_mc(&model, gt, args.m, args.seed)?,
                Reference::Model(other) => l1_distance_mc(&model, other, args.m, args.seed)?,
            };
            println!("method: mc");
            println!("samples: {}", est.samples);
            println!("l1_estimate: {}", est.value);
            println!("std_error: {}", est.std_error);
        }
        EvalMethod::Grid => {
            let gt = match &reference {
                Reference::Truth(gt) => gt,
                Reference::Model(_) => bail!("--method grid requires --truth"),
            };
            let value = l1_distance_grid(&model, gt)?;
            println!("method: grid");
            println!("l1_estimate: {value}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Tree shape in a spec file: a family name or an explicit edge list.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TreeSpecInput {
    Named(String),
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CouplingsInput {
    Scalar(f64),
    PerEdge(Vec<f64>),
}

#[derive(Debug, Deserialize)]
struct TruthInput {
    family: String,
    d: usize,
    tree: TreeSpecInput,
    couplings: CouplingsInput,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Thresholds {
    /// Identification frequency at the largest n must reach this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    min_final_freq: Option<f64>,
    /// Identification frequency must be nondecreasing in n.
    #[serde(skip_serializing_if = "Option::is_none")]
    freq_nondecreasing: Option<bool>,
    /// Median L1 error must be strictly decreasing in n.
    #[serde(skip_serializing_if = "Option::is_none")]
    l1_median_decreasing: Option<bool>,
    /// Log-log slope band for rate experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    slope_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ExperimentSpec {
    kind: String,
    truth: TruthInput,
    n_grid: Vec<usize>,
    reps: usize,
    #[serde(default = "default_constant")]
    c1: f64,
    #[serde(default = "default_constant")]
    c2: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_mc_samples")]
    mc_samples: usize,
    #[serde(default)]
    thresholds: Thresholds,
}

fn default_constant() -> f64 {
    1.0
}

fn default_mc_samples() -> usize {
    20_000
}

fn resolve_truth(input: &TruthInput) -> Result<FgmTreeTruth> {
    let d = input.d;
    if d < 2 {
        bail!("dimension must be at least 2");
    }
    let edges: Vec<(usize, usize)> = match &input.tree {
        TreeSpecInput::Named(name) => match name.as_str() {
            "chain" => (1..d).map(|v| (v, v + 1)).collect(),
            "star" => (2..=d).map(|v| (1, v)).collect(),
            other => bail!("unknown tree shape {other:?} (expected chain, star, or edges)"),
        },
        TreeSpecInput::Edges(edges) => edges.clone(),
    };
    let couplings = match &input.couplings {
        CouplingsInput::Scalar(a) => vec![*a; edges.len()],
        CouplingsInput::PerEdge(list) => list.clone(),
    };
    let spec = TruthSpec {
        family: input.family.clone(),
        d,
        tree: edges,
        couplings,
    };
    Ok(spec.to_truth()?)
}

enum ReportKind {
    Identification(IdentificationReport),
    Rate(RateReport),
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let spec_text = read_file(&args.spec)?;
    let spec_digest = digest(&spec_text);
    let spec: ExperimentSpec = serde_json::from_str(&spec_text)
        .with_context(|| format!("parsing experiment spec {}", args.spec.display()))?;
    let gt = resolve_truth(&spec.truth)?;
    let cfg = ExperimentConfig {
        n_grid: spec.n_grid.clone(),
        reps: spec.reps,
        c1: spec.c1,
        c2: spec.c2,
        seed: spec.seed,
        mc_samples: spec.mc_samples,
    };

    let report = match spec.kind.as_str() {
        "identification" => ReportKind::Identification(identification_experiment(&gt, &cfg)?),
        "rate" => ReportKind::Rate(rate_experiment(&gt, &cfg)?),
        other => bail!("unknown experiment kind {other:?}"),
    };

    let (csv, json) = match &report {
        ReportKind::Identification(r) => (
            r.to_csv(),
            serde_json::json!({ "spec_digest": spec_digest, "kind": "identification", "report": r }),
        ),
        ReportKind::Rate(r) => (
            r.to_csv(),
            serde_json::json!({ "spec_digest": spec_digest, "kind": "rate", "report": r }),
        ),
    };
    let csv_path = args.output.with_extension("csv");
    let json_path = args.output.with_extension("json");
    let stamp = serde_json::json!({ "spec_digest": spec_digest, "seed": spec.seed });
    write_file(&csv_path, &(provenance_line("experiment", &stamp) + &csv))?;
    write_file(
        &json_path,
        &format!("{}\n", serde_json::to_string_pretty(&json)?),
    )?;
    println!("report_csv: {}", csv_path.display());
    println!("report_json: {}", json_path.display());

    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!(
            "threshold {name}: {} ({detail})",
            if ok { "PASS" } else { "FAIL" }
        );
        all_ok &= ok;
    };
    let t = &spec.thresholds;
    match &report {
        ReportKind::Identification(r) => {
            if t.slope_min.is_some() || t.slope_max.is_some() {
                bail!("slope thresholds apply to rate experiments");
            }
            let freqs: Vec<f64> = r.summaries.iter().map(|s| s.freq_identified).collect();
            if let Some(min) = t.min_final_freq {
                let last = *freqs.last().unwrap();
                check("min_final_freq", last >= min, format!("{last} vs {min}"));
            }
            if t.freq_nondecreasing == Some(true) {
                check(
                    "freq_nondecreasing",
                    freqs.windows(2).all(|w| w[0] <= w[1]),
                    format!("{freqs:?}"),
                );
            }
            if t.l1_median_decreasing == Some(true) {
                let medians: Vec<f64> = r.summaries.iter().map(|s| s.l1_median).collect();
                check(
                    "l1_median_decreasing",
                    medians.windows(2).all(|w| w[0] > w[1]),
                    format!("{medians:?}"),
                );
            }
        }
        ReportKind::Rate(r) => {
            if t.min_final_freq.is_some()
                || t.freq_nondecreasing.is_some()
                || t.l1_median_decreasing.is_some()
            {
                bail!("identification thresholds apply to identification experiments");
            }
            println!("slope: {} +- {}", r.slope, r.slope_half_width);
            if let Some(lo) = t.slope_min {
                check("slope_min", r.slope >= lo, format!("{} vs {lo}", r.slope));
            }
            if let Some(hi) = t.slope_max {
                check("slope_max", r.slope <= hi, format!("{} vs {hi}", r.slope));
            }
        }
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode> {
    if args.d < 2 {
        bail!("dimension must be at least 2");
    }
    let tree_input = match args.tree.as_str() {
        "chain" | "star" => TreeSpecInput::Named(args.tree.clone()),
        path => {
            let text = read_file(Path::new(path))
                .context("tree must be chain, star, or an edge-list file")?;
            let edges = SpanningTree::parse_edge_pairs(&text)?
                .into_iter()
                .map(|(i, j)| (i + 1, j + 1))
                .collect();
            TreeSpecInput::Edges(edges)
        }
    };
    let couplings: Vec<f64> = args
        .couplings
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad coupling {tok:?}"))
        })
        .collect::<Result<_>>()?;
    let couplings_input = if couplings.len() == 1 {
        CouplingsInput::Scalar(couplings[0])
    } else {
        CouplingsInput::PerEdge(couplings)
    };
    let gt = resolve_truth(&TruthInput {
        family: args.family.clone(),
        d: args.d,
        tree: tree_input,
        couplings: couplings_input,
    })?;

    let spec = gt.spec();
    let body = if args.n == 0 {
        csv_header(args.d, None)
    } else {
        gt.sample(args.seed, args.n).to_csv()
    };
    let stamp = serde_json::json!({
        "family": spec.family, "d": spec.d, "tree": spec.tree,
        "couplings": spec.couplings, "n": args.n, "seed": args.seed,
    });
    let csv = provenance_line("synth", &stamp) + &body;
    write_file(&args.output, &csv)?;

    let provenance = serde_json::json!({
        "family": spec.family,
        "d": spec.d,
        "tree": spec.tree,
        "couplings": spec.couplings,
        "n": args.n,
        "seed": args.seed,
        "data_digest": digest(&csv),
    });
    let truth_path = args
        .truth_out
        .unwrap_or_else(|| args.output.with_extension("truth.json"));
    write_file(
        &truth_path,
        &format!("{}\n", serde_json::to_string_pretty(&provenance)?),
    )?;

    println!("rows: {}", args.n);
    println!("output: {}", args.output.display());
    println!("truth: {}", truth_path.display());
    println!("lipschitz_bound: {}", gt.lipschitz_constant());
    Ok(ExitCode::SUCCESS)
}
