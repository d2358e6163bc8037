use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bncard_core::data::{
    encode_rows, gen_star_schema, gen_synthetic, gen_workload, load_schema, write_csv, write_schema, JoinSchema, Query,
    RawQuery, StarSpec, SyntheticSpec, WorkloadSpec,
};
use bncard_core::ensemble::{build_ensemble, EnsembleModel, EnsembleOptions, StructureMethod};
use bncard_core::eval::eval_workload;
use bncard_core::exec::Exec;
use bncard_core::infer::{choose_elim_order, reduce_graph, Backend, PlanCache, DEFAULT_SAMPLES};
use bncard_core::structure::ConstraintsFile;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bncard", version, about = "Cardinality estimation with Bayesian-network ensembles")]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an ensemble from a schema file and save it.
    Train(TrainArgs),
    /// Estimate one query.
    Estimate(EstimateArgs),
    /// Evaluate a labeled workload and report q-errors.
    Eval(EvalArgs),
    /// Insert or delete rows of a single-table group without refitting.
    Update(UpdateArgs),
    /// Rebuild a model from (changed) data with its stored options.
    Refit(RefitArgs),
    /// Generate a synthetic table or star schema.
    GenData(GenDataArgs),
    /// Generate a labeled query workload over a schema.
    GenWorkload(GenWorkloadArgs),
    /// Show the reduced graphs, elimination orders and compiled plans for a query.
    Explain(ExplainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    /// Compiled, cached variable elimination.
    Cve,
    /// Interpreted variable elimination.
    Ve,
    /// Progressive sampling.
    Ps,
}

#[derive(Clone, Copy, ValueEnum)]
enum StructureArg {
    ChowLiu,
    Greedy,
    Saturated,
}

#[derive(Args)]
struct BackendOpts {
    #[arg(long, value_enum, default_value = "cve")]
    backend: BackendArg,
    /// Samples for the progressive-sampling backend.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BackendOpts {
    fn backend(&self) -> Backend {
        match self.backend {
            BackendArg::Cve => Backend::CompiledVe,
            BackendArg::Ve => Backend::Ve,
            BackendArg::Ps => Backend::Sampling { k: self.k, seed: self.seed },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 2)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with `forced`, `forbidden` edges and `roots`, named `table.attr`.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "chow-liu")]
    structure: StructureArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Rows sampled from each group's full outer join.
    #[arg(long, default_value_t = bncard_core::ensemble::DEFAULT_JOIN_SAMPLE, conflicts_with = "exact")]
    sample_size: usize,
    /// Materialize every group join instead of sampling.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = bncard_core::structure::DEFAULT_MAX_PARENTS)]
    max_parents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query JSON: `{"tables": [...], "predicates": [...]}`.
    #[arg(long)]
    query: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// One labeled query per line.
    #[arg(long)]
    workload: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    /// Write the full JSON report (with per-query records and timings) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct UpdateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Table receiving the rows; optional for single-table models.
    #[arg(long)]
    table: Option<String>,
    #[arg(long, conflicts_with = "delete", required_unless_present = "delete")]
    insert: Option<PathBuf>,
    #[arg(long)]
    delete: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefitArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the stored seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Generator spec (JSON). Single-table spec unless `--star`.
    #[arg(long)]
    spec: PathBuf,
    /// Treat the spec as a star-schema spec.
    #[arg(long)]
    star: bool,
    /// CSV output (single table only).
    #[arg(long, required_unless_present = "out_dir")]
    out: Option<PathBuf>,
    /// Directory for table CSVs plus `schema.json`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenWorkloadArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Workload spec (JSON); defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON-lines file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    query: PathBuf,
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: &Path) -> Result<EnsembleModel> {
    EnsembleModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_query(model: &EnsembleModel, path: &Path) -> Result<Query> {
    let raw: RawQuery = read_json(path)?;
    Ok(Query::resolve(&raw, &model.schema)?)
}

fn stdout_line(s: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}")?;
    Ok(())
}

fn train(a: &TrainArgs, exec: Exec) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let constraints = match &a.constraints {
        Some(p) => read_json::<ConstraintsFile>(p)?,
        None => ConstraintsFile::default(),
    };
    let options = EnsembleOptions {
        budget: a.budget,
        sample_size: (!a.exact).then_some(a.sample_size),
        seed: a.seed,
        structure: match a.structure {
            StructureArg::ChowLiu => StructureMethod::ChowLiu,
            StructureArg::Greedy => StructureMethod::Greedy,
            StructureArg::Saturated => StructureMethod::Saturated,
        },
        max_parents: a.max_parents,
        alpha: a.alpha,
        constraints,
    };
    let start = Instant::now();
    let model = build_ensemble(&schema, &options, exec)?;
    let secs = start.elapsed().as_secs_f64();
    save_and_report(&model, &a.out)?;
    eprintln!("training time: {secs:.3} s");
    Ok(())
}

fn save_and_report(model: &EnsembleModel, out: &Path) -> Result<()> {
    let json = model.to_json()?;
    fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    let groups: Vec<Vec<&str>> = model
        .groups
        .iter()
        .map(|g| g.members.iter().map(|&t| model.schema.tables[t].name.as_str()).collect())
        .collect();
    let summary = serde_json::json!({
        "model": out.display().to_string(),
        "groups": groups,
        "model_size_bytes": json.len(),
    });
    stdout_line(&serde_json::to_string(&summary)?)
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let q = load_query(&model, &a.query)?;
    let cache = PlanCache::default();
    let start = Instant::now();
    let est = model.estimate(&q, a.backend.backend(), &cache)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    stdout_line(&format!("{est}"))?;
    eprintln!("latency: {ms:.3} ms");
    Ok(())
}

fn eval(a: &EvalArgs, exec: Exec) -> Result<()> {
    let model = load_model(&a.model)?;
    let text = fs::read_to_string(&a.workload).with_context(|| format!("reading {}", a.workload.display()))?;
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let raw: RawQuery =
            serde_json::from_str(line).with_context(|| format!("{} line {}", a.workload.display(), i + 1))?;
        if raw.true_card.is_none() {
            bail!("{} line {}: query has no true_card label", a.workload.display(), i + 1);
        }
        queries.push(Query::resolve(&raw, &model.schema).with_context(|| format!("line {}", i + 1))?);
    }
    if queries.is_empty() {
        bail!("workload {} is empty", a.workload.display());
    }
    let cache = PlanCache::default();
    let report = eval_workload(&model, &queries, a.backend.backend(), &cache, exec)?;
    if let Some(p) = &a.report {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", report.to_table(false));
    eprintln!("latency ms (mean): {:.4}", report.timing.mean_latency_ms);
    Ok(())
}

fn update(a: &UpdateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let table = match &a.table {
        Some(t) => t.clone(),
        None if model.schema.tables.len() == 1 => model.schema.tables[0].name.clone(),
        None => bail!("--table is required for multi-table models"),
    };
    let meta = model.schema.table(&table)?;
    let (path, insert) = match (&a.insert, &a.delete) {
        (Some(p), None) => (p, true),
        (None, Some(p)) => (p, false),
        _ => bail!("give exactly one of --insert or --delete"),
    };
    let (rows, report) = encode_rows(path, &table, &meta.attrs)?;
    if report.rows_dropped > 0 {
        eprintln!("skipped {} malformed rows", report.rows_dropped);
    }
    let start = Instant::now();
    let next = model.update_table(&table, &rows, insert)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    save_and_report(&next, &a.out)?;
    eprintln!("{} {} rows in {ms:.3} ms", if insert { "inserted" } else { "deleted" }, rows.row_count());
    Ok(())
}

fn refit(a: &RefitArgs, exec: Exec) -> Result<()> {
    let model = load_model(&a.model)?;
    let schema = load_schema(&a.schema)?;
    let mut options = model.options.clone();
    if let Some(s) = a.seed {
        options.seed = s;
    }
    let start = Instant::now();
    let next = build_ensemble(&schema, &options, exec)?;
    let secs = start.elapsed().as_secs_f64();
    save_and_report(&next, &a.out)?;
    eprintln!("training time: {secs:.3} s");
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let schema = if a.star {
        let mut spec: StarSpec = read_json(&a.spec)?;
        if let Some(s) = a.seed {
            spec.seed = s;
        }
        gen_star_schema(&spec)?
    } else {
        let mut spec: SyntheticSpec = read_json(&a.spec)?;
        if let Some(s) = a.seed {
            spec.seed = s;
        }
        spec.validate()?;
        JoinSchema::single(gen_synthetic(&spec)?.table)
    };
    match (&a.out, &a.out_dir) {
        (_, Some(dir)) => {
            let path = write_schema(&schema, dir)?;
            stdout_line(&path.display().to_string())?;
        }
        (Some(out), None) => {
            if schema.tables.len() != 1 {
                bail!("a star schema has several tables; use --out-dir");
            }
            write_csv(&schema.tables[0].table, out)?;
            stdout_line(&out.display().to_string())?;
        }
        (None, None) => bail!("give --out or --out-dir"),
    }
    let rows: usize = schema.tables.iter().map(|t| t.table.row_count()).sum();
    eprintln!("generated {} table(s), {rows} rows", schema.tables.len());
    Ok(())
}

fn gen_workload_cmd(a: &GenWorkloadArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let mut spec: WorkloadSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => WorkloadSpec::default(),
    };
    if let Some(c) = a.count {
        spec.count = c;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let queries = gen_workload(&schema, &spec)?;
    let mut text = String::new();
    for q in &queries {
        text.push_str(&serde_json::to_string(q)?);
        text.push('\n');
    }
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    eprintln!("generated {} queries", queries.len());
    Ok(())
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let q = load_query(&model, &a.query)?;
    let plan = model.plan_query(&q)?;
    let cache = PlanCache::default();
    let mut out = String::new();
    out.push_str(&format!("estimated full join size over touched groups: {}\n", plan.full_join_size));
    for term in &plan.terms {
        let g = &model.groups[term.group];
        let bn = &g.bn;
        let name = |v: usize| bn.attrs()[v].name.clone();
        let members: Vec<&str> = g.members.iter().map(|&t| model.schema.tables[t].name.as_str()).collect();
        out.push_str(&format!("\ngroup {} [{}] join size {}\n", term.group, members.join(", "), g.full_join_size));
        let rg = reduce_graph(bn, &term.evidence);
        out.push_str(&format!("  reduced graph: {} of {} nodes\n", rg.kept.len(), bn.len()));
        out.push_str(&format!("    kept: {}\n", rg.kept.iter().map(|&v| name(v)).collect::<Vec<_>>().join(", ")));
        for &(p, c) in &rg.edges {
            out.push_str(&format!("    {} -> {}\n", name(p), name(c)));
        }
        let order = choose_elim_order(bn, &rg);
        out.push_str(&format!("  elimination order: {}\n", order.iter().map(|&v| name(v)).collect::<Vec<_>>().join(", ")));
        let compiled = cache.get_or_compile(bn, &term.evidence)?;
        for line in compiled.dump(bn, Some(&term.evidence)).lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
    }
    print!("{out}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ex = exec(cli);
    match &cli.command {
        Command::Train(a) => train(a, ex),
        Command::Estimate(a) => estimate(a),
        Command::Eval(a) => eval(a, ex),
        Command::Update(a) => update(a),
        Command::Refit(a) => refit(a, ex),
        Command::GenData(a) => gen_data(a),
        Command::GenWorkload(a) => gen_workload_cmd(a),
        Command::Explain(a) => explain(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
