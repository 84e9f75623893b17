//! `tierq`: ingest objects, plan, run and benchmark queries on the simulated
//! two-tier store.
//!
//! Machine-readable records (one JSON object per line) go to stdout, human
//! summaries and diagnostics to stderr. Exit status: 0 success, 1 runtime or
//! storage error, 2 usage or query parse error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tierquery_core::cluster::{
    bench_modes, bench_splits, run_query, ClusterConfig, ClusterError, Mode, ObjectRef, ObjectStore,
};
use tierquery_core::columnar::{emit_output, ingest_csv, CsvOptions, OutputFormat, Schema};
use tierquery_core::decomposer::decompose;
use tierquery_core::gen::{generate, Dataset, GenOptions};
use tierquery_core::planir::{classify, plan_to_text, plan_to_text_annotated};
use tierquery_core::soda::optimize;
use tierquery_core::sqlfe::{parse, parse_errors};
use tierquery_core::stats::DEFAULT_SAMPLE_RATE;

#[derive(Parser)]
#[command(
    name = "tierq",
    version,
    about = "Query offloading across a simulated two-tier object store"
)]
struct Cli {
    /// Storage root directory.
    #[arg(long, env = "TIERQ_ROOT", default_value = "tierq-data", global = true)]
    root: PathBuf,
    /// key=value file with cluster defaults.
    #[arg(long, env = "TIERQ_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Store a CSV file as an object.
    Put {
        bucket: String,
        key: String,
        csv: PathBuf,
        schema: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
        stats_rate: f64,
        /// Shard count used if the bucket has to be created.
        #[arg(long, default_value_t = 1)]
        shards: usize,
    },
    /// Show the cost estimates and the split SODA chooses, without running.
    Plan {
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Run a query and report the bytes moved per hop.
    Run {
        #[command(flatten)]
        query: QueryArgs,
        /// Client result format; defaults to the configured client_format (csv).
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Result file; `-` writes the result to stdout and the report to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare split points or execution modes.
    Bench {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, conflicts_with = "modes", required_unless_present = "modes")]
        enumerate_splits: bool,
        /// Only `all` is accepted.
        #[arg(long, value_parser = ["all"])]
        modes: Option<String>,
    },
    /// Write a synthetic dataset as CSV plus a schema file.
    Gen {
        dataset: Dataset,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = tierquery_core::gen::DEFAULT_SELECTIVITY)]
        selectivity: f64,
        /// CSV path; the schema goes next to it with a `.schema` extension.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "sql_source")]
struct SqlSource {
    /// Query text.
    #[arg(short = 'e', long = "execute", group = "sql_source")]
    text: Option<String>,
    /// File holding the query.
    #[arg(short = 'f', long = "file", group = "sql_source")]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    sql: SqlSource,
    /// Object as `bucket/key`.
    #[arg(value_parser = parse_object_ref)]
    object: ObjectRef,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    array_nodes: Option<usize>,
    /// Lazy-split threshold in bytes.
    #[arg(long)]
    transfer_budget: Option<u64>,
}

fn parse_object_ref(s: &str) -> Result<ObjectRef, String> {
    ObjectRef::parse(s).ok_or_else(|| format!("`{s}` is not of the form bucket/key"))
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(record: serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{record}");
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut config = ClusterConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        config = config
            .apply_config_text(&text)
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Put {
            bucket,
            key,
            csv,
            schema,
            stats_rate,
            shards,
        } => cmd_put(&cli.root, &bucket, &key, &csv, &schema, stats_rate, shards),
        Command::Plan { query } => cmd_plan(&cli.root, &query, config),
        Command::Run { query, format, out } => cmd_run(&cli.root, &query, config, format, out.as_deref()),
        Command::Bench {
            query,
            enumerate_splits,
            ..
        } => cmd_bench(&cli.root, &query, config, enumerate_splits),
        Command::Gen {
            dataset,
            rows,
            seed,
            selectivity,
            out,
        } => cmd_gen(dataset, rows, seed, selectivity, &out),
    }
}

fn cmd_put(
    root: &Path,
    bucket: &str,
    key: &str,
    csv: &Path,
    schema_path: &Path,
    stats_rate: f64,
    shards: usize,
) -> Result<(), Failure> {
    if !(stats_rate > 0.0 && stats_rate <= 1.0) {
        return Err(Failure::Usage(format!(
            "--stats-rate must be in (0, 1], got {stats_rate}"
        )));
    }
    if !(0.005..=0.05).contains(&stats_rate) {
        eprintln!("warning: stats rate {stats_rate} is outside the recommended 0.5%-5% sampling band; using it anyway");
    }
    let schema_text =
        fs::read_to_string(schema_path).with_context(|| format!("reading schema {}", schema_path.display()))?;
    let schema = Schema::from_text(&schema_text).map_err(|e| anyhow!("{}: {e}", schema_path.display()))?;
    let file = fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let table = ingest_csv(std::io::BufReader::new(file), &schema, &CsvOptions::default())
        .map_err(|e| anyhow!("{}: {e}", csv.display()))?;

    let store = ObjectStore::open(root)?;
    if matches!(store.bucket(bucket), Err(ClusterError::NoSuchBucket(_))) {
        store.create_bucket(bucket, shards.max(1))?;
    }
    let meta = store.put_object(bucket, key, &table, stats_rate)?;
    let histograms: Vec<_> = meta
        .stats
        .histograms
        .iter()
        .map(|h| {
            json!({
                "column": h.column, "bins": h.bins, "sampled_rows": h.sampled_rows,
                "lo": h.lo, "hi": h.hi, "null_fraction": h.null_fraction,
                "distinct_estimate": h.distinct_estimate,
            })
        })
        .collect();
    emit(json!({
        "record": "put", "bucket": bucket, "key": key, "rows": meta.row_count,
        "logical_bytes": meta.logical_bytes, "shards": meta.shards.len(),
        "stored_bytes": meta.shards.iter().map(|s| s.stored_bytes).sum::<u64>(),
        "stats_rate": stats_rate, "histograms": histograms,
    }));
    eprintln!(
        "stored {bucket}/{key}: {} rows, {} logical bytes in {} shard(s), {} histogram(s)",
        meta.row_count,
        meta.logical_bytes,
        meta.shards.len(),
        meta.stats.histograms.len()
    );
    for h in &meta.stats.histograms {
        eprintln!(
            "  {:<16} [{:.6}, {:.6}] sampled {} rows, ~{:.0} distinct, {:.2}% null",
            h.column,
            h.lo,
            h.hi,
            h.sampled_rows,
            h.distinct_estimate,
            h.null_fraction * 100.0
        );
    }
    Ok(())
}

fn read_sql(src: &SqlSource) -> Result<String, Failure> {
    match (&src.text, &src.file) {
        (Some(t), _) => Ok(t.clone()),
        (None, Some(p)) => Ok(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        (None, None) => Err(Failure::Usage("a query is required (-e or -f)".into())),
    }
}

fn query_config(q: &QueryArgs, mut cfg: ClusterConfig) -> Result<ClusterConfig, Failure> {
    if let Some(m) = q.mode {
        cfg.mode = m;
    }
    if let Some(n) = q.array_nodes {
        cfg.array_nodes = n;
    }
    if let Some(b) = q.transfer_budget {
        cfg.transfer_budget = b;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Parses `sql`, printing every diagnostic on failure.
fn checked_sql(sql: &str) -> Result<(), Failure> {
    let errors = parse_errors(sql);
    if errors.is_empty() {
        return Ok(());
    }
    for e in &errors {
        eprintln!("{e}");
    }
    Err(Failure::Usage(format!("{} syntax error(s) in query", errors.len())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "?".to_string(), |b| format!("{b:.0}"))
}

fn cmd_plan(root: &Path, q: &QueryArgs, cfg: ClusterConfig) -> Result<(), Failure> {
    let cfg = query_config(q, cfg)?;
    let sql = read_sql(&q.sql)?;
    checked_sql(&sql)?;
    let store = ObjectStore::open(root)?;
    let meta = store.object_meta(&q.object)?;
    let plan = parse(&sql, &meta.schema).map_err(|e| Failure::Usage(e.to_string()))?;
    let nodes = cfg.array_nodes.min(meta.shards.len()).max(1);
    let decision = optimize(&plan, meta.logical_bytes as f64, &meta.stats, nodes).map_err(ClusterError::from)?;
    let split = decompose(&plan, &decision).map_err(ClusterError::from)?;

    eprintln!("parsed plan:\n{}", plan_to_text(&plan));
    eprintln!(
        "{:>3}  {:<10} {:<5} {:>22} {:>14} {:>14} {:>12}",
        "#", "node", "class", "coefficient", "in bytes", "out bytes", "out rows"
    );
    for (i, (node, size)) in plan.nodes.iter().zip(&decision.estimates.nodes).enumerate() {
        emit(json!({
            "record": "plan_node", "index": i, "kind": node.kind(),
            "class": format!("{:?}", classify(node)),
            "coefficient": size.coefficient.value, "source": size.coefficient.source.name(),
            "input_bytes": size.input_bytes, "output_bytes": size.output_bytes, "output_rows": size.output_rows,
        }));
        let marker = if i == decision.split_after { "  <- split" } else { "" };
        eprintln!(
            "{:>3}  {:<10} {:<5} {:>22} {:>14} {:>14} {:>12}{marker}",
            i,
            node.kind(),
            format!("{:?}", classify(node)),
            size.coefficient.to_string(),
            fmt_opt(size.input_bytes),
            fmt_opt(size.output_bytes),
            fmt_opt(size.output_rows),
        );
    }
    let array_text = plan_to_text_annotated(&split.array_plan, &decision.to_annotations());
    let fe_text = plan_to_text_annotated(&split.fe_plan, &split.fe_annotations(&q.object.to_string()));
    emit(json!({
        "record": "decision", "strategy": decision.strategy.to_string(),
        "split_after": decision.split_after, "partial_agg": decision.partial_agg,
        "lazy": decision.lazy, "boundary": decision.boundary_index,
        "estimated_transfer_bytes": decision.estimates.output_bytes(decision.split_after),
        "array_plan": array_text, "fe_plan": fe_text,
    }));
    eprintln!(
        "strategy {} splits after node {} ({}){}",
        decision.strategy,
        decision.split_after,
        plan.nodes[decision.split_after].kind(),
        if decision.partial_agg {
            ", partial aggregation"
        } else {
            ""
        }
    );
    eprintln!("array plan:\n{array_text}\nfrontend plan:\n{fe_text}");
    Ok(())
}

fn cmd_run(
    root: &Path,
    q: &QueryArgs,
    cfg: ClusterConfig,
    format: Option<OutputFormat>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = query_config(q, cfg)?;
    if let Some(f) = format {
        cfg.client_format = f;
    }
    let format = cfg.client_format;
    let sql = read_sql(&q.sql)?;
    checked_sql(&sql)?;
    let store = ObjectStore::open(root)?;
    let report = run_query(&store, &sql, &q.object, &cfg)?;
    let bytes = emit_output(&report.result, format);
    let mut record = report.to_json();
    record["format"] = json!(format.name());
    match out {
        Some(p) if p == Path::new("-") => {
            std::io::stdout().lock().write_all(&bytes).context("writing result")?;
            eprintln!("{record}");
        }
        Some(p) => {
            fs::write(p, &bytes).with_context(|| format!("writing {}", p.display()))?;
            record["out"] = json!(p.display().to_string());
            emit(record);
        }
        None => emit(record),
    }
    eprintln!(
        "{} mode: {} rows; array->fe {} B, fe->client {} B, simulated transfer {:.6} s",
        report.mode,
        report.result.num_rows(),
        report.bytes_array_to_fe,
        report.bytes_fe_to_client,
        report.simulated_transfer_seconds
    );
    if let Some(s) = &report.split {
        eprintln!(
            "{} split after node {}{}",
            s.strategy,
            s.split_after,
            if s.partial_agg { " (partial aggregation)" } else { "" }
        );
    }
    Ok(())
}

fn cmd_bench(root: &Path, q: &QueryArgs, cfg: ClusterConfig, enumerate_splits: bool) -> Result<(), Failure> {
    let cfg = query_config(q, cfg)?;
    let sql = read_sql(&q.sql)?;
    checked_sql(&sql)?;
    let store = ObjectStore::open(root)?;
    if enumerate_splits {
        let runs = bench_splits(&store, &sql, &q.object, &cfg)?;
        eprintln!(
            "{:>5}  {:<10} {:>16} {:>16} {:>16} {:>10} {:>8}",
            "split", "last node", "estimated B", "array->fe B", "fe->client B", "rows", "soda"
        );
        for r in &runs {
            emit(r.to_json());
            eprintln!(
                "{:>5}  {:<10} {:>16} {:>16} {:>16} {:>10} {:>8}",
                r.split_after,
                r.last_array_node,
                fmt_opt(r.estimated_bytes),
                r.bytes_array_to_fe,
                r.bytes_fe_to_client,
                r.result_rows,
                if r.chosen { "*" } else { "" }
            );
        }
    } else {
        let reports = bench_modes(&store, &sql, &q.object, &cfg)?;
        eprintln!(
            "{:<9} {:>16} {:>16} {:>14} {:>10}  hash",
            "mode", "array->fe B", "fe->client B", "simulated s", "rows"
        );
        for r in &reports {
            emit(r.to_json());
            eprintln!(
                "{:<9} {:>16} {:>16} {:>14.6} {:>10}  {}",
                r.mode.name(),
                r.bytes_array_to_fe,
                r.bytes_fe_to_client,
                r.simulated_transfer_seconds,
                r.result.num_rows(),
                &r.result_hash[..16]
            );
        }
    }
    Ok(())
}

fn cmd_gen(dataset: Dataset, rows: usize, seed: u64, selectivity: f64, out: &Path) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&selectivity) {
        return Err(Failure::Usage(format!(
            "--selectivity must be in [0, 1], got {selectivity}"
        )));
    }
    let opts = GenOptions::new(rows, seed).with_selectivity(selectivity);
    let table = generate(dataset, &opts);
    let schema_path = out.with_extension("schema");
    fs::write(out, emit_output(&table, OutputFormat::Csv)).with_context(|| format!("writing {}", out.display()))?;
    fs::write(&schema_path, dataset.schema().to_text())
        .with_context(|| format!("writing {}", schema_path.display()))?;
    emit(json!({
        "record": "gen", "dataset": dataset.name(), "rows": rows, "seed": seed,
        "selectivity": selectivity, "selected_rows": opts.selected_rows(),
        "csv": out.display().to_string(), "schema": schema_path.display().to_string(),
    }));
    eprintln!(
        "wrote {rows} {dataset} rows ({} selected) to {} and {}",
        opts.selected_rows(),
        out.display(),
        schema_path.display()
    );
    Ok(())
}
