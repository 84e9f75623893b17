//! Two-tier execution simulator: one frontend (FE) node in front of N array
//! nodes that hold the object shards.
//!
//! Transfers between tiers are real serialized byte buffers. Their cost is
//! reported as simulated seconds (`bytes / bandwidth`) and never slept.

mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::columnar::{
    deserialize_columnar, emit_output, serialize_columnar, ColumnarError, OutputFormat, Table, Value,
};
use crate::costmodel::range_constraints;
use crate::decomposer::{decompose_at, DecomposeError, DecomposedPlans};
use crate::executor::{apply_node, execute, ExecContext, ExecError, Segment, DEFAULT_BATCH_ROWS};
use crate::planir::{Plan, PlanNode};
use crate::soda::{can_extend, needs_partial, optimize, rewrite_partial_aggregate, SodaError, SplitDecision};
use crate::sqlfe::{parse, SqlError};
use crate::stats::StatsError;

pub use store::{BucketInfo, ColumnRange, ObjectMeta, ObjectRef, ObjectStore, ShardInfo};

/// 10 Gb/s in bytes per second.
pub const DEFAULT_BANDWIDTH: f64 = 1.25e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no such bucket `{0}`")]
    NoSuchBucket(String),
    #[error("bucket `{0}` already exists")]
    BucketExists(String),
    #[error("no such object `{0}`")]
    NoSuchKey(String),
    #[error("key `{key}` already exists in bucket `{bucket}`")]
    DuplicateKey { bucket: String, key: String },
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("storage i/o: {0}")]
    Io(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("plan: {0}")]
    Parse(#[from] SqlError),
    #[error("optimize: {0}")]
    Optimize(#[from] SodaError),
    #[error("decompose: {0}")]
    Decompose(#[from] DecomposeError),
    #[error("{phase}: {source}")]
    Exec { phase: &'static str, source: ExecError },
}

fn exec_err(phase: &'static str) -> impl Fn(ExecError) -> ClusterError {
    move |source| ClusterError::Exec { phase, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Whole object shipped to the client, which runs the query.
    Baseline,
    /// Shards whose min/max rule out the range predicates stay behind;
    /// the client runs the query on the rest.
    Pred,
    /// Whole object shipped to the FE, which runs the query.
    Cos,
    /// SODA splits the plan between the array nodes and the FE.
    Oasis,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Pred, Mode::Cos, Mode::Oasis];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Pred => "pred",
            Mode::Cos => "cos",
            Mode::Oasis => "oasis",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Mode, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode `{s}` (expected baseline, pred, cos or oasis)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub array_nodes: usize,
    /// FE to array tier, bytes per second.
    pub interconnect_bandwidth: f64,
    /// FE to client, bytes per second.
    pub client_bandwidth: f64,
    /// Intermediate size above which a lazy split is pushed further down.
    pub transfer_budget: u64,
    pub mode: Mode,
    /// Encoding of results sent to the client in cos and oasis modes.
    pub client_format: OutputFormat,
    pub batch_rows: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            array_nodes: 1,
            interconnect_bandwidth: DEFAULT_BANDWIDTH,
            client_bandwidth: DEFAULT_BANDWIDTH,
            transfer_budget: u64::MAX,
            mode: Mode::Oasis,
            client_format: OutputFormat::Csv,
            batch_rows: DEFAULT_BATCH_ROWS,
        }
    }
}

impl ClusterConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_array_nodes(mut self, n: usize) -> Self {
        self.array_nodes = n;
        self
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.array_nodes == 0 {
            return Err(ClusterError::InvalidConfig("array_nodes must be at least 1".into()));
        }
        for (name, bw) in [
            ("interconnect_bandwidth", self.interconnect_bandwidth),
            ("client_bandwidth", self.client_bandwidth),
        ] {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(ClusterError::InvalidConfig(format!(
                    "{name} must be positive, got {bw}"
                )));
            }
        }
        if self.batch_rows == 0 {
            return Err(ClusterError::InvalidConfig("batch_rows must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines over `self`. Keys: `array_nodes`,
    /// `interconnect_bandwidth`, `client_bandwidth`, `transfer_budget`,
    /// `mode`, `client_format`, `batch_rows`. `#` starts a comment.
    pub fn apply_config_text(mut self, text: &str) -> Result<Self, ClusterError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| ClusterError::InvalidConfig(format!("line {}: {what}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(&format!("`{v}` is not a number")));
            match k {
                "array_nodes" => self.array_nodes = v.parse().map_err(|_| bad("array_nodes must be an integer"))?,
                "interconnect_bandwidth" => self.interconnect_bandwidth = num(v)?,
                "client_bandwidth" => self.client_bandwidth = num(v)?,
                "transfer_budget" => {
                    self.transfer_budget = if v == "unlimited" {
                        u64::MAX
                    } else {
                        v.parse().map_err(|_| bad("transfer_budget must be a byte count"))?
                    }
                }
                "mode" => self.mode = v.parse().map_err(|e: String| bad(&e))?,
                "client_format" => self.client_format = v.parse().map_err(|e: String| bad(&e))?,
                "batch_rows" => self.batch_rows = v.parse().map_err(|_| bad("batch_rows must be an integer"))?,
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn simulated_seconds(&self, array_to_fe: u64, fe_to_client: u64) -> f64 {
        array_to_fe as f64 / self.interconnect_bandwidth + fe_to_client as f64 / self.client_bandwidth
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub plan: Duration,
    pub optimize: Duration,
    pub array_exec: Duration,
    pub transfer: Duration,
    pub fe_exec: Duration,
}

#[derive(Debug, Clone)]
pub struct QueryReport {
    pub mode: Mode,
    pub result: Table,
    /// Whether row order is part of the result.
    pub ordered: bool,
    pub result_hash: String,
    pub bytes_array_to_fe: u64,
    pub bytes_fe_to_client: u64,
    pub simulated_transfer_seconds: f64,
    pub timings: PhaseTimings,
    pub split: Option<SplitDecision>,
    pub array_plan: Option<Plan>,
    pub fe_plan: Option<Plan>,
    pub array_nodes_used: usize,
    pub shards_scanned: usize,
    pub shards_skipped: usize,
}

impl QueryReport {
    pub fn to_json(&self) -> serde_json::Value {
        let t = &self.timings;
        let mut v = json!({
            "record": "query",
            "mode": self.mode.name(),
            "result_rows": self.result.num_rows(),
            "result_hash": self.result_hash,
            "bytes_array_to_fe": self.bytes_array_to_fe,
            "bytes_fe_to_client": self.bytes_fe_to_client,
            "simulated_transfer_seconds": self.simulated_transfer_seconds,
            "plan_ms": ms(t.plan),
            "optimize_ms": ms(t.optimize),
            "array_exec_ms": ms(t.array_exec),
            "transfer_ms": ms(t.transfer),
            "fe_exec_ms": ms(t.fe_exec),
            "array_nodes": self.array_nodes_used,
            "shards_scanned": self.shards_scanned,
            "shards_skipped": self.shards_skipped,
        });
        if let Some(s) = &self.split {
            v["strategy"] = json!(s.strategy.to_string());
            v["split_after"] = json!(s.split_after);
            v["partial_agg"] = json!(s.partial_agg);
        }
        v
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// One row of a split enumeration.
#[derive(Debug, Clone)]
pub struct SplitRun {
    pub split_after: usize,
    pub last_array_node: &'static str,
    pub partial_agg: bool,
    pub estimated_bytes: Option<f64>,
    pub bytes_array_to_fe: u64,
    pub bytes_fe_to_client: u64,
    pub simulated_transfer_seconds: f64,
    pub timings: PhaseTimings,
    pub result_rows: usize,
    pub result_hash: String,
    pub chosen: bool,
}

impl SplitRun {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "record": "split",
            "split_after": self.split_after,
            "last_array_node": self.last_array_node,
            "partial_agg": self.partial_agg,
            "estimated_bytes": self.estimated_bytes,
            "bytes_array_to_fe": self.bytes_array_to_fe,
            "bytes_fe_to_client": self.bytes_fe_to_client,
            "simulated_transfer_seconds": self.simulated_transfer_seconds,
            "array_exec_ms": ms(self.timings.array_exec),
            "fe_exec_ms": ms(self.timings.fe_exec),
            "result_rows": self.result_rows,
            "result_hash": self.result_hash,
            "chosen": self.chosen,
        })
    }
}

fn push_canonical(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Float64(f) => push_float(out, *f),
        Value::ListFloat64(items) => {
            out.push('[');
            for (i, f) in items.iter().enumerate() {
                if i > 0 {
                    out.push(';');
                }
                push_float(out, *f);
            }
            out.push(']');
        }
        Value::Int32(i) => out.push_str(&i.to_string()),
        Value::Int64(i) => out.push_str(&i.to_string()),
        other => out.push_str(&format!("{other:?}")),
    }
}

/// Floats are rounded to 12 significant digits so that mathematically equal
/// results reached through different summation orders hash alike.
fn push_float(out: &mut String, f: f64) {
    if f == 0.0 {
        out.push('0');
    } else if f.is_finite() {
        out.push_str(&format!("{f:.11e}"));
    } else {
        out.push_str(&f.to_string());
    }
}

/// SHA-256 over canonical row text. Unordered results hash their sorted rows.
pub fn result_hash(table: &Table, ordered: bool) -> String {
    let mut rows: Vec<String> = table
        .rows()
        .iter()
        .map(|r| {
            let mut s = String::new();
            for (i, v) in r.iter().enumerate() {
                if i > 0 {
                    s.push('\t');
                }
                push_canonical(&mut s, v);
            }
            s
        })
        .collect();
    if !ordered {
        rows.sort_unstable();
    }
    let mut h = Sha256::new();
    for name in table.schema().names() {
        h.update(name.as_bytes());
        h.update(b"\t");
    }
    h.update(b"\n");
    for r in rows {
        h.update(r.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn is_ordered(plan: &Plan) -> bool {
    matches!(plan.nodes.last(), Some(PlanNode::Sort { .. }))
}

/// Everything a query run needs besides the mode-specific part.
struct Prepared {
    plan: Plan,
    meta: Arc<ObjectMeta>,
    /// Segments grouped by array node, in node order; only nodes with shards.
    groups: Vec<Vec<Segment>>,
    shard_bytes: Vec<Vec<u8>>,
    plan_time: Duration,
    load_time: Duration,
}

fn prepare(store: &ObjectStore, sql: &str, obj: &ObjectRef, cfg: &ClusterConfig) -> Result<Prepared, ClusterError> {
    cfg.validate()?;
    let meta = store.object_meta(obj)?;
    let start = Instant::now();
    let plan = parse(sql, &meta.schema)?;
    let plan_time = start.elapsed();

    let start = Instant::now();
    let bucket = store.bucket(&obj.bucket)?;
    let shard_bytes = store.shard_bytes(obj)?;
    let mut by_node: BTreeMap<usize, Vec<Segment>> = BTreeMap::new();
    for (bytes, info) in shard_bytes.iter().zip(&meta.shards) {
        let table = deserialize_columnar(bytes)?;
        by_node
            .entry(bucket.node_of(info.index, cfg.array_nodes))
            .or_default()
            .push(Segment {
                table: Arc::new(table),
                rowid_base: info.rowid_base,
            });
    }
    Ok(Prepared {
        plan,
        meta,
        groups: by_node.into_values().collect(),
        shard_bytes,
        plan_time,
        load_time: start.elapsed(),
    })
}

pub fn run_query(
    store: &ObjectStore,
    sql: &str,
    obj: &ObjectRef,
    cfg: &ClusterConfig,
) -> Result<QueryReport, ClusterError> {
    let p = prepare(store, sql, obj, cfg)?;
    match cfg.mode {
        Mode::Baseline | Mode::Pred | Mode::Cos => run_shipping(&p, cfg),
        Mode::Oasis => {
            let start = Instant::now();
            let decision = optimize(&p.plan, p.meta.logical_bytes as f64, &p.meta.stats, p.groups.len())?;
            let optimize_time = start.elapsed();
            let run = run_split(&p, cfg, decision.split_after, decision.partial_agg, decision.lazy)?;
            let mut split = decision;
            split.split_after = run.split_after;
            split.partial_agg = run.partial_agg;
            let mut timings = run.timings;
            timings.plan = p.plan_time;
            timings.optimize = optimize_time + run.decompose_time;
            Ok(QueryReport {
                mode: Mode::Oasis,
                result_hash: result_hash(&run.result, is_ordered(&p.plan)),
                ordered: is_ordered(&p.plan),
                result: run.result,
                bytes_array_to_fe: run.bytes_array_to_fe,
                bytes_fe_to_client: run.bytes_fe_to_client,
                simulated_transfer_seconds: cfg.simulated_seconds(run.bytes_array_to_fe, run.bytes_fe_to_client),
                timings,
                split: Some(split),
                array_plan: Some(run.plans.array_plan),
                fe_plan: Some(run.plans.fe_plan),
                array_nodes_used: p.groups.len(),
                shards_scanned: p.meta.shards.len(),
                shards_skipped: 0,
            })
        }
    }
}

/// Whether a shard may hold rows passing every range predicate of the
/// leading filters. Columns without a recorded range hold only nulls there.
fn shard_may_match(plan: &Plan, shard: &ShardInfo) -> bool {
    let mut predicates = Vec::new();
    for node in &plan.nodes {
        match node {
            PlanNode::Read { filter: Some(f), .. } => predicates.push(f),
            PlanNode::Read { .. } => {}
            PlanNode::Filter { predicate } => predicates.push(predicate),
            _ => break,
        }
    }
    predicates.into_iter().flat_map(range_constraints).all(|(col, lo, hi)| {
        let (min, max) = if col == crate::planir::ROWID {
            if shard.rows == 0 {
                return false;
            }
            (
                shard.rowid_base as f64,
                (shard.rowid_base + shard.rows as i64 - 1) as f64,
            )
        } else {
            match shard.range(&col) {
                Some(r) => (r.min, r.max),
                None => return false,
            }
        };
        use std::ops::Bound::*;
        let above_lo = match lo {
            Included(v) => max >= v,
            Excluded(v) => max > v,
            Unbounded => true,
        };
        let below_hi = match hi {
            Included(v) => min <= v,
            Excluded(v) => min < v,
            Unbounded => true,
        };
        above_lo && below_hi
    })
}

/// Baseline, pred and cos: the array tier only ships stored shards.
fn run_shipping(p: &Prepared, cfg: &ClusterConfig) -> Result<QueryReport, ClusterError> {
    let table_name = p.plan.read_table().unwrap_or_default().to_string();
    let start = Instant::now();
    let keep: Vec<bool> = p
        .meta
        .shards
        .iter()
        .map(|s| cfg.mode != Mode::Pred || shard_may_match(&p.plan, s))
        .collect();
    let bytes_array_to_fe: u64 = p
        .shard_bytes
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(b, _)| b.len() as u64)
        .sum();
    let array_exec = p.load_time + start.elapsed();

    let start = Instant::now();
    let mut segments = Vec::new();
    for ((bytes, info), k) in p.shard_bytes.iter().zip(&p.meta.shards).zip(&keep) {
        if *k {
            segments.push(Segment {
                table: Arc::new(deserialize_columnar(bytes)?),
                rowid_base: info.rowid_base,
            });
        }
    }
    let shipped_to_client = if cfg.mode == Mode::Cos {
        None
    } else {
        let parts: Vec<Table> = segments.iter().map(|s| s.table.as_ref().clone()).collect();
        let all = Table::concat(Arc::new(p.meta.schema.clone()), &parts)?;
        Some(serialize_columnar(&all).len() as u64)
    };
    let transfer = start.elapsed();

    let start = Instant::now();
    let mut ctx = ExecContext::new().with_batch_rows(cfg.batch_rows);
    ctx.register_segments(table_name, segments);
    let phase = if cfg.mode == Mode::Cos {
        "fe exec"
    } else {
        "client exec"
    };
    let result = execute(&p.plan, &ctx).map_err(exec_err(phase))?;
    let bytes_fe_to_client = shipped_to_client.unwrap_or_else(|| emit_output(&result, cfg.client_format).len() as u64);
    let fe_exec = start.elapsed();

    let ordered = is_ordered(&p.plan);
    let skipped = keep.iter().filter(|k| !**k).count();
    Ok(QueryReport {
        mode: cfg.mode,
        result_hash: result_hash(&result, ordered),
        ordered,
        result,
        bytes_array_to_fe,
        bytes_fe_to_client,
        simulated_transfer_seconds: cfg.simulated_seconds(bytes_array_to_fe, bytes_fe_to_client),
        timings: PhaseTimings {
            plan: p.plan_time,
            optimize: Duration::ZERO,
            array_exec,
            transfer,
            fe_exec,
        },
        split: None,
        array_plan: None,
        fe_plan: None,
        array_nodes_used: p.groups.len(),
        shards_scanned: keep.len() - skipped,
        shards_skipped: skipped,
    })
}

struct SplitOutcome {
    result: Table,
    plans: DecomposedPlans,
    split_after: usize,
    partial_agg: bool,
    bytes_array_to_fe: u64,
    bytes_fe_to_client: u64,
    timings: PhaseTimings,
    decompose_time: Duration,
}

/// Runs the plan split after node `split_after`. With `lazy`, the split is
/// pushed down one node at a time while the intermediates exceed the
/// transfer budget.
fn run_split(
    p: &Prepared,
    cfg: &ClusterConfig,
    split_after: usize,
    partial_agg: bool,
    lazy: bool,
) -> Result<SplitOutcome, ClusterError> {
    let plan = &p.plan;
    let table_name = plan.read_table().unwrap_or_default().to_string();
    let nodes = p.groups.len();

    let start = Instant::now();
    let mut plans = decompose_at(plan, split_after, partial_agg)?;
    let mut decompose_time = start.elapsed();

    let start = Instant::now();
    let array_plan = &plans.array_plan;
    let intermediate_names: Vec<String> = plans.intermediate_schema.names().map(String::from).collect();
    let mut mids: Vec<Table> = thread::scope(|s| {
        let handles: Vec<_> = p
            .groups
            .iter()
            .map(|segments| {
                let table_name = &table_name;
                let intermediate_names = &intermediate_names;
                s.spawn(move || {
                    let mut ctx = ExecContext::new().with_batch_rows(cfg.batch_rows);
                    ctx.register_segments(table_name.clone(), segments.clone());
                    let out = execute(array_plan, &ctx).map_err(exec_err("array exec"))?;
                    Ok::<_, ClusterError>(out.with_field_names(intermediate_names)?)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("array node worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut array_exec = p.load_time + start.elapsed();

    let mut split = split_after;
    let mut partial = partial_agg;
    let mut transfer = Duration::ZERO;
    let wire = |mids: &[Table], plans: &DecomposedPlans| -> Result<Vec<Vec<u8>>, ClusterError> {
        let temps: Vec<String> = plans.temp_names.iter().map(|(_, t)| t.clone()).collect();
        mids.iter()
            .map(|m| Ok(serialize_columnar(&m.with_field_names(&temps)?)))
            .collect()
    };
    let t = Instant::now();
    let mut payloads = wire(&mids, &plans)?;
    transfer += t.elapsed();
    while lazy
        && payloads.iter().map(|b| b.len() as u64).sum::<u64>() > cfg.transfer_budget
        && !partial
        && can_extend(plan, split, nodes)
    {
        split += 1;
        partial = needs_partial(plan, split, nodes);
        let node = if partial {
            rewrite_partial_aggregate(&plan.nodes[split])?.0
        } else {
            plan.nodes[split].clone()
        };
        let t = Instant::now();
        mids = mids
            .iter()
            .map(|m| apply_node(&node, split, m, cfg.batch_rows).map_err(exec_err("array exec")))
            .collect::<Result<_, _>>()?;
        array_exec += t.elapsed();
        let t = Instant::now();
        plans = decompose_at(plan, split, partial)?;
        decompose_time += t.elapsed();
        let t = Instant::now();
        payloads = wire(&mids, &plans)?;
        transfer += t.elapsed();
    }
    let bytes_array_to_fe: u64 = payloads.iter().map(|b| b.len() as u64).sum();

    let t = Instant::now();
    let segments = payloads
        .iter()
        .map(|b| {
            Ok(Segment {
                table: Arc::new(deserialize_columnar(b)?),
                rowid_base: 0,
            })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;
    transfer += t.elapsed();

    let start = Instant::now();
    let mut ctx = ExecContext::new().with_batch_rows(cfg.batch_rows);
    ctx.register_segments(plans.handle.clone(), segments);
    let result = execute(&plans.fe_plan, &ctx).map_err(exec_err("fe exec"))?;
    let bytes_fe_to_client = emit_output(&result, cfg.client_format).len() as u64;
    let fe_exec = start.elapsed();

    Ok(SplitOutcome {
        result,
        plans,
        split_after: split,
        partial_agg: partial,
        bytes_array_to_fe,
        bytes_fe_to_client,
        timings: PhaseTimings {
            plan: Duration::ZERO,
            optimize: Duration::ZERO,
            array_exec,
            transfer,
            fe_exec,
        },
        decompose_time,
    })
}

/// Split points that can run correctly: never past a median aggregate, and
/// past a global sort only when one array node holds the whole object.
pub fn feasible_splits(plan: &Plan, array_nodes: usize) -> Vec<usize> {
    let median = plan.nodes.iter().position(PlanNode::has_median);
    let sort = plan.nodes.iter().position(|n| matches!(n, PlanNode::Sort { .. }));
    (0..plan.len())
        .filter(|&k| median.is_none_or(|m| k < m))
        .filter(|&k| array_nodes <= 1 || sort.is_none_or(|s| k < s))
        .collect()
}

/// Executes the query once per feasible split point and marks SODA's pick.
pub fn bench_splits(
    store: &ObjectStore,
    sql: &str,
    obj: &ObjectRef,
    cfg: &ClusterConfig,
) -> Result<Vec<SplitRun>, ClusterError> {
    let p = prepare(store, sql, obj, cfg)?;
    let nodes = p.groups.len();
    let decision = optimize(&p.plan, p.meta.logical_bytes as f64, &p.meta.stats, nodes)?;
    let ordered = is_ordered(&p.plan);
    feasible_splits(&p.plan, nodes)
        .into_iter()
        .map(|k| {
            let partial = needs_partial(&p.plan, k, nodes);
            let run = run_split(&p, cfg, k, partial, false)?;
            Ok(SplitRun {
                split_after: k,
                last_array_node: p.plan.nodes[k].kind(),
                partial_agg: partial,
                estimated_bytes: decision.estimates.output_bytes(k),
                bytes_array_to_fe: run.bytes_array_to_fe,
                bytes_fe_to_client: run.bytes_fe_to_client,
                simulated_transfer_seconds: cfg.simulated_seconds(run.bytes_array_to_fe, run.bytes_fe_to_client),
                timings: run.timings,
                result_rows: run.result.num_rows(),
                result_hash: result_hash(&run.result, ordered),
                chosen: k == decision.split_after,
            })
        })
        .collect()
}

/// Runs the query under every mode.
pub fn bench_modes(
    store: &ObjectStore,
    sql: &str,
    obj: &ObjectRef,
    cfg: &ClusterConfig,
) -> Result<Vec<QueryReport>, ClusterError> {
    Mode::ALL
        .into_iter()
        .map(|m| run_query(store, sql, obj, &cfg.clone().with_mode(m)))
        .collect()
}
