//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 8`.

mod common;

use std::collections::HashSet;
use std::ops::Bound;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{is_sorted_plan, reference_execute, rows_match, store_with, Row};
use tierquery_core::cluster::{bench_modes, bench_splits, run_query, ClusterConfig, Mode, QueryReport};
use tierquery_core::columnar::{
    deserialize_columnar, emit_output, ingest_csv, read_json_lines, serialize_columnar, CsvOptions, DataType, Field,
    OutputFormat, Schema, Table, Value,
};
use tierquery_core::decomposer::{decompose_at, DecomposeError};
use tierquery_core::executor::{execute_partial_aggregate, ExecError};
use tierquery_core::gen::{corpus, generate, Dataset, GenOptions, Q1, Q1_NO_AGG, Q4};
use tierquery_core::planir::{Plan, PlanNode};
use tierquery_core::soda::{candidate_splits, rewrite_partial_aggregate, SodaError, Strategy};
use tierquery_core::sqlfe::parse;
use tierquery_core::stats::{build_histogram, estimate_range_selectivity};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("cad optimality", cad_optimality),
        ("data movement reduction", data_movement),
        ("sap locality", sap_locality),
        ("partial aggregation", partial_aggregation),
        ("selectivity estimation", selectivity_estimation),
        ("interchange integrity", interchange_integrity),
        ("selectivity crossover", selectivity_crossover),
        ("planning overhead", planning_overhead),
    ];
    let only: HashSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn plan_for(sql: &str, dataset: Dataset) -> Plan {
    parse(sql, &dataset.schema()).unwrap_or_else(|e| panic!("{sql}: {e}"))
}

fn oracle(sql: &str, dataset: Dataset, table: &Table) -> (Vec<Row>, bool) {
    let plan = plan_for(sql, dataset);
    (reference_execute(&plan, table), is_sorted_plan(&plan))
}

fn oracle_equivalence() -> Result<String, String> {
    let mut runs = 0;
    for (seed, nodes) in [(1u64, 1usize), (2, 2), (3, 4)] {
        for rows in [1_000usize, 30_000, 1_000_000] {
            let selectivity = (20.0 / rows as f64).max(1e-4);
            for (name, sql, dataset) in corpus() {
                let opts = GenOptions::new(rows, seed).with_selectivity(selectivity);
                let table = generate(dataset, &opts);
                let (expected, ordered) = oracle(sql, dataset, &table);
                let (_dir, store, obj) = store_with(&table, 4);
                let cfg = ClusterConfig::default().with_array_nodes(nodes);
                let reports = bench_modes(&store, sql, &obj, &cfg).map_err(|e| format!("{name}: {e}"))?;
                ensure(reports.len() == 4, || format!("{name}: {} modes ran", reports.len()))?;
                for r in reports {
                    rows_match(&expected, &r.result.rows(), ordered, 1e-9)
                        .map_err(|e| format!("{name} rows={rows} seed={seed} mode={}: {e}", r.mode))?;
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} mode runs matched the reference interpreter"))
}

fn cad_optimality() -> Result<String, String> {
    let cases = [
        (Q1, Dataset::LaghosBox, 1e-4),
        (Q1, Dataset::LaghosBox, 1e-3),
        (Q1, Dataset::LaghosBox, 1e-2),
        (corpus()[1].1, Dataset::DeepwaterThreshold, 1e-3),
        (corpus()[2].1, Dataset::DeepwaterThreshold, 1e-3),
    ];
    let mut worst: f64 = 1.0;
    for (i, (sql, dataset, sel)) in cases.iter().enumerate() {
        let table = generate(
            *dataset,
            &GenOptions::new(200_000, 10 + i as u64).with_selectivity(*sel),
        );
        let (_dir, store, obj) = store_with(&table, 1);
        let cfg = ClusterConfig::default();
        let report = run_query(&store, sql, &obj, &cfg).map_err(|e| e.to_string())?;
        let split = report.split.ok_or("oasis report without a split")?;
        ensure(split.strategy == Strategy::Cad, || {
            format!("case {i}: strategy {}", split.strategy)
        })?;
        let plan = plan_for(sql, *dataset);
        let est = |k: usize| split.estimates.output_bytes(k).unwrap_or(f64::INFINITY);
        let best = candidate_splits(&plan).map(est).fold(f64::INFINITY, f64::min);
        ensure(est(split.split_after) <= best, || {
            format!(
                "case {i}: chose {} at {:.0} B but {best:.0} B is reachable",
                split.split_after,
                est(split.split_after)
            )
        })?;

        let runs = bench_splits(&store, sql, &obj, &cfg).map_err(|e| e.to_string())?;
        let chosen = runs.iter().find(|r| r.chosen).ok_or("no chosen split")?;
        let min = runs.iter().map(|r| r.bytes_array_to_fe).min().unwrap();
        ensure(chosen.bytes_array_to_fe as f64 <= 1.05 * min as f64, || {
            format!(
                "case {i}: chosen split moves {} B, minimum is {min} B",
                chosen.bytes_array_to_fe
            )
        })?;
        worst = worst.max(chosen.bytes_array_to_fe as f64 / min.max(1) as f64);
    }
    Ok(format!(
        "{} plans; exact argmin on estimates, worst measured ratio {worst:.3}",
        cases.len()
    ))
}

fn data_movement() -> Result<String, String> {
    let mut details = Vec::new();
    for (name, sql, dataset) in corpus() {
        let rows = if dataset == Dataset::LaghosBox {
            1_000_000
        } else {
            300_000
        };
        let table = generate(dataset, &GenOptions::new(rows, 21).with_selectivity(1e-4));
        let (_dir, store, obj) = store_with(&table, 2);
        let run =
            |mode| run_query(&store, sql, &obj, &ClusterConfig::default().with_mode(mode)).map_err(|e| e.to_string());
        let (baseline, cos, oasis) = (run(Mode::Baseline)?, run(Mode::Cos)?, run(Mode::Oasis)?);
        let f2c = oasis.bytes_fe_to_client as f64 / baseline.bytes_fe_to_client as f64;
        ensure(f2c <= 0.01, || format!("{name}: fe->client ratio {f2c:.5}"))?;
        if sql == Q1 {
            let a2f = oasis.bytes_array_to_fe as f64 / cos.bytes_array_to_fe as f64;
            ensure(a2f <= 0.01, || format!("{name}: array->fe ratio {a2f:.5}"))?;
            details.push(format!("{name} a2f {a2f:.2e}"));
        }
        details.push(format!("{name} f2c {f2c:.2e}"));
    }
    Ok(details.join(", "))
}

fn random_array_query(rng: &mut ChaCha8Rng) -> String {
    let k = |rng: &mut ChaCha8Rng| rng.random_range(1..=3);
    let mut preds = Vec::new();
    let array_preds = rng.random_range(1..=2);
    for _ in 0..array_preds {
        preds.push(match rng.random_range(0..4) {
            0 => format!("Muon_pt[{}] > {}", k(rng), rng.random_range(5..60)),
            1 => format!("Muon_eta[{}] < {:.2}", k(rng), rng.random_range(-2.0..2.0)),
            2 => "Muon_charge[1] != Muon_charge[2]".to_string(),
            _ => format!(
                "Muon_pt[{}] BETWEEN {} AND {}",
                k(rng),
                rng.random_range(5..30),
                rng.random_range(30..90)
            ),
        });
    }
    if rng.random_bool(0.5) {
        preds.push(format!("nMuon >= {}", rng.random_range(1..=3)));
    }
    if rng.random_bool(0.3) {
        preds.push(format!("MET_pt > {}", rng.random_range(0..40)));
    }
    let filter = preds.join(" AND ");
    if rng.random_bool(0.3) {
        let j = k(rng);
        return format!(
            "SELECT nMuon, count(*) AS n, max(Muon_pt[{j}]) AS top, sum(Muon_charge[1]) AS q, avg(Muon_eta[1]) AS eta \
             FROM parquet WHERE {filter} GROUP BY nMuon"
        );
    }
    let mut items = vec!["MET_pt".to_string()];
    for (i, template) in [
        "Muon_pt[{}] AS p",
        "abs(Muon_phi[{}]) AS aphi",
        "Muon_eta[{}] * 2 AS e2",
        "Muon_charge[{}] AS q",
    ]
    .iter()
    .enumerate()
    {
        if rng.random_bool(0.5) {
            items.push(format!("{}{i}", template.replace("{}", &k(rng).to_string())));
        }
    }
    let order = if rng.random_bool(0.5) {
        " ORDER BY MET_pt DESC"
    } else {
        ""
    };
    format!("SELECT {} FROM parquet WHERE {filter}{order}", items.join(", "))
}

fn sap_locality() -> Result<String, String> {
    let table = generate(Dataset::HepDimuon, &GenOptions::new(40_000, 31).with_selectivity(0.02));
    let (_dir, store, obj) = store_with(&table, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = vec![Q4.to_string()];
    queries.extend((0..20).map(|_| random_array_query(&mut rng)));
    let mut checked = 0;
    for sql in &queries {
        let (expected, ordered) = oracle(sql, Dataset::HepDimuon, &table);
        for nodes in [1, 2] {
            let r = run_query(&store, sql, &obj, &ClusterConfig::default().with_array_nodes(nodes))
                .map_err(|e| format!("{sql}: {e}"))?;
            let split = r.split.as_ref().ok_or("no split")?;
            ensure(split.strategy == Strategy::Sap, || {
                format!("{sql}: strategy {}", split.strategy)
            })?;
            let fe = r.fe_plan.as_ref().ok_or("no fe plan")?;
            ensure(!fe.contains_array_access(), || {
                format!("{sql}: fe plan reads array elements")
            })?;
            rows_match(&expected, &r.result.rows(), ordered, 1e-9).map_err(|e| format!("{sql} nodes={nodes}: {e}"))?;
            checked += 1;
        }
    }
    Ok(format!("{} plans x 2 node counts, {checked} runs", queries.len()))
}

fn partial_aggregation() -> Result<String, String> {
    let table = generate(Dataset::LaghosBox, &GenOptions::new(60_000, 41).with_selectivity(0.01));
    let (_dir, store, obj) = store_with(&table, 4);
    let queries = [
        "SELECT vertex_id, min(x) AS mn, max(y) AS mx, sum(e) AS s, count(*) AS c, avg(e) AS a, sum(vertex_id) AS sv \
         FROM parquet WHERE x < 2.0 GROUP BY vertex_id",
        "SELECT min(x) AS mn, max(e) AS mx, sum(e) AS s, count(e) AS c, avg(z) AS a FROM parquet WHERE z > 1",
        "SELECT min(x) AS mn, count(*) AS c, avg(e) AS a FROM parquet WHERE x > 5",
    ];
    for sql in queries {
        let (expected, _) = oracle(sql, Dataset::LaghosBox, &table);
        let mono =
            run_query(&store, sql, &obj, &ClusterConfig::default().with_mode(Mode::Cos)).map_err(|e| e.to_string())?;
        rows_match(&expected, &mono.result.rows(), false, 1e-12).map_err(|e| format!("monolithic {sql}: {e}"))?;
        for nodes in [2, 4] {
            let r = run_query(&store, sql, &obj, &ClusterConfig::default().with_array_nodes(nodes))
                .map_err(|e| e.to_string())?;
            ensure(r.array_nodes_used == nodes, || {
                format!("{} nodes used", r.array_nodes_used)
            })?;
            ensure(r.split.as_ref().is_some_and(|s| s.partial_agg), || {
                format!("{sql}: no partial aggregation")
            })?;
            rows_match(&mono.result.rows(), &r.result.rows(), false, 1e-12)
                .map_err(|e| format!("{sql} nodes={nodes}: {e}"))?;
        }
    }

    let median = "SELECT vertex_id, median(e) AS m, count(*) AS c FROM parquet WHERE x < 1.0 GROUP BY vertex_id";
    let plan = plan_for(median, Dataset::LaghosBox);
    let agg_index = plan
        .nodes
        .iter()
        .position(|n| matches!(n, PlanNode::Aggregate { .. }))
        .unwrap();
    let agg = &plan.nodes[agg_index];
    ensure(
        matches!(
            execute_partial_aggregate(agg, &table),
            Err(ExecError::NonDecomposableMeasure(_))
        ),
        || "partial median did not raise NonDecomposableMeasure".into(),
    )?;
    ensure(
        matches!(
            rewrite_partial_aggregate(agg),
            Err(SodaError::NonDecomposableMeasure(_))
        ),
        || "median rewrite did not raise NonDecomposableMeasure".into(),
    )?;
    ensure(
        matches!(
            decompose_at(&plan, agg_index, true),
            Err(DecomposeError::Soda(SodaError::NonDecomposableMeasure(_)))
        ),
        || "median decomposition did not raise NonDecomposableMeasure".into(),
    )?;
    let (expected, _) = oracle(median, Dataset::LaghosBox, &table);
    for nodes in [2, 4] {
        let r = run_query(&store, median, &obj, &ClusterConfig::default().with_array_nodes(nodes))
            .map_err(|e| e.to_string())?;
        let fe = r.fe_plan.as_ref().unwrap();
        ensure(fe.nodes.iter().any(|n| n.has_median()), || {
            "median aggregate left the frontend".into()
        })?;
        ensure(
            !r.array_plan
                .as_ref()
                .unwrap()
                .nodes
                .iter()
                .any(|n| matches!(n, PlanNode::Aggregate { .. })),
            || "array plan aggregates under a median".into(),
        )?;
        rows_match(&expected, &r.result.rows(), false, 1e-12).map_err(|e| format!("median nodes={nodes}: {e}"))?;
    }
    Ok(format!(
        "{} decomposable queries on 2 and 4 nodes; median kept on the frontend",
        queries.len()
    ))
}

fn selectivity_estimation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200_000;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
    let schema = Arc::new(Schema::new(vec![Field::new("u", DataType::Float64, false)]).unwrap());
    let rows: Vec<Row> = values.iter().map(|v| vec![Value::Float64(*v)]).collect();
    let table = Table::from_rows(schema, &rows, 65_536).unwrap();
    let h = build_histogram(&table, "u", 0.01, 64).map_err(|e| e.to_string())?;
    let tolerance = 2.0 / 64.0 + 0.01;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = rng.random_range(-50.0..1050.0);
        let b = rng.random_range(-50.0..1050.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (lo_b, hi_b) = match rng.random_range(0..4) {
            0 => (Bound::Included(lo), Bound::Included(hi)),
            1 => (Bound::Excluded(lo), Bound::Excluded(hi)),
            2 => (Bound::Unbounded, Bound::Excluded(hi)),
            _ => (Bound::Included(lo), Bound::Unbounded),
        };
        let inside = |v: f64| {
            (match lo_b {
                Bound::Included(l) => v >= l,
                Bound::Excluded(l) => v > l,
                Bound::Unbounded => true,
            }) && (match hi_b {
                Bound::Included(h) => v <= h,
                Bound::Excluded(h) => v < h,
                Bound::Unbounded => true,
            })
        };
        let exact = values.iter().filter(|v| inside(**v)).count() as f64 / n as f64;
        let err = (estimate_range_selectivity(&h, lo_b, hi_b) - exact).abs();
        worst = worst.max(err);
        if err <= tolerance {
            within += 1;
        }
    }
    ensure(within >= 95, || {
        format!("only {within}/100 estimates within {tolerance:.4}")
    })?;
    Ok(format!("{within}/100 within {tolerance:.4}, worst error {worst:.4}"))
}

const TYPES: [DataType; 7] = [
    DataType::Int32,
    DataType::Int64,
    DataType::Float64,
    DataType::Utf8,
    DataType::Boolean,
    DataType::ListFloat64,
    DataType::ListInt32,
];

fn random_value(rng: &mut ChaCha8Rng, t: DataType, text_safe: bool) -> Value {
    let f = |rng: &mut ChaCha8Rng| match rng.random_range(0..6) {
        0 => rng.random_range(-1e300..1e300),
        1 => 0.0,
        2 => -0.0,
        3 => f64::MIN_POSITIVE * rng.random_range(1.0..4.0),
        4 if !text_safe => [f64::INFINITY, f64::NEG_INFINITY, f64::NAN][rng.random_range(0..3)],
        _ => rng.random_range(-1e3..1e3),
    };
    match t {
        DataType::Int32 => Value::Int32(rng.random()),
        DataType::Int64 => Value::Int64(rng.random()),
        DataType::Float64 => Value::Float64(f(rng)),
        DataType::Utf8 => {
            let alphabet = ['a', 'Z', ',', '"', ' ', '\n', 'é', '語', ';', '['];
            let min = if text_safe { 1 } else { 0 };
            let len = rng.random_range(min..8);
            Value::Utf8(
                (0..len)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                    .collect(),
            )
        }
        DataType::Boolean => Value::Boolean(rng.random()),
        DataType::ListFloat64 => Value::ListFloat64((0..rng.random_range(0..4)).map(|_| f(rng)).collect()),
        DataType::ListInt32 => Value::ListInt32((0..rng.random_range(0..4)).map(|_| rng.random()).collect()),
    }
}

fn random_table(rng: &mut ChaCha8Rng, text_safe: bool) -> Table {
    let ncols = rng.random_range(1..=6);
    let fields: Vec<Field> = (0..ncols)
        .map(|i| {
            Field::new(
                format!("c{i}"),
                TYPES[rng.random_range(0..TYPES.len())],
                rng.random_bool(0.5),
            )
        })
        .collect();
    let schema = Arc::new(Schema::new(fields).unwrap());
    let nrows = rng.random_range(0..200);
    let rows: Vec<Row> = (0..nrows)
        .map(|_| {
            schema
                .fields()
                .iter()
                .map(|f| {
                    if f.nullable && rng.random_bool(0.2) {
                        Value::Null
                    } else {
                        random_value(rng, f.data_type, text_safe)
                    }
                })
                .collect()
        })
        .collect();
    Table::from_rows(schema, &rows, rng.random_range(1..64)).unwrap()
}

/// Row equality where NaN matches NaN and the sign of zero is significant.
fn same_bits(a: &[Row], b: &[Row]) -> bool {
    fn v(x: &Value, y: &Value) -> bool {
        match (x, y) {
            (Value::Float64(p), Value::Float64(q)) => p.to_bits() == q.to_bits(),
            (Value::ListFloat64(p), Value::ListFloat64(q)) => {
                p.len() == q.len() && p.iter().zip(q).all(|(s, t)| s.to_bits() == t.to_bits())
            }
            _ => x == y,
        }
    }
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(r, s)| r.len() == s.len() && r.iter().zip(s).all(|(x, y)| v(x, y)))
}

fn interchange_integrity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let t = random_table(&mut rng, false);
        let back = deserialize_columnar(&serialize_columnar(&t)).map_err(|e| format!("table {i}: {e}"))?;
        ensure(back.schema() == t.schema(), || format!("table {i}: schema changed"))?;
        let sizes = |t: &Table| t.batches().iter().map(|b| b.num_rows()).collect::<Vec<_>>();
        ensure(sizes(&back) == sizes(&t), || format!("table {i}: batch layout changed"))?;
        ensure(same_bits(&back.rows(), &t.rows()), || {
            format!("table {i}: rows changed")
        })?;
    }
    let mut formats_checked = 0;
    for i in 0..300 {
        let t = random_table(&mut rng, true);
        let rows = t.rows();
        let columnar = deserialize_columnar(&emit_output(&t, OutputFormat::Columnar)).map_err(|e| e.to_string())?;
        let csv = ingest_csv(
            &emit_output(&t, OutputFormat::Csv)[..],
            t.schema(),
            &CsvOptions::default(),
        )
        .map_err(|e| format!("csv table {i}: {e}"))?;
        let json = read_json_lines(&emit_output(&t, OutputFormat::Json), t.schema())
            .map_err(|e| format!("json table {i}: {e}"))?;
        for (name, decoded) in [("columnar", columnar), ("csv", csv), ("json", json)] {
            ensure(same_bits(&decoded.rows(), &rows), || {
                format!("{name} table {i}: decoded rows differ")
            })?;
        }
        formats_checked += 1;
    }
    Ok(format!(
        "1000 round trips, {formats_checked} tables agree across csv/json/columnar"
    ))
}

fn selectivity_crossover() -> Result<String, String> {
    let rows = 40_000;
    let sweep = [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut oasis_slower = Vec::new();
    for (i, sel) in sweep.iter().enumerate() {
        let table = generate(
            Dataset::LaghosBox,
            &GenOptions::new(rows, 50 + i as u64).with_selectivity(*sel),
        );
        let (_dir, store, obj) = store_with(&table, 1);
        let run = |mode| {
            run_query(&store, Q1_NO_AGG, &obj, &ClusterConfig::default().with_mode(mode)).map_err(|e| e.to_string())
        };
        let (base, oasis) = (run(Mode::Baseline)?, run(Mode::Oasis)?);
        oasis_slower.push(oasis.simulated_transfer_seconds > base.simulated_transfer_seconds);
    }
    let crossover = oasis_slower
        .iter()
        .position(|s| *s)
        .ok_or("oasis never exceeded baseline")?;
    ensure(crossover > 0, || "oasis slower even at the lowest selectivity".into())?;
    ensure(oasis_slower[crossover..].iter().all(|s| *s), || {
        format!("non-monotone crossover: {oasis_slower:?}")
    })?;

    let table_rows = 1_000_000;
    let mut worst: f64 = 0.0;
    for (i, sel) in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1].iter().enumerate() {
        let table = generate(
            Dataset::LaghosBox,
            &GenOptions::new(table_rows, 60 + i as u64).with_selectivity(*sel),
        );
        let (_dir, store, obj) = store_with(&table, 1);
        let r = run_query(&store, Q1, &obj, &ClusterConfig::default()).map_err(|e| e.to_string())?;
        let groups = distinct_groups(&table);
        let bound = aggregation_bound(&r, groups)?;
        ensure(r.bytes_array_to_fe as f64 <= bound, || {
            format!(
                "sel {sel}: {} B moved, bound {bound:.0} B for {groups} groups",
                r.bytes_array_to_fe
            )
        })?;
        worst = worst.max(r.bytes_array_to_fe as f64 / bound);
    }
    Ok(format!(
        "crossover between selectivity {} and {}; aggregated bytes at most {:.0}% of bound",
        sweep[crossover - 1],
        sweep[crossover],
        worst * 100.0
    ))
}

/// Distinct vertex ids among rows inside the Q1 box.
fn distinct_groups(table: &Table) -> usize {
    let inside = |v: &Value| matches!(v, Value::Float64(f) if *f > 1.5 && *f < 1.6);
    table
        .rows()
        .iter()
        .filter(|r| inside(&r[1]) && inside(&r[2]) && inside(&r[3]))
        .map(|r| format!("{:?}", r[0]))
        .collect::<HashSet<_>>()
        .len()
}

/// groups x fixed row width of the intermediate, plus the framing of an
/// empty stream and one batch header per batch.
fn aggregation_bound(r: &QueryReport, groups: usize) -> Result<f64, String> {
    let array_plan = r.array_plan.as_ref().ok_or("no array plan")?;
    let schema = array_plan.output_schema().map_err(|e| e.message.clone())?;
    let width: usize = schema
        .fields()
        .iter()
        .map(|f| {
            f.data_type
                .fixed_width()
                .ok_or_else(|| format!("{} is variable width", f.name))
        })
        .sum::<Result<usize, String>>()?;
    let ncols = schema.len();
    let row = width as f64 + ncols as f64 / 8.0;
    let empty = serialize_columnar(&Table::empty(Arc::new(schema))).len() as f64;
    let batch_rows = ClusterConfig::default().batch_rows;
    let batches = r.array_nodes_used * groups.div_ceil(batch_rows).max(1);
    Ok(groups as f64 * row + empty + batches as f64 * (13.0 + 9.0 * ncols as f64))
}

fn planning_overhead() -> Result<String, String> {
    let mut worst = Duration::ZERO;
    for (name, sql, dataset) in corpus() {
        let table = generate(dataset, &GenOptions::new(200_000, 90));
        let (_dir, store, obj) = store_with(&table, 4);
        for nodes in [1, 4] {
            let r = run_query(&store, sql, &obj, &ClusterConfig::default().with_array_nodes(nodes))
                .map_err(|e| e.to_string())?;
            ensure(r.timings.optimize < Duration::from_secs(1), || {
                format!("{name}: optimize took {:?}", r.timings.optimize)
            })?;
            worst = worst.max(r.timings.optimize);
        }
    }
    Ok(format!(
        "slowest optimize+decompose {:.3} ms",
        worst.as_secs_f64() * 1e3
    ))
}
