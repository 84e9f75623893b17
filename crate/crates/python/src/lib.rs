//! Python bindings: tables, plans, the optimizer and the simulated cluster.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};
use pyo3::IntoPyObjectExt;

use tierquery_core::cluster::{self, ClusterConfig, Mode, ObjectRef, ObjectStore, QueryReport};
use tierquery_core::columnar::{
    self as col, deserialize_columnar, emit_output, serialize_columnar, CsvOptions, OutputFormat, Schema, Value,
};
use tierquery_core::decomposer::decompose_at;
use tierquery_core::executor::{execute as run_plan, ExecContext};
use tierquery_core::gen::{self, Dataset, GenOptions};
use tierquery_core::planir::{self, plan_to_text, text_to_plan};
use tierquery_core::soda;
use tierquery_core::sqlfe;
use tierquery_core::stats::TableStats;

create_exception!(tierquery, TierQueryError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    TierQueryError::new_err(e.to_string())
}

fn value_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    match v {
        Value::Null => Ok(py.None()),
        Value::Int32(x) => x.into_py_any(py),
        Value::Int64(x) => x.into_py_any(py),
        Value::Float64(x) => x.into_py_any(py),
        Value::Utf8(s) => s.into_py_any(py),
        Value::Boolean(b) => b.into_py_any(py),
        Value::ListFloat64(xs) => xs.into_py_any(py),
        Value::ListInt32(xs) => xs.into_py_any(py),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value as J;
    match v {
        J::Null => Ok(py.None()),
        J::Bool(b) => b.into_py_any(py),
        J::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_py_any(py),
            (_, Some(u)) => u.into_py_any(py),
            _ => n.as_f64().unwrap_or(f64::NAN).into_py_any(py),
        },
        J::String(s) => s.into_py_any(py),
        J::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        J::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn parse_format(name: &str) -> PyResult<OutputFormat> {
    name.parse().map_err(PyValueError::new_err)
}

/// An immutable columnar table.
#[pyclass(module = "tierquery", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Table {
    inner: Arc<col::Table>,
}

impl Table {
    fn wrap(t: col::Table) -> Table {
        Table { inner: Arc::new(t) }
    }
}

#[pymethods]
impl Table {
    /// Reads CSV text under a schema written as `name: Type[?]` lines.
    #[staticmethod]
    #[pyo3(signature = (csv_text, schema_text, batch_rows = 65536))]
    fn from_csv(csv_text: &str, schema_text: &str, batch_rows: usize) -> PyResult<Table> {
        let schema = Schema::from_text(schema_text).map_err(err)?;
        let opts = CsvOptions {
            batch_rows,
            ..CsvOptions::default()
        };
        col::ingest_csv(csv_text.as_bytes(), &schema, &opts)
            .map(Table::wrap)
            .map_err(err)
    }

    #[staticmethod]
    fn from_columnar(data: &[u8]) -> PyResult<Table> {
        deserialize_columnar(data).map(Table::wrap).map_err(err)
    }

    /// Generates one of the synthetic datasets.
    #[staticmethod]
    #[pyo3(signature = (dataset, rows, seed = 42, selectivity = gen::DEFAULT_SELECTIVITY))]
    fn generate(dataset: &str, rows: usize, seed: u64, selectivity: f64) -> PyResult<Table> {
        let dataset: Dataset = dataset.parse().map_err(PyValueError::new_err)?;
        if !(0.0..=1.0).contains(&selectivity) {
            return Err(PyValueError::new_err(format!(
                "selectivity {selectivity} outside [0, 1]"
            )));
        }
        Ok(Table::wrap(gen::generate(
            dataset,
            &GenOptions::new(rows, seed).with_selectivity(selectivity),
        )))
    }

    #[getter]
    fn num_rows(&self) -> usize {
        self.inner.num_rows()
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.schema().names().map(String::from).collect()
    }

    #[getter]
    fn schema_text(&self) -> String {
        self.inner.schema().to_text()
    }

    fn rows(&self, py: Python<'_>) -> PyResult<Vec<Vec<Py<PyAny>>>> {
        self.inner
            .rows()
            .iter()
            .map(|r| r.iter().map(|v| value_to_py(py, v)).collect())
            .collect()
    }

    /// Values of one column as a list.
    fn column(&self, py: Python<'_>, name: &str) -> PyResult<Vec<Py<PyAny>>> {
        let i = self
            .inner
            .schema()
            .index_of(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column `{name}`")))?;
        let c = self.inner.concat_column(i);
        (0..c.len()).map(|r| value_to_py(py, &c.value(r))).collect()
    }

    fn to_columnar<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &serialize_columnar(&self.inner))
    }

    /// Encodes the table as `csv`, `json` (one object per line) or `columnar`.
    #[pyo3(signature = (format = "csv"))]
    fn encode<'py>(&self, py: Python<'py>, format: &str) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &emit_output(&self.inner, parse_format(format)?)))
    }

    fn __len__(&self) -> usize {
        self.inner.num_rows()
    }

    /// Logical equality: same schema and rows, regardless of batch layout.
    fn __eq__(&self, other: &Table) -> bool {
        self.inner.schema() == other.inner.schema() && self.inner.rows() == other.inner.rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Table(rows={}, columns={:?})",
            self.inner.num_rows(),
            self.column_names()
        )
    }
}

/// A logical plan bound to an input schema.
#[pyclass(module = "tierquery", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Plan {
    inner: planir::Plan,
}

#[pymethods]
impl Plan {
    /// Parses SQL against the schema of `table` (or a schema text).
    #[staticmethod]
    #[pyo3(signature = (sql, table = None, schema_text = None))]
    fn parse(sql: &str, table: Option<&Table>, schema_text: Option<&str>) -> PyResult<Plan> {
        let schema = match (table, schema_text) {
            (Some(t), None) => t.inner.schema().as_ref().clone(),
            (None, Some(s)) => Schema::from_text(s).map_err(err)?,
            _ => return Err(PyValueError::new_err("pass exactly one of table or schema_text")),
        };
        sqlfe::parse(sql, &schema).map(|inner| Plan { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Plan> {
        text_to_plan(text).map(|inner| Plan { inner }).map_err(err)
    }

    fn to_text(&self) -> String {
        plan_to_text(&self.inner)
    }

    /// Node kinds in execution order.
    #[getter]
    fn node_kinds(&self) -> Vec<&'static str> {
        self.inner.nodes.iter().map(|n| n.kind()).collect()
    }

    fn contains_array_access(&self) -> bool {
        self.inner.contains_array_access()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Plan) -> bool {
        self.inner == other.inner
    }

    fn __str__(&self) -> String {
        self.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Plan({})", self.node_kinds().join(" -> "))
    }
}

/// Runs `plan` with `table` registered under the plan's read name.
#[pyfunction]
fn execute(plan: &Plan, table: &Table) -> PyResult<Table> {
    let name = plan.inner.read_table().unwrap_or("parquet").to_string();
    let mut ctx = ExecContext::new();
    ctx.register(name, table.inner.as_ref().clone());
    run_plan(&plan.inner, &ctx).map(Table::wrap).map_err(err)
}

/// Chooses a split for `plan` using statistics sampled from `table`.
#[pyfunction]
#[pyo3(signature = (plan, table, array_nodes = 1, sample_rate = 0.01))]
fn optimize(py: Python<'_>, plan: &Plan, table: &Table, array_nodes: usize, sample_rate: f64) -> PyResult<Py<PyAny>> {
    let stats = TableStats::build(&table.inner, sample_rate, 64).map_err(err)?;
    let d = soda::optimize(
        &plan.inner,
        table.inner.logical_bytes() as f64,
        &stats,
        array_nodes.max(1),
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("strategy", d.strategy.to_string())?;
    out.set_item("split_after", d.split_after)?;
    out.set_item("partial_agg", d.partial_agg)?;
    out.set_item("lazy", d.lazy)?;
    out.set_item("boundary", d.boundary_index)?;
    let estimates: Vec<Option<f64>> = (0..plan.inner.len()).map(|i| d.estimates.output_bytes(i)).collect();
    out.set_item("estimated_bytes", estimates)?;
    out.into_py_any(py)
}

/// Splits `plan` after node `split_after`; returns `(array_plan, fe_plan)`.
#[pyfunction]
#[pyo3(signature = (plan, split_after, partial_agg = false))]
fn decompose(plan: &Plan, split_after: usize, partial_agg: bool) -> PyResult<(Plan, Plan)> {
    let d = decompose_at(&plan.inner, split_after, partial_agg).map_err(err)?;
    Ok((Plan { inner: d.array_plan }, Plan { inner: d.fe_plan }))
}

/// Outcome of one query on the simulated cluster.
#[pyclass(module = "tierquery", frozen)]
pub struct Report {
    inner: QueryReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn result(&self) -> Table {
        Table::wrap(self.inner.result.clone())
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.name()
    }

    #[getter]
    fn bytes_array_to_fe(&self) -> u64 {
        self.inner.bytes_array_to_fe
    }

    #[getter]
    fn bytes_fe_to_client(&self) -> u64 {
        self.inner.bytes_fe_to_client
    }

    #[getter]
    fn simulated_transfer_seconds(&self) -> f64 {
        self.inner.simulated_transfer_seconds
    }

    #[getter]
    fn result_hash(&self) -> &str {
        &self.inner.result_hash
    }

    #[getter]
    fn fe_plan(&self) -> Option<Plan> {
        self.inner.fe_plan.clone().map(|inner| Plan { inner })
    }

    #[getter]
    fn array_plan(&self) -> Option<Plan> {
        self.inner.array_plan.clone().map(|inner| Plan { inner })
    }

    /// The full report record as a dict.
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &self.inner.to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(mode={}, rows={}, array_to_fe={}, fe_to_client={})",
            self.inner.mode.name(),
            self.inner.result.num_rows(),
            self.inner.bytes_array_to_fe,
            self.inner.bytes_fe_to_client
        )
    }
}

/// A simulated object store rooted at a directory.
#[pyclass(module = "tierquery", frozen)]
pub struct Store {
    inner: ObjectStore,
}

fn object_ref(s: &str) -> PyResult<ObjectRef> {
    ObjectRef::parse(s).ok_or_else(|| PyValueError::new_err(format!("`{s}` is not of the form bucket/key")))
}

fn config(
    mode: &str,
    array_nodes: usize,
    client_format: &str,
    transfer_budget: Option<u64>,
) -> PyResult<ClusterConfig> {
    let mut cfg = ClusterConfig::default()
        .with_mode(mode.parse::<Mode>().map_err(PyValueError::new_err)?)
        .with_array_nodes(array_nodes);
    cfg.client_format = parse_format(client_format)?;
    if let Some(b) = transfer_budget {
        cfg.transfer_budget = b;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pymethods]
impl Store {
    #[new]
    fn new(root: PathBuf) -> PyResult<Store> {
        ObjectStore::open(root).map(|inner| Store { inner }).map_err(err)
    }

    #[pyo3(signature = (name, shards = 1))]
    fn create_bucket(&self, name: &str, shards: usize) -> PyResult<()> {
        self.inner.create_bucket(name, shards).map(|_| ()).map_err(err)
    }

    fn buckets(&self) -> Vec<String> {
        self.inner.buckets().into_iter().map(|b| b.name).collect()
    }

    /// Stores `table` as `bucket/key`; returns the object's row count.
    #[pyo3(signature = (bucket, key, table, stats_rate = 0.01))]
    fn put(&self, bucket: &str, key: &str, table: &Table, stats_rate: f64) -> PyResult<u64> {
        self.inner
            .put_object(bucket, key, &table.inner, stats_rate)
            .map(|m| m.row_count)
            .map_err(err)
    }

    fn get(&self, object: &str) -> PyResult<Table> {
        self.inner
            .get_object(&object_ref(object)?)
            .map(Table::wrap)
            .map_err(err)
    }

    #[pyo3(signature = (sql, object, mode = "oasis", array_nodes = 1, client_format = "csv", transfer_budget = None))]
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        py: Python<'_>,
        sql: &str,
        object: &str,
        mode: &str,
        array_nodes: usize,
        client_format: &str,
        transfer_budget: Option<u64>,
    ) -> PyResult<Report> {
        let cfg = config(mode, array_nodes, client_format, transfer_budget)?;
        let obj = object_ref(object)?;
        let inner = py
            .detach(|| cluster::run_query(&self.inner, sql, &obj, &cfg))
            .map_err(err)?;
        Ok(Report { inner })
    }

    /// Runs the query under every mode.
    #[pyo3(signature = (sql, object, array_nodes = 1, client_format = "csv"))]
    fn bench_modes(
        &self,
        py: Python<'_>,
        sql: &str,
        object: &str,
        array_nodes: usize,
        client_format: &str,
    ) -> PyResult<Vec<Report>> {
        let cfg = config("oasis", array_nodes, client_format, None)?;
        let obj = object_ref(object)?;
        let reports = py
            .detach(|| cluster::bench_modes(&self.inner, sql, &obj, &cfg))
            .map_err(err)?;
        Ok(reports.into_iter().map(|inner| Report { inner }).collect())
    }

    /// Runs the query at every feasible split; one dict per split.
    #[pyo3(signature = (sql, object, array_nodes = 1))]
    fn bench_splits(&self, py: Python<'_>, sql: &str, object: &str, array_nodes: usize) -> PyResult<Vec<Py<PyAny>>> {
        let cfg = config("oasis", array_nodes, "csv", None)?;
        let obj = object_ref(object)?;
        let runs = py
            .detach(|| cluster::bench_splits(&self.inner, sql, &obj, &cfg))
            .map_err(err)?;
        runs.iter().map(|r| json_to_py(py, &r.to_json())).collect()
    }
}

/// SQL text of the four corpus queries, keyed by name.
#[pyfunction]
fn corpus(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let out = PyDict::new(py);
    for (name, sql, dataset) in gen::corpus() {
        out.set_item(name, (sql, dataset.name()))?;
    }
    out.into_py_any(py)
}

#[pymodule]
pub fn tierquery(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TierQueryError", m.py().get_type::<TierQueryError>())?;
    m.add_class::<Table>()?;
    m.add_class::<Plan>()?;
    m.add_class::<Report>()?;
    m.add_class::<Store>()?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(corpus, m)?)?;
    Ok(())
}
