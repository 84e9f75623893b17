use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value as Json;

fn tierq(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tierq"))
        .arg("--root")
        .arg(root)
        .args(args)
        .current_dir(root)
        .env_remove("TIERQ_ROOT")
        .env_remove("TIERQ_CONFIG")
        .output()
        .expect("tierq runs")
}

fn records(out: &Output) -> Vec<Json> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{e}: {l}")))
        .collect()
}

const BOX_SORT: &str = "SELECT vertex_id, e FROM parquet WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 \
AND z > 1.5 AND z < 1.6 ORDER BY e";

fn seeded_store() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let gen = tierq(
        dir.path(),
        &[
            "gen",
            "laghos-box",
            "--rows",
            "20000",
            "--selectivity",
            "0.001",
            "--out",
            "l.csv",
        ],
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert_eq!(records(&gen)[0]["selected_rows"], 20);
    let put = tierq(
        dir.path(),
        &["put", "sim", "laghos", "l.csv", "l.schema", "--shards", "2"],
    );
    assert!(put.status.success(), "{}", String::from_utf8_lossy(&put.stderr));
    let rec = &records(&put)[0];
    assert_eq!((rec["rows"].as_u64(), rec["shards"].as_u64()), (Some(20000), Some(2)));
    dir
}

#[test]
fn plan_reports_nodes_and_decision() {
    let dir = seeded_store();
    let out = tierq(dir.path(), &["plan", "-e", tierquery_core::gen::Q1, "sim/laghos"]);
    assert!(out.status.success());
    let recs = records(&out);
    let decision = recs.iter().find(|r| r["record"] == "decision").unwrap();
    assert_eq!(decision["strategy"], "CAD");
    assert_eq!(decision["split_after"], 3);
    assert_eq!(recs.iter().filter(|r| r["record"] == "plan_node").count(), 5);
}

#[test]
fn run_streams_result_and_modes_agree() {
    let dir = seeded_store();
    let out = tierq(dir.path(), &["run", "-e", BOX_SORT, "--out", "-", "sim/laghos"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("vertex_id,e"));
    assert_eq!(csv.lines().count(), 21);
    let report: Json = serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap()).unwrap();
    assert_eq!(report["bytes_fe_to_client"].as_u64(), Some(csv.len() as u64));

    let bench = tierq(
        dir.path(),
        &[
            "bench",
            "--modes",
            "all",
            "-e",
            BOX_SORT,
            "--array-nodes",
            "2",
            "sim/laghos",
        ],
    );
    assert!(bench.status.success());
    let runs = records(&bench);
    let modes: Vec<&str> = runs.iter().filter_map(|r| r["mode"].as_str()).collect();
    assert_eq!(modes, ["baseline", "pred", "cos", "oasis"]);
    assert!(runs.iter().all(|r| r["result_hash"] == runs[0]["result_hash"]));
}

#[test]
fn run_writes_result_file_in_each_format() {
    let dir = seeded_store();
    for format in ["csv", "json", "columnar"] {
        let file = format!("out.{format}");
        let out = tierq(
            dir.path(),
            &[
                "run",
                "-e",
                BOX_SORT,
                "--format",
                format,
                "--out",
                &file,
                "--mode",
                "cos",
                "sim/laghos",
            ],
        );
        assert!(out.status.success(), "{format}");
        let bytes = std::fs::read(dir.path().join(&file)).unwrap();
        assert_eq!(
            records(&out)[0]["bytes_fe_to_client"].as_u64(),
            Some(bytes.len() as u64),
            "{format}"
        );
    }
}

#[test]
fn bench_enumerates_splits() {
    let dir = seeded_store();
    let out = tierq(
        dir.path(),
        &[
            "bench",
            "--enumerate-splits",
            "-e",
            tierquery_core::gen::Q1,
            "sim/laghos",
        ],
    );
    assert!(out.status.success());
    let runs: Vec<Json> = records(&out)
        .into_iter()
        .filter(|r| r.get("split_after").is_some())
        .collect();
    assert_eq!(runs.len(), 5);
    let min = runs
        .iter()
        .map(|r| r["bytes_array_to_fe"].as_u64().unwrap())
        .min()
        .unwrap();
    let chosen: Vec<&Json> = runs.iter().filter(|r| r["chosen"] == true).collect();
    assert_eq!(chosen.len(), 1);
    assert_eq!(chosen[0]["bytes_array_to_fe"].as_u64(), Some(min));
}

#[test]
fn config_file_sets_defaults() {
    let dir = seeded_store();
    std::fs::write(dir.path().join("cluster.conf"), "array_nodes = 2\nmode = cos\n").unwrap();
    let out = tierq(
        dir.path(),
        &["--config", "cluster.conf", "run", "-e", BOX_SORT, "sim/laghos"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = &records(&out)[0];
    assert_eq!(
        (rec["mode"].as_str(), rec["array_nodes"].as_u64()),
        (Some("cos"), Some(2))
    );
}

#[test]
fn exit_codes() {
    let dir = seeded_store();
    let code = |args: &[&str]| tierq(dir.path(), args).status.code();
    assert_eq!(code(&["run", "-e", "SELECT FROM WHERE", "sim/laghos"]), Some(2));
    assert_eq!(
        code(&["run", "-e", BOX_SORT, "--mode", "teleport", "sim/laghos"]),
        Some(2)
    );
    assert_eq!(code(&["run", "-e", BOX_SORT, "sim/missing"]), Some(1));
    assert_eq!(code(&["put", "sim", "laghos", "l.csv", "l.schema"]), Some(1));
    std::fs::write(dir.path().join("bad.schema"), "x: Complex\n").unwrap();
    assert_eq!(code(&["put", "sim", "other", "l.csv", "bad.schema"]), Some(1));
}

#[test]
fn put_warns_on_unusual_sampling_rate() {
    let dir = seeded_store();
    let out = tierq(
        dir.path(),
        &["put", "sim", "again", "l.csv", "l.schema", "--stats-rate", "0.5"],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("warning"));
}
