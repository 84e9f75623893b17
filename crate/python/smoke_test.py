"""Smoke test for the tierquery extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import json
import math
import tempfile

import tierquery as tq


def main():
    table = tq.Table.generate("laghos-box", 20000, seed=7, selectivity=0.001)
    assert table.num_rows == 20000 == len(table)
    assert table.column_names == ["vertex_id", "x", "y", "z", "e"]

    back = tq.Table.from_columnar(table.to_columnar())
    assert back == table
    csv_text = table.encode("csv").decode()
    assert tq.Table.from_csv(csv_text, table.schema_text).rows()[:5] == table.rows()[:5]
    first = json.loads(table.encode("json").decode().splitlines()[0])
    assert first["vertex_id"] == table.rows()[0][0]

    queries = tq.corpus()
    q1, dataset = queries["Q1"]
    assert dataset == "laghos-box"
    plan = tq.Plan.parse(q1, table)
    assert plan.node_kinds[0] == "read" and plan.node_kinds[-1] == "sort"
    assert tq.Plan.from_text(plan.to_text()) == plan

    local = tq.execute(plan, table)
    decision = tq.optimize(plan, table)
    assert decision["strategy"] == "CAD", decision
    array_plan, fe_plan = tq.decompose(plan, decision["split_after"])
    assert not fe_plan.contains_array_access()
    assert len(array_plan) + len(fe_plan) == len(plan) + 1

    with tempfile.TemporaryDirectory() as root:
        store = tq.Store(root)
        store.create_bucket("sim", shards=4)
        assert store.put("sim", "laghos", table) == 20000
        assert store.get("sim/laghos") == table

        reports = store.bench_modes(q1, "sim/laghos", array_nodes=2)
        assert [r.mode for r in reports] == ["baseline", "pred", "cos", "oasis"]
        assert len({r.result_hash for r in reports}) == 1
        base, oasis = reports[0], reports[3]
        assert oasis.bytes_array_to_fe < base.bytes_array_to_fe
        assert oasis.result.num_rows == local.num_rows
        for got, want in zip(oasis.result.rows(), local.rows()):
            assert all(math.isclose(g, w, rel_tol=1e-9) for g, w in zip(got, want)), (got, want)
        record = oasis.to_dict()
        assert record["mode"] == "oasis" and record["result_rows"] == local.num_rows

        splits = store.bench_splits(q1, "sim/laghos")
        chosen = [s for s in splits if s["chosen"]]
        assert len(chosen) == 1
        assert chosen[0]["bytes_array_to_fe"] == min(s["bytes_array_to_fe"] for s in splits)

        try:
            store.run("SELECT FROM", "sim/laghos")
        except tq.TierQueryError as e:
            assert "syntax" in str(e).lower() or "expected" in str(e).lower(), e
        else:
            raise AssertionError("bad SQL was accepted")

    print(f"smoke test passed: {local.num_rows} groups, oasis moved {oasis.bytes_array_to_fe} B "
          f"vs baseline {base.bytes_array_to_fe} B")


if __name__ == "__main__":
    main()
