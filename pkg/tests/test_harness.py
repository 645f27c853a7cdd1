import csv
import io
import json
import math

import numpy as np
import pytest

from scattersim import cli
from scattersim.harness import (PROFILE_COLUMNS, AggregateStats, ExperimentSpec, SpecError,
                                desk_trials, emit_report, load_spec, run, spec_from_mapping,
                                trial_rng)

GOLDEN_HEADER = "n_ways,b_indices,k,m_pr,k_prime,p,A_v,Aa_per_Av,a_miss,time_ms"
SMALL = dict(kind="profile", cells=((4, 6, 1), (4, 6, 40)), trials=20, master_seed=7)


@pytest.fixture(scope="module")
def small_stats():
    return run(ExperimentSpec(**SMALL), write=False)


def test_csv_header_is_golden(small_stats):
    assert ",".join(PROFILE_COLUMNS) == GOLDEN_HEADER
    assert emit_report(small_stats).splitlines()[0] == GOLDEN_HEADER


def test_empty_stats_is_header_only():
    text = emit_report(AggregateStats("profile", PROFILE_COLUMNS, []))
    assert text == GOLDEN_HEADER + "\n"


def test_one_cell_is_two_lines():
    stats = run(ExperimentSpec(kind="profile", cells=((4, 6, 40),), trials=3), write=False)
    lines = emit_report(stats).splitlines()
    assert len(lines) == 2
    row = dict(zip(GOLDEN_HEADER.split(","), lines[1].split(",")))
    assert row["n_ways"] == "4" and row["k"] == "40"


def test_floats_use_four_significant_digits(small_stats):
    for row in csv.DictReader(io.StringIO(emit_report(small_stats))):
        for c in ("m_pr", "p", "A_v", "a_miss", "time_ms"):
            digits = row[c].split("e")[0].replace(".", "").replace("-", "").lstrip("0")
            assert len(digits) <= 4


def test_json_round_trip(small_stats):
    doc = json.loads(emit_report(small_stats, "json"))
    assert doc["columns"] == list(PROFILE_COLUMNS)
    assert doc["units"]["time_ms"] == "ms" and doc["units"]["p"] == "1"
    rows = list(csv.DictReader(io.StringIO(emit_report(small_stats))))
    for jrow, crow in zip(doc["rows"], rows):
        for c in PROFILE_COLUMNS:
            assert float(crow[c]) == pytest.approx(jrow[c], rel=1e-12)
    assert json.loads(json.dumps(doc)) == doc


def test_aggregates_carry_se_and_counts(small_stats):
    for cell in small_stats.cells:
        for fs in cell.stats.values():
            assert fs.count == cell.trials == 20
            assert fs.se == pytest.approx(fs.sd / math.sqrt(fs.count))


def test_trial_rng_is_pure():
    a = trial_rng(5, 2, 9).integers(0, 2**63, 4)
    b = trial_rng(5, 2, 9).integers(0, 2**63, 4)
    c = trial_rng(5, 9, 2).integers(0, 2**63, 4)
    assert a.tolist() == b.tolist() and a.tolist() != c.tolist()


def test_same_seed_gives_byte_identical_files(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        run(ExperimentSpec(**dict(SMALL, trials=1, out=str(out))))
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_parallelism_does_not_change_results():
    spec = ExperimentSpec(**SMALL)
    one = emit_report(run(spec, write=False), "json")
    two = emit_report(run(ExperimentSpec(**dict(SMALL, threads=2)), write=False), "json")
    assert one == two


def test_dumped_trials_reproduce_aggregates(tmp_path):
    dump = tmp_path / "trials.jsonl"
    out = tmp_path / "r.csv"
    stats = run(ExperimentSpec(**dict(SMALL, out=str(out), dump_trials=str(dump))))
    recs = [json.loads(line) for line in dump.read_text().splitlines()]
    assert len(recs) == 40
    for idx, cell in enumerate(stats.cells):
        mine = [r for r in recs if r["k"] == cell.params["k"]]
        for key, fs in cell.stats.items():
            v = np.array([r[key] for r in mine], dtype=float)
            assert v.mean() == pytest.approx(fs.mean, rel=1e-9, abs=1e-12)
            assert v.std(ddof=1) == pytest.approx(fs.sd, rel=1e-9, abs=1e-12)


def test_desk_and_reference_trial_counts():
    assert [desk_trials(k) for k in (1, 200, 2000, 8000)] == [10**4, 10**3, 10**3, 10**3]
    assert [desk_trials(k, True) for k in (1, 200, 2000)] == [10**7, 10**5, 10**4]


def test_spec_validation():
    with pytest.raises(SpecError):
        ExperimentSpec(trials=0)
    with pytest.raises(SpecError):
        ExperimentSpec(k=())
    with pytest.raises(SpecError):
        ExperimentSpec(kind="nope")
    with pytest.raises(SpecError, match="unknown field"):
        spec_from_mapping({"kind": "profile", "trails": 3})
    with pytest.raises(SpecError, match="cells"):
        spec_from_mapping({"cells": [[1, 2]]})


def test_toml_errors_name_the_line(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('kind = "profile"\ntrials = = 3\n')
    with pytest.raises(SpecError, match=r"bad\.toml.*line 2"):
        load_spec(bad)
    missing = tmp_path / "none.toml"
    with pytest.raises(SpecError, match="none.toml"):
        load_spec(missing)


def test_toml_spec_loads(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('kind = "covert"\ngeometries = [[4, 8]]\nf = [0.05, 0.1]\ns = 8\n'
                 'seed = 3\n[latency]\nt_flush = 1e-3\n')
    spec = load_spec(p)
    assert spec.kind == "covert" and spec.f == (0.05, 0.1) and spec.s == (8,)
    assert spec.latency.t_flush == 1e-3 and len(spec.grid()) == 2


def test_failed_cell_is_recorded_and_exit_nonzero(tmp_path, capsys):
    p = tmp_path / "c.toml"
    out = tmp_path / "c.json"
    p.write_text('kind = "covert"\ngeometries = [[2, 2]]\nf = 0.9\nbatch_size = 1\n'
                 f'trials = 1\nformat = "json"\nout = "{out}"\n')
    assert cli.main(["covert", "--spec", str(p)]) == 1
    doc = json.loads(out.read_text())
    assert doc["errors"] and "RoundBudgetExceeded" in doc["errors"][0]["error"]


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["profile", "--spec", str(tmp_path / "missing.toml")]) == 2
    p = tmp_path / "k.toml"
    p.write_text('kind = "covert"\n')
    assert cli.main(["profile", "--spec", str(p)]) == 2
    p.write_text('kind = "profile"\ncells = [[4, 6, 40]]\n')
    assert cli.main(["profile", "--spec", str(p), "--trials", "2", "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == GOLDEN_HEADER and len(text.splitlines()) == 2
    assert cli.main(["profile", "--spec", str(p), "--trials", "1",
                     "--out", "/proc/forbidden/x.csv"]) == 1


def test_predict_prints_original_victim_accesses(capsys):
    assert cli.main(["predict", "--trials", "3"]) == 0
    text = capsys.readouterr().out
    rows = {r["quantity"]: r for r in csv.DictReader(io.StringIO(text))}
    assert rows["av_original"]["value"] == "36044800"
    assert float(rows["av_expected"]["value"]) < 1024
