import json

import numpy as np
import pytest

from caproute import storage
from caproute.cli import main

SMALL = ["--classes", "3", "--n-lower", "16", "--dim", "6", "--per-class-train", "8", "--per-class-test", "4"]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", *SMALL, "--seed", "5", "--out-train", str(d / "train.bin"), "--out-test", str(d / "test.bin")]) == 0
    assert main(["build-master", "--dataset", str(d / "train.bin"), "--out", str(d / "m.bin")]) == 0
    return d


def test_gen_is_reproducible(files, tmp_path):
    assert main(["gen", *SMALL, "--seed", "5", "--out-train", str(tmp_path / "a.bin"), "--out-test", str(tmp_path / "b.bin")]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (files / "train.bin").read_bytes()
    assert (tmp_path / "b.bin").read_bytes() == (files / "test.bin").read_bytes()


def test_gen_spec_file(files, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"classes": 3, "n_lower": 16, "dim": 6, "per_class_train": 8, "per_class_test": 9}))
    out = ["--out-train", str(tmp_path / "a.bin"), "--out-test", str(tmp_path / "b.bin")]
    assert main(["gen", "--spec", str(spec), "--per-class-test", "4", "--seed", "5", *out]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (files / "train.bin").read_bytes()
    assert len(storage.read_dataset(tmp_path / "b.bin")) == 12


def test_gen_invalid(tmp_path):
    out = ["--out-train", str(tmp_path / "a.bin"), "--out-test", str(tmp_path / "b.bin")]
    assert main(["gen", "--overlap", "1.5", "--seed", "1", *out]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["gen", "--spec", str(tmp_path / "bad.json"), "--seed", "1", *out]) == 2
    (tmp_path / "unk.json").write_text('{"colour": 3}')
    assert main(["gen", "--spec", str(tmp_path / "unk.json"), "--seed", "1", *out]) == 2
    assert main(["gen", "--spec", str(tmp_path / "nope.json"), "--seed", "1", *out]) == 4


def test_gen_needs_seed(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["gen", "--out-train", str(tmp_path / "a"), "--out-test", str(tmp_path / "b")])
    assert info.value.code == 2


def test_route_dynamic_report_and_trace(files, tmp_path):
    args = ["route", "--dataset", str(files / "test.bin"), "--mode", "dynamic"]
    assert main([*args, "--out-trace", str(tmp_path / "t.bin"), "--report", str(tmp_path / "r.csv")]) == 0
    tr = storage.read_trace(tmp_path / "t.bin")
    assert tr.coefficients.shape == (12, 3, 16, 3)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "example,label,predicted,norm0,norm1,norm2" and len(lines) == 13
    assert all(row.split(",")[1] == row.split(",")[2] for row in lines[1:])


def test_route_fast(files, tmp_path):
    args = ["route", "--dataset", str(files / "test.bin"), "--mode", "fast", "--master", str(files / "m.bin")]
    assert main([*args, "--out-trace", str(tmp_path / "t.bin")]) == 0
    assert storage.read_trace(tmp_path / "t.bin").coefficients.shape == (12, 0, 16, 3)


def test_route_fast_needs_master(files):
    assert main(["route", "--dataset", str(files / "test.bin"), "--mode", "fast"]) == 2


def test_route_dimension_mismatch(files, tmp_path):
    out = ["--out-train", str(tmp_path / "a.bin"), "--out-test", str(tmp_path / "b.bin")]
    assert main(["gen", "--classes", "3", "--n-lower", "10", "--dim", "6", "--per-class-train", "2", "--per-class-test", "2", "--seed", "1", *out]) == 0
    assert main(["route", "--dataset", str(tmp_path / "b.bin"), "--mode", "fast", "--master", str(files / "m.bin")]) == 2


def test_build_master_filters(files, tmp_path):
    base = ["build-master", "--dataset", str(files / "train.bin")]
    assert main([*base, "--filter", "kmeans:0.25", "--out", str(tmp_path / "k.bin")]) == 2
    assert main([*base, "--filter", "kmeans:0.25", "--seed", "3", "--out", str(tmp_path / "k.bin")]) == 0
    assert storage.read_master(tmp_path / "k.bin").class_counts == (6, 6, 6)
    assert main([*base, "--filter", "sim:0.5", "--out", str(tmp_path / "s.bin")]) == 0
    assert storage.read_master(tmp_path / "s.bin").class_counts == (4, 4, 4)
    assert main([*base, "--filter", "bogus", "--out", str(tmp_path / "x.bin")]) == 2
    assert main([*base, "--p", "1", "--q", "0", "--out", str(tmp_path / "x.bin")]) == 2


def test_build_master_is_reproducible(files, tmp_path):
    assert main(["build-master", "--dataset", str(files / "train.bin"), "--out", str(tmp_path / "m.bin")]) == 0
    assert (tmp_path / "m.bin").read_bytes() == (files / "m.bin").read_bytes()


@pytest.mark.parametrize("kind", ["gt-corr", "class-corr", "master-corr", "tuning", "accuracy"])
def test_analyze(files, tmp_path, kind):
    out = tmp_path / f"{kind}.csv"
    args = ["analyze", kind, "--dataset", str(files / "train.bin"), "--master", str(files / "m.bin"), "--out", str(out)]
    if kind == "gt-corr":
        args += ["--first", "5"]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    expected_rows = {"gt-corr": 5, "class-corr": 3, "master-corr": 3, "tuning": 3, "accuracy": 4}[kind]
    assert len(lines) == expected_rows + 1


def test_analyze_values(files, tmp_path):
    assert main(["analyze", "class-corr", "--dataset", str(files / "train.bin"), "--out", str(tmp_path / "c.csv")]) == 0
    _, _, values = storage.read_csv_matrix(tmp_path / "c.csv")
    assert np.all(np.diag(values) > values.sum(axis=1) / 3 - 1e-12)


def test_analyze_master_corr_needs_master(files, tmp_path):
    assert main(["analyze", "master-corr", "--dataset", str(files / "train.bin"), "--out", str(tmp_path / "x.csv")]) == 2


def test_bench(files, tmp_path):
    args = ["bench", "--dataset", str(files / "test.bin"), "--master", str(files / "m.bin"), "--repeats", "3"]
    assert main([*args, "--out", str(tmp_path / "b.csv")]) == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("mode,wall_time_total") and len(lines) == 3
    assert main([*args[:-1], "2", "--out", str(tmp_path / "b.csv")]) == 2


def test_format_errors(files, tmp_path):
    buf = (files / "train.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(buf[:-7])
    assert main(["route", "--dataset", str(tmp_path / "cut.bin"), "--mode", "dynamic"]) == 3
    (tmp_path / "magic.bin").write_bytes(b"NOTCAPS!" + buf[8:])
    assert main(["route", "--dataset", str(tmp_path / "magic.bin"), "--mode", "dynamic"]) == 3
    assert main(["route", "--dataset", str(files / "m.bin"), "--mode", "dynamic"]) == 3


def test_io_errors(files, tmp_path):
    assert main(["route", "--dataset", str(tmp_path / "none.bin"), "--mode", "dynamic"]) == 4
    assert main(["build-master", "--dataset", str(files / "train.bin"), "--out", str(tmp_path / "no" / "m.bin")]) == 4
