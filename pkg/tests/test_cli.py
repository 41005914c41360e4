"""Command-line harness: subcommands, exit codes, reports, and sweeps."""

import csv
import json
import os
import struct
import subprocess
import sys

import numpy as np
import pytest

from proto_ocl.cli import (
    CSV_COLUMNS,
    SWEEP_PARAMS,
    build_parser,
    _configs,
    main,
    stable_report_view,
)

FAST = [
    "--epochs", "4", "--lr", "0.05", "--d-hyper", "32", "--hidden", "16",
    "--T", "3", "--K", "5",
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    rc = main([
        "gen-data", "--classes", "5", "--dim", "8", "--train-per-class", "30",
        "--test-per-class", "10", "--separation", "1.2", "--seed", "3",
        "--out", str(out),
    ])
    assert rc == 0
    return out


def _run_args(data_dir, report, seed="0", extra=()):
    return [
        "run", "--train", str(data_dir / "train.fvec"), "--test", str(data_dir / "test.fvec"),
        "--partition", "60+20x2", "--seed", seed, "--report", str(report), *FAST, *extra,
    ]


# ------------------------------------------------------------------ gen-data


def test_gen_data_outputs(data_dir):
    from proto_ocl.dataio import read_fvec, read_meta

    train = read_fvec(data_dir / "train.fvec")
    test = read_fvec(data_dir / "test.fvec")
    assert len(train) == 150 and len(test) == 50
    assert train.dim == test.dim == 8
    meta = read_meta(data_dir / "train.fvec")
    assert meta["split"] == "train" and meta["classes"] == 5 and meta["seed"] == 3


def test_gen_data_is_deterministic(tmp_path):
    argv = [
        "gen-data", "--classes", "3", "--dim", "4", "--train-per-class", "5",
        "--test-per-class", "2", "--seed", "11",
    ]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    for name in ("train.fvec", "test.fvec"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_data_rejects_bad_counts(tmp_path, capsys):
    rc = main([
        "gen-data", "--classes", "0", "--dim", "4", "--train-per-class", "5",
        "--test-per-class", "2", "--out", str(tmp_path),
    ])
    assert rc == 1
    assert "usage error" in capsys.readouterr().err


# ------------------------------------------------------------ defaults echo


def test_flag_defaults_match_documented_values(data_dir, tmp_path):
    args = build_parser().parse_args([
        "run", "--train", str(data_dir / "train.fvec"), "--test", str(data_dir / "test.fvec"),
        "--partition", "60+20x2", "--report", str(tmp_path / "r.json"),
    ])
    cal, bcfg, ocfg = _configs(args)
    assert cal.lam == 0.5 and cal.var_floor == 1e-6
    assert bcfg.epochs == 50 and bcfg.lr == 0.01 and bcfg.batch_size == 64
    assert bcfg.d_hyper == 2048 and bcfg.hidden == (512,)
    assert ocfg.T == 20 and ocfg.k_per_class == 20
    assert ocfg.lr_inner == 0.05 and ocfg.lr_outer == 0.01
    assert ocfg.stream_batch == 10 and ocfg.temperature_cls == 0.1
    assert ocfg.k_base is None and ocfg.k_novel is None


# ------------------------------------------------------------------ run


def test_run_report_structure(data_dir, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(_run_args(data_dir, report_path)) == 0
    out = capsys.readouterr().out
    assert "acc_all" in out and "hm" in out

    report = json.loads(report_path.read_text())
    assert set(report) == {
        "tool", "version", "created_at", "config", "partition",
        "base", "sessions", "final_metrics", "overhead",
    }
    assert report["config"]["calibration"]["lam"] == 0.5
    assert report["config"]["base_train"]["epochs"] == 4
    assert report["config"]["online"]["T"] == 3
    assert len(report["partition"]["base_classes"]) == 3
    assert len(report["partition"]["sessions"]) == 2
    assert len(report["sessions"]) == 2
    for i, sess in enumerate(report["sessions"]):
        assert sess["session_index"] == i + 1
        assert len(sess["loss_trace"]) == 3
        assert sess["n_samples"] == 30
        assert sess["state_bytes"] > 0
        assert 0.0 <= sess["metrics"]["acc_all"] <= 100.0
    fm = report["final_metrics"]
    assert 0.0 <= fm["hm"] <= 100.0
    ov = report["overhead"]
    assert ov["state_bytes"] == ov["stats_bytes"] + ov["proto_bytes"] + ov["param_bytes"]
    assert ov["n_classes"] == 5


def test_run_is_seed_reproducible(data_dir, tmp_path):
    p1, p2, p3 = (tmp_path / f"r{i}.json" for i in range(3))
    assert main(_run_args(data_dir, p1, seed="7")) == 0
    assert main(_run_args(data_dir, p2, seed="7")) == 0
    assert main(_run_args(data_dir, p3, seed="8")) == 0
    views = [
        stable_report_view(json.loads(p.read_text())) for p in (p1, p2, p3)
    ]
    assert json.dumps(views[0], sort_keys=True) == json.dumps(views[1], sort_keys=True)
    assert json.dumps(views[0], sort_keys=True) != json.dumps(views[2], sort_keys=True)


def test_stable_view_strips_only_volatile_fields(data_dir, tmp_path):
    report_path = tmp_path / "r.json"
    assert main(_run_args(data_dir, report_path)) == 0
    report = json.loads(report_path.read_text())
    view = stable_report_view(report)
    assert "created_at" not in view
    assert "wall_ms" not in view["base"]
    assert all("wall_ms" not in s for s in view["sessions"])
    assert "eval_wall_ms" not in view["overhead"]
    assert view["final_metrics"] == report["final_metrics"]
    assert view["overhead"]["state_bytes"] == report["overhead"]["state_bytes"]


def test_run_writes_checkpoint_when_asked(data_dir, tmp_path):
    ckpt = tmp_path / "run.ckpt"
    assert main(_run_args(data_dir, tmp_path / "r.json", extra=["--ckpt-out", str(ckpt)])) == 0
    from proto_ocl.checkpoint import load_checkpoint

    bundle = load_checkpoint(ckpt)
    assert bundle.session_index == 2
    assert len(bundle.seen_order) == 5


# ------------------------------------------------- base-train / online-run / eval


def test_staged_pipeline_and_eval(data_dir, tmp_path, capsys):
    ckpt = tmp_path / "base.ckpt"
    shared = [
        "--train", str(data_dir / "train.fvec"), "--partition", "60+20x2", "--seed", "0",
    ]
    rc = main([
        "base-train", *shared, "--ckpt", str(ckpt),
        "--epochs", "4", "--lr", "0.05", "--d-hyper", "32", "--hidden", "16",
        "--report", str(tmp_path / "base.json"),
    ])
    assert rc == 0
    base_report = json.loads((tmp_path / "base.json").read_text())
    assert "base" in base_report and len(base_report["base"]["epoch_losses"]) == 4

    report_path = tmp_path / "online.json"
    ckpt_out = tmp_path / "final.ckpt"
    rc = main([
        "online-run", *shared, "--test", str(data_dir / "test.fvec"),
        "--ckpt", str(ckpt), "--ckpt-out", str(ckpt_out),
        "--T", "3", "--K", "5", "--report", str(report_path),
    ])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert len(report["sessions"]) == 2
    assert report["config"]["ckpt"] == str(ckpt)

    capsys.readouterr()
    rc = main(["eval", "--ckpt", str(ckpt_out), "--test", str(data_dir / "test.fvec")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert 0.0 <= out["metrics"]["acc_all"] <= 100.0
    assert out["metrics"]["n_base_classes"] == 3
    assert out["metrics"]["n_novel_classes"] == 2


def test_online_run_rejects_mismatched_partition(data_dir, tmp_path, capsys):
    ckpt = tmp_path / "base.ckpt"
    rc = main([
        "base-train", "--train", str(data_dir / "train.fvec"), "--partition", "60+20x2",
        "--seed", "0", "--ckpt", str(ckpt),
        "--epochs", "2", "--lr", "0.05", "--d-hyper", "16", "--hidden", "8",
    ])
    assert rc == 0
    rc = main([
        "online-run", "--train", str(data_dir / "train.fvec"),
        "--test", str(data_dir / "test.fvec"), "--partition", "60+20x2", "--seed", "12345",
        "--ckpt", str(ckpt), "--T", "2", "--K", "4", "--report", str(tmp_path / "x.json"),
    ])
    assert rc == 2
    assert "base classes" in capsys.readouterr().err


# ----------------------------------------------------------------- exit codes


def test_usage_errors_exit_1(data_dir, tmp_path, capsys):
    assert main(["run", "--train", "x"]) == 1  # missing required flags
    assert main(_run_args(data_dir, tmp_path / "r.json", extra=["--epochs", "0"])) == 1
    assert main(_run_args(data_dir, tmp_path / "r.json", extra=["--lambda", "0"])) == 1
    assert main(["not-a-command"]) == 1
    capsys.readouterr()


def test_data_errors_exit_2(data_dir, tmp_path, capsys):
    missing = _run_args(data_dir, tmp_path / "r.json")
    missing[2] = str(tmp_path / "nope.fvec")
    assert main(missing) == 2

    bad = tmp_path / "bad.fvec"
    bad.write_bytes(b"FVEC" + struct.pack("<IIQ", 1, 8, 5))  # header promises 5 records
    broken = _run_args(data_dir, tmp_path / "r.json")
    broken[2] = str(bad)
    assert main(broken) == 2

    frac = _run_args(data_dir, tmp_path / "r.json")
    frac[frac.index("60+20x2")] = "55+20x2"  # 2.75 base classes
    assert main(frac) == 2

    over = _run_args(data_dir, tmp_path / "r.json")
    over[over.index("60+20x2")] = "80+20x2"  # 120 percent
    assert main(over) == 2
    capsys.readouterr()


def test_non_contiguous_labels_exit_2(data_dir, tmp_path, capsys):
    from proto_ocl.dataio import FeatureSet, write_fvec

    gappy = tmp_path / "gappy.fvec"
    write_fvec(gappy, FeatureSet(np.array([0, 2, 3]), np.ones((3, 4))))
    argv = _run_args(data_dir, tmp_path / "r.json")
    argv[2] = str(gappy)
    assert main(argv) == 2
    assert "contiguous" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failures_exit_3(data_dir, tmp_path, capsys):
    rc = main(_run_args(data_dir, tmp_path / "r.json", extra=["--lr", "1e100"]))
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


# --------------------------------------------------------------------- sweep


def _sweep_args(data_dir, out, param, values, extra=()):
    return [
        "sweep", "--train", str(data_dir / "train.fvec"), "--test", str(data_dir / "test.fvec"),
        "--partition", "60+20x2", "--seed", "0", *FAST,
        "--param", param, "--values", values, "--out", str(out), *extra,
    ]


def test_sweep_rows_and_columns(data_dir, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(_sweep_args(data_dir, out, "T", "1,3")) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["1", "3"]
    assert list(rows[0]) == list(CSV_COLUMNS)
    for r in rows:
        assert 0.0 <= float(r["hm"]) <= 100.0
        assert float(r["time_ms"]) > 0.0
        assert int(r["state_bytes"]) > 0


def test_sweep_single_point_matches_run(data_dir, tmp_path):
    out = tmp_path / "one.csv"
    assert main(_sweep_args(data_dir, out, "T", "3")) == 0
    with open(out, newline="") as fh:
        row = next(csv.DictReader(fh))
    report_path = tmp_path / "r.json"
    assert main(_run_args(data_dir, report_path)) == 0  # FAST already sets T=3
    fm = json.loads(report_path.read_text())["final_metrics"]
    for key in ("acc_all", "acc_base", "acc_novel", "hm"):
        assert float(row[key]) == pytest.approx(fm[key], abs=1e-9)


def test_sweep_lambda_values_are_floats(data_dir, tmp_path):
    out = tmp_path / "lam.csv"
    assert main(_sweep_args(data_dir, out, "lambda", "0.5,1.0")) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["0.5", "1.0"]


def test_sweep_parallel_matches_serial(data_dir, tmp_path, monkeypatch):
    serial, parallel = tmp_path / "s.csv", tmp_path / "p.csv"
    assert main(_sweep_args(data_dir, serial, "K", "3,6")) == 0
    assert main(_sweep_args(data_dir, parallel, "K", "3,6", extra=["--parallel", "2"])) == 0

    def stable(path):
        with open(path, newline="") as fh:
            return [
                {k: v for k, v in row.items() if k != "time_ms"}
                for row in csv.DictReader(fh)
            ]

    assert stable(serial) == stable(parallel)

    capped = tmp_path / "c.csv"
    monkeypatch.setenv("PROTO_OCL_THREADS", "1")
    assert main(_sweep_args(data_dir, capped, "K", "3,6", extra=["--parallel", "8"])) == 0
    assert stable(capped) == stable(serial)


def test_sweep_usage_errors(data_dir, tmp_path, capsys):
    assert main(_sweep_args(data_dir, tmp_path / "x.csv", "bogus", "1")) == 1
    assert main(_sweep_args(data_dir, tmp_path / "x.csv", "T", "")) == 1
    assert main(_sweep_args(data_dir, tmp_path / "x.csv", "T", "1,two")) == 1
    assert main(_sweep_args(data_dir, tmp_path / "x.csv", "T", "0")) == 1
    capsys.readouterr()


def test_sweep_param_roster():
    assert set(SWEEP_PARAMS) == {"lambda", "T", "K", "k_base", "k_novel", "dh"}


# --------------------------------------------------------------------- bench


def test_bench_prints_overhead_summary(data_dir, tmp_path, capsys):
    argv = _run_args(data_dir, tmp_path / "unused.json")
    argv[0] = "bench"
    argv = [a for a in argv if a not in ("--report", str(tmp_path / "unused.json"))]
    assert main(argv) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"version", "overhead", "final_metrics"}
    assert out["overhead"]["state_bytes"] > 0
    assert out["overhead"]["trainable_values"] > 0


# ------------------------------------------------------------- entry points


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "proto_ocl.cli", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "proto-ocl" in proc.stdout
