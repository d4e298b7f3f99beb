import json
import logging
from pathlib import Path

import numpy as np
import pytest

from unifier import cli
from unifier.data import load_dataset, read_mask_csv


def files(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(Path(directory).rglob("*")) if p.is_file()}


@pytest.fixture
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    assert cli.main(["gen-synthetic", "--out", str(out), "--n", "30", "--dims", "6,5", "--informative", "2"]) == 0
    return out


def write_config(tmp_path, dataset_dir, name="run.json", **extra):
    doc = {
        "manifest": str(dataset_dir / "manifest.json"),
        "output_dir": "out",
        "seed": 7,
        "mask": {"ratio": 0.2},
        "solver": {"max_iter": 40, "k": 4},
        "evaluation": {"restarts": 3},
    }
    doc.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# gen-synthetic ----------------------------------------------------------


def test_gen_synthetic(dataset_dir):
    ds = load_dataset(dataset_dir / "manifest.json")
    assert ds.n_samples == 30 and list(ds.dims) == [6, 5]
    assert ds.labels is not None
    assert json.loads((dataset_dir / "generator.json").read_text())["seed"] == 0
    assert (dataset_dir / "view0.csv").read_text().startswith("# {")


def test_gen_synthetic_bad_informative(tmp_path):
    assert cli.main(["gen-synthetic", "--out", str(tmp_path), "--dims", "3,3", "--informative", "5"]) == 2


# mask -------------------------------------------------------------------


def test_mask_counts(dataset_dir, tmp_path):
    out = tmp_path / "masked"
    assert cli.main(["mask", "--manifest", str(dataset_dir / "manifest.json"), "--ratio", "0.2",
                     "--seed", "42", "--out", str(out)]) == 0
    missing = read_mask_csv(out / "mask.csv", 2, 30)
    assert [len(m) for m in missing] == [6, 6]
    prov = json.loads((out / "mask.json").read_text())
    assert prov["ratio"] == 0.2 and prov["seed"] == 42
    masked = load_dataset(out / "manifest.json")
    assert [int((~m).sum()) for m in masked.masks] == [6, 6]


def test_mask_ratio_zero_warns(dataset_dir, tmp_path, caplog):
    out = tmp_path / "masked"
    with caplog.at_level(logging.WARNING):
        assert cli.main(["mask", "--manifest", str(dataset_dir / "manifest.json"), "--ratio", "0",
                         "--out", str(out)]) == 0
    assert "ratio 0" in caplog.text
    body = [ln for ln in (out / "mask.csv").read_text().splitlines() if not ln.startswith("#")]
    assert body == []


def test_mask_rerun_byte_identical(dataset_dir, tmp_path):
    args = ["mask", "--manifest", str(dataset_dir / "manifest.json"), "--ratio", "0.3", "--seed", "1"]
    cli.main(args + ["--out", str(tmp_path / "a")])
    first = files(tmp_path / "a")
    cli.main(args + ["--out", str(tmp_path / "a")])
    assert files(tmp_path / "a") == first


@pytest.mark.parametrize("ratio", ["-0.1", "0.95"])
def test_mask_bad_ratio(dataset_dir, tmp_path, ratio, capsys):
    code = cli.main(["mask", "--manifest", str(dataset_dir / "manifest.json"), "--ratio", ratio,
                     "--out", str(tmp_path / "m")])
    assert code == 2
    assert "ratio" in capsys.readouterr().err


# select -----------------------------------------------------------------


def test_select_writes_outputs(dataset_dir, tmp_path):
    cfg = write_config(tmp_path, dataset_dir)
    assert cli.main(["select", "--config", str(cfg), "--write-imputed", "--dump-graph"]) == 0
    out = tmp_path / "out"
    doc = json.loads((out / "result.json").read_text())
    trace = doc["result"]["objective_trace"]
    assert all(b <= a + 1e-9 * max(abs(a), 1) for a, b in zip(trace, trace[1:]))
    assert doc["run_config"]["seed"] == 7
    assert doc["result"]["mask"]["ratio"] == 0.2
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "iteration,objective"
    assert len(lines) == 2 + len(trace)
    for v in range(2):
        imputed = np.loadtxt(out / f"imputed_view{v}.csv", delimiter=",")
        assert not np.isnan(imputed).any()
        S = np.loadtxt(out / f"graph_view{v}_S.csv", delimiter=",")
        np.testing.assert_allclose(S.sum(axis=1), 1.0)


@pytest.mark.parametrize("ablation", ["no_imputation", "no_sample_weights"])
def test_select_ablations(dataset_dir, tmp_path, ablation):
    cfg = write_config(tmp_path, dataset_dir)
    assert cli.main(["select", "--config", str(cfg), "--ablation", ablation, "--out", str(tmp_path / ablation)]) == 0
    doc = json.loads((tmp_path / ablation / "result.json").read_text())
    assert doc["result"]["config"]["ablation"] == ablation
    if ablation == "no_sample_weights":
        assert all(x == 1.0 for e in doc["result"]["sample_weights"] for x in e)


def test_select_not_converged_exit_3(dataset_dir, tmp_path):
    cfg = write_config(tmp_path, dataset_dir)
    assert cli.main(["select", "--config", str(cfg), "--max-iter", "2", "--tol", "1e-15"]) == 3
    assert (tmp_path / "out" / "result.json").is_file()


def test_select_unknown_key_exit_2(dataset_dir, tmp_path, capsys):
    cfg = write_config(tmp_path, dataset_dir, bogus=1)
    assert cli.main(["select", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [{"solver": {"lam": -1}}, {"solver": {"nope": 1}}, {"mask": {"ratio": 2}}, {"manifest": "missing.json"}],
)
def test_select_bad_config_exit_2(dataset_dir, tmp_path, extra):
    cfg = write_config(tmp_path, dataset_dir, **extra)
    assert cli.main(["select", "--config", str(cfg)]) == 2


def test_select_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["select", "--config", str(p)]) == 2


def test_select_numerical_failure_exit_4(dataset_dir, tmp_path, monkeypatch):
    from unifier.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("synthetic failure")

    monkeypatch.setattr(cli._solver, "run", boom)
    assert cli.main(["select", "--config", str(write_config(tmp_path, dataset_dir))]) == 4


# evaluate ---------------------------------------------------------------


@pytest.fixture
def result_path(dataset_dir, tmp_path):
    cfg = write_config(tmp_path, dataset_dir)
    cli.main(["select", "--config", str(cfg)])
    return tmp_path / "out" / "result.json"


def test_evaluate_default_fractions(result_path):
    assert cli.main(["evaluate", "--result", str(result_path)]) == 0
    doc = json.loads((result_path.parent / "metrics.json").read_text())
    recs = doc["records"]
    assert [r["selected_fraction"] for r in recs] == [0.1, 0.2, 0.3, 0.4, 0.5]
    for r in recs:
        assert set(r) == {"acc", "nmi", "c", "restarts", "seed", "selected_fraction"}
        assert 0 <= r["acc"] <= 1 and 0 <= r["nmi"] <= 1
    assert doc["run_config"]["seed"] == 7


def test_evaluate_all_features(result_path, tmp_path):
    out = tmp_path / "all.json"
    assert cli.main(["evaluate", "--result", str(result_path), "--fractions", "1.0", "--out", str(out)]) == 0
    recs = json.loads(out.read_text())["records"]
    assert len(recs) == 1 and recs[0]["selected_fraction"] == 1.0


def test_evaluate_rerun_byte_identical(result_path):
    cli.main(["evaluate", "--result", str(result_path)])
    first = (result_path.parent / "metrics.json").read_bytes()
    cli.main(["evaluate", "--result", str(result_path)])
    assert (result_path.parent / "metrics.json").read_bytes() == first


def test_evaluate_missing_labels_exit_2(result_path, dataset_dir, tmp_path):
    doc = json.loads((dataset_dir / "manifest.json").read_text())
    doc["labels"] = None
    (dataset_dir / "nolabels.json").write_text(json.dumps(doc))
    code = cli.main(["evaluate", "--result", str(result_path), "--manifest", str(dataset_dir / "nolabels.json")])
    assert code == 2


def test_evaluate_missing_result_exit_2(tmp_path):
    assert cli.main(["evaluate", "--result", str(tmp_path / "nope.json")]) == 2


# sweep ------------------------------------------------------------------


def _records(path):
    return [json.loads(ln) for ln in Path(path).read_text().splitlines()]


def test_sweep_grid(dataset_dir, tmp_path):
    cfg = write_config(tmp_path, dataset_dir)
    assert cli.main(["sweep", "--config", str(cfg), "--alphas", "0.1,1,10", "--lambdas", "0.1,1,10"]) == 0
    recs = _records(tmp_path / "out" / "sweep" / "sweep.jsonl")
    assert len(recs) == 9
    assert len({r["cell"] for r in recs}) == 9
    assert all(r["status"] in ("ok", "not_converged") for r in recs)
    assert all(r["config"]["seed"] == 7 for r in recs)


def test_sweep_failed_cell_recorded(dataset_dir, tmp_path, monkeypatch):
    real = cli._solver.run

    def flaky(dataset, config, **kw):
        if config.lam == 10.0:
            raise FloatingPointError("diverged")
        return real(dataset, config, **kw)

    monkeypatch.setattr(cli._solver, "run", flaky)
    cfg = write_config(tmp_path, dataset_dir)
    assert cli.main(["sweep", "--config", str(cfg), "--lambdas", "1,10"]) == 0
    recs = {r["lambda"]: r for r in _records(tmp_path / "out" / "sweep" / "sweep.jsonl")}
    assert recs[10.0]["status"] == "failed" and "diverged" in recs[10.0]["error"]
    assert recs[1.0]["status"] in ("ok", "not_converged")


def test_sweep_resume(dataset_dir, tmp_path, monkeypatch):
    cfg = write_config(tmp_path, dataset_dir)
    args = ["sweep", "--config", str(cfg), "--alphas", "0.1,1,10", "--lambdas", "0.1,1,10"]
    real = cli._run_cell
    calls = []

    def interrupted(rc, *cell):
        if len(calls) == 4:
            raise KeyboardInterrupt
        calls.append(cell)
        return real(rc, *cell)

    monkeypatch.setattr(cli, "_run_cell", interrupted)
    with pytest.raises(KeyboardInterrupt):
        cli.main(args)
    done = list(calls)

    calls.clear()
    monkeypatch.setattr(cli, "_run_cell", lambda rc, *cell: calls.append(cell) or real(rc, *cell))
    assert cli.main(args) == 0
    assert len(done) == 4 and len(calls) == 5
    assert not set(done) & set(calls)
    recs = _records(tmp_path / "out" / "sweep" / "sweep.jsonl")
    assert len(recs) == 9 and len({r["cell"] for r in recs}) == 9


# provenance -------------------------------------------------------------


def test_outputs_embed_config_and_seed(result_path, tmp_path):
    cli.main(["evaluate", "--result", str(result_path)])
    out = result_path.parent
    for name in ("result.json", "metrics.json"):
        rc = json.loads((out / name).read_text())["run_config"]
        assert rc["seed"] == 7 and rc["solver"]["lam"] == 1.0 and rc["mask"] == {"ratio": 0.2, "seed": 7}
    header = json.loads((out / "trace.csv").read_text().splitlines()[0][2:])
    assert header["run_config"]["seed"] == 7


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["select", "--help"])
    text = capsys.readouterr().out
    assert "--lambda" in text and "default 1.0" in text
