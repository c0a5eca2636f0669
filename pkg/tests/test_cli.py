import csv
import json
import signal
import subprocess
import sys

import numpy as np
import pytest
import requests

from mixdiff.backend import LinearSoftmaxModel
from mixdiff.cli import main
from mixdiff.server import ModelServer, ServerConfig

SMALL = ["--num-aux", "4", "--num-ratios", "3", "--oracle-size", "5", "--jobs", "2"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--seed", "3"]) == 0
    assert main(["fit", "--data", str(root / "data" / "train.csv"), "--out", str(root / "model.json")]) == 0
    return root


def detect(work, out, *extra, backend=None):
    return main(["detect", "--data", str(work / "data" / "test.csv"), "--oracles", str(work / "data" / "oracles.csv"),
                 "--backend", backend or f"local:{work / 'model.json'}", "--out", str(out), *SMALL, *extra])


def read_results(path):
    return [json.loads(line) for line in (path / "results.jsonl").read_text().splitlines()]


def test_detect_schema_and_determinism(work):
    a, b = work / "run_a", work / "run_b"
    assert detect(work, a) == 0 and detect(work, b) == 0
    metrics = json.loads((a / "metrics.json").read_text())
    assert set(metrics) == {"base", "mixdiff", "final"}
    assert all(set(v) == {"auroc", "fpr95", "aucpr"} for v in metrics.values())
    for name in ("results.jsonl", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "detect" and manifest["config"]["num_aux"] == 4
    assert {"seed", "inputs", "outputs", "timings", "version"} <= set(manifest)


def test_label_mode_has_no_base_metrics(work):
    out = work / "labels"
    assert detect(work, out, "--access-level", "labels") == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["base"] is None and metrics["final"] is not None


def test_remote_matches_local(work):
    local = work / "local"
    assert detect(work, local) == 0
    model = LinearSoftmaxModel.load(work / "model.json")
    with ModelServer(ServerConfig(str(work / "model.json"), "logits", port=0), model) as srv:
        assert detect(work, work / "remote", backend=f"remote:{srv.url}") == 0
    got = [r["final_score"] for r in read_results(work / "remote")]
    want = [r["final_score"] for r in read_results(local)]
    assert np.max(np.abs(np.array(got) - np.array(want))) <= 1e-8


def test_usage_and_domain_errors(work, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["detect", "--data", "x.csv"])
    assert exc.value.code == 2
    capsys.readouterr()
    assert detect(work, work / "bad", "--gamma", "nan") == 1
    assert capsys.readouterr().err.startswith("ERROR core:")
    assert main(["attack", "--data", "d.csv", "--model", "remote:http://127.0.0.1:1", "--oracles", "o.csv",
                 "--eps", "0.1", "--out", str(work / "a.csv")]) == 1
    assert "gradients unavailable" in capsys.readouterr().err


def test_verify_theory_outputs(tmp_path, capsys):
    code = main(["verify-theory", "--out", str(tmp_path), "--resolution", "41"])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert code == (0 if summary["passed"] else 1)
    for name in ("msp", "entropy", "mls"):
        rows = list(csv.reader((tmp_path / f"taylor_decay_{name}.csv").open()))
        assert rows[0] == ["lambda", "max_abs_residual"] and len(rows) > 2
        if name == "mls":
            assert all(float(r[1]) == 0.0 for r in rows[1:])
    assert (tmp_path / "lattice_msp.csv").read_text().startswith("x0,x1,value,qualifies\n")
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == len(summary["checks"])
    assert all(line.split()[0] in ("PASS", "FAIL") for line in printed)


def test_verify_theory_one_gaussian(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"seed": 0, "components": [
        {"mean": [0, 0], "var": [1, 1], "count": 10, "label": 0}]}))
    assert main(["verify-theory", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 1
    assert "ERROR theory: need ≥2 ID classes" in capsys.readouterr().err


def test_attack_csv(work):
    out = work / "attack" / "auroc.csv"
    common = ["--data", str(work / "data" / "test.csv"), "--model", str(work / "model.json"),
              "--oracles", str(work / "data" / "oracles.csv"), "--eps", "0.25", *SMALL]
    assert main(["attack", *common, "--steps", "0,5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert out.read_text().splitlines()[0] == "mode,steps,score_variant,auroc"
    assert {(r["mode"], r["steps"], r["score_variant"]) for r in rows} == {
        ("both", s, v) for s in ("0", "5") for v in ("base", "mixdiff", "final")}
    clean = json.loads((work / "run_a" / "metrics.json").read_text()) if (work / "run_a").exists() else None
    if clean is None:
        detect(work, work / "run_a")
        clean = json.loads((work / "run_a" / "metrics.json").read_text())
    zero = {r["score_variant"]: float(r["auroc"]) for r in rows if r["steps"] == "0"}
    assert zero == {k: clean[k]["auroc"] for k in zero}


def _serve(model_path, port):
    proc = subprocess.Popen([sys.executable, "-m", "mixdiff.cli", "serve", "--model", str(model_path),
                             "--level", "probs", "--port", str(port)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    return proc


def test_serve_process_lifecycle(work):
    proc = _serve(work / "model.json", 0)
    try:
        line = proc.stdout.readline()
        assert line.startswith("serving probs at http://")
        url = line.split()[-1]
        info = requests.get(url + "/v1/info", timeout=5).json()
        assert info["access_level"] == "probs" and info["dim"] == 2
        port = url.rsplit(":", 1)[1]
        clash = _serve(work / "model.json", port)
        _, err = clash.communicate(timeout=30)
        assert clash.returncode != 0 and "ERROR modelserver" in err
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=30) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
        proc.stdout.close()
        proc.stderr.close()
