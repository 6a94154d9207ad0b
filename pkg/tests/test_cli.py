import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from randsense import cli
from randsense.errors import ConvergenceError, ValidationError
from randsense.experiments import EXPERIMENTS, AcfCompareParams, Document, Table

SMALL = {
    "schema_version": 1,
    "kind": "acf_compare",
    "seed": 5,
    "params": {"n": 8, "l": 2, "trials": 400, "bases": ["ofdm"], "constellations": ["16-qam"], "pulses": ["brickwall"], "chunk": 100},
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


def run(tmp_path, data, *extra, out="out"):
    cfg = write_config(tmp_path, data)
    return cli.main(["run", str(cfg), "--out", str(tmp_path / out), *extra])


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(directory).iterdir()) if p.name != "manifest.json"}


class TestExitCodes:
    def test_success(self, tmp_path, capsys):
        assert run(tmp_path, SMALL) == 0
        line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert line["kind"] == "acf_compare"
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["config_sha256"] == hashlib.sha256((tmp_path / "cfg.json").read_bytes()).hexdigest()
        assert manifest["files"] == digests(tmp_path / "out")

    @pytest.mark.parametrize(
        "patch,path",
        [
            ({"colour": 1}, "colour"),
            ({"params": {**SMALL["params"], "nn": 3}}, "params.nn"),
            ({"params": {**SMALL["params"], "n": "8"}}, "params.n"),
            ({"params": {**SMALL["params"], "lags": [0, "x"]}}, "params.lags[1]"),
            ({"kind": "nope"}, "kind"),
            ({"schema_version": 2}, "schema_version"),
            ({"seed": -1}, "seed"),
        ],
    )
    def test_config_errors_name_the_field(self, tmp_path, capsys, patch, path):
        assert run(tmp_path, {**SMALL, **patch}) == 2
        assert path in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_missing_seed(self, tmp_path, capsys):
        data = {k: v for k, v in SMALL.items() if k != "seed"}
        assert run(tmp_path, data) == 2
        assert "seed" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path):
        assert run(tmp_path, "{not json") == 2

    def test_bad_threads(self, tmp_path):
        assert run(tmp_path, SMALL, "--threads", "0") == 2

    def test_convergence_failure(self, tmp_path, monkeypatch, capsys):
        def failing(p, seed, pool=None):
            raise ConvergenceError("budget exhausted", residual=0.5)

        monkeypatch.setitem(EXPERIMENTS, "acf_compare", (AcfCompareParams, failing))
        assert run(tmp_path, SMALL) == 3
        assert "0.5" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        cfg = write_config(tmp_path, SMALL)
        assert cli.main(["run", str(cfg), "--out", str(blocker / "sub")]) == 2
        assert str(blocker) in capsys.readouterr().err

    def test_failed_write_leaves_nothing(self, tmp_path, monkeypatch):
        def half(p, seed, pool=None):
            return [Table("ok", ["a"], [[1]]), object()]

        monkeypatch.setitem(EXPERIMENTS, "acf_compare", (AcfCompareParams, half))
        assert run(tmp_path, SMALL) == 2
        assert not (tmp_path / "out").exists() or not any((tmp_path / "out").iterdir())
        assert not any(p.name.startswith(".stage-") for p in tmp_path.iterdir())


class TestDeterminism:
    def test_rerun_and_threads(self, tmp_path):
        assert run(tmp_path, SMALL, out="a") == 0
        assert run(tmp_path, SMALL, out="b") == 0
        assert run(tmp_path, SMALL, "--threads", "2", out="c") == 0
        a = digests(tmp_path / "a")
        assert a == digests(tmp_path / "b") == digests(tmp_path / "c")

    def test_seed_override(self, tmp_path):
        assert run(tmp_path, SMALL, out="a") == 0
        assert run(tmp_path, SMALL, "--seed", "6", out="b") == 0
        assert digests(tmp_path / "a") != digests(tmp_path / "b")
        assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 6

    def test_json_format(self, tmp_path):
        assert run(tmp_path, SMALL, "--format", "json") == 0
        rows = json.loads((tmp_path / "out" / "acf_compare.json").read_text())
        assert rows and isinstance(rows[0], dict)


class TestEmit:
    def test_empty_results(self, tmp_path):
        with pytest.raises(ValidationError):
            cli.emit_outputs([], "csv", tmp_path)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValidationError):
            cli.emit_outputs([Table("t", ["a"], [[1]])], "xml", tmp_path)

    def test_complex_columns_and_precision(self, tmp_path):
        v = 0.1 + 2 / 3
        cli.emit_outputs([Table("t", ["k", "z", "x"], [[0, 1 + 2j, v], [1, 3.5 + 0j, np.float64(1e-300)]])], "csv", tmp_path)
        with open(tmp_path / "t.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "z_re", "z_im", "x"]
        assert float(rows[1][3]) == v
        assert float(rows[2][3]) == 1e-300
        assert rows[2][1:3] == ["3.5", "0"]

    def test_json_nan_is_null(self, tmp_path):
        cli.emit_outputs([Document("d", {"a": float("nan"), "b": [1.5, np.inf], "c": 1j})], "json", tmp_path)
        data = json.loads((tmp_path / "d.json").read_text())
        assert data == {"a": None, "b": [1.5, None], "c": {"re": 0.0, "im": 1.0}}

    def test_shipped_configs_parse(self):
        configs = sorted((Path(cli.__file__).parent / "configs").glob("*.json"))
        assert configs
        for path in configs:
            cli.ExperimentConfig.load(path)
