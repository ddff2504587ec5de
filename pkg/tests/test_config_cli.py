import json
import math

import pytest

from edgerec.cli import AGGREGATE_FILE, HIT_VS_CACHE, HIT_VS_LAMBDA, REGRET_VS_T, SIGMA_VS_T, main
from edgerec.cli import cmd_run, cmd_scaling, cmd_sweep
from edgerec.config import parse_config
from edgerec.errors import ParseError, ValidationError

MINIMAL = """\
F = 4
c = 1
r = 1
N = 10
M = 1
T = 100
policy = "bayes"
seed = 1
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParse:
    def test_minimal_fills_defaults(self, tmp_path):
        spec = parse_config(write(tmp_path, MINIMAL))
        cfg = spec.base
        assert (cfg.F, cfg.c, cfg.r, cfg.N, cfg.M, cfg.T, cfg.seed) == (4, 1, 1, 10, 1, 100, 1)
        assert cfg.scenario.miss_penalty_alpha == 10.0
        assert cfg.baseline.lrfu_lambda == 0.5
        assert cfg.fusion.mode == "time_decay"
        assert spec.replicate_seeds == (1,)

    def test_cache_budget_too_large(self, tmp_path):
        with pytest.raises(ValidationError, match="cache_budget ≤ F"):
            parse_config(write(tmp_path, MINIMAL.replace("c = 1", "c = 5")))

    def test_unknown_top_key(self, tmp_path):
        with pytest.raises(ParseError) as info:
            parse_config(write(tmp_path, MINIMAL + "fo = 1\n"))
        assert info.value.line == 9 and info.value.key == "fo"

    def test_unknown_section_key(self, tmp_path):
        with pytest.raises(ParseError) as info:
            parse_config(write(tmp_path, MINIMAL + "[fusion]\nlambda = 0.5\nlamda = 0.5\n"))
        assert info.value.key == "fusion.lamda" and info.value.line == 11

    def test_section_values(self, tmp_path):
        spec = parse_config(write(tmp_path, MINIMAL + "[fusion]\nmode = \"static\"\nlambda = 0.25\n"
                                              "[scenario]\nmode = \"sinr\"\nsinr_threshold_db = 3\n"))
        assert spec.base.fusion.lam == 0.25 and spec.base.scenario.sinr_threshold_db == 3.0

    def test_malformed_toml(self, tmp_path):
        with pytest.raises(ParseError):
            parse_config(write(tmp_path, MINIMAL + "x = = 2\n"))

    def test_missing_required(self, tmp_path):
        with pytest.raises(ValidationError, match="T"):
            parse_config(write(tmp_path, MINIMAL.replace("T = 100\n", "")))

    def test_wrong_type(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_config(write(tmp_path, MINIMAL.replace("N = 10", 'N = "ten"')))

    def test_sweep_cap(self, tmp_path):
        text = MINIMAL + "[sweep]\nseeds = [1, 2, 3]\nc = [1, 2]\nmax_runs = 5\n"
        with pytest.raises(ValidationError, match="max_runs"):
            parse_config(write(tmp_path, text))

    def test_sweep_order(self, tmp_path):
        spec = parse_config(write(tmp_path, MINIMAL + "[sweep]\nlambda = [0.0, 1.0]\nseeds = [3, 4]\n"))
        runs = spec.runs()
        assert [(r.fusion.lam, r.seed) for r in runs] == [(0.0, 3), (0.0, 4), (1.0, 3), (1.0, 4)]
        assert all(r.fusion.mode == "static" for r in runs)


class TestCommands:
    def test_run_writes_two_files(self, tmp_path):
        spec = parse_config(write(tmp_path, MINIMAL))
        path = cmd_run(spec, out=str(tmp_path / "out"))
        assert sorted(p.name for p in path.iterdir()) == ["metrics.csv", "summary.json"]
        rows = (path / "metrics.csv").read_text().splitlines()
        assert len(rows) - 1 == 100 * 1
        summary = json.loads((path / "summary.json").read_text())
        assert summary["schema_version"] == 1 and summary["seed"] == 1

    def test_run_directory_is_content_addressed(self, tmp_path):
        spec = parse_config(write(tmp_path, MINIMAL))
        a = cmd_run(spec, out=str(tmp_path / "out"))
        b = cmd_run(spec, seed=2, out=str(tmp_path / "out"))
        assert a != b and a.name.endswith("-s1") and b.name.endswith("-s2")

    def test_sweep_lambda_two_seeds(self, tmp_path):
        text = MINIMAL.replace("M = 1", "M = 2") + "[sweep]\nlambda = [0.0, 0.5, 1.0]\nseeds = [1, 2]\n"
        spec = parse_config(write(tmp_path, text))
        out = cmd_sweep(spec, out=str(tmp_path / "out"))
        agg = json.loads((out / AGGREGATE_FILE).read_text())
        assert agg["schema_version"] == 1
        assert len(agg["runs"]) == agg["n_runs"] == 6
        assert [e["lambda"] for e in agg["runs"]] == [0.0, 0.0, 0.5, 0.5, 1.0, 1.0]
        for name in (HIT_VS_CACHE, HIT_VS_LAMBDA, REGRET_VS_T):
            assert len((out / name).read_text().splitlines()) == 7
        assert len((out / SIGMA_VS_T).read_text().splitlines()) == 1 + 6 * 100
        assert len([p for p in out.iterdir() if p.is_dir()]) == 6

    def test_scaling_reports_finite_exponent(self, tmp_path):
        text = MINIMAL.replace('"bayes"', '"random"') + "[sweep]\nT = [20, 40, 80, 160, 320]\nseeds = [1, 2]\n"
        out = cmd_scaling(parse_config(write(tmp_path, text)), out=str(tmp_path / "out"))
        data = json.loads((out / "scaling.json").read_text())
        assert data["schema_version"] == 1
        assert math.isfinite(data["fitted_exponent"]["random"])

    def test_rerun_is_byte_identical(self, tmp_path):
        text = MINIMAL.replace("M = 1", "M = 2") + "[sweep]\nc = [1, 2]\nseeds = [5]\n"
        spec = parse_config(write(tmp_path, text))
        a = cmd_sweep(spec, out=str(tmp_path / "a"))
        b = cmd_sweep(spec, out=str(tmp_path / "b"))
        names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        assert names == sorted(p.relative_to(b) for p in b.rglob("*.csv"))
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_workers_give_same_output(self, tmp_path):
        text = MINIMAL + "[sweep]\nseeds = [1, 2, 3]\n"
        spec = parse_config(write(tmp_path, text))
        a = cmd_sweep(spec, out=str(tmp_path / "a"), workers=1)
        b = cmd_sweep(spec, out=str(tmp_path / "b"), workers=2)
        assert (a / AGGREGATE_FILE).read_bytes() == (b / AGGREGATE_FILE).read_bytes()

    def test_failed_sweep_leaves_nothing(self, tmp_path):
        (tmp_path / "missing.csv").write_text("1,0\n0,1\n")
        text = MINIMAL + f'[ptm]\nkind = "csv"\npath = "{tmp_path / "missing.csv"}"\n[sweep]\nseeds = [1]\n'
        spec = parse_config(write(tmp_path, text))
        out = tmp_path / "out"
        with pytest.raises(ValueError):
            cmd_sweep(spec, out=str(out))
        assert list(out.iterdir()) == []


class TestMain:
    def test_exit_codes(self, tmp_path, capsys):
        good = write(tmp_path, MINIMAL)
        assert main(["run", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
        bad = write(tmp_path, MINIMAL + "fo = 1\n", "bad.toml")
        assert main(["run", "--config", str(bad)]) == 2
        assert "fo" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2
        failing = write(tmp_path, MINIMAL + f'[ptm]\nkind = "csv"\npath = "{tmp_path / "none.csv"}"\n', "f.toml")
        assert main(["run", "--config", str(failing), "--out", str(tmp_path / "o2")]) == 1

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EDGEREC_OUT", str(tmp_path / "env"))
        assert main(["run", "--config", str(write(tmp_path, MINIMAL))]) == 0
        assert len(list((tmp_path / "env").iterdir())) == 1
        monkeypatch.setenv("EDGEREC_WORKERS", "zero")
        assert main(["run", "--config", str(write(tmp_path, MINIMAL))]) == 2
