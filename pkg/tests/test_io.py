import numpy as np
import pytest

from randiso import io
from randiso.experiments import EXPERIMENTS, default_config

GOOD = """\
[experiment]
name = figure2
model = hopf_linear

[hopf_linear]
sigma = 0.4

[noise]
seeds = 3..5
dt = 0.01

[figure2]
n_seeds = 50
"""


@pytest.mark.parametrize("text,want", [("7", [7]), ("0, 3, 9", [0, 3, 9]), ("2..5", [2, 3, 4, 5]),
                                       (" 1 2 ", [1, 2])])
def test_seed_lists(text, want):
    assert io.parse_seeds(text) == want


@pytest.mark.parametrize("text", ["", "5..2", "a"])
def test_bad_seed_lists(text):
    with pytest.raises(ValueError):
        io.parse_seeds(text)


def test_parse_fills_experiment_defaults():
    cfg = io.parse_config(GOOD, "good.ini", EXPERIMENTS)
    assert cfg.experiment == "figure2" and cfg.model == "hopf_linear"
    assert cfg.seeds == [3, 4, 5]
    assert cfg.dt == 0.01
    assert cfg.model_params["sigma"] == 0.4
    assert cfg.scheme == "euler_maruyama_ito"
    assert cfg.settings == {"n_seeds": "50"}


def test_round_trip_through_text():
    cfg = io.parse_config(GOOD, "good.ini", EXPERIMENTS)
    again = io.parse_config(cfg.to_text(), "again.ini", EXPERIMENTS)
    assert again.to_text() == cfg.to_text()
    assert again.digest() == cfg.digest()


def test_digest_ignores_output_dir_only():
    cfg = default_config("figure2")
    d = cfg.digest()
    cfg.out = "elsewhere"
    assert cfg.digest() == d
    cfg.seeds = [8]
    assert cfg.digest() != d


@pytest.mark.parametrize("edit,line", [
    (("sigma = 0.4", "sigma = -1"), 6),
    (("sigma = 0.4", "sigma = abc"), 6),
    (("dt = 0.01", "dt = 0"), 10),
    (("n_seeds = 50", "n_seeds = many"), 13),
    (("n_seeds = 50", "colour = red"), 13),
    (("model = hopf_linear", "model = nope"), 3),
    (("name = figure2", "name = figure9"), 2),
])
def test_errors_name_the_line(edit, line):
    text = GOOD.replace(*edit)
    with pytest.raises(io.ConfigError) as info:
        io.parse_config(text, "bad.ini", EXPERIMENTS)
    assert info.value.line == line
    assert f"bad.ini:{line}" in str(info.value)


def test_missing_section_and_syntax_errors():
    with pytest.raises(io.ConfigError):
        io.parse_config("[noise]\ndt = 0.1\n", "x.ini", EXPERIMENTS)
    with pytest.raises(io.ConfigError):
        io.parse_config("not an ini file", "x.ini", EXPERIMENTS)
    with pytest.raises(io.ConfigError):
        io.parse_config(GOOD + "\n[mystery]\na = 1\n", "x.ini", EXPERIMENTS)


def test_load_missing_file(tmp_path):
    with pytest.raises(io.ConfigError):
        io.load_config(tmp_path / "absent.ini", EXPERIMENTS)


@pytest.mark.parametrize("raw,want", [(None, 1), ("", 1), ("4", 4)])
def test_thread_count(monkeypatch, raw, want):
    if raw is None:
        monkeypatch.delenv("RANDISO_THREADS", raising=False)
    else:
        monkeypatch.setenv("RANDISO_THREADS", raw)
    assert io.thread_count() == want


@pytest.mark.parametrize("raw", ["0", "-2", "two"])
def test_bad_thread_count(monkeypatch, raw):
    monkeypatch.setenv("RANDISO_THREADS", raw)
    with pytest.raises(io.ConfigError):
        io.thread_count()


def test_csv_round_trip_keeps_full_precision(tmp_path):
    x = np.array([1 / 3, np.pi, 1e-17])
    path = io.write_csv(tmp_path / "a.csv", ["i", "x"], [(i, v) for i, v in enumerate(x)],
                        comment="demo")
    header, rows = io.read_csv(path)
    assert header == ["i", "x"]
    assert [float(r[1]) for r in rows] == list(x)


def test_manifest_lists_hashes(tmp_path):
    cfg = default_config("figure2", out=str(tmp_path))
    f = io.write_csv(tmp_path / "a.csv", ["x"], [(1.0,)])
    io.write_manifest(tmp_path, cfg, [f], 0.5, [{"name": "c", "value": 0.1, "tol": 1.0,
                                                  "passed": True}])
    text = (tmp_path / "manifest.txt").read_text()
    assert io.file_sha256(f) in text
    assert (tmp_path / "config.ini").read_text() == cfg.to_text()
