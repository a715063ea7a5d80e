"""Configuration files, CSV artifacts, manifests and SVG rendering.

CSV files are the record of every run.  SVG figures are drawn from the CSV
files alone, never from in-memory results.
"""

import configparser
import csv
import hashlib
import io as _io
import os
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "parse_seeds",
    "parse_floats",
    "write_csv",
    "read_csv",
    "write_trajectory_csv",
    "write_field_csv",
    "write_report",
    "write_manifest",
    "file_sha256",
    "thread_count",
    "render_fibers_svg",
    "render_isochrons_svg",
    "render_psi_svg",
    "render_fields_svg",
]


class ConfigError(ValueError):
    """Invalid configuration; the message carries file and line when known."""

    def __init__(self, message, source=None, line=None):
        loc = f"{source or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{loc}: {message}")
        self.line = line


_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_seeds(text):
    """Seed list from ``"7"``, ``"0, 3, 9"`` or the inclusive range ``"0..1999"``."""
    m = _RANGE.match(text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ValueError("no seeds given")
    return [int(s) for s in items]


def parse_floats(text):
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ValueError("empty list")
    return [float(s) for s in items]


def _seed_text(seeds):
    if len(seeds) > 2 and seeds == list(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}..{seeds[-1]}"
    return ", ".join(str(s) for s in seeds)


def _line_index(text):
    """``(section, key) -> line number`` for a key=value file."""
    where, sec = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            where[(sec, None)] = no
        elif "=" in s and sec is not None:
            where[(sec, s.split("=", 1)[0].strip().lower())] = no
    return where


@dataclass
class ExperimentConfig:
    """Everything a run needs; ``to_text`` reproduces it exactly."""

    experiment: str
    model: str
    model_params: dict = field(default_factory=dict)
    chart: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    dt: float = 1e-3
    S_trunc: float = 20.0
    scheme: str = "heun_stratonovich"
    settings: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    out: str = "runs"
    tolerances: dict = field(default_factory=dict)

    def to_text(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"name": self.experiment, "model": self.model}
        m = {k: repr(float(v)) for k, v in sorted(self.model_params.items())}
        if self.chart:
            m = {"chart": self.chart, **m}
        cp[self.model] = m
        cp["noise"] = {"seeds": _seed_text(self.seeds), "dt": repr(self.dt),
                       "S_trunc": repr(self.S_trunc), "scheme": self.scheme}
        if self.settings:
            cp[self.experiment] = {k: str(v) for k, v in sorted(self.settings.items())}
        if self.grid:
            cp["grid"] = {k: str(v) for k, v in sorted(self.grid.items())}
        cp["output"] = {"dir": self.out}
        if self.tolerances:
            cp["tolerances"] = {k: repr(float(v)) for k, v in sorted(self.tolerances.items())}
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self):
        """Run id: hash of the resolved configuration without the output directory."""
        text = self.to_text().replace(f"dir = {self.out}\n", "")
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_config(text, source=None, experiments=None):
    """Parse and validate config text; errors name the offending line."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], source, line) from None
    lines = _line_index(text)

    def fail(msg, sec, key=None):
        raise ConfigError(msg, source, lines.get((sec, key and key.lower()),
                                                 lines.get((sec, None))))

    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section", source, None)
    exp = cp["experiment"]
    for key in ("name", "model"):
        if key not in exp:
            fail(f"[experiment] needs '{key}'", "experiment")
    name, model = exp["name"].strip(), exp["model"].strip()
    if experiments is not None and name not in experiments:
        fail(f"unknown experiment {name!r}; choose from {', '.join(sorted(experiments))}",
             "experiment", "name")
    for key in exp:
        if key not in ("name", "model"):
            fail(f"unknown key {key!r} in [experiment]", "experiment", key)

    from .models import CATALOG
    if model not in CATALOG:
        fail(f"unknown model {model!r}", "experiment", "model")
    params, chart = {}, None
    if cp.has_section(model):
        for key, val in cp[model].items():
            if key == "chart":
                chart = val.strip()
                if chart not in ("polar", "planar"):
                    fail(f"chart must be polar or planar, got {chart!r}", model, key)
                continue
            try:
                params[key] = float(val)
            except ValueError:
                fail(f"{key} must be a number, got {val!r}", model, key)

    kw = {}
    if experiments is not None and name in experiments:
        e = experiments[name]
        if model == e.model:
            params = {**e.model_params, **params}
        kw = {k: (list(v) if isinstance(v, list) else v) for k, v in e.noise.items()}
    if cp.has_section("noise"):
        sec = cp["noise"]
        for key, val in sec.items():
            try:
                if key == "seeds":
                    kw["seeds"] = parse_seeds(val)
                elif key in ("dt", "S_trunc"):
                    kw[key] = float(val)
                    if not kw[key] > 0:
                        raise ValueError(f"{key} must be positive")
                elif key == "scheme":
                    from .flow import SCHEMES
                    if val.strip() not in SCHEMES:
                        raise ValueError(f"scheme must be one of {SCHEMES}")
                    kw["scheme"] = val.strip()
                else:
                    raise ValueError(f"unknown key {key!r} in [noise]")
            except ValueError as exc:
                fail(str(exc), "noise", key)

    settings = dict(cp[name]) if cp.has_section(name) else {}
    if experiments is not None and name in experiments:
        allowed = experiments[name].defaults
        for key, val in settings.items():
            if key not in allowed:
                fail(f"unknown setting {key!r} for {name}", name, key)
            try:
                experiments[name].coerce(key, val)
            except ValueError as exc:
                fail(f"{key}: {exc}", name, key)

    grid = {}
    if cp.has_section("grid"):
        for key, val in cp["grid"].items():
            if key not in ("n_theta", "n_r", "R1", "R2"):
                fail(f"unknown key {key!r} in [grid]", "grid", key)
            try:
                grid[key] = int(val) if key.startswith("n_") else float(val)
            except ValueError:
                fail(f"{key} must be a number, got {val!r}", "grid", key)
    out = cp["output"].get("dir", "runs") if cp.has_section("output") else "runs"
    tol = {}
    if cp.has_section("tolerances"):
        for key, val in cp["tolerances"].items():
            try:
                tol[key] = float(val)
            except ValueError:
                fail(f"tolerance {key} must be a number", "tolerances", key)
    known = {"experiment", model, "noise", name, "grid", "output", "tolerances"}
    for sec in cp.sections():
        if sec not in known:
            fail(f"unknown section [{sec}]", sec)
    cfg = ExperimentConfig(name, model, params, chart, settings=settings, grid=grid, out=out,
                           tolerances=tol, **kw)
    # model parameters are validated by building the model once
    from .models import ModelParameterError, make_model
    try:
        make_model(model, params, chart=chart)
    except (ModelParameterError, ValueError, TypeError) as exc:
        if cp.has_section(model):
            named = [k for k in cp[model] if re.search(rf"\b{re.escape(k)}\b", str(exc))]
            fail(str(exc), model, named[0] if named else None)
        fail(str(exc), "experiment", "model")
    return cfg


def load_config(path, experiments=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path), experiments)


def thread_count(default=1):
    """Worker cap from ``RANDISO_THREADS``."""
    raw = os.environ.get("RANDISO_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RANDISO_THREADS must be a positive integer, got {raw!r}",
                          "environment") from None
    if n < 1:
        raise ConfigError("RANDISO_THREADS must be at least 1", "environment")
    return n


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, comment=None):
    """Write rows under a header; an optional first line starts with ``#``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Header and rows (strings) of a CSV written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _columns(path):
    head, rows = read_csv(path)
    cols = {}
    for k, name in enumerate(head):
        vals = [r[k] for r in rows]
        try:
            cols[name] = np.array(vals, dtype=float)
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def write_trajectory_csv(path, result, model, seed, chart):
    names = ("theta", "r") if chart == "polar" else ("x1", "x2")
    rows = ((t, *x) for t, x in zip(result.times, result.states.reshape(len(result.times), -1)))
    return write_csv(path, ("t",) + names, rows,
                     comment=f"model={model} seed={seed} dt={result.dt!r}")


def write_field_csv(path, grid, values):
    TH, R = grid.mesh()
    return write_csv(path, ("theta", "r", "value"),
                     zip(TH.ravel(), R.ravel(), np.asarray(values).ravel()))


def write_report(path, title, sections):
    """Plain-text report: ``sections`` maps a heading to ``{name: value}``."""
    lines = [title, "=" * len(title), ""]
    for head, items in sections.items():
        lines.append(f"[{head}]")
        for k, v in items.items():
            lines.append(f"{k} = {_fmt(v) if not isinstance(v, (list, tuple)) else v}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    return path


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(run_dir, config, files, wall_time, checks=()):
    """Manifest with the run id, content hashes, wall time and check outcomes.

    The resolved configuration is stored next to it as ``config.ini``; running
    that file again reproduces every CSV byte for byte.
    """
    from . import __version__
    cfg_path = os.path.join(run_dir, "config.ini")
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write(config.to_text())
    lines = [f"run_id = {config.digest()}", f"experiment = {config.experiment}",
             f"model = {config.model}", f"version = {__version__}",
             f"seeds = {_seed_text(config.seeds)}", f"dt = {config.dt!r}",
             f"S_trunc = {config.S_trunc!r}",
             f"sigma = {config.model_params.get('sigma', 'default')}",
             f"wall_time_s = {wall_time:.3f}", "config = config.ini", ""]
    lines.append("[files]")
    for f in sorted(files):
        lines.append(f"{os.path.basename(f)} = sha256:{file_sha256(f)}")
    if checks:
        lines += ["", "[checks]"]
        for c in checks:
            lines.append(f"{c['name']} = {'PASS' if c['passed'] else 'FAIL'} "
                         f"value={c['value']!r} tol={c['tol']!r}")
    path = os.path.join(run_dir, "manifest.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _figure(nrows=1, ncols=1, size=(4.0, 4.0)):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "randiso"
    fig, axes = plt.subplots(nrows, ncols, figsize=(size[0] * ncols, size[1] * nrows),
                             squeeze=False)
    return fig, axes


def _save(fig, path):
    import matplotlib.pyplot as plt
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _circle(ax, radius, **kw):
    a = np.linspace(0, 2 * np.pi, 361)
    ax.plot(radius * np.cos(a), radius * np.sin(a), **kw)


def render_fibers_svg(path, fiber_csvs, radius_csv, lim=2.2):
    """Two rows of panels (forward on top, pullback below) from fiber CSVs."""
    rad = _columns(radius_csv)
    data = [_columns(p) for p in fiber_csvs]
    fwd = sorted((d for d in data if d["mode"][0] == "forward"), key=lambda d: d["T"][0])
    pb = sorted((d for d in data if d["mode"][0] == "pullback"), key=lambda d: d["T"][0])
    ncols = max(len(fwd), len(pb))
    fig, axes = _figure(2, ncols, (2.6, 2.6))
    for row, group, sign in ((0, fwd, 1), (1, pb, -1)):
        for k in range(ncols):
            ax = axes[row, k]
            ax.set_xlim(-lim, lim), ax.set_ylim(-lim, lim), ax.set_aspect("equal")
            if k >= len(group):
                ax.axis("off")
                continue
            d = group[k]
            T, mode = d["T"][0], d["mode"][0]
            ax.scatter(d["x"], d["y"], s=2, c="C0", linewidths=0)
            sel = (rad["mode"] == mode) & (rad["T"] == T)
            if sel.any():
                _circle(ax, rad["radius"][sel][0], color="C3", lw=0.8)
            ax.set_title(f"T = {sign * T:g}" if T else "T = 0", fontsize=9)
    return _save(fig, path)


def render_isochrons_svg(path, isochron_csv, radius=None, field_csv=None, levels=8,
                         r_range=None):
    """Isochron curves in the plane, optionally over isophase level sets."""
    d = _columns(isochron_csv)
    fig, axes = _figure(1, 1, (5.0, 5.0))
    ax = axes[0, 0]
    if field_csv is not None:
        f = _columns(field_csv)
        th, r = np.unique(f["theta"]), np.unique(f["r"])
        V = f["value"].reshape(len(th), len(r))
        keep = np.ones_like(r, dtype=bool) if r_range is None else (r >= r_range[0]) & (r <= r_range[1])
        TH, R = np.meshgrid(np.append(th, 2 * np.pi), r[keep], indexing="ij")
        Vw = np.mod(np.vstack([V, V[:1] + 2 * np.pi])[:, keep], 2 * np.pi)
        ax.contour(R * np.cos(TH), R * np.sin(TH), np.sin(Vw * levels / 2), levels=[0.0],
                   colors="0.6", linewidths=0.6)
    for a in np.unique(d["anchor_phase"]):
        sel = d["anchor_phase"] == a
        ax.plot(d["r"][sel] * np.cos(d["theta"][sel]), d["r"][sel] * np.sin(d["theta"][sel]),
                lw=1.0)
    if radius is not None:
        _circle(ax, radius, color="k", lw=0.8, ls="--")
    ax.set_aspect("equal")
    return _save(fig, path)


def render_psi_svg(path, psi_csvs):
    fig, axes = _figure(1, 1, (4.0, 4.0))
    ax = axes[0, 0]
    for p in psi_csvs:
        d = _columns(p)
        ax.plot(d["x"], d["y"], lw=0.8)
    ax.set_aspect("equal")
    return _save(fig, path)


def render_fields_svg(path, field_csvs):
    """Filled contours of each field on the annulus, one panel per CSV."""
    fig, axes = _figure(1, len(field_csvs), (3.6, 3.6))
    for ax, p in zip(axes[0], field_csvs):
        f = _columns(p)
        th, r = np.unique(f["theta"]), np.unique(f["r"])
        V = f["value"].reshape(len(th), len(r))
        TH, R = np.meshgrid(th, r, indexing="ij")
        ax.contourf(R * np.cos(TH), R * np.sin(TH), V, levels=20)
        ax.set_aspect("equal")
        ax.set_title(os.path.splitext(os.path.basename(p))[0], fontsize=9)
    return _save(fig, path)
