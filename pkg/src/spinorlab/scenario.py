"""Scenario configuration, batch runs and convergence studies.

A scenario is a JSON document::

    {
      "schema_version": 1,
      "metric": {"family": "Melvin", "B": 2.0},
      "grid": {"r_min": 1, "r_max": 32, "n_r": 64, "n_theta": 64, "mode": "uniform"},
      "runs": ["solve", "extract-b"],
      "solver": {"tol": 1e-10, "max_iter": 20000, "deterministic": false},
      "output_dir": "out"
    }

Runs execute in the declared order; each one is independently failable and
its outcome is recorded in ``manifest.json``.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy

from .errors import ConfigError, SpinorLabError

SCHEMA_VERSION = 1
RUN_KINDS = ("verify-geometry", "verify-lemmas", "verify-lichnerowicz", "solve", "extract-b",
             "norms", "convergence-study")
_NEEDS_GRID = {"solve", "extract-b", "norms", "convergence-study"}
STUDY_KINDS = ("manufactured", "lemma", "quadrature")

CONVERGENCE_COLUMNS = ("level", "n_r", "n_theta", "h", "error", "residual", "iterations", "observed_order")
FLUX_COLUMNS = ("r", "flux")
B_COLUMNS = ("r", "b")


def worker_count() -> int:
    """Worker cap from SPINORLAB_THREADS (default 1)."""
    raw = os.environ.get("SPINORLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SPINORLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"SPINORLAB_THREADS must be a positive integer, got {raw!r}")
    return n


# configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class MetricBlock:
    family: str
    b: Optional[float] = None
    B: Optional[float] = None
    M: float = 0.0
    perturbation: tuple = (0.0, 0.0, 0.0)

    def build(self):
        from .geometry import make_metric
        return make_metric(self.family, b=self.b, B=self.B, M=self.M, perturbation=self.perturbation)


@dataclass(frozen=True)
class GridBlock:
    r_min: float
    r_max: float
    n_r: int
    n_theta: int
    mode: str = "uniform"

    def build(self, scale: int = 1):
        from .discretization import build_grid
        return build_grid(self.r_min, self.r_max, self.n_r * scale, self.n_theta * scale, self.mode)


@dataclass(frozen=True)
class SolverBlock:
    tol: float = 1e-10
    max_iter: int = 20000
    deterministic: bool = False
    rhs_mode: str = "discrete"
    xi0: tuple = (1.0, 0.0)


@dataclass(frozen=True)
class ExtractBlock:
    methods: tuple = ("boundary", "volume")
    terms: int = 3
    measure: str = "volume"
    field: str = "solved"


@dataclass(frozen=True)
class NormsBlock:
    p: float = 2.0
    delta: float = -1.0
    k: int = 1
    field: str = "solved"


@dataclass(frozen=True)
class StudyBlock:
    kind: str = "manufactured"
    levels: int = 3
    min_order: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    metric: Optional[MetricBlock]
    grid: Optional[GridBlock]
    runs: tuple
    solver: SolverBlock = SolverBlock()
    extract: ExtractBlock = ExtractBlock()
    norms: NormsBlock = NormsBlock()
    study: StudyBlock = StudyBlock()
    output_dir: str = "spinorlab-out"
    samples: int = 50
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    source: bytes = field(default=b"", repr=False, compare=False)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.source).hexdigest()

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d


def _complex_entry(x, path):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(f"{path}: expected a number or a [re, im] pair, got {x!r}")


class _Reader:
    """Typed access to one JSON object with path-qualified diagnostics."""

    def __init__(self, data, path: str, lines: dict):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a JSON object, got {type(data).__name__}")
        self.data, self.path, self.lines, self.used = data, path, lines, set()

    def _where(self, key):
        p = f"{self.path}.{key}" if self.path else key
        line = self.lines.get(key)
        return f"{p} (line {line})" if line else p

    def get(self, key, kind, default=None, required=False, check=None, msg=""):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._where(key)}: required field is missing")
            return default
        v = self.data[key]
        if v is None and not required:
            return default
        ok = isinstance(v, kind) and not (isinstance(v, bool) and kind in (int, float, (int, float)))
        if not ok:
            raise ConfigError(f"{self._where(key)}: expected {_kind_name(kind)}, got {v!r}")
        if check is not None and not check(v):
            raise ConfigError(f"{self._where(key)}: {msg or 'invalid value'} (got {v!r})")
        return v

    def block(self, key):
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            return None
        return _Reader(self.data[key], f"{self.path}.{key}" if self.path else key, self.lines)

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self._where(extra[0])}: unknown field")


def _kind_name(kind) -> str:
    names = {str: "a string", bool: "a boolean", int: "an integer", list: "a list", dict: "an object"}
    if kind == (int, float):
        return "a number"
    return names.get(kind, str(kind))


def _key_lines(text: str) -> dict:
    """First line on which each quoted key appears (for diagnostics)."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith('"') and '":' in s:
            out.setdefault(s[1:s.index('"', 1)], n)
    return out


def parse_config(text: str | bytes) -> ScenarioConfig:
    raw = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    try:
        s = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not valid UTF-8: {exc}") from None
    try:
        data = json.loads(s)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    top = _Reader(data, "", _key_lines(s))
    num = (int, float)

    version = top.get("schema_version", int, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version} (expected {SCHEMA_VERSION})")

    runs = top.get("runs", list, required=True)
    if not runs:
        raise ConfigError("runs: run list must be nonempty")
    for i, r in enumerate(runs):
        if r not in RUN_KINDS:
            raise ConfigError(f"runs[{i}]: unknown run {r!r}; expected one of {', '.join(RUN_KINDS)}")

    metric = None
    mb = top.block("metric")
    if mb is not None:
        pert = mb.get("perturbation", list, [0.0, 0.0, 0.0],
                      check=lambda v: len(v) == 3 and all(isinstance(x, num) for x in v),
                      msg="expected three amplitudes [a1, a2, a3]")
        metric = MetricBlock(mb.get("family", str, required=True), mb.get("b", num), mb.get("B", num),
                             float(mb.get("M", num, 0.0)), tuple(float(x) for x in pert))
        mb.finish()
    else:
        raise ConfigError("metric: required block is missing")

    grid = None
    gb = top.block("grid")
    if gb is not None:
        grid = GridBlock(float(gb.get("r_min", num, required=True)), float(gb.get("r_max", num, required=True)),
                         gb.get("n_r", int, required=True, check=lambda v: v >= 2, msg="must be >= 2"),
                         gb.get("n_theta", int, required=True, check=lambda v: v >= 2, msg="must be >= 2"),
                         gb.get("mode", str, "uniform", check=lambda v: v in ("uniform", "geometric"),
                                msg="must be 'uniform' or 'geometric'"))
        gb.finish()
    missing = [r for r in runs if r in _NEEDS_GRID]
    if missing and grid is None:
        raise ConfigError(f"grid: required block is missing (needed by run {missing[0]!r})")

    solver = SolverBlock()
    sb = top.block("solver")
    if sb is not None:
        xi0 = sb.get("xi0", list, [1.0, 0.0], check=lambda v: len(v) == 2, msg="expected two components")
        solver = SolverBlock(float(sb.get("tol", num, 1e-10, check=lambda v: v > 0, msg="must be > 0")),
                             sb.get("max_iter", int, 20000, check=lambda v: v > 0, msg="must be > 0"),
                             sb.get("deterministic", bool, False),
                             sb.get("rhs_mode", str, "discrete", check=lambda v: v in ("discrete", "analytic"),
                                    msg="must be 'discrete' or 'analytic'"),
                             tuple(_complex_entry(x, f"solver.xi0[{i}]") for i, x in enumerate(xi0)))
        sb.finish()

    extract = ExtractBlock()
    eb = top.block("extract")
    if eb is not None:
        methods = eb.get("methods", list, ["boundary", "volume"],
                         check=lambda v: v and all(m in ("boundary", "volume") for m in v),
                         msg="methods must be a nonempty subset of ['boundary', 'volume']")
        extract = ExtractBlock(tuple(methods), eb.get("terms", int, 3, check=lambda v: 1 <= v <= 4,
                                                      msg="must be 1..4"),
                               eb.get("measure", str, "volume", check=lambda v: v in ("volume", "induced"),
                                      msg="must be 'volume' or 'induced'"),
                               eb.get("field", str, "solved", check=lambda v: v in ("solved", "exact"),
                                      msg="must be 'solved' or 'exact'"))
        eb.finish()

    norms = NormsBlock()
    nb = top.block("norms")
    if nb is not None:
        norms = NormsBlock(float(nb.get("p", num, 2.0, check=lambda v: v > 1, msg="must be > 1")),
                           float(nb.get("delta", num, -1.0)),
                           nb.get("k", int, 1, check=lambda v: v in (0, 1, 2), msg="must be 0, 1 or 2"),
                           nb.get("field", str, "solved", check=lambda v: v in ("solved", "exact"),
                                  msg="must be 'solved' or 'exact'"))
        nb.finish()

    study = StudyBlock()
    stb = top.block("study")
    if stb is not None:
        study = StudyBlock(stb.get("kind", str, "manufactured", check=lambda v: v in STUDY_KINDS,
                                   msg=f"must be one of {STUDY_KINDS}"),
                           stb.get("levels", int, 3, check=lambda v: v >= 3, msg="must be >= 3"),
                           stb.get("min_order", num))
        stb.finish()

    cfg = ScenarioConfig(metric=metric, grid=grid, runs=tuple(runs), solver=solver, extract=extract,
                         norms=norms, study=study,
                         output_dir=top.get("output_dir", str, "spinorlab-out"),
                         samples=top.get("samples", int, 50, check=lambda v: v >= 1, msg="must be >= 1"),
                         seed=top.get("seed", int, 0),
                         schema_version=version, source=raw)
    top.finish()

    # semantic checks that need the metric
    try:
        spec = metric.build()
    except SpinorLabError as exc:
        raise ConfigError(f"metric: {exc}") from None
    if grid is not None:
        if not 0 < grid.r_min < grid.r_max:
            raise ConfigError(f"grid: need 0 < r_min < r_max, got [{grid.r_min}, {grid.r_max}]")
        if grid.r_min <= spec.horizon:
            raise ConfigError(f"grid.r_min: must exceed 2M = {spec.horizon}, got {grid.r_min}")
    xi = np.asarray(solver.xi0, complex)
    if not np.isclose(np.vdot(xi, xi).real, 1.0, rtol=0, atol=1e-12):
        raise ConfigError("solver.xi0: must have unit norm")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw)


# artifacts ---------------------------------------------------------------------

@dataclass
class RunArtifacts:
    output_dir: Path
    manifest: Path
    runs: list
    files: list

    @property
    def ok(self) -> bool:
        return all(r["status"] == "pass" for r in self.runs)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


def _versions() -> dict:
    from . import __version__
    return {"spinorlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _dump_json(path: Path, payload: dict) -> Path:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **payload}, indent=2, sort_keys=True,
                      default=_json_default, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write_csv(path: Path, columns, rows) -> Path:
    import csv
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


class _Context:
    """State shared between the runs of one scenario (e.g. a solved field)."""

    def __init__(self, config: ScenarioConfig, out: Path, deterministic: bool):
        self.config = config
        self.out = out
        self.deterministic = deterministic
        self.spec = config.metric.build()
        self.grid = config.grid.build() if config.grid is not None else None
        self._solved = None

    def points(self):
        from .verify import sample_points
        r_range = (self.grid.r_min, self.grid.r_max) if self.grid is not None else None
        return sample_points(self.spec, self.config.samples, self.config.seed, r_range)

    def solved(self):
        if self._solved is None:
            from .solver import solve_harmonic_correction
            s = self.config.solver
            self._solved = solve_harmonic_correction(self.spec, self.grid, s.xi0, tol=s.tol,
                                                     max_iter=s.max_iter, rhs_mode=s.rhs_mode)
        return self._solved

    def field(self, which: str):
        from .discretization import GridSpinorField
        from .spinors import theta0_construct
        if which == "exact":
            return GridSpinorField.sample(theta0_construct(self.spec, self.config.solver.xi0), self.grid)
        return self.solved()[0]


def _status(checks) -> str:
    return "fail" if any(c["status"] == "fail" for c in checks) else "pass"


def _run_verify_geometry(ctx: _Context) -> tuple[str, list]:
    from .verify import geometry_checks
    r, t = ctx.points()
    checks = geometry_checks(ctx.spec, r, t)
    path = _dump_json(ctx.out / "geometry-report.json",
                      {"metric": ctx.spec.tag, "n_points": int(r.size), "checks": checks})
    return _status(checks), [path]


def _run_verify_lemmas(ctx: _Context) -> tuple[str, list]:
    from .verify import lemma_checks
    r, t = ctx.points()
    checks, sweep = lemma_checks(ctx.spec, r, t)
    path = _dump_json(ctx.out / "lemmas-report.json",
                      {"metric": ctx.spec.tag, "n_points": int(r.size), "checks": checks, "sweep": sweep})
    return _status(checks), [path]


def _run_verify_lichnerowicz(ctx: _Context) -> tuple[str, list]:
    from .verify import lichnerowicz_checks
    r, t = ctx.points()
    checks = lichnerowicz_checks(ctx.spec, r, t)
    path = _dump_json(ctx.out / "lichnerowicz-report.json",
                      {"metric": ctx.spec.tag, "n_points": int(r.size), "checks": checks})
    return _status(checks), [path]


def _run_solve(ctx: _Context) -> tuple[str, list]:
    from .discretization import GridSpinorField
    from .spinors import theta0_construct
    theta, report = ctx.solved()
    t0 = GridSpinorField.sample(theta0_construct(ctx.spec, ctx.config.solver.xi0), ctx.grid)
    files = [theta.to_csv(ctx.out / "theta.csv"),
             GridSpinorField(ctx.grid, theta.values + t0.values, theta.frame).to_csv(ctx.out / "theta-tilde.csv")]
    path = ctx.out / "solve-report.json"
    report.to_json(path, deterministic=ctx.deterministic)
    files.append(path)
    return ("pass" if report.converged else "fail"), files


def _run_extract_b(ctx: _Context) -> tuple[str, list]:
    from .asymptotics import estimate_b, flux_series
    ex = ctx.config.extract
    theta = ctx.field(ex.field)
    files, summary, status = [], {}, "pass"
    for method in ex.methods:
        try:
            est = estimate_b(ctx.spec, theta, method, terms=ex.terms, measure=ex.measure)
        except SpinorLabError as exc:
            summary[method] = {"error": f"{type(exc).__name__}: {exc}"}
            status = "fail"
            continue
        summary[method] = est.to_dict()
        files.append(est.to_csv(ctx.out / f"b-{method}.csv"))
    fs = flux_series(ctx.spec, theta, measure=ex.measure)
    files.append(fs.to_csv(ctx.out / "flux.csv"))
    path = _dump_json(ctx.out / "b-estimate.json",
                      {"metric": ctx.spec.tag, "field": ex.field, "b_parameter": ctx.spec.b,
                       "estimates": summary, "flux": fs.summary()})
    files.append(path)
    return status, files


def _run_norms(ctx: _Context) -> tuple[str, list]:
    from .asymptotics import WeightParams, decay_rate_fit, weighted_norm
    nb = ctx.config.norms
    theta = ctx.field(nb.field)
    params = WeightParams(nb.p, nb.delta, nb.k)
    rows = {f"k={k}": weighted_norm(theta, ctx.grid, ctx.spec, WeightParams(nb.p, nb.delta, k))
            for k in range(nb.k + 1)}
    payload = {"metric": ctx.spec.tag, "field": nb.field, "params": asdict(params), "norms": rows,
               "decay_rate_equatorial": decay_rate_fit(theta, ctx.grid, (np.pi / 3, 2 * np.pi / 3))}
    if nb.field == "solved":
        payload["decay_rate_theta_tilde"] = decay_rate_fit(
            theta.values + ctx.field("exact").values, ctx.grid, (np.pi / 3, 2 * np.pi / 3), exclude_outer=True)
    return "pass", [_dump_json(ctx.out / "norms.json", payload)]


def _run_convergence(ctx: _Context) -> tuple[str, list]:
    res = _study(ctx.config, ctx.config.study.levels, ctx.out)
    return res["status"], res["files"]


_RUNNERS = {
    "verify-geometry": _run_verify_geometry,
    "verify-lemmas": _run_verify_lemmas,
    "verify-lichnerowicz": _run_verify_lichnerowicz,
    "solve": _run_solve,
    "extract-b": _run_extract_b,
    "norms": _run_norms,
    "convergence-study": _run_convergence,
}


def _prepare_out(config: ScenarioConfig, out) -> Path:
    out = Path(out if out is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(config, out: Path, runs: list, deterministic: bool) -> Path:
    files = sorted({f for r in runs for f in r["artifacts"]})
    payload = {"config_sha256": config.sha256, "versions": _versions(), "deterministic": deterministic,
               "runs": runs, "files": files}
    if deterministic:
        for r in payload["runs"]:
            r["wall_time"] = None
    return _dump_json(out / "manifest.json", payload)


def run_scenario(config: ScenarioConfig, out=None, deterministic: Optional[bool] = None) -> RunArtifacts:
    """Execute the configured runs in order; failures are captured per run."""
    deterministic = config.solver.deterministic if deterministic is None else deterministic
    out = _prepare_out(config, out)
    ctx = _Context(config, out, deterministic)
    runs = []
    for name in config.runs:
        t0 = time.perf_counter()
        entry: dict[str, Any] = {"name": name}
        try:
            status, files = _RUNNERS[name](ctx)
            entry["status"] = status
            entry["artifacts"] = [p.name for p in files]
        except Exception as exc:  # each run is independently failable
            entry["status"] = "error"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            entry["traceback"] = traceback.format_exc(limit=5)
            entry["artifacts"] = []
        entry["wall_time"] = time.perf_counter() - t0
        runs.append(entry)
    manifest = _write_manifest(config, out, runs, deterministic)
    files = [out / f for r in runs for f in r["artifacts"]]
    return RunArtifacts(out, manifest, runs, files)


# convergence studies -------------------------------------------------------------

def manufactured_field(spec):
    """Smooth test spinor that is regular through the axis."""
    from . import jets
    from .spinors import AnalyticSpinorField

    def fn(r, t):
        a = jets.exp(r * -0.5) * jets.cos(t)
        b = jets.sin(t) * r * jets.exp(r * -0.25) * (1.0 + 0.5j)
        return jets.stack([a, b])
    return AnalyticSpinorField(fn, spec.tag, "manufactured")


def _level_manufactured(config: ScenarioConfig, scale: int) -> dict:
    from .discretization import GridSpinorField
    from .solver import assemble, sample_rhs, solve_least_squares
    spec = config.metric.build()
    grid = config.grid.build(scale)
    field = manufactured_field(spec)
    op = assemble(spec, grid)
    exact = GridSpinorField.sample(field, grid)
    _, rep = solve_least_squares(op, sample_rhs(op, field), tol=config.solver.tol,
                                 max_iter=config.solver.max_iter, dirichlet_values=exact.values,
                                 reference=exact.values)
    return {"n_r": grid.n_r, "n_theta": grid.n_theta, "h": grid.h, "error": rep.l2_error,
            "residual": rep.normal_residual, "iterations": rep.iterations}


def _level_lemma(config: ScenarioConfig, scale: int) -> dict:
    from .spinors import conformal_residual, norm2
    from .verify import conformal_factor, probe_field, sample_points
    spec = config.metric.build()
    grid = config.grid.build(scale)
    r, t = sample_points(spec, config.samples, config.seed, (grid.r_min, grid.r_max))
    f = probe_field(spec)
    res = np.sqrt(norm2(conformal_residual(spec, conformal_factor(spec), f, r, t)))
    return {"n_r": grid.n_r, "n_theta": grid.n_theta, "h": grid.h,
            "error": float((res / np.sqrt(norm2(f(r, t)))).max()), "residual": None, "iterations": None}


def _level_quadrature(config: ScenarioConfig, scale: int) -> dict:
    from scipy.integrate import dblquad
    from .discretization import build_quadrature, integrate_volume
    spec = config.metric.build()
    grid = config.grid.build(scale)
    rule = build_quadrature(spec, grid)
    approx = integrate_volume(rule, 1.0)

    def density(t, r):
        g = spec.components(np.array([r]), np.array([t]), order=0, check=False)
        return float(np.sqrt(g[0].val * g[1].val * g[2].val)[0])
    ref, _ = dblquad(density, grid.r_min, grid.r_max, 0.0, np.pi, epsabs=0, epsrel=1e-12)
    return {"n_r": grid.n_r, "n_theta": grid.n_theta, "h": grid.h, "error": abs(approx - 2 * np.pi * ref),
            "residual": None, "iterations": None}


_LEVELS = {"manufactured": _level_manufactured, "lemma": _level_lemma, "quadrature": _level_quadrature}


def observed_orders(h, err) -> list:
    """Successive log-ratio orders; None where undefined."""
    out = [None]
    for i in range(1, len(h)):
        if err[i] > 0 and err[i - 1] > 0:
            out.append(float(np.log(err[i - 1] / err[i]) / np.log(h[i - 1] / h[i])))
        else:
            out.append(None)
    return out


def _study(config: ScenarioConfig, levels: int, out: Path) -> dict:
    if levels < 3:
        raise ConfigError(f"levels: a convergence study needs >= 3 levels, got {levels}")
    if config.grid is None:
        raise ConfigError("grid: required block is missing (needed by the convergence study)")
    kind = config.study.kind
    fn = _LEVELS[kind]
    scales = [2 ** i for i in range(levels)]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(lambda s: fn(config, s), scales))
    h = [r["h"] for r in rows]
    err = [r["error"] for r in rows]
    orders = observed_orders(h, err)
    fitted = None
    if all(e > 0 for e in err):
        fitted = float(np.polyfit(np.log(h), np.log(err), 1)[0])
    table = [(i, r["n_r"], r["n_theta"], r["h"], r["error"], r["residual"], r["iterations"], o)
             for i, (r, o) in enumerate(zip(rows, orders))]
    csv_path = _write_csv(out / f"convergence-{kind}.csv", CONVERGENCE_COLUMNS, table)
    status = "pass"
    if config.study.min_order is not None and (fitted is None or fitted < config.study.min_order):
        status = "fail"
    summary = _dump_json(out / f"convergence-{kind}.json",
                         {"kind": kind, "levels": levels, "fitted_order": fitted, "observed_orders": orders,
                          "min_order": config.study.min_order, "status": status})
    return {"status": status, "files": [csv_path, summary], "fitted_order": fitted, "rows": rows}


def convergence_study(config: ScenarioConfig, levels: int, out=None,
                      deterministic: Optional[bool] = None) -> RunArtifacts:
    """Re-run the configured study at n, 2n, 4n, ... and fit observed orders."""
    deterministic = config.solver.deterministic if deterministic is None else deterministic
    out = _prepare_out(config, out)
    t0 = time.perf_counter()
    entry: dict[str, Any] = {"name": f"convergence-study:{config.study.kind}"}
    try:
        res = _study(config, levels, out)
        entry.update(status=res["status"], artifacts=[p.name for p in res["files"]],
                     fitted_order=res["fitted_order"])
    except ConfigError:
        raise
    except Exception as exc:
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}", artifacts=[])
    entry["wall_time"] = time.perf_counter() - t0
    manifest = _write_manifest(config, out, [entry], deterministic)
    return RunArtifacts(out, manifest, [entry], [out / f for f in entry["artifacts"]])
