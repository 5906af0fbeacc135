"""Command-line experiment runner.

``delayfield <command> --config cfg.json [--out DIR] [--seed N] [--svg]``

Every run writes into a fresh directory: ``manifest.json`` with the resolved
configuration, the CSV outputs and, with ``--svg``, simple line plots.
Exit codes: 0 ok, 2 configuration error, 3 numerical divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, svg
from .bifurcation import (
    DispersionContext,
    dispersion_residual,
    hopf_dirac,
    hopf_interval,
    hopf_uniform,
    interval_first_curve,
)
from .convergence import coupling_experiment
from .core import (
    Connectivity,
    DelayLaw,
    Dirac,
    ModelConfig,
    PopulationParams,
    SigmoidKind,
    SigmoidSpec,
    activation_slope,
    delay_law_from_dict,
)
from .errors import ConfigError, DivergenceError
from .grid import SimGrid
from .meanfield import classify_series, classify_trajectory, default_transient, integrate_moments
from .network import (
    ChaoticGaussian,
    FrozenHistory,
    IntervalPositions,
    SampledDelays,
    build_realization,
    simulate_network,
)

COMMANDS = ("simulate-network", "simulate-meanfield", "hopf-locus", "sweep", "convergence")
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4
MAX_SWEEP_CELLS = 10_000
DEFAULT_HISTORY_MU0 = 0.01
NOISY_PROMINENCE = 0.3
SWEEPABLE = ("tau", "delta", "a", "tau_s", "lambda", "theta", "input", "j_bar", "sigma", "gain")
_LAW_FIELDS = {"dirac": ("tau",), "uniform": ("tau", "delta"), "interval": ("a", "tau_s"), "empirical": ("samples",)}
_REQUIRED = object()


# ---------------------------------------------------------------------------
# Strict JSON reading


class _Section:
    """Typed access to one JSON object; tracks defaults and unknown keys."""

    def __init__(self, data, path: str, defaults: list):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a JSON object")
        self.data = data
        self.path = path
        self.defaults = defaults
        self.resolved: dict = {}

    def _name(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, kind: str, default=_REQUIRED):
        name = self._name(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{name}: required field is missing")
            self.defaults.append(name)
            self.resolved[key] = default
            return default
        val = _coerce(self.data[key], kind, name)
        self.resolved[key] = val
        return val

    def raw(self, key: str, default=_REQUIRED):
        name = self._name(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{name}: required field is missing")
            return default
        return self.data[key]

    def section(self, key: str, required: bool = False) -> "_Section | None":
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._name(key)}: required section is missing")
            return None
        sub = _Section(self.data[key], self._name(key), self.defaults)
        self.resolved[key] = sub.resolved
        return sub

    def finish(self, extra=()) -> None:
        known = set(self.resolved) | set(extra)
        unknown = sorted(set(self.data) - known)
        if unknown:
            raise ConfigError(f"{self.path or 'config'}: unknown key(s) {', '.join(unknown)}")


def _coerce(val, kind: str, name: str):
    if kind == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(f"{name}: expected a finite number, got {val!r}")
        return float(val)
    if kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{name}: expected an integer, got {val!r}")
        return int(val)
    if kind == "str":
        if not isinstance(val, str):
            raise ConfigError(f"{name}: expected a string, got {val!r}")
        return val
    if kind == "bool":
        if not isinstance(val, bool):
            raise ConfigError(f"{name}: expected true or false, got {val!r}")
        return val
    return val


def _pairs_no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")


def parse_json(text: str, source: str = "<config>"):
    try:
        return json.loads(text, object_pairs_hook=_pairs_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# Model and experiment specification


def _matrix(val, p: int, name: str) -> np.ndarray:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        arr = np.full((p, p), float(val))
    else:
        try:
            arr = np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number or a {p}x{p} matrix") from None
    if arr.shape != (p, p) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: expected a number or a finite {p}x{p} matrix")
    return arr


def _parse_law(val, name: str, defaults: list) -> tuple[DelayLaw, dict]:
    sec = _Section(val, name, defaults)
    kind = sec.get("kind", "str")
    if kind not in _LAW_FIELDS:
        raise ConfigError(f"{name}.kind: unknown delay law {kind!r}; expected one of {sorted(_LAW_FIELDS)}")
    args = {}
    for f in _LAW_FIELDS[kind]:
        if f == "samples":
            s = sec.get(f, "list")
            if not isinstance(s, list) or not s:
                raise ConfigError(f"{name}.samples: expected a non-empty list of numbers")
            args[f] = [_coerce(x, "float", f"{name}.samples") for x in s]
        elif f == "tau_s":
            args[f] = sec.get(f, "float", 0.0)
        else:
            args[f] = sec.get(f, "float")
    sec.finish()
    try:
        law = delay_law_from_dict({"kind": kind, **args})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return law, sec.resolved


def parse_model(data, defaults: list, path: str = "model") -> tuple[ModelConfig, dict]:
    sec = _Section(data, path, defaults)
    pops_raw = sec.raw("populations")
    if not isinstance(pops_raw, list) or not pops_raw:
        raise ConfigError(f"{path}.populations: expected a non-empty list")
    pops, pops_res = [], []
    for i, item in enumerate(pops_raw):
        ps = _Section(item, f"{path}.populations[{i}]", defaults)
        theta = ps.get("theta", "float")
        lam = ps.get("lambda", "float", 0.0)
        inp = ps.get("input", "float", 0.0)
        ps.finish()
        try:
            pops.append(PopulationParams(theta, lam, inp))
        except ValueError as exc:
            raise ConfigError(f"{path}.populations[{i}]: {exc}") from None
        pops_res.append(ps.resolved)
    sec.resolved["populations"] = pops_res
    p = len(pops)

    cs = sec.section("connectivity", required=True)
    jb = _matrix(cs.get("j_bar", "any"), p, f"{path}.connectivity.j_bar")
    sg = _matrix(cs.get("sigma", "any", 0.0), p, f"{path}.connectivity.sigma")
    cs.finish()
    try:
        conn = Connectivity(jb, sg)
    except ValueError as exc:
        raise ConfigError(f"{path}.connectivity: {exc}") from None

    d_raw = sec.raw("delays")
    if isinstance(d_raw, dict):
        law, res = _parse_law(d_raw, f"{path}.delays", defaults)
        delays = tuple((law,) * p for _ in range(p))
        sec.resolved["delays"] = res
    elif isinstance(d_raw, list) and len(d_raw) == p and all(isinstance(r, list) and len(r) == p for r in d_raw):
        rows, res_rows = [], []
        for a, r in enumerate(d_raw):
            parsed = [_parse_law(x, f"{path}.delays[{a}][{g}]", defaults) for g, x in enumerate(r)]
            rows.append(tuple(l for l, _ in parsed))
            res_rows.append([res for _, res in parsed])
        delays = tuple(rows)
        sec.resolved["delays"] = res_rows
    else:
        raise ConfigError(f"{path}.delays: expected a delay law object or a {p}x{p} list of them")

    ss = sec.section("sigmoid")
    if ss is None:
        defaults.append(f"{path}.sigmoid")
        sec.resolved["sigmoid"] = {"kind": SigmoidKind.ERF_UNIT_SLOPE.value, "gain": 1.0}
        sig = SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE, 1.0)
    else:
        kind = ss.get("kind", "str", SigmoidKind.ERF_UNIT_SLOPE.value)
        gain = ss.get("gain", "float", 1.0)
        ss.finish()
        try:
            sig = SigmoidSpec(SigmoidKind(kind), gain)
        except ValueError as exc:
            raise ConfigError(f"{path}.sigmoid: {exc}") from None
    sec.finish(extra=("populations", "delays"))
    try:
        model = ModelConfig(tuple(pops), conn, delays, sig)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return model, sec.resolved


def parse_range(val, name: str) -> np.ndarray:
    """A list of numbers, ``{start, stop, num}`` or ``{start, stop, step}`` (inclusive)."""
    if isinstance(val, list):
        arr = np.array([_coerce(x, "float", name) for x in val])
    elif isinstance(val, dict):
        sec = _Section(val, name, [])
        start = sec.get("start", "float")
        stop = sec.get("stop", "float")
        if sec.has("num") == sec.has("step"):
            raise ConfigError(f"{name}: give exactly one of num or step")
        if sec.has("num"):
            num = sec.get("num", "int")
            if num < 1:
                raise ConfigError(f"{name}.num: must be >= 1")
            arr = np.linspace(start, stop, num)
        else:
            step = sec.get("step", "float")
            if step <= 0:
                raise ConfigError(f"{name}.step: must be > 0")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            arr = np.round(start + step * np.arange(max(n, 0)), 12)
        sec.finish()
    else:
        raise ConfigError(f"{name}: expected a list or a range object")
    if arr.size == 0:
        raise ConfigError(f"{name}: empty range")
    return arr


@dataclass
class ExperimentSpec:
    command: str
    model: ModelConfig
    grid: SimGrid
    n_nodes: int
    seed: int
    output_dir: str | None
    formats: tuple
    options: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)
    defaults: list = field(default_factory=list)


def _parse_init(sec: _Section | None, name: str, defaults: list):
    if sec is None:
        defaults.append(name)
        return ChaoticGaussian(0.0, 0.0), {"kind": "chaotic", "mu0": 0.0, "v0": 0.0}
    kind = sec.get("kind", "str", "chaotic")
    if kind == "chaotic":
        mu0 = sec.get("mu0", "float", 0.0)
        v0 = sec.get("v0", "float", 0.0)
        if v0 < 0:
            raise ConfigError(f"{name}.v0: must be >= 0")
        init = ChaoticGaussian(mu0, v0)
    elif kind == "frozen":
        init = FrozenHistory(sec.get("value", "float", 0.0))
    else:
        raise ConfigError(f"{name}.kind: expected 'chaotic' or 'frozen', got {kind!r}")
    sec.finish()
    return init, sec.resolved


def _parse_topology(val: str, model: ModelConfig, name: str):
    if val == "sampled":
        return SampledDelays()
    if val == "interval":
        law = model.delays[0][0]
        if law.kind != "interval":
            raise ConfigError(f"{name}: interval topology needs interval delay laws")
        return IntervalPositions(law.a, law.tau_s)
    raise ConfigError(f"{name}: expected 'sampled' or 'interval', got {val!r}")


def build_spec(data, command: str, seed_override: int | None = None, source: str = "<config>") -> ExperimentSpec:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    defaults: list = []
    top = _Section(data, "", defaults)
    if top.has("command") and top.get("command", "str") != command:
        raise ConfigError(f"command: config is for {top.data['command']!r}, invoked as {command!r}")
    model, model_res = parse_model(top.raw("model"), defaults)
    top.resolved["model"] = model_res

    num = top.section("numerics") or _Section({}, "numerics", defaults)
    top.resolved["numerics"] = num.resolved
    dt = num.get("dt", "float", 1e-3)
    t_end = num.get("t_end", "float", 5.0 if command == "convergence" else 100.0)
    n_nodes = num.get("quadrature_nodes", "int", 32)
    seed = num.get("seed", "int", 0)
    num.finish()
    if seed_override is not None:
        seed = int(seed_override)
        num.resolved["seed"] = seed
        if "numerics.seed" in defaults:
            defaults.remove("numerics.seed")
    if seed < 0:
        raise ConfigError("numerics.seed: must be >= 0")
    if n_nodes < 1:
        raise ConfigError("numerics.quadrature_nodes: must be >= 1")
    try:
        grid = SimGrid(dt, t_end)
        if command in ("simulate-network", "simulate-meanfield", "convergence"):
            grid.check_delays(model.tau_min, model.tau_max)
    except ValueError as exc:
        raise ConfigError(f"numerics: {exc}") from None

    opts: dict = {}
    mf = top.section("meanfield")
    if mf is not None:
        opts["history"] = (mf.get("mu0", "float", DEFAULT_HISTORY_MU0), mf.get("v0", "float", None))
        if mf.has("window"):
            w = mf.get("window", "list")
            if not (isinstance(w, list) and len(w) == 2):
                raise ConfigError("meanfield.window: expected [t1, t2]")
            opts["window"] = tuple(_coerce(x, "float", "meanfield.window") for x in w)
        mf.finish()
    else:
        opts["history"] = (DEFAULT_HISTORY_MU0, None)
    if opts["history"][1] is not None and opts["history"][1] < 0:
        raise ConfigError("meanfield.v0: must be >= 0")

    net = top.section("network")
    if net is not None:
        sizes = net.get("sizes", "list")
        opts["pop_sizes"] = [_coerce(n, "int", "network.sizes") for n in sizes]
        if len(opts["pop_sizes"]) != model.n_populations or min(opts["pop_sizes"]) < 1:
            raise ConfigError(f"network.sizes: expected {model.n_populations} positive integers")
        opts["topology"] = _parse_topology(net.get("topology", "str", "sampled"), model, "network.topology")
        opts["init"], net.resolved["init"] = _parse_init(net.section("init"), "network.init", defaults)
        opts["record"] = net.get("record", "int", 0)
        opts["output_stride"] = net.get("output_stride", "int", max(1, grid.n_steps // 2000))
        if opts["output_stride"] < 1 or opts["record"] < 0:
            raise ConfigError("network: record must be >= 0 and output_stride >= 1")
        net.finish(extra=("init",))
    elif command == "simulate-network":
        raise ConfigError("network: required section is missing for simulate-network")

    loc = top.section("locus")
    if loc is not None:
        opts["locus_law"] = loc.get("law", "str", model.delays[0][0].kind)
        if opts["locus_law"] not in ("dirac", "uniform", "interval"):
            raise ConfigError("locus.law: expected 'dirac', 'uniform' or 'interval'")
        for key in ("lambda", "omega", "a"):
            if loc.has(key):
                opts[f"locus_{key}"] = parse_range(loc.get(key, "any"), f"locus.{key}")
        br = loc.get("branches", "list", [0, 1, 2, 3] if opts["locus_law"] == "interval" else [0])
        opts["branches"] = [_coerce(b, "int", "locus.branches") for b in br]
        if any(b < 0 for b in opts["branches"]):
            raise ConfigError("locus.branches: must be >= 0")
        loc.finish()
    elif command == "hopf-locus":
        raise ConfigError("locus: required section is missing for hopf-locus")
    if command == "hopf-locus":
        law = opts["locus_law"]
        need = "locus_lambda" if law == "dirac" else "locus_omega"
        if need not in opts:
            raise ConfigError(f"locus.{need[6:]}: required for a {law} locus")

    sw = top.section("sweep")
    if sw is not None:
        ps = sw.section("params", required=True)
        names = list(ps.data)
        if not 1 <= len(names) <= 2:
            raise ConfigError("sweep.params: sweep one or two parameters")
        axes = {}
        for nm in names:
            if nm not in SWEEPABLE:
                raise ConfigError(f"sweep.params.{nm}: not sweepable; expected one of {', '.join(SWEEPABLE)}")
            axes[nm] = parse_range(ps.get(nm, "any"), f"sweep.params.{nm}")
            ps.resolved[nm] = axes[nm].tolist()
        ps.finish()
        sw.finish()
        cells = int(np.prod([a.size for a in axes.values()]))
        if cells > MAX_SWEEP_CELLS:
            raise ConfigError(f"sweep.params: {cells} cells exceeds the limit of {MAX_SWEEP_CELLS}")
        for nm in names:
            _model_with(model_res, {nm: float(axes[nm][0])}, check_only=True)
        opts["axes"] = axes
    elif command == "sweep":
        raise ConfigError("sweep: required section is missing for sweep")

    cv = top.section("convergence")
    if cv is not None:
        opts["sizes"] = [_coerce(n, "int", "convergence.sizes") for n in cv.get("sizes", "list")]
        if len(opts["sizes"]) < 2 or len(set(opts["sizes"])) != len(opts["sizes"]) or min(opts["sizes"]) < 2:
            raise ConfigError("convergence.sizes: need at least two distinct sizes >= 2")
        opts["trials"] = cv.get("trials", "int", 8)
        if opts["trials"] < 4:
            raise ConfigError("convergence.trials: must be >= 4")
        ratios = cv.get("pop_ratios", "any", None)
        if ratios is not None:
            if not (isinstance(ratios, list) and len(ratios) == model.n_populations):
                raise ConfigError(f"convergence.pop_ratios: expected {model.n_populations} numbers")
            ratios = [_coerce(r, "float", "convergence.pop_ratios") for r in ratios]
            if min(ratios) <= 0:
                raise ConfigError("convergence.pop_ratios: must be > 0")
        opts["pop_ratios"] = ratios
        opts["topology"] = _parse_topology(cv.get("topology", "str", "sampled"), model, "convergence.topology")
        init_sec = cv.section("init")
        opts["conv_init"] = None if init_sec is None else _parse_init(init_sec, "convergence.init", defaults)[0]
        if init_sec is not None and not isinstance(opts["conv_init"], ChaoticGaussian):
            raise ConfigError("convergence.init: must be a chaotic initial law")
        cv.finish(extra=("init",))
    elif command == "convergence":
        raise ConfigError("convergence: required section is missing for convergence")

    out = top.section("output")
    out_dir, formats = None, ["csv"]
    if out is not None:
        out_dir = out.get("dir", "str", None)
        formats = out.get("formats", "list", ["csv"])
        if not set(formats) <= {"csv", "svg"} or "csv" not in formats:
            raise ConfigError("output.formats: must contain 'csv' and optionally 'svg'")
        out.finish()
    top.finish(extra=("model", "numerics"))
    return ExperimentSpec(
        command, model, grid, n_nodes, seed, out_dir, tuple(formats), opts, top.resolved, defaults
    )


def load_config(path, command: str | None = None, seed_override: int | None = None) -> ExperimentSpec:
    """Read and validate a JSON experiment file.

    ``command`` defaults to the file's ``"command"`` entry.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    data = parse_json(text, str(path))
    if command is None:
        if not isinstance(data, dict) or "command" not in data:
            raise ConfigError(f"{path}: no command given and none in the file")
        command = data["command"]
    return build_spec(data, command, seed_override, str(path))


def _model_with(model_res: dict, overrides: dict, check_only: bool = False):
    """Re-parse a resolved model dictionary with swept parameters substituted."""
    m = copy.deepcopy(model_res)
    laws = [m["delays"]] if isinstance(m["delays"], dict) else [x for row in m["delays"] for x in row]
    for name, val in overrides.items():
        if name in ("tau", "delta", "a", "tau_s"):
            hits = [law for law in laws if name in _LAW_FIELDS[law["kind"]]]
            if not hits:
                raise ConfigError(f"sweep.params.{name}: no delay law in the model has a {name!r} parameter")
            for law in hits:
                law[name] = val
        elif name in ("lambda", "theta", "input"):
            for pop in m["populations"]:
                pop[name] = val
        elif name in ("j_bar", "sigma"):
            if len(m["populations"]) != 1:
                raise ConfigError(f"sweep.params.{name}: only sweepable for one-population models")
            m["connectivity"][name] = val
        elif name == "gain":
            m["sigmoid"]["gain"] = val
    if check_only:
        return None
    return parse_model(m, [])[0]


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return "" if x is None else str(x)


class RunWriter:
    """Writes into one fresh run directory and tracks files for the manifest."""

    def __init__(self, base: str | os.PathLike):
        base = Path(base)
        target = base
        if target.exists():
            stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
            target = base.with_name(f"{base.name}-{stamp}")
            i = 1
            while target.exists():
                target = base.with_name(f"{base.name}-{stamp}-{i}")
                i += 1
        target.mkdir(parents=True)
        self.dir = target
        self.files: dict = {}

    def csv(self, name: str, header, rows) -> int:
        n = 0
        with open(self.dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
                n += 1
        self.files[name] = {"rows": n, "columns": list(header)}
        return n

    def text(self, name: str, content: str) -> None:
        (self.dir / name).write_text(content, encoding="utf-8")
        self.files[name] = {}

    def manifest(self, payload: dict) -> None:
        payload = dict(payload, files=self.files)
        with open(self.dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _classification_dict(c) -> dict:
    return {
        "regime": c.regime.value,
        "pulsation": c.pulsation,
        "amplitude": c.amplitude,
        "envelope_rate": c.envelope_rate,
        "detail": c.detail,
    }


def _threads() -> int:
    raw = os.environ.get("DELAYFIELD_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DELAYFIELD_THREADS: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"DELAYFIELD_THREADS: expected a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# Commands


def _history(spec: ExperimentSpec, model: ModelConfig):
    mu0, v0 = spec.options["history"]
    if v0 is None:
        v0 = model.lam**2 * model.theta / 2
    return mu0, v0


def _window(spec: ExperimentSpec, model: ModelConfig, t_end: float):
    return spec.options.get("window") or (min(default_transient(model), 0.5 * t_end), t_end)


def _run_meanfield(spec: ExperimentSpec, out: RunWriter, plots: bool) -> dict:
    traj = integrate_moments(spec.model, spec.grid, history=_history(spec, spec.model), n_nodes=spec.n_nodes)
    t = traj.times
    p = spec.model.n_populations
    k = max(1, spec.grid.n_steps // 5000)
    idx = np.flatnonzero(t >= 0)[::k]
    rows = ((t[i], a, traj.mu[i, a], traj.v[i, a]) for i in idx for a in range(p))
    out.csv("meanfield.csv", ("t", "pop", "mu", "v"), rows)
    window = _window(spec, spec.model, traj.t_end)
    cls = [dict(population=a, **_classification_dict(classify_trajectory(traj, window, a))) for a in range(p)]
    if plots:
        series = [(t[idx], traj.mu[idx, a], f"mu pop {a}") for a in range(p)]
        out.text("meanfield_mu.svg", svg.line_plot(series, "t", "mu", "mean-field mean"))
        series = [(t[idx], traj.v[idx, a], f"v pop {a}") for a in range(p)]
        out.text("meanfield_v.svg", svg.line_plot(series, "t", "v", "mean-field variance"))
    return {"classification": cls, "window": list(window), "output_stride": k}


def _run_network(spec: ExperimentSpec, out: RunWriter, plots: bool) -> dict:
    o = spec.options
    real = build_realization(spec.model, o["pop_sizes"], o["topology"], seed=spec.seed)
    n_rec = min(o["record"], real.n_neurons)
    stride = o["output_stride"]
    traj = simulate_network(spec.model, real, spec.grid, o["init"], seed=spec.seed, record=range(n_rec), stride=stride)
    t = traj.times
    p = spec.model.n_populations
    idx = np.arange(0, t.size, stride)
    mean, var = traj.pop_mean, traj.pop_var
    out.csv("network.csv", ("t", "pop", "emp_mean", "emp_var"),
            ((t[i], a, mean[i, a], var[i, a]) for i in idx for a in range(p)))
    if n_rec:
        rt = traj.record_times
        out.csv("neurons.csv", ("t", "neuron", "x"),
                ((rt[r], int(traj.recorded[q]), traj.states[r, q]) for r in range(rt.size) for q in range(n_rec)))
    window = _window(spec, spec.model, spec.grid.t_end)
    sel = (t >= window[0]) & (t <= window[1])
    cls = [dict(population=a, **_classification_dict(classify_series(t[sel], mean[sel, a], prominence=NOISY_PROMINENCE))) for a in range(p)]
    if plots:
        series = [(t[idx], mean[idx, a], f"pop {a}") for a in range(p)]
        out.text("network_mean.svg", svg.line_plot(series, "t", "empirical mean", "network"))
    return {"classification": cls, "window": list(window), "n_neurons": real.n_neurons, "output_stride": stride}


def _slope_at(model: ModelConfig, lam: float) -> float:
    pop = model.populations[0]
    return float(model.connectivity.j_bar[0, 0] * activation_slope(model.sigmoid, 0.5 * lam**2 * pop.theta))


def _run_locus(spec: ExperimentSpec, out: RunWriter, plots: bool) -> dict:
    o = spec.options
    model = spec.model
    theta = model.populations[0].theta
    law = o["locus_law"]
    res: dict = {"law": law}
    if law == "dirac":
        rows = []
        for lam in o["locus_lambda"]:
            k = _slope_at(model, float(lam))
            hd = hopf_dirac(theta, k) if k < 0 else None
            if hd is None:
                continue
            omega, tau = hd
            r = abs(dispersion_residual(DispersionContext(theta, k, Dirac(tau)), 1j * omega))
            rows.append((float(lam), omega, tau, r))
        out.csv("hopf_locus.csv", ("lambda", "omega", "tau_H", "residual"), rows)
        if plots and rows:
            arr = np.array(rows)
            out.text("hopf_locus.svg", svg.line_plot([(arr[:, 0], arr[:, 2], "tau_H")], "lambda", "tau", "Hopf locus"))
        res["points"] = len(rows)
        return res

    k = DispersionContext.from_config(model).k
    if k >= 0:
        raise ConfigError("locus: Hopf loci need an inhibitory slope (j_bar < 0)")
    if law == "uniform":
        pts = [p for b in o["branches"] for p in hopf_uniform(theta, k, o["locus_omega"], branch=b)]
        rows = [(p.params["Omega"], p.params["tau"], p.params["delta"], p.branch, p.omega, p.residual) for p in pts]
        out.csv("hopf_locus.csv", ("Omega", "tau", "delta", "branch", "omega", "residual"), rows)
        if plots and rows:
            series = [(np.array([r[1] for r in rows if r[3] == b]), np.array([r[2] for r in rows if r[3] == b]),
                       f"branch {b}") for b in o["branches"]]
            out.text("hopf_locus.svg", svg.line_plot(series, "tau", "delta", "Hopf locus (uniform)"))
    else:
        pts = list(hopf_interval(theta, k, o["locus_omega"], o["branches"]))
        rows = [(p.params["Omega"], p.params["a"], p.params["tau_s"], p.branch, p.omega, p.residual) for p in pts]
        out.csv("hopf_locus.csv", ("Omega", "a", "tau_s", "branch", "omega", "residual"), rows)
        series = []
        if "locus_a" in o:
            first = interval_first_curve(theta, k, o["locus_a"])
            out.csv("first_curve.csv", ("a", "tau_s", "omega", "residual"),
                    ((p.params["a"], p.params["tau_s"], p.omega, p.residual) for p in first))
            res["first_curve_min_tau_s"] = float(first.column("tau_s").min()) if len(first) else None
            series.append((first.column("a"), first.column("tau_s"), "first curve"))
        if plots and rows:
            for b in o["branches"]:
                sel = [r for r in rows if r[3] == b]
                series.append((np.array([r[1] for r in sel]), np.array([r[2] for r in sel]), f"branch {b}"))
            out.text("hopf_locus.svg", svg.line_plot(series, "a", "tau_s", "Hopf locus (interval)"))
    res["points"] = len(rows)
    res["slope_factor"] = k
    return res


def _sweep_cell(spec: ExperimentSpec, overrides: dict):
    try:
        model = _model_with(spec.resolved["model"], overrides)
        spec.grid.check_delays(model.tau_min, model.tau_max)
        traj = integrate_moments(model, spec.grid, history=_history(spec, model), n_nodes=spec.n_nodes)
        c = classify_trajectory(traj, _window(spec, model, traj.t_end))
        return c, ""
    except (ConfigError, ValueError, DivergenceError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _run_sweep(spec: ExperimentSpec, out: RunWriter, plots: bool) -> dict:
    axes = spec.options["axes"]
    names = list(axes)
    mesh = np.meshgrid(*axes.values(), indexing="ij")
    cells = [dict(zip(names, (float(m.flat[i]) for m in mesh))) for i in range(mesh[0].size)]
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        results = list(ex.map(lambda c: _sweep_cell(spec, c), cells))
    rows, failures = [], 0
    for cell, (c, err) in zip(cells, results):
        vals = [cell[n] for n in names]
        if c is None:
            failures += 1
            rows.append((*vals, "Failed", math.nan, math.nan, math.nan, err))
        else:
            rows.append((*vals, c.regime.value, c.pulsation, c.amplitude, c.envelope_rate, c.detail))
    out.csv("sweep.csv", (*names, "regime", "pulsation", "amplitude", "envelope_rate", "detail"), rows)
    if plots:
        osc = np.array([r[len(names)] == "Oscillatory" for r in rows])
        if len(names) == 2:
            x = np.array([r[0] for r in rows])
            y = np.array([r[1] for r in rows])
            out.text("sweep.svg", svg.cell_plot(x, y, osc, names[0], names[1], "oscillatory cells"))
        else:
            x = np.array([r[0] for r in rows])
            puls = np.array([r[2] if o else math.nan for r, o in zip(rows, osc)])
            out.text("sweep.svg", svg.line_plot([(x, puls, "pulsation")], names[0], "pulsation", "sweep"))
    regimes = [r[len(names)] for r in rows]
    return {
        "cells": len(rows),
        "failures": failures,
        "counts": {k: regimes.count(k) for k in sorted(set(regimes))},
    }


def _run_convergence(spec: ExperimentSpec, out: RunWriter, plots: bool) -> dict:
    o = spec.options
    rep = coupling_experiment(
        spec.model, o["sizes"], trials=o["trials"], T=spec.grid.t_end, dt=spec.grid.dt, seed=spec.seed,
        topology=o["topology"], pop_ratios=o["pop_ratios"], init=o["conv_init"], workers=_threads(),
    )
    out.csv("convergence.csv", ("n", "error", "stderr"), rep.rows())
    if plots:
        ok = rep.errors > 0
        out.text("convergence.svg", svg.line_plot(
            [(np.log10(rep.sizes[ok]), np.log10(rep.errors[ok]), "log10 error")],
            "log10 N", "log10 error", "coupling error"))
    return {
        "slope": rep.slope,
        "slope_ci95": list(rep.slope_ci),
        "constant": rep.constant,
        "failures": rep.failures.tolist(),
        "exact_coupling": rep.exact_coupling,
    }


_RUNNERS = {
    "simulate-meanfield": _run_meanfield,
    "simulate-network": _run_network,
    "hopf-locus": _run_locus,
    "sweep": _run_sweep,
    "convergence": _run_convergence,
}


def run(spec: ExperimentSpec, out_dir: str | None = None) -> Path:
    """Execute ``spec`` and return the run directory."""
    writer = RunWriter(out_dir or spec.output_dir or Path("runs") / spec.command)
    results = _RUNNERS[spec.command](spec, writer, "svg" in spec.formats)
    writer.manifest({
        "tool": "delayfield",
        "version": __version__,
        "command": spec.command,
        "seed": spec.seed,
        "config": spec.resolved,
        "defaults_applied": spec.defaults,
        "results": results,
    })
    return writer.dir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="delayfield", description="Delayed random neural field experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment file")
    parser.add_argument("--out", default=None, help="output directory (a fresh one is created on collision)")
    parser.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    args = parser.parse_args(argv)
    try:
        spec = load_config(args.config, args.command, args.seed)
        if args.svg and "svg" not in spec.formats:
            spec.formats = (*spec.formats, "svg")
        path = run(spec, args.out)
    except ConfigError as exc:
        print(f"delayfield: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"delayfield: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"delayfield: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"delayfield: error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
