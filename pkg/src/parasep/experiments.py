"""Configuration-driven studies: error sweeps, nonintrusivity audit, reduced basis runs.

Configurations are JSON documents; see ``parasep/profiles`` for complete
examples. Every run writes ``summary.json`` (with the resolved
configuration embedded) next to its CSV files. CSV files never contain
wall-clock data, so identical configurations give identical bytes.
"""

from __future__ import annotations

import copy
import csv
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .eim import build_interpolant
from .exceptions import ParasepError
from .gallery import (
    Fem1DProblem,
    KernelProblem,
    Mesh1D,
    l2_relative_error,
    rel_euclidean_error,
    rel_frobenius_error,
    solve_dense,
)
from .reduced_basis import OpCounter, greedy_build, online_solve, project
from .separated import (
    build_weakly_intrusive,
    build_z_table,
    instantiate,
    load_model,
    resolve_kernel,
    save_model,
    select_snapshots,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AUDIT = 4

DEFAULTS = {
    "name": "study",
    "problem": "fem1d",
    "fem1d": {"a": -3.0, "b": 3.0, "h_x": 0.015, "kernel": "exp_mu_x"},
    "kernel_problem": {"n_points": 200, "radius": 2.0, "n_r": 2000, "source": [0.0, 0.0, 6.0]},
    "mu_trial": {"start": 1.0, "stop": 3.0, "step": 0.005},
    "dg_list": [16],
    "dz_rule": {"offset": 1},
    "eim_tol": 0.0,
    "validation_stride": 10,
    "payload": "matrix",
    "compare_dmax": False,
    "weakly_intrusive_oracle": False,
    "save_model": False,
    "rbm": {"n_max": 10, "tol": 0.0, "dg": 16, "dz": 17, "train_stride": 1},
    "audit": {"inject_extra_calls": 0},
    "output_dir": "results",
}


class ConfigError(ParasepError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class AuditViolation(ParasepError):
    """The nonintrusivity contract was broken during a run."""


# sections replaced wholesale instead of merged key by key
_ATOMIC = {"dz_rule", "mu_trial"}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in _ATOMIC and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def profile_path(name: str) -> Path:
    """Path of a configuration profile shipped with the package."""
    return Path(str(resources.files("parasep") / "profiles" / f"{name}.json"))


def load_config(source) -> dict:
    """Read, merge with defaults and validate a configuration.

    ``source`` is a dict, a path to a JSON file, or the name of a shipped
    profile (``paper-1d``, ``kernel``...).
    """
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if not path.exists() and profile_path(str(source)).exists():
            path = profile_path(str(source))
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"configuration file not found: {source}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {source}: {exc}") from None
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["problem"] not in ("fem1d", "kernel"):
        raise ConfigError(f"problem must be 'fem1d' or 'kernel', got {cfg['problem']!r}")
    trial_set(cfg)
    if cfg["problem"] == "fem1d":
        f = cfg["fem1d"]
        if not f["h_x"] > 0 or not f["b"] > f["a"]:
            raise ConfigError("fem1d needs h_x > 0 and b > a")
        try:
            resolve_kernel(f["kernel"])
        except ParasepError as exc:
            raise ConfigError(str(exc)) from None
    else:
        k = cfg["kernel_problem"]
        if k["n_points"] < 2 or k["n_r"] < 1 or not k["radius"] > 0:
            raise ConfigError("kernel_problem needs n_points >= 2, n_r >= 1, radius > 0")
    dgs = cfg["dg_list"]
    if not dgs or any((not isinstance(d, int)) or d < 1 for d in dgs):
        raise ConfigError("dg_list must be a nonempty list of positive integers")
    rule = cfg["dz_rule"]
    if not isinstance(rule, dict) or len(rule) != 1 or next(iter(rule)) not in ("offset", "absolute", "dmax"):
        raise ConfigError("dz_rule must be one of {'offset': k}, {'absolute': k}, {'dmax': true}")
    if cfg["validation_stride"] < 1:
        raise ConfigError("validation_stride must be positive")
    if cfg["eim_tol"] is not None and cfg["eim_tol"] < 0:
        raise ConfigError("eim_tol must be nonnegative or null")
    if cfg["payload"] != "matrix":
        raise ConfigError("studies store full matrices; payload must be 'matrix'")
    rbm = cfg["rbm"]
    if rbm["n_max"] < 1 or rbm["dg"] < 1 or rbm["dz"] < 1 or rbm["train_stride"] < 1:
        raise ConfigError("rbm settings must be positive")


def trial_set(cfg):
    """Parameter trial set ``start, start + step, ..., stop`` (both ends included)."""
    trial = cfg["mu_trial"]
    start, stop, step = float(trial["start"]), float(trial["stop"]), float(trial["step"])
    if not step > 0 or not stop > start:
        raise ConfigError("mu_trial needs step > 0 and stop > start")
    n = int(round((stop - start) / step)) + 1
    if abs(start + (n - 1) * step - stop) > 1e-9 * max(1.0, abs(stop)):
        raise ConfigError("mu_trial step does not divide [start, stop]")
    return np.linspace(start, stop, n)


def resolve_dz(cfg, dg, d_max):
    kind, value = next(iter(cfg["dz_rule"].items()))
    dz = {"offset": lambda: dg + value, "absolute": lambda: value, "dmax": lambda: d_max}[kind]()
    if not 1 <= dz <= d_max:
        raise ConfigError(f"d^z={dz} is outside [1, d_max={d_max}] for d^g={dg}")
    return int(dz)


def _threads():
    try:
        return max(1, int(os.environ.get("PARASEP_THREADS", "1")))
    except ValueError:
        return 1


def _sweep(func, mus):
    """Map ``func`` over ``mus`` on a bounded pool; results stay in input order."""
    workers = _threads()
    if workers == 1:
        return [func(mu) for mu in mus]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, mus))


# -- problem setup ------------------------------------------------------------

class Setup:
    """The problem, its EIM grid and the error metrics for one configuration."""

    def __init__(self, cfg, h_scale=1.0):
        self.cfg = cfg
        self.mu_trial = trial_set(cfg)
        if cfg["problem"] == "fem1d":
            f = cfg["fem1d"]
            self.problem = Fem1DProblem(
                Mesh1D(f["a"], f["b"], f["h_x"] * h_scale), resolve_kernel(f["kernel"]), f["kernel"]
            )
            self.grid = self.problem.eim_grid(self.mu_trial)
            self.rhs = self.problem.rhs()
            self.mass = self.problem.mass_part()
        else:
            k = cfg["kernel_problem"]
            self.problem = KernelProblem.on_sphere(k["n_points"], k["radius"])
            self.grid = self.problem.eim_grid(self.mu_trial, k["n_r"])
            self.rhs = self.problem.monopole_rhs(k["source"])
            self.mass = None

    def solution_error(self, approx, exact):
        if self.mass is None:
            return rel_euclidean_error(approx, exact)
        return l2_relative_error(approx, exact, self.mass)

    def describe(self):
        p = self.problem
        out = {"kind": self.cfg["problem"], "n": int(p.n), "mu_trial_size": int(self.mu_trial.size)}
        out["grid_shape"] = list(self.grid.shape)
        if isinstance(p, KernelProblem):
            out["diameter"] = p.diameter
        return out


class CountingProvider:
    """Wrap a matrix provider and count its calls."""

    def __init__(self, func):
        self.func = func
        self.calls = 0
        self.parameters = []

    def __call__(self, mu):
        self.calls += 1
        self.parameters.append(float(mu))
        return self.func(mu)


class CountingSplitProvider:
    """Count separate accesses to ``A1_mu`` and ``A0``."""

    def __init__(self, problem):
        self.problem = problem
        self.kernel_calls = 0
        self.mass_calls = 0

    def kernel_part(self, mu):
        self.kernel_calls += 1
        return self.problem.kernel_part(mu)

    def mass_part(self):
        self.mass_calls += 1
        return self.problem.mass_part()


def build_pipeline(setup: Setup, dg, dz_rule_cfg=None, provider=None, tol=None):
    """EIM on the kernel, z-table, EIM on the table and snapshot model."""
    cfg = setup.cfg if dz_rule_cfg is None else dz_rule_cfg
    tol = setup.cfg["eim_tol"] if tol is None else tol
    itp = build_interpolant(setup.grid, dg, tol=tol)
    layout = setup.problem.layout(itp)
    ztable = build_z_table(layout, setup.mu_trial)
    dz = resolve_dz(cfg, itp.d, ztable.d_max)
    selection = select_snapshots(ztable, dz, tol=tol)
    provider = provider or CountingProvider(setup.problem.matrix)
    model = instantiate(selection, ztable, provider)
    return itp, ztable, selection, model, provider


# -- output helpers -----------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_svg(path, x, y, title, ylabel="log10 error"):
    """Minimal line chart of ``log10(y)`` against ``x``."""
    x = np.asarray(x, dtype=float)
    ly = np.log10(np.maximum(np.asarray(y, dtype=float), 1e-300))
    w, h, pad = 480, 320, 50
    lo, hi = np.floor(ly.min()), np.ceil(ly.max())
    if hi == lo:
        hi = lo + 1
    px = pad + (x - x.min()) / max(np.ptp(x), 1e-300) * (w - 2 * pad)
    py = h - pad - (ly - lo) / (hi - lo) * (h - 2 * pad)
    points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    ticks = "".join(
        f'<text x="{pad - 8}" y="{h - pad - (t - lo) / (hi - lo) * (h - 2 * pad) + 4:.1f}" '
        f'font-size="10" text-anchor="end">{int(t)}</text>'
        for t in np.arange(lo, hi + 1)
    )
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">'
        f'<rect width="{w}" height="{h}" fill="white"/>'
        f'<text x="{w / 2}" y="20" font-size="13" text-anchor="middle">{title}</text>'
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>'
        f'<text x="{pad}" y="{h - pad + 16}" font-size="10">{x.min():g}</text>'
        f'<text x="{w - pad}" y="{h - pad + 16}" font-size="10" text-anchor="end">{x.max():g}</text>'
        f'<text x="{w / 2}" y="{h - 12}" font-size="11" text-anchor="middle">mu</text>'
        f'<text x="14" y="{h / 2}" font-size="11" transform="rotate(-90 14 {h / 2})" '
        f'text-anchor="middle">{ylabel}</text>{ticks}'
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{points}"/></svg>'
    )
    Path(path).write_text(svg)


def _stats(values):
    values = np.asarray(values)
    return {"max": float(values.max()), "median": float(np.median(values))}


def _write_summary(out, summary):
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))


# -- studies ----------------------------------------------------------------

def _sweep_errors(setup, model, mus):
    def one(mu):
        A = setup.problem.matrix(mu)
        A_approx = model.approximate(mu)
        u = solve_dense(A, setup.rhs, mu=mu)
        u_approx = solve_dense(A_approx, setup.rhs, mu=mu)
        return rel_frobenius_error(A_approx, A), setup.solution_error(u_approx, u)

    return np.array(_sweep(one, mus))


def run_study(config, svg=False, output_dir=None) -> dict:
    """Error study over the configured list of ``d^g``.

    For each ``d^g``: first-level EIM, z-table, second-level EIM, snapshot
    model, then a sweep over every ``validation_stride``-th trial parameter.
    Writes ``dgXX/matrix_error.csv`` and ``dgXX/solution_error.csv`` per
    ``d^g`` and a top-level ``summary.json``.
    """
    cfg = load_config(config)
    out = Path(output_dir or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    setup = Setup(cfg)
    val = setup.mu_trial[:: cfg["validation_stride"]]
    full = build_interpolant(setup.grid, max(cfg["dg_list"]), tol=cfg["eim_tol"])
    runs = []
    for dg in cfg["dg_list"]:
        itp = full.truncate(min(dg, full.d))
        layout = setup.problem.layout(itp)
        ztable = build_z_table(layout, setup.mu_trial)
        dz = resolve_dz(cfg, itp.d, ztable.d_max)
        selection = select_snapshots(ztable, dz, tol=cfg["eim_tol"])
        provider = CountingProvider(setup.problem.matrix)
        model = instantiate(selection, ztable, provider)
        errs = _sweep_errors(setup, model, val)

        sub = out / f"dg{dg:02d}"
        sub.mkdir(exist_ok=True)
        write_csv(sub / "matrix_error.csv", ["mu", "rel_frobenius_error"], zip(val, errs[:, 0]))
        write_csv(sub / "solution_error.csv", ["mu", "rel_l2_error"], zip(val, errs[:, 1]))
        if svg:
            write_svg(sub / "matrix_error.svg", val, errs[:, 0], f"matrix error, d^g={dg}, d^z={model.d}")
            write_svg(sub / "solution_error.svg", val, errs[:, 1], f"solution error, d^g={dg}, d^z={model.d}")
        if cfg["save_model"]:
            save_model(model, sub / "model")
        run = {
            "dg": itp.d,
            "dz": model.d,
            "d_max": ztable.d_max,
            "provider_calls": provider.calls,
            "mu_z": [float(m) for m in model.mu_sel],
            "p_z": [int(p) for p in model.p_sel],
            "rcond_Z": model.rcond,
            "matrix_error": _stats(errs[:, 0]),
            "solution_error": _stats(errs[:, 1]),
            "eim_g_residuals": itp.residual_history.tolist(),
            "eim_z_residuals": selection.residual_history.tolist(),
        }
        if cfg["compare_dmax"]:
            sel_max = select_snapshots(ztable, ztable.d_max, tol=cfg["eim_tol"])
            model_max = instantiate(sel_max, ztable, setup.problem.matrix)
            errs_max = _sweep_errors(setup, model_max, val)
            write_csv(sub / "matrix_error_dmax.csv", ["mu", "rel_frobenius_error"], zip(val, errs_max[:, 0]))
            ratio = errs[:, 0].max() / errs_max[:, 0].max()
            run["dmax_comparison"] = {
                "dz": model_max.d,
                "matrix_error": _stats(errs_max[:, 0]),
                "solution_error": _stats(errs_max[:, 1]),
                "max_error_ratio": float(ratio),
                "within_10x": bool(ratio <= 10.0),
            }
        runs.append(run)
    summary = {"config": cfg, "problem": setup.describe(), "validation_size": int(val.size), "runs": runs}
    _write_summary(out, summary)
    return summary


def audit(config, output_dir=None, fault=None) -> dict:
    """Check the nonintrusivity contract on an instrumented provider.

    The pipeline is built at the largest configured ``d^g``. Expected counts:
    ``d^z`` full assemblies while instantiating, none while replaying a
    serialized model, and (only with ``weakly_intrusive_oracle``) ``d^g``
    accesses to ``A1`` plus one to ``A0``. ``fault(provider)``, or
    ``audit.inject_extra_calls`` in the configuration, simulates a code path
    assembling at extra parameters.

    The report is written to ``audit.json``; :class:`AuditViolation` is
    raised if any count is off.
    """
    cfg = load_config(config)
    out = Path(output_dir or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    setup = Setup(cfg)
    dg = max(cfg["dg_list"])
    provider = CountingProvider(setup.problem.matrix)
    itp, ztable, selection, model, _ = build_pipeline(setup, dg, provider=provider)
    for _ in range(int(cfg["audit"]["inject_extra_calls"])):
        provider(float(setup.mu_trial[0]))
    if fault is not None:
        fault(provider)
    offline_calls = provider.calls

    report = {
        "dg": itp.d,
        "dz": model.d,
        "full_calls_offline": offline_calls,
        "full_calls_expected": model.d,
        "model_provider_calls": model.provider_calls,
    }
    violations = []
    if offline_calls != model.d or model.provider_calls != model.d:
        violations.append(f"full assembly called {offline_calls} times, expected d^z={model.d}")

    if cfg["weakly_intrusive_oracle"]:
        if cfg["problem"] != "fem1d":
            raise ConfigError("the weakly-intrusive oracle needs split assembly (fem1d only)")
        split = CountingSplitProvider(setup.problem)
        build_weakly_intrusive(model.layout.blocks[0], split)
        report["split_calls"] = {"kernel_part": split.kernel_calls, "mass_part": split.mass_calls}
        report["split_calls_expected"] = itp.d + 1
        if split.kernel_calls + split.mass_calls != itp.d + 1 or split.mass_calls != 1:
            violations.append("split assembly count differs from d^g + 1")
        if provider.calls != offline_calls:
            violations.append("weakly-intrusive oracle triggered full assemblies")

    with tempfile.TemporaryDirectory() as tmp:
        manifest = save_model(model, tmp)
        before = provider.calls
        replayed = load_model(manifest)
        val = setup.mu_trial[:: cfg["validation_stride"]]
        max_diff = max(
            float(np.abs(replayed.approximate(mu) - model.approximate(mu)).max()) for mu in val
        )
        report["full_calls_replay"] = provider.calls - before
        report["replay_max_abs_difference"] = max_diff
    if report["full_calls_replay"] != 0:
        violations.append("online replay assembled matrices")
    report["violations"] = violations
    report["ok"] = not violations
    (out / "audit.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    if violations:
        raise AuditViolation("; ".join(violations))
    return report


def run_rbm(config, output_dir=None, h_scale=1.0) -> dict:
    """Reduced basis pipeline on top of the separated representation.

    Writes ``rbm_error.csv`` (one row per trial parameter, with the online
    operation counts), ``basis/`` (``U.npy`` plus a JSON manifest),
    ``summary.json`` and ``timing.json`` (wall-clock, offline vs online).
    """
    cfg = load_config(config)
    out = Path(output_dir or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rbm = cfg["rbm"]
    setup = Setup(cfg, h_scale=h_scale)
    timing = {}

    t0 = time.perf_counter()
    itp, ztable, selection, model, provider = build_pipeline(
        setup, rbm["dg"], dz_rule_cfg={"dz_rule": {"absolute": rbm["dz"]}}
    )
    timing["offline_separated_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    train = setup.mu_trial[:: rbm["train_stride"]]
    basis = greedy_build(
        setup.problem.matrix, setup.rhs, train, min(rbm["n_max"], train.size), rbm["tol"], setup.mass
    )
    rmodel = project(model, basis, setup.rhs)
    timing["offline_reduced_basis_s"] = time.perf_counter() - t0

    def one(mu):
        counter = OpCounter()
        t = time.perf_counter()
        _, u_hat = online_solve(rmodel, mu, counter=counter)
        elapsed = time.perf_counter() - t
        u = solve_dense(setup.problem.matrix(mu), setup.rhs, mu=mu)
        return setup.solution_error(u_hat, u), counter, elapsed

    results = _sweep(one, setup.mu_trial)
    timing["online_total_s"] = sum(r[2] for r in results)
    timing["online_mean_s"] = timing["online_total_s"] / len(results)
    rows = [
        (mu, err, c["flops"], c["kernel_evals"]) for mu, (err, c, _) in zip(setup.mu_trial, results)
    ]
    write_csv(out / "rbm_error.csv", ["mu", "rel_l2_error", "online_flops", "online_kernel_evals"], rows)

    bdir = out / "basis"
    bdir.mkdir(exist_ok=True)
    np.save(bdir / "U.npy", basis.U)
    basis_manifest = {
        "mu_rb": [float(m) for m in basis.mu_rb],
        "n_hat": basis.n_hat,
        "orthonormality_residual": basis.orthonormality_error(),
        "field": "complex" if np.iscomplexobj(basis.U) else "real",
        "U": "U.npy",
    }
    (bdir / "manifest.json").write_text(json.dumps(basis_manifest, indent=1))

    errors = np.array([r[1] for r in rows])
    summary = {
        "config": cfg,
        "problem": setup.describe(),
        "dg": itp.d,
        "dz": model.d,
        "provider_calls": provider.calls,
        "n_hat": basis.n_hat,
        "mu_rb": [float(m) for m in basis.mu_rb],
        "greedy_max_errors": basis.max_errors.tolist(),
        "greedy_stop": basis.stop_reason,
        "orthonormality_residual": basis.orthonormality_error(),
        "rbm_error": _stats(errors),
        "online_ops": {"flops": int(rows[0][2]), "kernel_evals": int(rows[0][3])},
    }
    _write_summary(out, summary)
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True))
    return summary


def replay(manifest, mu) -> dict:
    """Evaluate a serialized model at ``mu`` without any assembly."""
    model = load_model(manifest)
    beta = model.beta(mu)
    payload = model.combine(beta)
    return {
        "mu": float(mu),
        "beta": [complex(b) if np.iscomplexobj(beta) else float(b) for b in beta],
        "payload_shape": list(payload.shape),
        "frobenius_norm": float(np.linalg.norm(payload)),
        "payload": payload,
    }
