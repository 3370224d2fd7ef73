"""Experiment drivers: error tables, representer convergence, single recoveries.

Configs are JSON objects whose keys mirror :class:`ExperimentConfig`; unknown
keys are rejected. Floats in CSV output use ``%.6g``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IllConditionedGramianWarning, RecoveryError, SolverError
from .fem import assemble_mass, assemble_stiffness, exp_cos_field, h1_error, prolongate
from .functionals import (DEFAULT_EXACT_LEVEL, DEFAULT_EXACT_ORDER, DEFAULT_LOAD_ORDER, DEFAULT_RADIUS,
                          GaussianAverage, PointEval, SensorGrid, grid_centers)
from .linalg import DEFAULT_TOL
from .mesh import MAX_LEVEL, build_mesh
from .recovery import measure_exact, offline, online, recover_from_exact
from .representers import compute_representer

log = logging.getLogger(__name__)

LONG_RUN_LEVEL = 7  # table rows above this level need long_run
EXPERIMENTS = ("table", "representer_convergence", "single_recovery")
KINDS = ("gaussian", "point")


def fmt(x) -> str:
    if x is None:
        return "NA"
    return "%.6g" % x


@dataclass
class ExperimentConfig:
    experiment: str = "table"
    functional: str = "gaussian"
    radius: float = DEFAULT_RADIUS
    m_list: list = field(default_factory=lambda: [4, 9, 16, 25, 36])
    n_list: list = field(default_factory=lambda: [4, 5, 6, 7])
    reference_n: int = 9
    center: list = field(default_factory=lambda: [0.75, 0.5])
    tol: float = DEFAULT_TOL
    load_order: int = DEFAULT_LOAD_ORDER
    exact_order: int = DEFAULT_EXACT_ORDER
    exact_level: int = DEFAULT_EXACT_LEVEL
    data_source: str = "exact"
    out: str | None = None
    seed: int = 0
    long_run: bool = False
    threads: int = 1
    timing: bool = True
    # single_recovery
    m: int = 9
    n: int = 6
    data: list | None = None
    noise_linf: float | None = None
    bundle: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        """Defaults, then the JSON file at ``path`` (if any), then ``overrides``."""
        d = {}
        if path is not None:
            try:
                d = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(d, dict):
                raise ConfigurationError("config file must hold a JSON object")
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}")
        if self.functional not in KINDS:
            raise ConfigurationError(f"functional must be one of {KINDS}")
        if list(self.n_list) != sorted(set(self.n_list)) or not self.n_list:
            raise ConfigurationError("n_list must be non-empty and strictly ascending")
        if any(not isinstance(n, int) or not 1 <= n <= MAX_LEVEL for n in [*self.n_list, self.n, self.reference_n]):
            raise ConfigurationError(f"mesh levels must be integers in [1, {MAX_LEVEL}]")
        for m in [*self.m_list, self.m]:
            grid_centers(m)  # raises for non-squares
        if not 0 < self.tol <= 1e-6:
            raise ConfigurationError("tol must lie in (0, 1e-6]")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if not self.radius > 0:
            raise ConfigurationError("radius must be positive")

    def sensors(self, m: int) -> SensorGrid:
        if self.functional == "gaussian":
            return SensorGrid.gaussian_grid(m, self.radius)
        return SensorGrid.point_grid(m)

    def single_functional(self):
        c = tuple(self.center)
        return GaussianAverage(c, self.radius) if self.functional == "gaussian" else PointEval(c)


@dataclass
class TableCell:
    n: int
    m: int
    error: float | None
    gramian_cond: float | None
    M_hat: float | None
    wall_ms: float
    failure: str | None = None


@dataclass
class ErrorTable:
    config: ExperimentConfig
    cells: list

    def value(self, m: int, n: int) -> float | None:
        for c in self.cells:
            if c.m == m and c.n == n:
                return c.error
        raise KeyError((m, n))

    def cell(self, m: int, n: int) -> TableCell:
        for c in self.cells:
            if c.m == m and c.n == n:
                return c
        raise KeyError((m, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "m", "e", "gramian_cond", "M_hat", "wall_ms"])
        for c in self.cells:
            e = f"NA({c.failure})" if c.failure else fmt(c.error)
            w.writerow([c.n, c.m, e, fmt(c.gramian_cond), fmt(c.M_hat),
                        fmt(c.wall_ms) if self.config.timing else "0"])
        return buf.getvalue()

    def pretty(self) -> str:
        ms = self.config.m_list
        lines = ["n\\m  " + "".join(f"{m:>10}" for m in ms)]
        for n in self.config.n_list:
            row = []
            for m in ms:
                c = self.cell(m, n)
                row.append(f"{'NA':>10}" if c.failure else f"{c.error:>10.4g}")
            lines.append(f"{n:<5}" + "".join(row))
        return "\n".join(lines)


def _table_cell(config: ExperimentConfig, mesh, m: int) -> TableCell:
    t0 = time.perf_counter()
    u = exp_cos_field()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedGramianWarning)
            bundle = offline(mesh, None, config.sensors(m), config.tol, load_order=config.load_order)
        d = bundle.diagnostics
        try:
            res = recover_from_exact(bundle, u, config.data_source, exact_order=config.exact_order,
                                     exact_level=config.exact_level)
            err, failure = res.h1_error, None
        except RecoveryError as exc:
            err, failure = None, f"singular Gramian: {exc}".replace(",", ";")
        cell = TableCell(mesh.n, m, err, d.gramian_condition, d.M_hat, 0.0, failure)
    except SolverError as exc:
        cell = TableCell(mesh.n, m, None, None, None, 0.0, f"solver: {exc}".replace(",", ";"))
    cell.wall_ms = (time.perf_counter() - t0) * 1e3
    log.info("n=%d m=%d e=%s cond=%s", cell.n, cell.m, fmt(cell.error), fmt(cell.gramian_cond))
    return cell


def run_table(config: ExperimentConfig) -> ErrorTable:
    """Recovery error of ``exp(x) cos(y)`` for every (n, m) pair; f = 0."""
    if max(config.n_list) > LONG_RUN_LEVEL and not config.long_run:
        raise ConfigurationError(f"table rows with n > {LONG_RUN_LEVEL} need long_run")
    cells = []
    for n in config.n_list:
        mesh = build_mesh(n)
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                cells.extend(pool.map(lambda m: _table_cell(config, mesh, m), config.m_list))
        else:
            cells.extend(_table_cell(config, mesh, m) for m in config.m_list)
    table = ErrorTable(config, cells)
    if config.out:
        Path(config.out).write_text(table.to_csv())
    return table


def fit_slope(levels, errors) -> float | None:
    """Least-squares slope of ``log2(error)`` against ``log2(h)``, ``h = 2**-n``."""
    levels = np.asarray(levels, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(levels) < 2 or np.any(errors <= 0):
        return None
    return float(np.polyfit(-levels, np.log2(errors), 1)[0])


@dataclass
class ConvergenceResult:
    levels: list
    h1_errors: list
    linf_errors: list
    h1_slope: float | None
    linf_slope: float | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "h1_err_vs_ref", "linf_err_vs_ref"])
        for n, a, b in zip(self.levels, self.h1_errors, self.linf_errors):
            w.writerow([n, fmt(a), fmt(b)])
        w.writerow(["slope", fmt(self.h1_slope), fmt(self.linf_slope)])
        return buf.getvalue()


def run_representer_convergence(config: ExperimentConfig) -> ConvergenceResult:
    """Errors ``||phi_n - phi_ref||`` in H^1 and nodal max norm, with fitted slopes."""
    levels = [n for n in config.n_list if n < config.reference_n]
    if not levels:
        raise ConfigurationError("n_list needs levels below reference_n")
    functional = config.single_functional()
    ref_mesh = build_mesh(config.reference_n)
    ref = compute_representer(ref_mesh, functional, config.tol, load_order=config.load_order).phi
    K, M = assemble_stiffness(ref_mesh), assemble_mass(ref_mesh)
    h1, linf = [], []
    for n in levels:
        mesh = build_mesh(n)
        phi = compute_representer(mesh, functional, config.tol, load_order=config.load_order).phi
        d = prolongate(phi, ref_mesh).coefficients - ref.coefficients
        h1.append(math.sqrt(max(d @ (K @ d) + d @ (M @ d), 0.0)))
        linf.append(float(np.max(np.abs(d))))
        log.info("n=%d h1=%.3e linf=%.3e", n, h1[-1], linf[-1])
    result = ConvergenceResult(levels, h1, linf, fit_slope(levels, h1), fit_slope(levels, linf))
    if config.out:
        Path(config.out).write_text(result.to_csv())
    return result


def run_single_recovery(config: ExperimentConfig, bundle=None) -> dict:
    """Recover from ``config.data`` (or from ``exp(x) cos(y)`` when absent).

    With ``noise_linf`` the data is perturbed by uniform noise of that sup norm
    (seeded) and the report compares coefficients with the clean solve.
    """
    if bundle is None and config.bundle:
        from .bundle_io import read_bundle
        bundle = read_bundle(config.bundle)
    if bundle is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedGramianWarning)
            bundle = offline(build_mesh(config.n), None, config.sensors(config.m), config.tol,
                             load_order=config.load_order)
    u = exp_cos_field()
    from_exact = config.data is None
    if from_exact:
        w = measure_exact(bundle.sensors, u, config.data_source, exact_order=config.exact_order,
                          exact_level=config.exact_level)
    else:
        w = np.asarray(config.data, dtype=float)
        if w.shape != (bundle.m,):
            raise ConfigurationError(f"data vector must have length {bundle.m}, got {w.size}")
    clean = online(bundle, w)
    if from_exact:
        clean = dataclasses.replace(clean, h1_error=h1_error(clean.u_hat, u))
    report = {
        "n": bundle.mesh.n,
        "m": bundle.m,
        "functionals": bundle.sensors.to_list(),
        "a_hat": clean.a_hat.tolist(),
        "data_residual": clean.data_residual,
        "diagnostics": bundle.diagnostics.to_dict(),
    }
    if clean.h1_error is not None:
        report["h1_error"] = clean.h1_error
    if config.noise_linf is not None:
        rng = np.random.default_rng(config.seed)
        eta = rng.uniform(-1.0, 1.0, bundle.m)
        eta *= config.noise_linf / np.max(np.abs(eta))
        noisy = online(bundle, w + eta, noise_bound=float(np.sqrt(np.mean(eta ** 2))))
        report["noise"] = {
            "linf": config.noise_linf,
            "eta": eta.tolist(),
            "a_hat": noisy.a_hat.tolist(),
            "coefficient_change_linf": float(np.max(np.abs(noisy.a_hat - clean.a_hat))),
            "coefficient_change_bound": bundle.diagnostics.M_hat * bundle.m * config.noise_linf,
            "noise_amplification_bound": noisy.noise_amplification_bound,
        }
    if config.out:
        Path(config.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    return report
