"""Experiment harness: declarative configs, sweep runners, CSV artifacts.

Each runner reproduces one benchmark family (accuracy pollution sweeps,
projection error tables, the quasi-optimality surface, iteration-growth
studies, field-of-values reports) and writes one CSV with a fixed header
plus '#'-prefixed provenance comments.  Identical configs produce identical
numeric columns; only wall_time is environment-dependent.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from . import __version__, analysis, assembly, linalg, mesh
from .assembly import ONE_THIRD, K_SQUARED, ProblemData, WaveContext

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepRow",
    "load_config",
    "parse_config_text",
    "run_experiment",
    "run_accuracy_sweep",
    "run_projection_table",
    "run_qo_surface",
    "run_gmres_sweep",
    "run_fov_report",
    "CSV_HEADERS",
]

EXPERIMENTS = ("accuracy", "projection-table", "qo-surface", "gmres", "fov")
FORMULATIONS = ("standard", "ls", "ms_third", "ms_ksq")

CSV_HEADERS = {
    "accuracy": ["record", "tau", "k", "h", "n", "N", "formulation",
                 "rel_l2", "rel_h1k", "rel_v1", "rel_v2", "wall_time", "error"],
    "projection-table": ["record", "proj_norm", "k", "n", "N",
                         "rel_l2", "rel_h1k", "rel_v1", "rel_v2",
                         "gram_cond", "flagged", "wall_time", "error"],
    "qo-surface": ["record", "k", "tau", "h", "n", "N", "qo_ratio", "reliable",
                   "fit_exponent", "fit_intercept", "wall_time", "error"],
    "gmres": ["record", "variant", "tau", "side", "weighted", "k", "h", "n", "N",
              "iterations", "converged", "relres", "coer_bound", "norm_bound",
              "cos_sigma", "gamma_sigma", "elman_bound",
              "fit_exponent", "fit_intercept", "wall_time", "error"],
    "fov": ["record", "variant", "tau", "k", "h", "n", "N",
            "coer_bound", "norm_bound", "cos_sigma", "sigma", "gamma_sigma",
            "eps", "elman_bound", "observed_iters", "definite",
            "wall_time", "error"],
}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configurations."""


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment invocation."""

    experiment: str = "accuracy"
    dimension: int = 1
    domain: tuple = (0.0, 1.0)        # (a, b) or (ax, bx, ay, by)
    formulations: tuple = FORMULATIONS
    exponent_a: float = 1.2
    tau_star: tuple = (8.0,)
    k_min: float = 10.0
    k_max: float = 2000.0
    k_count: int = 12
    k_list: tuple = ()                # explicit k values override the sweep
    beta: float | None = None
    x0: tuple = ()
    norm_length: float = 1.0
    gmres_tol: float = 1e-6
    side: str = "left"
    weighted: str = "both"            # true | false | both
    variant: tuple = (1, 2)
    maxit: int = 4000
    fov: str = "auto"                 # true | false | auto (1-d only)
    solution: str = "plane"           # plane | modulated
    table_k: float | None = None
    table_n: int = 100
    qo_tau_min: float = 0.3
    qo_tau_max: float = 30.0
    qo_h_count: int = 16
    out: str = "out.csv"
    seed: int = 0
    threads: int = 1

    def k_values(self):
        if self.k_list:
            return np.asarray(self.k_list, dtype=float)
        return np.geomspace(self.k_min, self.k_max, self.k_count)

    def make_domain(self):
        center = tuple(self.x0) if self.x0 else None
        if self.dimension == 1:
            a, b = self.domain
            return mesh.Domain.interval(a, b, center[0] if center else None)
        ax, bx, ay, by = self.domain
        return mesh.Domain.rectangle((ax, ay), (bx, by), center)

    def make_context(self, k, ls_weight=ONE_THIRD, formulation="ms"):
        return WaveContext(k, self.make_domain(), beta=self.beta,
                           ls_weight=ls_weight, norm_length=self.norm_length,
                           formulation=formulation)

    def make_data(self, k):
        if self.solution == "plane":
            return ProblemData.plane_wave(k, dim=self.dimension)
        if self.solution == "modulated":
            if self.dimension != 1:
                raise ConfigError("the modulated manufactured solution is 1-d only")
            return ProblemData.modulated_plane_wave(k)
        raise ConfigError(f"unknown manufactured solution {self.solution!r}")

    def fov_enabled(self):
        if self.fov == "auto":
            return self.dimension == 1
        return self.fov == "true"

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        want = 2 if self.dimension == 1 else 4
        if len(self.domain) != want:
            raise ConfigError(f"domain needs {want} numbers for dimension {self.dimension}")
        for f in self.formulations:
            if f not in FORMULATIONS:
                raise ConfigError(f"unknown formulation {f!r}")
        if not self.k_list:
            if self.k_min <= 0 or self.k_max < self.k_min:
                raise ConfigError("need 0 < k_min <= k_max")
            if self.k_count < 1:
                raise ConfigError("k_count must be positive")
        if not 0 < self.gmres_tol < 1:
            raise ConfigError("gmres_tol must lie in (0, 1)")
        if self.side not in ("left", "right"):
            raise ConfigError("side must be left or right")
        if self.weighted not in ("true", "false", "both"):
            raise ConfigError("weighted must be true, false, or both")
        for v in self.variant:
            if v not in (1, 2):
                raise ConfigError("variant entries must be 1 or 2")
        if self.fov not in ("true", "false", "auto"):
            raise ConfigError("fov must be true, false, or auto")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        return self


_LIST_FIELDS = {"formulations": str, "tau_star": float, "k_list": float,
                "x0": float, "variant": int, "domain": float}
_SCALAR_FIELDS = {
    "experiment": str, "dimension": int, "exponent_a": float, "k_min": float,
    "k_max": float, "k_count": int, "beta": float, "norm_length": float,
    "gmres_tol": float, "side": str, "weighted": str, "maxit": int,
    "fov": str, "solution": str, "table_k": float, "table_n": int,
    "qo_tau_min": float, "qo_tau_max": float, "qo_h_count": int,
    "out": str, "seed": int, "threads": int,
}


def parse_config_text(text):
    """Parse the flat key = value config format."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in _LIST_FIELDS:
            conv = _LIST_FIELDS[key]
            try:
                values[key] = tuple(conv(item.strip()) for item in val.split(",") if item.strip())
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad list value for {key}: {exc}") from exc
        elif key in _SCALAR_FIELDS:
            conv = _SCALAR_FIELDS[key]
            try:
                values[key] = conv(val)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return ExperimentConfig(**values)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# sweep plumbing

@dataclass
class SweepRow:
    """One CSV row; numeric fields may be None when not applicable."""

    values: dict
    error: str | None = None


def sweep_constant(cfg, a, tau):
    """The mesh constant tying h to k over the sweep."""
    ks = cfg.k_values()
    return 4.0 * math.pi * (ks.min() * ks.max()) ** ((a - 1.0) / 2.0) / tau


def mesh_for(cfg, k, a, tau):
    """Uniform mesh with spacing closest below C * k^{-a} in each direction."""
    C = sweep_constant(cfg, a, tau)
    h = C * k ** (-a)
    dom = cfg.make_domain()
    if cfg.dimension == 1:
        (lo, hi), = dom.bounds
        n = max(int(math.ceil((hi - lo) / h)), 1)
        return mesh.build_space_1d(dom, n), h
    (ax, bx), (ay, by) = dom.bounds
    nx = max(int(math.ceil((bx - ax) / h)), 1)
    ny = max(int(math.ceil((by - ay) / h)), 1)
    return mesh.build_space_2d(dom, nx, ny), h


def _mesh_cols(space):
    return {"n": space.shape[0], "N": space.ndof, "h": space.h}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path, cfg, rows):
    header = CSV_HEADERS[cfg.experiment]
    lines = [f"# helmfem {__version__}"]
    lines.append(f"# numpy {np.__version__} scipy {__import__('scipy').__version__}")
    for f in fields(cfg):
        lines.append(f"# config {f.name} = {getattr(cfg, f.name)}")
    lines.append("# gmres convention: zero initial guess, stopping on the "
                 "relative preconditioned residual in the weight norm")
    lines.append("# wall_time is environment-dependent; all other columns are "
                 "deterministic for a fixed config")
    lines.append(",".join(header))
    for row in rows:
        vals = dict(row.values)
        vals.setdefault("error", row.error or "")
        lines.append(",".join(_fmt(vals.get(col)) for col in header))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_rows(cfg, tasks, worker):
    """Run row tasks (optionally threaded), preserving task order."""
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(worker, tasks))
    return [worker(task) for task in tasks]


def _solve_formulation(space, cfg, k, form, data):
    if form == "standard":
        ctx = cfg.make_context(k, ONE_THIRD, "standard")
        system = assembly.assemble_standard(space, ctx, data)
    elif form == "ls":
        ctx = cfg.make_context(k, K_SQUARED, "ls")
        system = assembly.assemble_ls(space, ctx, data)
    elif form == "ms_third":
        ctx = cfg.make_context(k, ONE_THIRD, "ms")
        system = assembly.assemble_ms(space, ctx, data)
    elif form == "ms_ksq":
        ctx = cfg.make_context(k, K_SQUARED, "ms")
        system = assembly.assemble_ms(space, ctx, data)
    else:
        raise ValueError(f"unknown formulation {form!r}")
    u = linalg.direct_solve(system.matrix, system.rhs)
    return u, ctx


# ---------------------------------------------------------------------------
# runners

def run_accuracy_sweep(cfg):
    """Relative errors of every formulation along the h(k) sweep, plus the
    best-approximation reference."""
    rows = []
    tasks = [(tau, k) for tau in cfg.tau_star for k in cfg.k_values()]

    def worker(task):
        tau, k = task
        t0 = time.perf_counter()
        out = []
        try:
            space, _ = mesh_for(cfg, k, cfg.exponent_a, tau)
            data = cfg.make_data(k)
            base = {"record": "data", "tau": tau, "k": k, **_mesh_cols(space)}
            for form in cfg.formulations:
                t1 = time.perf_counter()
                u, ctx = _solve_formulation(space, cfg, k, form, data)
                rep = analysis.error_norms(space, u, data, ctx)
                out.append(SweepRow({**base, "formulation": form,
                                     **{f"rel_{key}": rep.relative[key] for key in analysis.NORM_KEYS},
                                     "wall_time": time.perf_counter() - t1}))
            ctx = cfg.make_context(k)
            best = analysis.orthogonal_projection(space, data, "h1k", ctx)
            rep = analysis.error_norms(space, best, data, ctx)
            out.append(SweepRow({**base, "formulation": "best_h1k",
                                 "rel_h1k": rep.relative["h1k"],
                                 "wall_time": time.perf_counter() - t0}))
        except Exception as exc:   # noqa: BLE001 - row failures are recorded
            out.append(SweepRow({"record": "data", "tau": tau, "k": k,
                                 "wall_time": time.perf_counter() - t0},
                                error=f"{type(exc).__name__}: {exc}"))
        return out

    for chunk in _run_rows(cfg, tasks, worker):
        rows.extend(chunk)
    return rows


def run_projection_table(cfg):
    """Relative errors of the four norm-orthogonal projections (4x4 table)."""
    if cfg.dimension != 1:
        raise ConfigError("the projection table is a 1-d experiment")
    if cfg.solution != "plane":
        raise ConfigError("the projection table uses the plane-wave solution")
    k = cfg.table_k if cfg.table_k is not None else 30.0 * math.pi
    dom = cfg.make_domain()
    space = mesh.build_space_1d(dom, cfg.table_n)
    data = cfg.make_data(k)
    ctx = cfg.make_context(k)
    rows = []
    for proj in analysis.NORM_KEYS:
        t0 = time.perf_counter()
        try:
            coeffs = analysis.orthogonal_projection(space, data, proj, ctx)
            rep = analysis.error_norms(space, coeffs, data, ctx)
            cond = analysis.gram_condition_estimate(space, proj, ctx)
            rows.append(SweepRow({"record": "data", "proj_norm": proj, "k": k,
                                  "n": space.shape[0], "N": space.ndof,
                                  **{f"rel_{key}": rep.relative[key] for key in analysis.NORM_KEYS},
                                  "gram_cond": cond, "flagged": cond > 1e12,
                                  "wall_time": time.perf_counter() - t0}))
        except Exception as exc:   # noqa: BLE001
            rows.append(SweepRow({"record": "data", "proj_norm": proj, "k": k,
                                  "wall_time": time.perf_counter() - t0},
                                 error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_qo_surface(cfg):
    """Quasi-optimality ratio over a (k, hk) grid with per-k ridge and fit."""
    if cfg.dimension != 1:
        raise ConfigError("the quasi-optimality surface is a 1-d experiment")
    ks = cfg.k_values()
    taus = np.geomspace(cfg.qo_tau_min, cfg.qo_tau_max, cfg.qo_h_count)
    dom = cfg.make_domain()
    (lo, hi), = dom.bounds
    rows = []
    ridge = []

    def worker(k):
        out = []
        best = None
        for tau in taus:
            t0 = time.perf_counter()
            h = tau / k
            n = max(int(math.ceil((hi - lo) / h)), 1)
            try:
                space = mesh.build_space_1d(dom, n)
                data = cfg.make_data(k)
                ctx = cfg.make_context(k)
                ratio = analysis.quasi_opt_ratio(space, ctx, data)
                cond = analysis.gram_condition_estimate(space, "v1", ctx)
                reliable = bool(cond <= 1e12 and k * space.h >= 1e-2)
                out.append(SweepRow({"record": "grid", "k": k, "tau": tau,
                                     "h": space.h, "n": n, "N": space.ndof,
                                     "qo_ratio": ratio, "reliable": reliable,
                                     "wall_time": time.perf_counter() - t0}))
                if reliable and (best is None or ratio > best[0]):
                    best = (ratio, tau, space.h, n, space.ndof)
            except Exception as exc:   # noqa: BLE001
                out.append(SweepRow({"record": "grid", "k": k, "tau": tau,
                                     "wall_time": time.perf_counter() - t0},
                                    error=f"{type(exc).__name__}: {exc}"))
        return out, best

    for k, (chunk, best) in zip(ks, _run_rows(cfg, list(ks), worker)):
        rows.extend(chunk)
        if best is not None:
            ratio, tau, h, n, ndof = best
            ridge.append((k, ratio))
            rows.append(SweepRow({"record": "ridge", "k": k, "tau": tau, "h": h,
                                  "n": n, "N": ndof, "qo_ratio": ratio,
                                  "reliable": True}))
    if len(ridge) >= 2:
        fit = analysis.fit_growth_rate([r[0] for r in ridge], [r[1] for r in ridge])
        rows.append(SweepRow({"record": "fit", "fit_exponent": fit.exponent,
                              "fit_intercept": fit.intercept}))
    return rows


def _weighted_modes(cfg):
    if cfg.weighted == "both":
        return (True, False)
    return (cfg.weighted == "true",)


def run_gmres_sweep(cfg):
    """Iterations-to-tolerance of the preconditioned coercive systems."""
    rows = []
    ks = cfg.k_values()
    for variant in cfg.variant:
        a = 1.2 if variant == 1 else 1.5
        tag = ONE_THIRD if variant == 1 else K_SQUARED
        for tau in cfg.tau_star:

            def worker(k, variant=variant, a=a, tag=tag, tau=tau):
                out = []
                t0 = time.perf_counter()
                try:
                    space, _ = mesh_for(cfg, k, a, tau)
                    data = cfg.make_data(k)
                    ctx = cfg.make_context(k, tag)
                    system = assembly.assemble_ms(space, ctx, data, require_coercive=True)
                    D = assembly.assemble_weight(space, ctx, variant)
                    fac = linalg.spd_factor(D)
                    fov_cols = {}
                    if cfg.fov_enabled():
                        fov = analysis.fov_constants(system.matrix, fac, seed=cfg.seed)
                        bound = analysis.elman_iteration_bound(fov, cfg.gmres_tol)
                        fov_cols = {"coer_bound": fov.coercivity,
                                    "norm_bound": fov.operator_norm,
                                    "cos_sigma": fov.cos_sigma,
                                    "gamma_sigma": fov.gamma_sigma,
                                    "elman_bound": bound}
                    base = {"record": "data", "variant": variant, "tau": tau,
                            "side": cfg.side, "k": k, **_mesh_cols(space)}
                    for weighted in _weighted_modes(cfg):
                        t1 = time.perf_counter()
                        res = linalg.weighted_gmres(
                            (fac, system.matrix), system.rhs,
                            weight=None if weighted else "identity",
                            tol=cfg.gmres_tol, maxit=cfg.maxit, side=cfg.side)
                        if np.any(np.diff(res.residuals) > 1e-12 * res.residuals[0]):
                            raise RuntimeError("residual history is not nonincreasing")
                        out.append(SweepRow({**base, "weighted": weighted,
                                             "iterations": res.iterations,
                                             "converged": res.converged,
                                             "relres": res.achieved,
                                             **fov_cols,
                                             "wall_time": time.perf_counter() - t1}))
                except Exception as exc:   # noqa: BLE001
                    out.append(SweepRow({"record": "data", "variant": variant,
                                         "tau": tau, "side": cfg.side, "k": k,
                                         "wall_time": time.perf_counter() - t0},
                                        error=f"{type(exc).__name__}: {exc}"))
                return out

            group = []
            for chunk in _run_rows(cfg, list(ks), worker):
                rows.extend(chunk)
                group.extend(chunk)
            # fit over the k-ordered converged rows, one slope per GMRES mode
            for mode in _weighted_modes(cfg):
                pairs = [(r.values["k"], r.values["iterations"]) for r in group
                         if r.error is None and r.values.get("weighted") == mode
                         and r.values.get("converged")]
                if len(pairs) >= 2:
                    fit = analysis.fit_growth_rate([p[0] for p in pairs],
                                                   [p[1] for p in pairs])
                    rows.append(SweepRow({"record": "fit", "variant": variant,
                                          "tau": tau, "side": cfg.side,
                                          "weighted": mode,
                                          "fit_exponent": fit.exponent,
                                          "fit_intercept": fit.intercept}))
    return rows


def run_fov_report(cfg):
    """Field-of-values constants, the iteration bound, and observed counts."""
    rows = []
    ks = cfg.k_values()
    for variant in cfg.variant:
        a = 1.2 if variant == 1 else 1.5
        tag = ONE_THIRD if variant == 1 else K_SQUARED
        for tau in cfg.tau_star:
            def worker(k, variant=variant, a=a, tag=tag, tau=tau):
                t0 = time.perf_counter()
                try:
                    space, _ = mesh_for(cfg, k, a, tau)
                    data = cfg.make_data(k)
                    ctx = cfg.make_context(k, tag)
                    system = assembly.assemble_ms(space, ctx, data, require_coercive=True)
                    D = assembly.assemble_weight(space, ctx, variant)
                    fac = linalg.spd_factor(D)
                    fov = analysis.fov_constants(system.matrix, fac, seed=cfg.seed)
                    bound = analysis.elman_iteration_bound(fov, cfg.gmres_tol)
                    res = linalg.weighted_gmres((fac, system.matrix), system.rhs,
                                                tol=cfg.gmres_tol, maxit=cfg.maxit,
                                                side=cfg.side)
                    if bound is not None and res.converged and res.iterations > bound:
                        raise RuntimeError(
                            f"observed iterations {res.iterations} exceed the bound {bound}")
                    return SweepRow({"record": "data", "variant": variant, "tau": tau,
                                     "k": k, **_mesh_cols(space),
                                     "coer_bound": fov.coercivity,
                                     "norm_bound": fov.operator_norm,
                                     "cos_sigma": fov.cos_sigma, "sigma": fov.sigma,
                                     "gamma_sigma": fov.gamma_sigma, "eps": fov.eps,
                                     "elman_bound": bound,
                                     "observed_iters": res.iterations,
                                     "definite": fov.definite,
                                     "wall_time": time.perf_counter() - t0})
                except Exception as exc:   # noqa: BLE001
                    return SweepRow({"record": "data", "variant": variant,
                                     "tau": tau, "k": k,
                                     "wall_time": time.perf_counter() - t0},
                                    error=f"{type(exc).__name__}: {exc}")

            rows.extend(_run_rows(cfg, list(ks), worker))
    return rows


_RUNNERS = {
    "accuracy": run_accuracy_sweep,
    "projection-table": run_projection_table,
    "qo-surface": run_qo_surface,
    "gmres": run_gmres_sweep,
    "fov": run_fov_report,
}


def run_experiment(cfg):
    """Run the configured experiment, write its CSV, report success."""
    cfg.validate()
    rows = _RUNNERS[cfg.experiment](cfg)
    write_csv(cfg.out, cfg, rows)
    return all(row.error is None for row in rows)
