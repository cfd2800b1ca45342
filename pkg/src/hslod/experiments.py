"""Desk-scale numerical studies: convergence, block conditioning, compression sparsity."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coeff import CoefficientField, channel_coefficient, constant_coefficient, random_piecewise_constant
from .compress import DEFAULT_CG_ITERS, DEFAULT_EPSILON, HAT_LIMIT, CompressedOperator, stage_error_bounds
from .fem import Q0Function
from .hslod import HierarchicalBasis, build_basis
from .io import write_csv, write_json
from .mesh import ConfigurationError, MeshHierarchy, build_hierarchy
from .oracle import FINE_BUDGET, GlobalFineSystem
from .plot import loglog_svg
from .slod import DEFAULT_DELTA_S

log = logging.getLogger(__name__)

METHODS = {"hslod": "slod", "hlod": "lod", "unstabilized": "unstabilized"}
PAPER_SCALE_EXPONENT = 8

DEFAULTS = {
    "dim": 2,
    "coarse_exponent": 0,
    "num_levels": 4,
    "fine_exponent": 7,
    "paper_scale": False,
    "coefficient": {"kind": "random", "alpha": 1.0, "beta": 100.0, "seed": 0, "base_exponent": None,
                    "distribution": "log-uniform"},
    "order": 2,
    "slod_order": None,
    "delta_s": DEFAULT_DELTA_S,
    "rows": "full",
    "method": "hslod",
    "compression": {"enabled": True, "cg_iters": DEFAULT_CG_ITERS, "epsilon": DEFAULT_EPSILON},
    "rhs": {"kind": "smooth", "exponent": 5, "seed": 0},
    "output_dir": None,
    "n_jobs": 1,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "ExperimentConfig":
        unknown = set(d or {}) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, d or {}))
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.values)

    def digest(self) -> str:
        v = {k: val for k, val in self.values.items() if k not in ("output_dir", "n_jobs")}
        return hashlib.sha256(json.dumps(v, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        v = self.values
        if v["method"] not in METHODS:
            raise ConfigurationError(f"method must be one of {sorted(METHODS)}")
        if v["rows"] not in ("full", "restricted"):
            raise ConfigurationError("rows must be 'full' or 'restricted'")
        if v["fine_exponent"] >= PAPER_SCALE_EXPONENT and not v["paper_scale"]:
            raise ConfigurationError(
                f"fine exponent {v['fine_exponent']} is paper scale; set paper_scale = true to allow it"
            )
        if v["coefficient"]["kind"] not in ("random", "channel", "constant"):
            raise ConfigurationError("coefficient.kind must be random, channel or constant")
        if v["rhs"]["kind"] not in ("smooth", "piecewise"):
            raise ConfigurationError("rhs.kind must be smooth or piecewise")
        if v["delta_s"] < 0:
            raise ConfigurationError("delta_s must be non-negative")
        self.hierarchy()

    def hierarchy(self) -> MeshHierarchy:
        v = self.values
        return build_hierarchy(v["dim"], v["coarse_exponent"], v["num_levels"], v["fine_exponent"])

    def coefficient(self) -> CoefficientField:
        v = self.values
        c = v["coefficient"]
        if c["kind"] == "channel":
            return channel_coefficient(c["beta"], v["dim"])
        if c["kind"] == "constant":
            return constant_coefficient(c.get("value", 1.0), v["dim"])
        base = c["base_exponent"] if c["base_exponent"] is not None else v["fine_exponent"]
        return random_piecewise_constant(base, c["alpha"], c["beta"], c["seed"], v["dim"], c["distribution"])

    def rhs(self):
        v = self.values
        r = v["rhs"]
        if r["kind"] == "smooth":
            return smooth_rhs
        return piecewise_rhs(v["dim"], r["exponent"], r["seed"])


def smooth_rhs(x):
    """``d pi^2 prod_k sin(pi x_k)``; the Laplace solution is ``prod_k sin(pi x_k)``."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    return d * np.pi**2 * np.prod(np.sin(np.pi * x), axis=-1)


def piecewise_rhs(dim: int, exponent: int = 5, seed: int = 0) -> Q0Function:
    """Sum over l = 0..exponent of cellwise constants on the 2^-l mesh, values uniform in [-1, 1]."""
    from .mesh import Box

    n = 2**exponent
    total = np.zeros((n,) * dim)
    for level in range(exponent + 1):
        rng = np.random.default_rng([seed, level])
        v = rng.uniform(-1.0, 1.0, size=(2**level,) * dim)
        r = 2 ** (exponent - level)
        for axis in range(dim):
            v = np.repeat(v, r, axis=axis)
        total += v
    return Q0Function(exponent, Box((0,) * dim, (n,) * dim), total.ravel())


@dataclass
class RunReport:
    config: dict
    config_hash: str
    errors: list[dict]
    blocks: list[dict]
    nnz: dict
    stage_errors: dict | None
    diagnostics: dict
    wall_times: dict
    seeds: dict
    slod: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def level_errors(op: CompressedOperator, system: GlobalFineSystem, f, stage="check") -> list[float]:
    """Relative energy error of the solution truncated after each level."""
    h = op.hierarchy
    uh = system.fine_solve(f)
    ref = system.energy_norm(uh)
    c = op.coefficients(stage, op.load(f))
    out = []
    for r in op.block_ranges:
        ct = np.zeros_like(c)
        ct[: r.stop] = c[: r.stop]
        u = op.synthesize(ct)
        out.append(system.energy_norm(uh.values - u.values) / ref)
    return out


def build(config: ExperimentConfig):
    hierarchy = config.hierarchy()
    coeff = config.coefficient()
    basis = build_basis(
        hierarchy, coeff, config["order"], config["delta_s"], slod_order=config["slod_order"],
        mode=METHODS[config["method"]], rows=config["rows"], n_jobs=config["n_jobs"],
    )
    return hierarchy, coeff, basis


def run(config: ExperimentConfig | dict, system: GlobalFineSystem | None = None) -> RunReport:
    """Build, compress, solve, and write errors/blocks/nnz CSVs plus report.json when ``output_dir`` is set."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    times = {}
    t0 = time.perf_counter()
    hierarchy, coeff, basis = build(config)
    times["basis"] = time.perf_counter() - t0
    log.info("basis with %d functions built in %.1fs", len(basis), times["basis"])

    comp = config["compression"]
    stages = ["check"]
    if comp["enabled"]:
        stages += ["bar", "eps"]
    if len(basis) <= HAT_LIMIT:
        stages.append("hat")
    t0 = time.perf_counter()
    op = CompressedOperator(basis, coeff, comp["cg_iters"], comp["epsilon"], stages=tuple(stages))
    times["operator"] = time.perf_counter() - t0

    f = config.rhs()
    errors, stage_errors = [], None
    n_int = (hierarchy.n_fine - 1) ** hierarchy.dim
    if system is None and n_int <= FINE_BUDGET:
        system = GlobalFineSystem(hierarchy, coeff)
    if system is not None:
        t0 = time.perf_counter()
        errs = level_errors(op, system, f)
        errors = [{"level": l, "H": hierarchy.mesh_size(l), "rel_energy_error": e} for l, e in enumerate(errs)]
        if comp["enabled"] and "hat" in stages:
            stage_errors = stage_error_bounds(op, f)
        times["solve"] = time.perf_counter() - t0

    rep = op.report
    blocks = [
        {"level": l, "H": hierarchy.mesh_size(l), "kappa": rep.kappa[l], "lambda_min": rep.lambda_min[l],
         "lambda_max": rep.lambda_max[l]}
        for l in hierarchy.levels
    ]
    slod_stats = [
        {
            "level": l,
            "max_boundary_residual": float(max(s.boundary_residual for s in basis.slod[l])),
            "max_stability_deviation": float(max(s.stability_deviation for s in basis.slod[l])),
            "mean_kept_rank": float(np.mean([s.kept_rank for s in basis.slod[l]])),
        }
        for l in hierarchy.levels
    ]
    report = RunReport(
        config=config.to_dict(),
        config_hash=config.digest(),
        errors=errors,
        blocks=blocks,
        nnz=op.nnz(),
        stage_errors=stage_errors,
        diagnostics={**basis.diagnostics, "truncation": rep.to_dict(), "n_eps": op.n_eps},
        wall_times=times,
        seeds={"coefficient": config["coefficient"].get("seed"), "rhs": config["rhs"].get("seed")},
        slod=slod_stats,
    )
    if config["output_dir"]:
        write_artifacts(report, config["output_dir"])
    return report


def write_artifacts(report: RunReport, out) -> None:
    out = Path(out)
    if report.errors:
        write_csv(out / "errors.csv", ["level", "H", "rel_energy_error"],
                  [[e["level"], e["H"], e["rel_energy_error"]] for e in report.errors])
        loglog_svg({"energy error": ([e["H"] for e in report.errors], [e["rel_energy_error"] for e in report.errors])},
                   out / "errors.svg", title=f"config {report.config_hash}")
    write_csv(out / "blocks.csv", ["level", "H", "kappa", "lambda_min", "lambda_max"],
              [[b["level"], b["H"], b["kappa"], b["lambda_min"], b["lambda_max"]] for b in report.blocks])
    write_csv(out / "nnz.csv", ["stage", "nnz"], [[k, v] for k, v in report.nnz.items()])
    write_json(out / "report.json", report.to_dict())


def two_significant(x: float) -> float:
    return float(f"{x:.2g}")


def channel_table(grid=((100.0, 3), (1000.0, 4), (10000.0, 5), (100000.0, 6)), fine_exponent=7, num_levels=6,
                  n_jobs=1, output_dir=None) -> list[dict]:
    """Block condition numbers per level for the channel coefficient, one row per (beta, m)."""
    from .compress import assemble_stiffness_hslod, block_truncate

    rows = []
    for beta, order in grid:
        hierarchy = build_hierarchy(2, 0, num_levels, fine_exponent)
        coeff = channel_coefficient(beta)
        basis = build_basis(hierarchy, coeff, order, n_jobs=n_jobs)
        _, rep = block_truncate(assemble_stiffness_hslod(basis, coeff), full_spectrum=False)
        rows.append({
            "beta": beta,
            "order": order,
            "H": [hierarchy.mesh_size(l) for l in hierarchy.levels],
            "kappa": [two_significant(k) for k in rep.kappa],
            "kappa_raw": rep.kappa,
        })
    if output_dir:
        write_csv(Path(output_dir) / "channel.csv", ["beta", "m", "level", "H", "kappa"],
                  [[r["beta"], r["order"], l, H, k] for r in rows for l, (H, k) in enumerate(zip(r["H"], r["kappa"]))])
    return rows


def convergence_slope(H, errors) -> float:
    """Least-squares slope of log2(error) against log2(H)."""
    return float(np.polyfit(np.log2(np.asarray(H)), np.log2(np.asarray(errors)), 1)[0])
