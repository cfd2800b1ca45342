"""Command-line front end.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure (stage named on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .compress import STAGES, CompressedOperator, StageError
from .experiments import ExperimentConfig, build, channel_table, run, write_artifacts
from .io import cache_dir, load_basis, save_basis, write_csv, write_json
from .hslod import RankDeficiencyError
from .lod import DegeneratePatchError
from .mesh import ConfigurationError
from .numerics import mmwrite
from .parallel import default_jobs
from .slod import StabilityError

log = logging.getLogger("hslod")

SUBCOMMANDS = ("build-basis", "solve", "compress", "experiment", "export", "verify")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, dotted keys for nested tables")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    common.add_argument("--seed", type=int, help="seed for the coefficient and right-hand side")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    p = _Parser(prog="hslod", description="Hierarchical superlocalized bases and compressed solution operators.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("build-basis", parents=[common], help="build and cache the hierarchical basis")
    s = sub.add_parser("solve", parents=[common], help="solve with one compression stage")
    s.add_argument("--stage", choices=STAGES, default="check")
    sub.add_parser("compress", parents=[common], help="build the compressed operator and report sparsity")
    e = sub.add_parser("experiment", parents=[common], help="run a full study and write CSV/JSON/SVG")
    e.add_argument("--table", choices=["convergence", "channel"], default="convergence")
    x = sub.add_parser("export", parents=[common], help="write a matrix in MatrixMarket format")
    x.add_argument("--matrix", choices=["stiffness", "basis", "inverse"], default="stiffness")
    x.add_argument("--stage", choices=STAGES, default="hat")
    v = sub.add_parser("verify", parents=[common], help="run the built-in invariant suite")
    v.add_argument("--suite", default="invariants")
    return p


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigurationError(f"override {dotted!r} descends into a non-table")
    d[keys[-1]] = value


def load_config(args) -> ExperimentConfig:
    raw: dict = {}
    if args.config is not None:
        try:
            raw = tomllib.loads(args.config.read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
    for item in args.overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not KEY=VALUE")
        key, val = item.split("=", 1)
        _set(raw, key.strip(), _parse_value(val.strip()))
    if args.seed is not None:
        _set(raw, "coefficient.seed", args.seed)
        _set(raw, "rhs.seed", args.seed)
    raw["n_jobs"] = args.threads if args.threads is not None else raw.get("n_jobs", default_jobs())
    if args.out is not None:
        raw["output_dir"] = str(args.out)
    return ExperimentConfig.from_dict(raw)


def _basis_key(cfg: ExperimentConfig) -> str:
    keys = ("dim", "coarse_exponent", "num_levels", "fine_exponent", "coefficient", "order", "slod_order",
            "delta_s", "rows", "method")
    blob = json.dumps({k: cfg[k] for k in keys}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _basis(cfg: ExperimentConfig, store: bool = False):
    """Load a cached basis when one matches the config, otherwise build it."""
    path = cache_dir() / f"basis-{_basis_key(cfg)}.bin"
    coeff = cfg.coefficient()
    if path.exists():
        try:
            basis = load_basis(path, coeff.digest())
            log.info("loaded cached basis %s", path)
            return basis.hierarchy, coeff, basis, path
        except (ValueError, OSError, EOFError) as exc:
            log.warning("ignoring cache %s: %s", path, exc)
    hierarchy, coeff, basis = build(cfg)
    if store:
        save_basis(basis, path)
    return hierarchy, coeff, basis, path


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg["output_dir"] or ".")


def cmd_build_basis(args, cfg):
    _, _, basis, path = _basis(cfg, store=True)
    if cfg["output_dir"]:
        save_basis(basis, _out(cfg) / "basis.bin")
    print(f"{len(basis)} basis functions, levels {basis.level_sizes}, cache {path}")


def cmd_solve(args, cfg):
    hierarchy, coeff, basis, _ = _basis(cfg)
    comp = cfg["compression"]
    stages = {"hat": ("check", "hat"), "check": ("check",), "bar": ("check", "bar"), "eps": ("check", "bar", "eps")}
    op = CompressedOperator(basis, coeff, comp["cg_iters"], comp["epsilon"], stages=stages[args.stage])
    u, c = op.apply(args.stage, cfg.rhs())
    out = _out(cfg)
    coords = hierarchy.node_coordinates(np.arange(hierarchy.num_fine_nodes))
    header = [f"x{i + 1}" for i in range(hierarchy.dim)] + ["u"]
    write_csv(out / "solution.csv", header, [list(x) + [v] for x, v in zip(coords, u.values)])
    write_json(out / "report.json", {"config": cfg.to_dict(), "config_hash": cfg.digest(), "stage": args.stage,
                                      "energy": op.energy(c), "n_basis": len(basis)})
    print(f"stage {args.stage}: energy norm {op.energy(c):.6e}, written to {out}")


def cmd_compress(args, cfg):
    hierarchy, coeff, basis, _ = _basis(cfg)
    comp = cfg["compression"]
    op = CompressedOperator(basis, coeff, comp["cg_iters"], comp["epsilon"], stages=("check", "bar", "eps"))
    out = _out(cfg)
    rep = op.report
    write_csv(out / "blocks.csv", ["level", "H", "kappa", "lambda_min", "lambda_max"],
              [[l, hierarchy.mesh_size(l), rep.kappa[l], rep.lambda_min[l], rep.lambda_max[l]]
               for l in hierarchy.levels])
    write_csv(out / "nnz.csv", ["stage", "nnz"], [[k, v] for k, v in op.nnz().items()])
    write_json(out / "report.json", {"config": cfg.to_dict(), "config_hash": cfg.digest(), "nnz": op.nnz(),
                                      "n_eps": op.n_eps, "truncation": rep.to_dict()})
    for k, v in op.nnz().items():
        print(f"{k:>5} nnz {v}")


def cmd_experiment(args, cfg):
    out = _out(cfg)
    if args.table == "channel":
        rows = channel_table(fine_exponent=cfg["fine_exponent"], num_levels=cfg["num_levels"],
                             n_jobs=cfg["n_jobs"], output_dir=out)
        write_json(out / "report.json", {"config": cfg.to_dict(), "rows": rows})
        for r in rows:
            print(f"beta={r['beta']:g} m={r['order']}: " + " ".join(f"{k:g}" for k in r["kappa"]))
        return
    report = run(cfg)
    if not cfg["output_dir"]:
        write_artifacts(report, out)
    for e in report.errors:
        print(f"level {e['level']} H={e['H']:g} error {e['rel_energy_error']:.3e}")


def cmd_export(args, cfg):
    hierarchy, coeff, basis, _ = _basis(cfg)
    comp = cfg["compression"]
    need = ("check", "bar", "eps") if args.matrix == "inverse" else ("check",)
    op = CompressedOperator(basis, coeff, comp["cg_iters"], comp["epsilon"], stages=need)
    if args.matrix == "basis":
        M, name = basis.basis_matrix(), "basis"
    elif args.matrix == "stiffness":
        if args.stage == "hat":
            M = op.stiffness.full
        elif args.stage == "check":
            M = op.check
        else:
            raise ConfigurationError("stiffness exists for stages hat and check only")
        name = f"stiffness_{args.stage}"
    else:
        if args.stage == "bar":
            M = op.sparse_inverse.matrix
        elif args.stage == "eps":
            M = op.S_eps
        else:
            raise ConfigurationError("the sparse inverse exists for stages bar and eps only")
        name = f"inverse_{args.stage}"
    path = _out(cfg) / f"{name}.mtx"
    mmwrite(path, M, comment=f"config {cfg.digest()}")
    print(f"wrote {path} ({M.shape[0]}x{M.shape[1]}, nnz {M.nnz})")


def cmd_verify(args, cfg):
    from .verify import SUITES, run_suite

    if args.suite not in SUITES:
        raise ConfigurationError(f"unknown suite {args.suite!r}; choose from {SUITES}")
    passed, total = run_suite(args.suite)
    return 0 if passed == total else 2


COMMANDS = {
    "build-basis": cmd_build_basis,
    "solve": cmd_solve,
    "compress": cmd_compress,
    "experiment": cmd_experiment,
    "export": cmd_export,
    "verify": cmd_verify,
}


def _failed_stage(exc) -> str:
    if isinstance(exc, DegeneratePatchError):
        return "lod"
    if isinstance(exc, StabilityError):
        return "slod"
    if isinstance(exc, RankDeficiencyError):
        return "hslod"
    return "solve"


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        code = COMMANDS[args.command](args, cfg)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except StageError as exc:
        print(f"numerical failure in stage {exc.stage}: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ArithmeticError, StabilityError) as exc:
        print(f"numerical failure in stage {_failed_stage(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
