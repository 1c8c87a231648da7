"""Command-line front end: simulate, analyze, sensitivity, bounds.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (
    BoundInterval,
    Diagnostics,
    MarginalPoint,
    Thresholds,
    aggregate,
    copula_gpn_bounds,
    default_rho_grid,
    fh_bounds,
    find_rho_crossing,
    guard_marginals,
    mono_bounds,
    point_identify_mono,
    sensitivity_curve,
)
from .copula import CopulaFamily, CopulaSpec, DependenceRange
from .dgp import DEFAULT_THRESHOLDS, DgpCase, fit_marginals, generate, run_table1, run_table2
from .errors import (
    ConfigError,
    DataError,
    DegenerateTreatmentError,
    EmptyInputError,
    GPNError,
)
from .inference import SubsamplePlan, subsample_sd
from .marginals import Dataset, RegressorSpec, estimate_marginals

log = logging.getLogger("gpnbounds")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    c0: float = DEFAULT_THRESHOLDS.c0
    c1: float = DEFAULT_THRESHOLDS.c1
    family: str = "gaussian"
    conservative: tuple = (0.0, 1.0)
    expert: tuple | None = None
    regressor: dict = field(default_factory=dict)
    eps: float = 0.01
    delta: float = 1e-4
    cross_fit: bool = False
    subsample_b: int = 100
    subsample_m: int | None = None
    rescale: bool = False
    seed: int = 0

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.c0, self.c1)

    def regressor_spec(self) -> RegressorSpec:
        cfg = dict(self.regressor)
        cfg.setdefault("seed", self.seed)
        return RegressorSpec.from_dict(cfg)

    def copula_spec(self, which: str) -> CopulaSpec | None:
        rng = self.conservative if which == "conservative" else self.expert
        if rng is None:
            return None
        return CopulaSpec(CopulaFamily.parse(self.family), DependenceRange(*rng))

    def validate(self):
        """Check every module precondition before any computation."""
        try:
            self.thresholds
            self.copula_spec("conservative")
            self.copula_spec("expert")
            self.regressor_spec()
            if not 0.0 < self.eps < 0.5 or not 0.0 < self.delta < 0.5:
                raise ConfigError("clip levels must lie in (0, 0.5)")
            SubsamplePlan(self.subsample_b, self.subsample_m, self.seed, self.rescale)
            if not 0 <= self.seed < 2**64:
                raise ConfigError("seed must be a 64-bit unsigned integer")
        except ConfigError:
            raise
        except (GPNError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def as_dict(self) -> dict:
        out = asdict(self)
        out["conservative"] = list(self.conservative)
        out["expert"] = None if self.expert is None else list(self.expert)
        return out


_SCHEMA = {
    "thresholds": {"c0", "c1"},
    "copula": {"family", "conservative", "expert"},
    "regressor": None,
    "clip": {"eps", "delta"},
    "subsample": {"b", "m", "rescale"},
    "seed": None,
    "cross_fit": None,
}


def _line_of(text: str, key: str) -> int | None:
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if match is None else text.count("\n", 0, match.start()) + 1


def _config_error(text, key, message):
    line = _line_of(text, key)
    where = f"line {line}: " if line else ""
    return ConfigError(f"config {where}{message}")


def _pair(value, text, key):
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != 2 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise _config_error(text, key, f"'{key}' must be a [lo, hi] pair of numbers")
    return (float(value[0]), float(value[1]))


def _number(value, text, key, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _config_error(text, key, f"'{key}' must be a number")
    if kind is int and float(value) != int(value):
        raise _config_error(text, key, f"'{key}' must be an integer")
    return kind(value)


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config line 1: top level must be a JSON object")
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise _config_error(text, key, f"unknown key '{key}'")
        allowed = _SCHEMA[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise _config_error(text, key, f"'{key}' must be an object")
            extra = set(value) - allowed
            if extra:
                bad = sorted(extra)[0]
                raise _config_error(text, bad, f"unknown key '{key}.{bad}'")

    th = raw.get("thresholds", {})
    if "c0" in th:
        cfg.c0 = _number(th["c0"], text, "c0")
    if "c1" in th:
        cfg.c1 = _number(th["c1"], text, "c1")
    cop = raw.get("copula", {})
    if "family" in cop:
        if not isinstance(cop["family"], str):
            raise _config_error(text, "family", "'family' must be a string")
        cfg.family = cop["family"]
    if "conservative" in cop:
        cfg.conservative = _pair(cop["conservative"], text, "conservative")
    if "expert" in cop:
        cfg.expert = _pair(cop["expert"], text, "expert")
    if "regressor" in raw:
        if not isinstance(raw["regressor"], dict):
            raise _config_error(text, "regressor", "'regressor' must be an object")
        cfg.regressor = dict(raw["regressor"])
    clip = raw.get("clip", {})
    if "eps" in clip:
        cfg.eps = _number(clip["eps"], text, "eps")
    if "delta" in clip:
        cfg.delta = _number(clip["delta"], text, "delta")
    sub = raw.get("subsample", {})
    if "b" in sub:
        cfg.subsample_b = _number(sub["b"], text, "b", int)
    if sub.get("m") is not None:
        cfg.subsample_m = _number(sub["m"], text, "m", int)
    if "rescale" in sub:
        cfg.rescale = bool(sub["rescale"])
    if "seed" in raw:
        cfg.seed = _number(raw["seed"], text, "seed", int)
    if "cross_fit" in raw:
        cfg.cross_fit = bool(raw["cross_fit"])
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc


# ---------------------------------------------------------------- io

def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return "%.6g" % value


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())


def read_csv_table(path: Path):
    """Parse a CSV written by :func:`write_csv` into (header, rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = []
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(tuple(parsed))
    return header, rows


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _git_blob_id(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out: Path, command: str, args: dict, cfg: RunConfig, files: list):
    entries = {}
    for name in sorted(files):
        data = (out / name).read_bytes()
        entries[name] = {
            "sha256": hashlib.sha256(data).hexdigest(),
            "git_blob": _git_blob_id(data),
            "bytes": len(data),
        }
    write_json(out / "manifest.json", {
        "command": command,
        "arguments": args,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "files": entries,
    })


def read_dataset(path: str) -> Dataset:
    """Read a CSV with columns ``y``, ``z`` and any number of covariates."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in ("y", "z"):
            if col not in header:
                raise DataError(f"{path}: header lacks a '{col}' column")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        covs = [i for i, h in enumerate(header) if h not in ("y", "z")]
        if not covs:
            raise DataError(f"{path}: no covariate columns")
        iy, iz = header.index("y"), header.index("z")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            values = []
            for j, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column '{header[j]}': not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column '{header[j]}': non-finite value")
                values.append(v)
            if values[iz] not in (0.0, 1.0):
                raise DataError(f"{path}: row {lineno}, column 'z': must be 0 or 1")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return Dataset(arr[:, covs], arr[:, iz].astype(int), arr[:, iy])


# ---------------------------------------------------------------- pipeline

def _method_bounds(m: MarginalPoint, cfg: RunConfig, diag: Diagnostics | None) -> dict:
    m = guard_marginals(m, diag)
    out = {"FH": fh_bounds(m, diag), "Mono": mono_bounds(m, diag),
           "Conservative": copula_gpn_bounds(m, cfg.copula_spec("conservative"), diag)}
    if cfg.expert is not None:
        out["Expert"] = copula_gpn_bounds(m, cfg.copula_spec("expert"), diag)
    return out


def _fit(data: Dataset, cfg: RunConfig):
    spec = cfg.regressor_spec()
    return estimate_marginals(data, cfg.thresholds, nuisance=spec, final=spec,
                              eps=cfg.eps, delta=cfg.delta, cross_fit=cfg.cross_fit)


def averaged_bounds(data: Dataset, cfg: RunConfig, diag: Diagnostics | None = None):
    """Fit marginals on ``data`` and average each method's per-unit bounds."""
    fitted = _fit(data, cfg)
    m = fitted.point(data.x)
    per_unit = _method_bounds(m, cfg, diag)
    return m, per_unit, {k: aggregate(b) for k, b in per_unit.items()}


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg: RunConfig, out: Path) -> list:
    mode = "oracle" if args.oracle_marginals else "estimated"
    spec = cfg.regressor_spec() if cfg.regressor else None
    if args.table == 1:
        seeds = 10 if args.seeds is None else args.seeds
        table = run_table1(n=args.n, seeds=seeds, seed=cfg.seed, mode=mode,
                           thresholds=cfg.thresholds, spec=spec, threads=args.threads)
        name = "table1.csv"
    else:
        seeds = 1 if args.seeds is None else args.seeds
        table = run_table2(n=args.n, seeds=seeds, seed=cfg.seed, mode=mode,
                           thresholds=cfg.thresholds, spec=spec,
                           expert_halfwidth=args.expert_halfwidth, threads=args.threads)
        name = "table2.csv"
    write_csv(out / name, table.header, table.rows)
    return [name]


def cmd_analyze(args, cfg: RunConfig, out: Path) -> list:
    data = read_dataset(args.dataset)
    diag = Diagnostics()
    m, per_unit, avg = averaged_bounds(data, cfg, diag)

    def estimator(sub):
        _, _, a = averaged_bounds(sub, cfg)
        return {f"{k}.{side}": getattr(v, side) for k, v in a.items() for side in ("lower", "upper")}

    sds, failures = {}, 0
    if cfg.subsample_b > 0 and not args.no_subsample:
        res = subsample_sd(data, estimator,
                           SubsamplePlan(cfg.subsample_b, cfg.subsample_m, cfg.seed, cfg.rescale),
                           threads=args.threads)
        sds, failures = res.sd, res.failures

    rows = [(k, v.lower, v.upper, sds.get(f"{k}.lower"), sds.get(f"{k}.upper"))
            for k, v in avg.items()]
    write_csv(out / "bounds.csv", ("method", "lower", "upper", "lower_sd", "upper_sd"), rows)

    header = ["unit", "u1", "u0", "u0_at_c1"]
    cols = [np.arange(data.n), np.atleast_1d(m.u1), np.atleast_1d(m.u0), np.atleast_1d(m.u0_at_c1)]
    for k, b in per_unit.items():
        header += [f"{k.lower()}_lower", f"{k.lower()}_upper"]
        cols += [np.atleast_1d(b.lower), np.atleast_1d(b.upper)]
    write_csv(out / "per_unit_bounds.csv", header, zip(*cols))

    report = diag.as_dict()
    report.update(n=data.n, treated=int(data.z.sum()), subsample_failures=failures)
    write_json(out / "diagnostics.json", report)
    return ["bounds.csv", "per_unit_bounds.csv", "diagnostics.json"]


def _parse_grid(args, family: CopulaFamily):
    if args.rho is not None:
        values = sorted(set(float(r) for r in args.rho))
        if len(values) != len(args.rho):
            raise ConfigError("--rho values must be distinct")
        for v in values:
            family.check_param(v)
        return np.asarray(values)
    lo, hi = args.rho_range if args.rho_range else (-1.0, 1.0)
    rng = DependenceRange(lo, hi)
    family.check_param(lo)
    family.check_param(hi)
    return default_rho_grid(rng, args.points)


def cmd_sensitivity(args, cfg: RunConfig, out: Path) -> list:
    family = CopulaFamily.parse(cfg.family if args.family is None else args.family)
    try:
        grid = _parse_grid(args, family)
    except GPNError as exc:
        raise ConfigError(str(exc)) from exc
    if args.dataset:
        data = read_dataset(args.dataset)
        m, _, avg = averaged_bounds(data, cfg)
    else:
        case = DgpCase.parse(args.case)
        data, _ = generate(case, args.n, cfg.seed)
        mode = "oracle" if args.oracle_marginals else "estimated"
        fitted = fit_marginals(data, case, mode, cfg.thresholds,
                               cfg.regressor_spec() if cfg.regressor else None, cfg.seed)
        m = fitted.point(data.x)
        cfg_case = RunConfig(**{**cfg.__dict__, "expert": cfg.expert or case.expert})
        avg = {k: aggregate(b) for k, b in _method_bounds(m, cfg_case, None).items()}
    m = guard_marginals(m)
    curve = sensitivity_curve(m, family, grid, weighting=args.weighting)
    write_csv(out / "sensitivity.csv", ("rho", "avg_gpn"), curve.points())
    crossings = {}
    for k, b in avg.items():
        crossings[k] = {side: find_rho_crossing(curve, getattr(b, side))
                        for side in ("lower", "upper")}
        crossings[k]["lower_value"] = b.lower
        crossings[k]["upper_value"] = b.upper
    write_json(out / "crossings.json", {"family": family.value, "weighting": args.weighting,
                                        "crossings": crossings})
    return ["sensitivity.csv", "crossings.json"]


def cmd_bounds(args, cfg: RunConfig, out: Path | None) -> list:
    m = MarginalPoint(args.u1, args.u0, args.u0_at_c1)
    family = CopulaFamily.parse(cfg.family if args.family is None else args.family)
    rows = [("FH", fh_bounds(m))]
    rows.append(("Mono", mono_bounds(m) if args.u0_at_c1 is not None else None))
    spec = None
    if args.rho is not None:
        spec = CopulaSpec(family, DependenceRange(*args.rho))
    rows.append(("Copula", copula_gpn_bounds(m, spec) if spec is not None else None))
    point = point_identify_mono(args.u1, args.u0) if args.equal_thresholds else None
    rows.append(("Point", None if point is None else BoundInterval(point, point, "Point")))
    for name, b in rows:
        if b is None:
            print(f"{name:<7} n/a")
        else:
            print(f"{name:<7} lower={fmt(b.lower)} upper={fmt(b.upper)} width={fmt(b.upper - b.lower)}")
    return []


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit root seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="gpnbounds", description="Bounds on the general probability of necessity.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="gpn_out")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulation tables")
    s.add_argument("--table", type=int, choices=(1, 2), required=True)
    s.add_argument("--n", type=int, default=4096)
    s.add_argument("--seeds", type=int, default=None,
                   help="replicates per cell (default 10 for table 1, 1 for table 2)")
    s.add_argument("--oracle-marginals", action="store_true",
                   help="use analytic marginals instead of estimating them")
    s.add_argument("--expert-halfwidth", type=float, default=0.1,
                   help="table 2 Expert range: +- this around the tau-matched rho")

    a = sub.add_parser("analyze", parents=[common], help="bounds for a CSV dataset")
    a.add_argument("dataset")
    a.add_argument("--c0", type=float)
    a.add_argument("--c1", type=float)
    a.add_argument("--no-subsample", action="store_true")

    t = sub.add_parser("sensitivity", parents=[common], help="average GPN over a copula grid")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset")
    src.add_argument("--case", choices=("a", "b", "c"))
    t.add_argument("--n", type=int, default=4096)
    t.add_argument("--oracle-marginals", action="store_true")
    t.add_argument("--c0", type=float)
    t.add_argument("--c1", type=float)
    t.add_argument("--family")
    t.add_argument("--rho", type=float, nargs="+", help="explicit grid values")
    t.add_argument("--rho-range", type=float, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--points", type=int, default=101)
    t.add_argument("--weighting", choices=("unit", "population"), default="unit")

    b = sub.add_parser("bounds", parents=[common], help="single-point bound calculator")
    b.add_argument("--u1", type=float, required=True)
    b.add_argument("--u0", type=float, required=True)
    b.add_argument("--u0-at-c1", type=float)
    b.add_argument("--rho", type=float, nargs=2, metavar=("LO", "HI"))
    b.add_argument("--family")
    b.add_argument("--equal-thresholds", action="store_true",
                   help="treat u1, u0 as taken at one common threshold")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sensitivity": cmd_sensitivity,
    "bounds": cmd_bounds,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, DegenerateTreatmentError, EmptyInputError)):
        return EXIT_DATA
    return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        for name in ("c0", "c1"):
            if getattr(args, name, None) is not None:
                setattr(cfg, name, getattr(args, name))
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg.validate()
        if args.command == "bounds":
            cmd_bounds(args, cfg, None)
            return EXIT_OK
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, cfg, out)
        recorded = {k: v for k, v in sorted(vars(args).items())
                    if k not in ("out", "threads", "verbose", "config")}
        write_manifest(out, args.command, recorded, cfg, files)
        return EXIT_OK
    except GPNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
