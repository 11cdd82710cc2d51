"""Command-line front end.

Every subcommand reads a model config (INI, see :mod:`anderson_lab.config`),
resolves its parameters (command line over the ``[experiment]`` section over
built-in defaults) and writes three files next to ``--out PREFIX``:

* ``PREFIX.csv`` with columns ``abscissa,mean,stderr,n``;
* ``PREFIX.json`` with the full report, resolved config and seed;
* ``PREFIX.timing.json`` with the wall time.

The first two depend only on the inputs, so repeated runs (with any
``ANDERSON_LAB_THREADS``) produce identical bytes.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 refused precondition (degenerate energy, spectrum too close, ...).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import ConfigError, ModelConfig, model_from_sections, read_sections, sections_to_text
from .estimators import (HypothesisError, PreconditionError, ao_probability, boundary_decay_scan,
                         combes_thomas_check, convergence_scan, fmb_scan, hoelder_scan, kernel_decay_scan,
                         ssf_positivity_scan, ucp_positivity_check, wegner_check)
from .funcalc import parse_function
from .identities import determinant_suite, projection_suite, quasinorm_suite
from .mc import RealizationError, mc_map, summarize
from .model import apply_perturbation, build_hamiltonian, sample_realization
from .overlap import RankMismatchError, ground_state_overlap
from .shift import GridResolutionError, NotAProjectionError, SignDefinitenessError, ssf_counting
from .spectral import DegeneracyError, EigensolverError, SpectrumProximityError, eig, eigenvalues, ids_estimate

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 1, 2, 3

_PRECONDITION_ERRORS = (PreconditionError, DegeneracyError, SpectrumProximityError, SignDefinitenessError,
                        RankMismatchError, NotAProjectionError, HypothesisError)
_NUMERICAL_ERRORS = (EigensolverError, GridResolutionError, ArithmeticError, np.linalg.LinAlgError)


class EmitError(RuntimeError):
    """Output refused (NaN in a table) or could not be written."""


# ---------------------------------------------------------------------------
# parameter parsing
# ---------------------------------------------------------------------------

def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:count`` (inclusive linspace) or a comma-separated list."""
    text = text.strip()
    if text.count(":") == 2:
        lo, hi, cnt = text.split(":")
        return np.linspace(float(lo), float(hi), int(cnt))
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _parse_point(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def parse_pairs(text: str) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Pairs of lattice points.

    ``a|b; c|d`` lists pairs (points are comma-separated coordinates);
    ``line:start:stop:step`` gives ``(origin, k e_1)`` and
    ``diag:start:stop:step`` gives ``(k e_1, k e_1)`` for k in the range
    (stop inclusive). Generators take an optional trailing ``:d`` dimension.
    """
    text = text.strip()
    head = text.split(":")[0]
    if head in ("line", "diag"):
        parts = text.split(":")
        if len(parts) not in (4, 5):
            raise ValueError(f"bad pair generator {text!r}")
        start, stop, step = (int(v) for v in parts[1:4])
        d = int(parts[4]) if len(parts) == 5 else 1
        out = []
        for k in range(start, stop + 1, step):
            pt = (k,) + (0,) * (d - 1)
            out.append(((0,) * d, pt) if head == "line" else (pt, pt))
        return out
    out = []
    for item in text.split(";"):
        if item.strip():
            a, b = item.split("|")
            out.append((_parse_point(a), _parse_point(b)))
    return out


def parse_box(text: str) -> Tuple[Tuple[int, int], ...]:
    """``lo:hi`` per axis, axes separated by commas."""
    out = []
    for axis in text.split(","):
        lo, hi = axis.split(":")
        out.append((int(lo), int(hi)))
    return tuple(out)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on", "strict"):
        return True
    if t in ("0", "false", "no", "off", "lenient"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable[[str], Any]
    default: Optional[str]
    help: str = ""


_COMMON = [
    Param("n", int, "500", "number of disorder realizations"),
    Param("seed", int, None, "master seed (defaults to the config's)"),
    Param("level", float, "0.95", "confidence level"),
    Param("strict", parse_bool, "true", "refuse degenerate energies (false: record and continue)"),
    Param("out", str, None, "output prefix (defaults to the command name)"),
]

_FUNCTION_HELP = "indicator(E), ramp(E,w), interval(a,b), bump(c,r), constant(c) or table(path)"

COMMANDS: Dict[str, List[Param]] = {
    "spectrum": [Param("index", int, "0", "realization index"),
                 Param("tau", float, None, "perturbation strength (defaults to the config's)")],
    "ids": [Param("energies", parse_grid, None, "energy grid lo:hi:count or a,b,c")],
    "ssf": [Param("E", parse_grid, None, "energy grid")],
    "overlap": [Param("E", parse_grid, None, "energy grid")],
    "fmb-scan": [Param("E", float, None, "energy"), Param("pairs", parse_pairs, "line:0:20:2", "point pairs"),
                 Param("etas", parse_grid, "1,0.1,0.01,0.001,0.0001", "imaginary parts"),
                 Param("s", float, "0.5", "fractional moment exponent")],
    "kernel-scan": [Param("function", str, None, _FUNCTION_HELP),
                    Param("pairs", parse_pairs, "diag:0:20:2", "point pairs"),
                    Param("p", float, "1", "Schatten exponent")],
    "boundary-scan": [Param("function", str, None, _FUNCTION_HELP),
                      Param("subbox", parse_box, None, "sub-box lo:hi[,lo:hi]"),
                      Param("pairs", parse_pairs, None, "lattice site pairs in the sub-box"),
                      Param("outer_box", parse_box, None, "enclosing box (defaults to the full box)"),
                      Param("p", float, "1", "Schatten exponent")],
    "converge": [Param("kind", str, "ssf-volume", "kernel-volume, ssf-volume or overlap-volume"),
                 Param("L_list", parse_ints, None, "ascending box sizes, last one is the proxy"),
                 Param("E", float, None, "energy"), Param("function", str, None, _FUNCTION_HELP),
                 Param("p", float, "1", "Schatten exponent"), Param("window", int, None, "kernel window radius")],
    "hoelder": [Param("energies", parse_grid, None, "energy grid"),
                Param("alphas", parse_grid, "0.25,0.5,1", "tested exponents")],
    "ao-prob": [Param("E", float, None, "energy"),
                Param("taus", parse_grid, "0.5,0.25,0.1,0.05", "perturbation strengths")],
    "wegner": [Param("lengths", parse_grid, None, "interval lengths"),
               Param("L_list", parse_ints, None, "box sizes (defaults to the configured one)"),
               Param("center", float, None, "interval centre")],
    "combes-thomas": [Param("E", float, None, "energy below the spectrum"),
                      Param("pairs", parse_pairs, "line:1:20:1", "point pairs")],
    "ssf-positivity": [Param("energies", parse_grid, None, "energy grid"),
                       Param("dos_step", float, "0.1", "finite-difference step for the DOS")],
    "ucp": [Param("region", parse_box, None, "site box lo:hi[,lo:hi]"),
            Param("function", str, None, "f >= 0 vanishing above E; " + _FUNCTION_HELP),
            Param("E", float, None, "energy")],
    "verify-identities": [Param("dim", int, "6", "matrix dimension"), Param("trials", int, "200", "random trials")],
}

_NO_CONFIG = {"verify-identities"}


# ---------------------------------------------------------------------------
# experiment spec
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """Model config, subcommand and its (string-valued) parameters."""

    command: str
    params: Dict[str, str] = field(default_factory=dict)
    config: Optional[ModelConfig] = None

    def to_sections(self) -> Dict[str, Dict[str, str]]:
        sections = dict(self.config.to_sections()) if self.config is not None else {}
        sections["experiment"] = {"command": self.command, **dict(sorted(self.params.items()))}
        return sections

    def to_text(self) -> str:
        return sections_to_text(self.to_sections())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentSpec":
        sections = read_sections(text)
        exp = dict(sections.get("experiment", {}))
        command = exp.pop("command", None)
        if command is None:
            raise ConfigError("[experiment] requires a command key")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r} in [experiment]")
        _check_keys(command, exp)
        config = model_from_sections(sections) if "model" in sections else None
        return cls(command, exp, config)

    def value(self, name: str):
        """Parsed parameter value (None when unset and without default)."""
        spec = _param(self.command, name)
        raw = self.params.get(name, spec.default)
        if raw is None:
            return None
        try:
            return spec.parse(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from exc

    def require(self, name: str):
        v = self.value(name)
        if v is None:
            raise ConfigError(f"{self.command} needs --{name.replace('_', '-')}")
        return v


def _param(command: str, name: str) -> Param:
    for p in _COMMON + COMMANDS[command]:
        if p.name == name:
            return p
    raise KeyError(name)


def _check_keys(command: str, params: Dict[str, str]):
    known = {p.name for p in _COMMON + COMMANDS[command]}
    bad = sorted(set(params) - known)
    if bad:
        raise ConfigError(f"unknown key(s) in [experiment] for {command}: {', '.join(bad)}")


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def format_csv(table) -> str:
    x, mean, stderr, n = (np.atleast_1d(np.asarray(c)) for c in table)
    out = io.StringIO()
    out.write("abscissa,mean,stderr,n\n")
    for xi, mi, si, ni in zip(x, mean, stderr, n):
        out.write(f"{float(xi):.17g},{float(mi):.17g},{float(si):.17g},{int(ni)}\n")
    return out.getvalue()


def emit(report: Dict, table, prefix: Path, statistic: str, wall_time: float) -> List[Path]:
    """Write CSV, JSON and timing sidecar. NaN in the table's mean or stderr is refused."""
    mean = np.atleast_1d(np.asarray(table[1], dtype=float))
    stderr = np.atleast_1d(np.asarray(table[2], dtype=float))
    if np.isnan(mean).any() or np.isnan(stderr).any():
        raise EmitError(f"NaN in the estimate of {statistic}; refusing to write {prefix}")
    paths = [prefix.with_name(prefix.name + ext) for ext in (".csv", ".json", ".timing.json")]
    report = dict(report, timing_file=paths[2].name)
    try:
        prefix.parent.mkdir(parents=True, exist_ok=True)
        paths[0].write_text(format_csv(table))
        paths[1].write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n")
        paths[2].write_text(json.dumps({"wall_time_seconds": wall_time}) + "\n")
    except OSError as exc:
        raise EmitError(f"cannot write outputs for {prefix}: {exc}") from exc
    return paths


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _grid_table(grid, res):
    mean, se = np.atleast_1d(res.mean), np.atleast_1d(res.stderr)
    return grid, mean, se, np.full(grid.shape, res.n_realizations)


def _cmd_spectrum(spec, cfg):
    tau = spec.value("tau")
    omega = sample_realization(cfg, spec.value("index"))
    H = build_hamiltonian(cfg, omega)
    if tau is not None or cfg.perturbation_strength:
        H = apply_perturbation(H, cfg, tau)
    ev = eigenvalues(H)
    k = np.arange(1, ev.size + 1, dtype=float)
    return {"statistic": "eigenvalues", "seed_path": list(omega.seed_path),
            "tau": cfg.perturbation_strength if tau is None else tau}, (k, ev, np.zeros_like(ev), np.ones_like(k))


def _cmd_ids(spec, cfg):
    grid = spec.require("energies")
    res = ids_estimate(cfg, grid, spec.value("n"))
    return res.as_dict(), _grid_table(grid, res)


def _cmd_ssf(spec, cfg):
    grid, strict = spec.require("E"), spec.value("strict")
    eig_tol = cfg.tolerances.eig_tol
    flagged = []

    def stat(c, omega):
        H = build_hamiltonian(c, omega)
        A, B = eig(H, eig_tol), eig(apply_perturbation(H, c), eig_tol)
        out = []
        for E in grid:
            xi = ssf_counting(A, B, E, eig_tol)
            if xi.degenerate:
                if strict:
                    raise DegeneracyError(f"E={E} lies within eig_tol of an eigenvalue")
                flagged.append(float(E))
            out.append(xi.value)
        return np.array(out, dtype=float)

    res = summarize(np.asarray(mc_map(stat, cfg, spec.value("n"))), "spectral_shift", cfg.seed, spec.value("level"))
    return dict(res.as_dict(), energies=grid, degenerate_flags=len(flagged)), _grid_table(grid, res)


def _cmd_overlap(spec, cfg):
    grid, strict = spec.require("E"), spec.value("strict")
    eig_tol = cfg.tolerances.eig_tol

    def stat(c, omega):
        H = build_hamiltonian(c, omega)
        A, B = eig(H, eig_tol), eig(apply_perturbation(H, c), eig_tol)
        vals, zeros = [], []
        for E in grid:
            S = ground_state_overlap(A, B, E, eig_tol=eig_tol)
            if S.degenerate and strict:
                raise DegeneracyError(f"E={E} lies within eig_tol of an eigenvalue")
            vals.append(S.value)
            zeros.append(float(S.zero_flag))
        return np.array([vals, zeros])

    data = np.asarray(mc_map(stat, cfg, spec.value("n")))
    res = summarize(data[:, 0], "ground_state_overlap", cfg.seed, spec.value("level"))
    p_zero = data[:, 1].mean(axis=0)
    return dict(res.as_dict(), energies=grid, p_zero=p_zero), _grid_table(grid, res)


def _function(spec, base_dir):
    return parse_function(spec.require("function"), base_dir)


def _cmd_fmb(spec, cfg):
    fit = fmb_scan(cfg, spec.require("E"), spec.value("pairs"), spec.value("etas"), spec.value("s"),
                   spec.value("n"), level=spec.value("level"))
    return fit.as_dict(), fit.table()


def _cmd_kernel(spec, cfg, base_dir):
    fit = kernel_decay_scan(cfg, _function(spec, base_dir), spec.value("pairs"), spec.value("p"),
                            spec.value("n"), strict=spec.value("strict"), level=spec.value("level"))
    return fit.as_dict(), fit.table()


def _cmd_boundary(spec, cfg, base_dir):
    fit = boundary_decay_scan(cfg, _function(spec, base_dir), spec.require("subbox"), spec.require("pairs"),
                              spec.value("p"), spec.value("outer_box"), spec.value("n"),
                              strict=spec.value("strict"), level=spec.value("level"))
    return fit.as_dict(), fit.table()


def _cmd_converge(spec, cfg, base_dir):
    kind = spec.value("kind")
    f = _function(spec, base_dir) if kind == "kernel-volume" else None
    fit = convergence_scan(kind, cfg, spec.require("L_list"), spec.value("n"), spec.value("E"), f,
                           spec.value("p"), spec.value("window"), strict=spec.value("strict"),
                           level=spec.value("level"))
    return fit.as_dict(), fit.table()


def _cmd_hoelder(spec, cfg):
    rep = hoelder_scan(cfg, spec.require("energies"), tuple(spec.value("alphas")), spec.value("n"),
                       strict=spec.value("strict"), level=spec.value("level"))
    return rep.as_dict(), rep.table()


def _cmd_ao(spec, cfg):
    rep = ao_probability(cfg, spec.require("E"), spec.value("n"), tuple(spec.value("taus")),
                         strict=spec.value("strict"), level=spec.value("level"))
    return rep.as_dict(), rep.table()


def _cmd_wegner(spec, cfg):
    rep = wegner_check(cfg, spec.require("lengths"), spec.value("L_list"), spec.value("center"), spec.value("n"))
    return rep.as_dict(), rep.table()


def _cmd_ct(spec, cfg):
    fit = combes_thomas_check(cfg, spec.require("E"), spec.value("pairs"), spec.value("n"))
    return fit.as_dict(), fit.table()


def _cmd_ssf_pos(spec, cfg):
    rep = ssf_positivity_scan(cfg, spec.require("energies"), spec.value("n"), dos_step=spec.value("dos_step"),
                              strict=spec.value("strict"), level=spec.value("level"))
    return rep.as_dict(), rep.table()


def _cmd_ucp(spec, cfg, base_dir):
    rep = ucp_positivity_check(cfg, spec.require("region"), _function(spec, base_dir), spec.require("E"),
                               spec.value("n"), level=spec.value("level"))
    return rep.as_dict(), rep.table()


def _cmd_verify(spec, seed: int):
    rng = np.random.default_rng(seed)
    dim, trials = spec.value("dim"), spec.value("trials")
    suites = [projection_suite(rng, dim, trials), determinant_suite(rng, dim, trials),
              quasinorm_suite(rng, dim, trials)]
    table = (np.arange(len(suites), dtype=float), np.array([s.max_residual for s in suites]),
             np.zeros(len(suites)), np.array([s.checks for s in suites]))
    report = {"statistic": "identity_residuals", "suites": [s.as_dict() for s in suites],
              "passed": all(s.passed for s in suites)}
    return report, table


_NEEDS_BASE = {"kernel-scan": _cmd_kernel, "boundary-scan": _cmd_boundary, "converge": _cmd_converge,
               "ucp": _cmd_ucp}
_PLAIN = {"spectrum": _cmd_spectrum, "ids": _cmd_ids, "ssf": _cmd_ssf, "overlap": _cmd_overlap,
          "fmb-scan": _cmd_fmb, "hoelder": _cmd_hoelder, "ao-prob": _cmd_ao, "wegner": _cmd_wegner,
          "combes-thomas": _cmd_ct, "ssf-positivity": _cmd_ssf_pos}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anderson-lab", description="Finite-volume random Schrödinger operator experiments.")
    parser.add_argument("--version", action="version", version=f"anderson-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, params in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [model], [tolerances], optional [experiment]",
                       required=name not in _NO_CONFIG)
        p.add_argument("--dump-spec", help="also write the resolved experiment spec to this path")
        for prm in _COMMON + params:
            if prm.name == "strict":
                g = p.add_mutually_exclusive_group()
                g.add_argument("--strict", dest="strict", action="store_const", const="true", default=None,
                               help="refuse degenerate energies (default)")
                g.add_argument("--lenient", dest="strict", action="store_const", const="false",
                               help="record degenerate energies and continue")
                continue
            default = f" [default: {prm.default}]" if prm.default is not None else ""
            p.add_argument("--" + prm.name.replace("_", "-"), dest=prm.name, default=None,
                           help=prm.help + default)
    return parser


def resolve(args: argparse.Namespace) -> Tuple[ExperimentSpec, Path]:
    """Merge the config file's [experiment] section with command-line values."""
    base_dir = Path.cwd()
    config, file_params = None, {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        sections = read_sections(text)
        base_dir = path.resolve().parent
        exp = dict(sections.get("experiment", {}))
        cmd = exp.pop("command", args.command)
        if cmd != args.command:
            raise ConfigError(f"[experiment] command is {cmd!r} but {args.command!r} was requested")
        _check_keys(args.command, exp)
        file_params = exp
        if "model" in sections:
            config = model_from_sections(sections)
        elif args.command not in _NO_CONFIG:
            raise ConfigError("config lacks a [model] section")
    params = dict(file_params)
    for prm in _COMMON + COMMANDS[args.command]:
        v = getattr(args, prm.name, None)
        if v is not None:
            params[prm.name] = v
    spec = ExperimentSpec(args.command, params, config)
    for prm in _COMMON + COMMANDS[args.command]:
        spec.value(prm.name)  # validate early, naming the key
    if spec.params.get("seed") is not None and config is not None:
        spec.config = replace(config, seed=spec.value("seed"))
    return spec, base_dir


def execute(spec: ExperimentSpec, base_dir: Path) -> Tuple[Dict, Any, str]:
    if spec.command == "verify-identities":
        seed = spec.value("seed")
        seed = seed if seed is not None else (spec.config.seed if spec.config else 0)
        report, table = _cmd_verify(spec, seed)
        return report, table, "identity_residuals"
    cfg = spec.config
    if spec.command in _NEEDS_BASE:
        report, table = _NEEDS_BASE[spec.command](spec, cfg, base_dir)
    else:
        report, table = _PLAIN[spec.command](spec, cfg)
    return report, table, str(report.get("statistic", spec.command))


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RealizationError):
        return EXIT_PRECONDITION if isinstance(exc.cause, _PRECONDITION_ERRORS) else EXIT_NUMERICAL
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, _PRECONDITION_ERRORS):
        return EXIT_PRECONDITION
    if isinstance(exc, (EmitError, OSError) + _NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, TypeError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def run(argv: Optional[Sequence[str]] = None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        spec, base_dir = resolve(args)
        if args.dump_spec:
            Path(args.dump_spec).write_text(spec.to_text())
        t0 = time.perf_counter()
        report, table, statistic = execute(spec, base_dir)
        wall = time.perf_counter() - t0
        seed = spec.config.seed if spec.config is not None else spec.value("seed") or 0
        full = {
            "schema_version": SCHEMA_VERSION,
            "software": {"name": "anderson-lab", "version": __version__},
            "command": spec.command,
            "seed": seed,
            "config": spec.config.to_sections() if spec.config is not None else None,
            "experiment": spec.to_sections()["experiment"],
            "result": report,
        }
        prefix = Path(spec.value("out") or spec.command)
        emit(full, table, prefix, statistic, wall)
        if report.get("passed") is False:
            print(f"error: {spec.command}: at least one check failed", file=stderr)
            return EXIT_NUMERICAL
        return EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # mapped to the documented exit codes
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=stderr)
        return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
