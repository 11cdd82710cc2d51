"""Experiment configuration: lattice geometry, disorder law, stencils, tolerances.

Configuration files are INI-style (``key = value`` lines grouped in sections).
The ``[model]`` section carries the :class:`ModelConfig` fields, ``[tolerances]``
the numerical tolerances, and an optional ``[experiment]`` section the
subcommand name and its parameters (see :mod:`anderson_lab.cli`).
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Mapping, Tuple

import numpy as np
from scipy import stats

Offset = Tuple[int, ...]
Stencil = Tuple[Tuple[Offset, float], ...]


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


# ---------------------------------------------------------------------------
# single-site law
# ---------------------------------------------------------------------------

_LAW_RE = re.compile(r"^\s*(uniform|beta)\s*\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)\s*$")


@dataclass(frozen=True)
class SingleSiteLaw:
    """Distribution of the random couplings, supported in [0, 1].

    ``uniform(lo, hi)`` with ``0 <= lo <= hi <= 1`` (``lo == hi`` is a point
    mass) or ``beta(a, b)``.
    """

    kind: str = "uniform"
    params: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        a, b = self.params
        if self.kind == "uniform":
            if not (0.0 <= a <= b <= 1.0):
                raise ConfigError(f"uniform law needs 0 <= lo <= hi <= 1, got ({a}, {b})")
        elif self.kind == "beta":
            if a <= 0 or b <= 0:
                raise ConfigError(f"beta law needs positive shape parameters, got ({a}, {b})")
        else:
            raise ConfigError(f"unknown single_site_law {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "SingleSiteLaw":
        m = _LAW_RE.match(text)
        if not m:
            raise ConfigError(f"cannot parse single_site_law {text!r}")
        return cls(m.group(1), (float(m.group(2)), float(m.group(3))))

    def __str__(self):
        return f"{self.kind}({self.params[0]!r}, {self.params[1]!r})"

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Map uniform variates in [0, 1) to samples of the law."""
        a, b = self.params
        if self.kind == "uniform":
            return a + (b - a) * u
        return stats.beta.ppf(u, a, b)

    @property
    def mean(self) -> float:
        a, b = self.params
        return 0.5 * (a + b) if self.kind == "uniform" else a / (a + b)

    @property
    def variance(self) -> float:
        a, b = self.params
        if self.kind == "uniform":
            return (b - a) ** 2 / 12.0
        return a * b / ((a + b) ** 2 * (a + b + 1.0))

    def density_lower_bound(self) -> float:
        """Essential infimum of the density over [0, 1] (0 if not a.c. or vanishing)."""
        a, b = self.params
        if self.kind == "uniform":
            if a > 0.0 or b < 1.0:
                return 0.0
            return 1.0
        if a > 1.0 or b > 1.0:
            return 0.0
        grid = np.linspace(1e-9, 1.0 - 1e-9, 2001)
        return float(np.min(stats.beta.pdf(grid, a, b)))


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

def make_stencil(entries: Mapping[Offset, float] | Stencil, dimension: int) -> Stencil:
    items = entries.items() if isinstance(entries, Mapping) else entries
    out: Dict[Offset, float] = {}
    for off, val in items:
        off = tuple(int(o) for o in (off if isinstance(off, (tuple, list)) else (off,)))
        if len(off) != dimension:
            raise ConfigError(f"stencil offset {off} does not have dimension {dimension}")
        out[off] = out.get(off, 0.0) + float(val)
    return tuple(sorted(out.items()))


def parse_stencil(text: str, dimension: int) -> Stencil:
    """Parse ``"0:1.0"`` or ``"0,0:1.0; 1,0:0.5"`` (entries ``offset:value``)."""
    entries = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"stencil entry {chunk!r} lacks ':'")
        off, val = chunk.split(":", 1)
        try:
            entries.append((tuple(int(x) for x in off.split(",")), float(val)))
        except ValueError as exc:
            raise ConfigError(f"bad stencil entry {chunk!r}") from exc
    return make_stencil(entries, dimension)


def format_stencil(stencil: Stencil) -> str:
    return "; ".join(",".join(str(o) for o in off) + ":" + repr(val) for off, val in stencil)


def parse_background(text: str, dimension: int) -> Tuple:
    rows = [r.strip() for r in text.split(";") if r.strip()]
    try:
        table = [tuple(float(x) for x in r.split(",")) for r in rows]
    except ValueError as exc:
        raise ConfigError(f"bad background table {text!r}") from exc
    if dimension == 1:
        if len(table) != 1:
            raise ConfigError("1D background must be a single comma-separated row")
        return table[0]
    if len({len(r) for r in table}) != 1 or len(table) != len(table[0]):
        raise ConfigError("2D background must be a square table (rows separated by ';')")
    return tuple(table)


def format_background(bg: Tuple) -> str:
    if bg and isinstance(bg[0], tuple):
        return "; ".join(", ".join(repr(v) for v in row) for row in bg)
    return ", ".join(repr(v) for v in bg)


# ---------------------------------------------------------------------------
# model configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    eig_tol: float = 1e-10
    kernel_tol: float = 1e-6
    det_tol: float = 1e-9


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of one disordered lattice model and its perturbation.

    Lattice sites carry integer coordinates in ``[-(L//2), L - 1 - L//2]`` per
    axis, so boxes of different ``sites_per_side`` are nested and share the
    origin. Physical positions are ``h * x``. Random couplings sit on the
    integer points of physical space, i.e. on every ``1/h``-th lattice site.

    ``bump_profile`` offsets are lattice offsets relative to a coupling site;
    ``perturbation`` offsets are absolute lattice coordinates.
    """

    sites_per_side: int
    dimension: int = 1
    lattice_spacing: float = 1.0
    coupling: float = 1.0
    perturbation_strength: float = 0.0
    background: Tuple = (0.0,)
    bump_profile: Stencil = ()
    perturbation: Stencil = ()
    single_site_law: SingleSiteLaw = field(default_factory=SingleSiteLaw)
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        d = self.dimension
        if d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {d}")
        if int(self.sites_per_side) != self.sites_per_side or self.sites_per_side < 1:
            raise ConfigError(f"sites_per_side must be a positive integer, got {self.sites_per_side}")
        if not self.lattice_spacing > 0:
            raise ConfigError("lattice_spacing must be positive")
        if abs(self.cells_per_unit * self.lattice_spacing - 1.0) > 1e-12:
            raise ConfigError("1 / lattice_spacing must be an integer")
        if self.coupling < 0:
            raise ConfigError("coupling must be nonnegative")
        if not 0.0 <= self.perturbation_strength <= 1.0:
            raise ConfigError("perturbation_strength must lie in [0, 1]")
        if not isinstance(self.single_site_law, SingleSiteLaw):
            raise ConfigError("single_site_law must be a SingleSiteLaw")
        bump = self.bump_profile or (((0,) * d, 1.0),)
        object.__setattr__(self, "bump_profile", make_stencil(bump, d))
        object.__setattr__(self, "perturbation", make_stencil(self.perturbation, d))
        bg = self.background
        if d == 2 and bg and not isinstance(bg[0], (tuple, list)):
            bg = (tuple(bg),) if len(bg) == 1 else bg
        if d == 2:
            bg = tuple(tuple(float(v) for v in row) for row in bg)
            if len(bg) != len(bg[0]):
                raise ConfigError("2D background table must be square")
        else:
            bg = tuple(float(v) for v in bg)
        object.__setattr__(self, "background", bg)
        if self.sites_per_side % self.background_period:
            raise ConfigError(
                f"background period {self.background_period} does not divide L={self.sites_per_side}")
        if any(v < 0 for _, v in self.bump_profile):
            raise ConfigError("bump_profile must be nonnegative")
        if self.covering_constant <= 0:
            raise ConfigError("bump_profile violates the covering condition (sum of translates must be > 0)")
        self.check_perturbation_fits(self.sites_per_side)
        object.__setattr__(self, "seed", int(self.seed) % (1 << 64))

    # geometry ------------------------------------------------------------
    @property
    def cells_per_unit(self) -> int:
        return int(round(1.0 / self.lattice_spacing))

    @property
    def background_period(self) -> int:
        return len(self.background)

    @property
    def n_sites(self) -> int:
        return self.sites_per_side ** self.dimension

    def box_range(self, L: int | None = None) -> Tuple[int, int]:
        L = self.sites_per_side if L is None else L
        return -(L // 2), L - 1 - L // 2

    def check_perturbation_fits(self, L: int):
        lo, hi = self.box_range(L)
        for off, _ in self.perturbation:
            if any(o < lo or o > hi for o in off):
                raise ConfigError(f"perturbation site {off} lies outside the box of L={L}")

    @property
    def covering_constant(self) -> float:
        """min over lattice sites of the summed bump translates."""
        m = self.cells_per_unit
        sums: Dict[Offset, float] = {}
        for off, val in self.bump_profile:
            key = tuple(o % m for o in off)
            sums[key] = sums.get(key, 0.0) + val
        n_classes = m ** self.dimension
        if len(sums) < n_classes:
            return 0.0
        return min(sums.values())

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    # serialization -------------------------------------------------------
    def to_sections(self) -> Dict[str, Dict[str, str]]:
        model = {
            "dimension": str(self.dimension),
            "sites_per_side": str(self.sites_per_side),
            "lattice_spacing": repr(self.lattice_spacing),
            "coupling": repr(self.coupling),
            "perturbation_strength": repr(self.perturbation_strength),
            "background": format_background(self.background),
            "bump_profile": format_stencil(self.bump_profile),
            "perturbation": format_stencil(self.perturbation),
            "single_site_law": str(self.single_site_law),
            "seed": str(self.seed),
        }
        tol = {f.name: repr(getattr(self.tolerances, f.name)) for f in fields(Tolerances)}
        return {"model": model, "tolerances": tol}

    def to_text(self) -> str:
        return sections_to_text(self.to_sections())

    def as_dict(self) -> Dict:
        s = self.to_sections()
        return {**s["model"], "tolerances": s["tolerances"]}


_MODEL_KEYS = {
    "dimension", "sites_per_side", "lattice_spacing", "coupling", "perturbation_strength",
    "background", "bump_profile", "perturbation", "single_site_law", "seed",
}


def sections_to_text(sections: Mapping[str, Mapping[str, str]]) -> str:
    out = []
    for name, items in sections.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}" for k, v in items.items())
        out.append("")
    return "\n".join(out)


def read_sections(text: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def model_from_sections(sections: Mapping[str, Mapping[str, str]]) -> ModelConfig:
    unknown = set(sections) - {"model", "tolerances", "experiment"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    if "model" not in sections:
        raise ConfigError("config lacks a [model] section")
    m = dict(sections["model"])
    bad = set(m) - _MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in [model]: {', '.join(sorted(bad))}")
    if "sites_per_side" not in m:
        raise ConfigError("[model] requires sites_per_side")
    tol_items = dict(sections.get("tolerances", {}))
    tol_names = {f.name for f in fields(Tolerances)}
    bad = set(tol_items) - tol_names
    if bad:
        raise ConfigError(f"unknown key(s) in [tolerances]: {', '.join(sorted(bad))}")

    def num(key, conv, default):
        if key not in m:
            return default
        try:
            return conv(m[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {m[key]!r}") from exc

    d = num("dimension", int, 1)
    try:
        tol = Tolerances(**{k: float(v) for k, v in tol_items.items()})
    except ValueError as exc:
        raise ConfigError(f"bad tolerance value: {exc}") from exc
    kwargs = dict(
        sites_per_side=num("sites_per_side", int, None),
        dimension=d,
        lattice_spacing=num("lattice_spacing", float, 1.0),
        coupling=num("coupling", float, 1.0),
        perturbation_strength=num("perturbation_strength", float, 0.0),
        seed=num("seed", int, 0),
        tolerances=tol,
    )
    if "background" in m:
        kwargs["background"] = parse_background(m["background"], d)
    if "bump_profile" in m:
        kwargs["bump_profile"] = parse_stencil(m["bump_profile"], d)
    if "perturbation" in m:
        kwargs["perturbation"] = parse_stencil(m["perturbation"], d)
    if "single_site_law" in m:
        kwargs["single_site_law"] = SingleSiteLaw.parse(m["single_site_law"])
    return ModelConfig(**kwargs)


def load_model_config(text_or_file) -> ModelConfig:
    if isinstance(text_or_file, io.IOBase):
        text_or_file = text_or_file.read()
    return model_from_sections(read_sections(text_or_file))


def free_rate(E: float, background: float = 0.0, spacing: float = 1.0) -> float:
    """Exponential decay rate (per unit length) of the free 1D lattice resolvent below the band."""
    c = 1.0 + (background - E) * spacing ** 2 / 2.0
    if c <= 1.0:
        raise ValueError("energy is not below the free spectrum")
    return math.acosh(c) / spacing
