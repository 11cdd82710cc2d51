"""Random couplings and finite-difference Dirichlet Hamiltonians on lattice boxes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

from .config import ConfigError, ModelConfig

_TWO_M53 = 2.0 ** -53


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def box_coords(L: int, dimension: int) -> np.ndarray:
    """Lattice coordinates of the box of side ``L``, row-major, shape (L**d, d)."""
    lo = -(L // 2)
    axis = np.arange(lo, lo + L)
    if dimension == 1:
        return axis[:, None]
    g0, g1 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([g0.ravel(), g1.ravel()], axis=1)


def site_index(coords: np.ndarray, L: int, dimension: int) -> np.ndarray:
    """Row-major index of lattice coordinates inside the box of side ``L``."""
    c = np.atleast_2d(np.asarray(coords)) + L // 2
    if np.any(c < 0) or np.any(c >= L):
        raise ValueError("site outside the box")
    if dimension == 1:
        return c[:, 0]
    return c[:, 0] * L + c[:, 1]


def _zigzag(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    return np.where(k >= 0, 2 * k, -2 * k - 1)


def _site_counter(k: np.ndarray) -> np.ndarray:
    """Injective map Z^d -> N; boxes about the origin map onto an initial segment."""
    k = np.atleast_2d(k)
    if k.shape[1] == 1:
        return _zigzag(k[:, 0])
    a, b = _zigzag(k[:, 0]), _zigzag(k[:, 1])
    return np.where(a < b, b * b + a, a * a + a + b)


# ---------------------------------------------------------------------------
# disorder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderRealization:
    """Couplings ``values[i]`` at coupling sites ``sites[i]`` (integer physical points)."""

    sites: np.ndarray
    values: np.ndarray
    seed: int
    index: int

    @property
    def seed_path(self) -> Tuple[int, int]:
        return (self.seed, self.index)

    def as_dict(self) -> Dict[Tuple[int, ...], float]:
        return {tuple(int(x) for x in s): float(v) for s, v in zip(self.sites, self.values)}

    def lookup(self, sites: np.ndarray) -> np.ndarray:
        table = self.as_dict()
        try:
            return np.array([table[tuple(int(x) for x in s)] for s in np.atleast_2d(sites)])
        except KeyError as exc:
            raise ValueError(f"realization does not cover coupling site {exc.args[0]}") from None


def coupling_sites(config: ModelConfig, L: int | None = None) -> np.ndarray:
    """Coupling sites whose bump touches the box of side ``L`` (sorted, unique)."""
    L = config.sites_per_side if L is None else L
    m = config.cells_per_unit
    coords = box_coords(L, config.dimension)
    found = set()
    for off, val in config.bump_profile:
        if val == 0:
            continue
        shifted = coords - np.asarray(off)
        ok = np.all(shifted % m == 0, axis=1)
        for k in shifted[ok] // m:
            found.add(tuple(int(x) for x in k))
    return np.array(sorted(found), dtype=np.int64).reshape(-1, config.dimension)


def _uniforms(seed: int, index: int, counters: np.ndarray) -> np.ndarray:
    top = int(counters.max()) + 1 if counters.size else 0
    bg = np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
    raw = bg.random_raw(top)
    return (raw[counters] >> np.uint64(11)).astype(np.float64) * _TWO_M53


def sample_realization(config: ModelConfig, index: int, L: int | None = None) -> DisorderRealization:
    """Draw the couplings of realization ``index`` covering the box of side ``L``.

    Each coupling is a function of ``(seed, index, site)`` alone: a Philox
    stream keyed by ``(seed, index)`` read at a counter determined by the site.
    """
    if index < 0:
        raise ValueError("realization index must be nonnegative")
    sites = coupling_sites(config, L)
    u = _uniforms(config.seed, int(index), _site_counter(sites))
    values = np.clip(config.single_site_law.ppf(u), 0.0, 1.0)
    for arr in (sites, values):
        arr.setflags(write=False)
    return DisorderRealization(sites, values, config.seed, int(index))


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Real symmetric matrix on the sites ``coords`` together with its spectral floor ``E0``."""

    matrix: np.ndarray
    coords: np.ndarray
    E0: float
    spacing: float = 1.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def bandwidth(self) -> int:
        nz = np.nonzero(self.matrix)
        return int(np.max(np.abs(nz[0] - nz[1]))) if nz[0].size else 0

    def index_of(self, sites: Iterable[Sequence[int]]) -> np.ndarray:
        """Matrix indices of the given lattice coordinates."""
        lookup = {tuple(int(x) for x in c): i for i, c in enumerate(self.coords)}
        try:
            return np.array([lookup[tuple(int(x) for x in s)] for s in np.atleast_2d(sites)], dtype=int)
        except KeyError as exc:
            raise ValueError(f"site {exc.args[0]} is not in this Hamiltonian's box") from None


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def laplacian(L: int, dimension: int, spacing: float = 1.0) -> np.ndarray:
    """Dirichlet finite-difference ``-Δ`` on the box (truncated stencil)."""
    t = np.diag(np.full(L, 2.0)) - np.diag(np.ones(L - 1), 1) - np.diag(np.ones(L - 1), -1)
    if dimension == 2:
        eye = np.eye(L)
        t = np.kron(t, eye) + np.kron(eye, t)
    return t / spacing ** 2


def background_values(config: ModelConfig, coords: np.ndarray) -> np.ndarray:
    bg = np.asarray(config.background, dtype=float)
    p = config.background_period
    if config.dimension == 1:
        return bg[coords[:, 0] % p]
    return bg[coords[:, 0] % p, coords[:, 1] % p]


def perturbation_values(config: ModelConfig, coords: np.ndarray) -> np.ndarray:
    table = dict(config.perturbation)
    return np.array([table.get(tuple(int(x) for x in c), 0.0) for c in coords])


def spectral_floor(config: ModelConfig) -> float:
    """Lower bound for the spectra of H and H + tW, t in [0, 1], on every box.

    Uses ``-Δ >= 0`` and nonnegative random potential: the floor is the
    smaller of ``min V0`` and ``min (V0 + W)``.
    """
    v0_min = float(np.min(config.background))
    if not config.perturbation:
        return v0_min
    coords = np.array([off for off, _ in config.perturbation])
    with_w = background_values(config, coords) + np.array([v for _, v in config.perturbation])
    return min(v0_min, float(np.min(with_w)))


def random_potential(config: ModelConfig, omega: DisorderRealization, coords: np.ndarray) -> np.ndarray:
    m = config.cells_per_unit
    pot = np.zeros(len(coords))
    if config.coupling == 0.0:
        return pot
    table = omega.as_dict()
    for off, u in config.bump_profile:
        shifted = coords - np.asarray(off)
        ok = np.all(shifted % m == 0, axis=1)
        for i in np.nonzero(ok)[0]:
            k = tuple(int(x) for x in shifted[i] // m)
            if k not in table:
                raise ValueError(f"realization does not cover coupling site {k} (dimension mismatch)")
            pot[i] += u * table[k]
    return config.coupling * pot


def build_hamiltonian(config: ModelConfig, omega: DisorderRealization, L: int | None = None) -> Hamiltonian:
    """Assemble ``-Δ + V0 + coupling * sum_k omega_k u_k`` on the box of side ``L``."""
    L = config.sites_per_side if L is None else L
    if omega.sites.shape[1] != config.dimension:
        raise ValueError("realization dimension does not match the model")
    coords = box_coords(L, config.dimension)
    mat = laplacian(L, config.dimension, config.lattice_spacing)
    diag = background_values(config, coords) + random_potential(config, omega, coords)
    mat[np.diag_indices_from(mat)] += diag
    return Hamiltonian(_freeze(mat), _freeze(coords), spectral_floor(config), config.lattice_spacing)


def apply_perturbation(H: Hamiltonian, config: ModelConfig, tau: float | None = None) -> Hamiltonian:
    """Return ``H + tau * diag(W)`` (``tau`` defaults to the configured strength)."""
    tau = config.perturbation_strength if tau is None else tau
    box = set(tuple(int(x) for x in c) for c in H.coords)
    for off, _ in config.perturbation:
        if off not in box:
            raise ConfigError(f"perturbation site {off} lies outside the Hamiltonian's box")
    mat = H.matrix.copy()
    if tau != 0.0:
        mat[np.diag_indices_from(mat)] += tau * perturbation_values(config, H.coords)
    return Hamiltonian(_freeze(mat), H.coords, spectral_floor(config), H.spacing)


def restrict(H: Hamiltonian, subbox: Sequence[Tuple[int, int]]) -> Hamiltonian:
    """Principal submatrix on the sites of ``subbox`` (inclusive coordinate ranges per axis)."""
    subbox = _normalize_subbox(subbox, H.coords.shape[1])
    mask = np.ones(len(H.coords), dtype=bool)
    for axis, (lo, hi) in enumerate(subbox):
        mask &= (H.coords[:, axis] >= lo) & (H.coords[:, axis] <= hi)
    n_expected = int(np.prod([hi - lo + 1 for lo, hi in subbox]))
    if mask.sum() != n_expected:
        raise ValueError(f"subbox {subbox} is not contained in the box")
    idx = np.nonzero(mask)[0]
    return Hamiltonian(_freeze(H.matrix[np.ix_(idx, idx)].copy()), _freeze(H.coords[idx].copy()),
                       H.E0, H.spacing)


def restrict_dirichlet(config: ModelConfig, omega: DisorderRealization,
                       subbox: Sequence[Tuple[int, int]], tau: float = 0.0) -> Hamiltonian:
    """Dirichlet restriction of ``H + tau W`` to a sub-box of the configured box."""
    H = build_hamiltonian(config, omega)
    if tau:
        H = apply_perturbation(H, config, tau)
    return restrict(H, subbox)


def _normalize_subbox(subbox, dimension) -> Tuple[Tuple[int, int], ...]:
    if len(subbox) == 2 and np.isscalar(subbox[0]):
        subbox = (subbox,)
    if len(subbox) != dimension:
        raise ValueError("subbox needs one (lo, hi) range per axis")
    out = tuple((int(lo), int(hi)) for lo, hi in subbox)
    if any(lo > hi for lo, hi in out):
        raise ValueError(f"empty subbox {out}")
    return out


def realization_pair(config: ModelConfig, index: int, L: int | None = None,
                     tau: float | None = None) -> Tuple[Hamiltonian, Hamiltonian]:
    """Unperturbed and perturbed Hamiltonians of one realization."""
    omega = sample_realization(config, index, L)
    H = build_hamiltonian(config, omega, L)
    return H, apply_perturbation(H, config, tau)
