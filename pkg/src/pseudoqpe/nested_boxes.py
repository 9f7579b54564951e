"""Nested-box decomposition of momentum space and inequality-test preparation.

Box B_mu holds the Miller vectors with |v_a| < min(ceil(2^(mu - delta_a - 1)), 2^n_a)
on every axis.  B_1 is the origin alone and the outermost box is the full
signed box |v_a| <= 2^n_a - 1.

Grid values are grouped into *blocks* by the bit length of |v_a| on each
axis.  The shell index of a vector depends only on its block, so block sums
and maxima computed once serve every choice of delta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError
from .lattice import MillerGrid, ReciprocalGeometry

MAX_DELTA = 4


# ---------------------------------------------------------------- scheme

@dataclass(frozen=True)
class BoxScheme:
    grid: MillerGrid
    deltas: tuple[int, int, int]
    mu_min: int
    mu_max: int

    def axis_limit(self, mu: int, axis: int) -> int:
        """Number of magnitudes |v_a| = 0 .. m-1 allowed on an axis in B_mu."""
        e = mu - self.deltas[axis] - 1
        m = 1 if e <= 0 else 2 ** e
        return min(m, 2 ** self.grid.bits[axis])

    def contains(self, nu, mu: int) -> bool:
        """The six-inequality membership test for B_mu."""
        return all(-self.axis_limit(mu, a) < nu[a] < self.axis_limit(mu, a) for a in range(3))

    def shell_of(self, nu) -> int:
        return shell_index(nu, self.deltas)


def build_scheme(grid: MillerGrid, deltas=(0, 0, 0), include_origin: bool = False) -> BoxScheme:
    """Box scheme for a grid; ``include_origin`` selects mu_min = 1 (nonlocal use)."""
    deltas = tuple(int(d) for d in deltas)
    if len(deltas) != 3 or min(deltas) < 0:
        raise InputError("deltas must be three non-negative integers")
    if min(deltas) != 0:
        raise InputError("at least one delta must be zero")
    mu_max = max(n + d for n, d in zip(grid.bits, deltas)) + 1
    return BoxScheme(grid, deltas, 1 if include_origin else 2, mu_max)


def box_sizes(scheme: BoxScheme, mu: int) -> tuple[int, int]:
    """(|B_mu|, |B'_mu|); the second counts sign-magnitude strings, negative zeros included."""
    if not 1 <= mu <= scheme.mu_max:
        raise InputError(f"mu={mu} outside 1..{scheme.mu_max}")
    lim = [scheme.axis_limit(mu, a) for a in range(3)]
    return math.prod(2 * m - 1 for m in lim), math.prod(2 * m for m in lim)


def shell_index(nu, deltas) -> int:
    """Smallest mu with nu in B_mu."""
    mu = 1
    for v, d in zip(nu, deltas):
        v = abs(int(v))
        if v:
            mu = max(mu, v.bit_length() + d + 1)
    return mu


def shell_indices(points: np.ndarray, deltas) -> np.ndarray:
    """Vectorised :func:`shell_index` for an (m, 3) integer array."""
    pts = np.abs(np.asarray(points, dtype=np.int64))
    # frexp gives the exponent e with |v| = f 2^e, f in [0.5, 1), so e is the bit length
    _, bl = np.frexp(pts.astype(float))
    per_axis = np.where(pts > 0, bl + np.asarray(deltas)[None, :] + 1, 1)
    return per_axis.max(axis=1)


# ---------------------------------------------------------------- block statistics

def block_ordered_axis(bits: int) -> tuple[np.ndarray, list[slice]]:
    """Axis values -(2^n - 1) .. 2^n - 1 grouped by bit length, with group slices."""
    vals = [0]
    slices = [slice(0, 1)]
    for b in range(1, bits + 1):
        lo, hi = 2 ** (b - 1), 2 ** b - 1
        start = len(vals)
        vals.extend(range(-hi, -lo + 1))
        vals.extend(range(lo, hi + 1))
        slices.append(slice(start, len(vals)))
    return np.array(vals, dtype=np.int64), slices


def block_ordered_points(grid: MillerGrid) -> np.ndarray:
    """Every vector of the outer box (origin included) in block order, z fastest."""
    axes = [block_ordered_axis(b)[0] for b in grid.bits]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)


@dataclass(frozen=True)
class BlockStats:
    """Per-block sum, max and size of a non-negative function on the outer box.

    Arrays are indexed by the bit lengths (bx, by, bz).  The origin block is
    included; callers that exclude the origin drop block (0, 0, 0).
    """

    grid: MillerGrid
    sums: np.ndarray
    maxima: np.ndarray
    sizes: np.ndarray

    @classmethod
    def from_block_values(cls, grid: MillerGrid, values: np.ndarray) -> "BlockStats":
        """Build from values laid out as :func:`block_ordered_points` (flat or 3-D)."""
        shape = tuple(2 ** (b + 1) - 1 for b in grid.bits)
        vals = np.asarray(values, dtype=float).reshape(shape)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise InputError("weights must be finite and non-negative")
        slc = [block_ordered_axis(b)[1] for b in grid.bits]
        dims = tuple(b + 1 for b in grid.bits)
        sums = np.zeros(dims)
        maxima = np.zeros(dims)
        sizes = np.zeros(dims, dtype=np.int64)
        for bx, by, bz in itertools.product(*(range(d) for d in dims)):
            blk = vals[slc[0][bx], slc[1][by], slc[2][bz]]
            sums[bx, by, bz] = math.fsum(blk.ravel().tolist())
            maxima[bx, by, bz] = blk.max()
            sizes[bx, by, bz] = blk.size
        return cls(grid, sums, maxima, sizes)

    @classmethod
    def from_function(cls, grid: MillerGrid, fn: Callable[[np.ndarray], np.ndarray],
                      origin_value: float = 0.0) -> "BlockStats":
        """Evaluate ``fn`` on every nonzero box vector; the origin gets ``origin_value``."""
        pts = block_ordered_points(grid)
        vals = np.empty(len(pts))
        vals[0] = origin_value
        vals[1:] = fn(pts[1:])
        return cls.from_block_values(grid, vals)

    def block_shells(self, deltas) -> np.ndarray:
        dims = self.sums.shape
        idx = np.zeros(dims, dtype=np.int64)
        for a, d in enumerate(deltas):
            b = np.arange(dims[a])
            mu_a = np.where(b > 0, b + d + 1, 1)
            shape = [1, 1, 1]
            shape[a] = -1
            idx = np.maximum(idx, mu_a.reshape(shape))
        return idx

    def shell_table(self, deltas, mu_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(max, sum, size) per shell mu = 1..mu_max, index mu - 1."""
        shells = self.block_shells(deltas)
        mx = np.zeros(mu_max)
        sz = np.zeros(mu_max, dtype=np.int64)
        parts: list[list[float]] = [[] for _ in range(mu_max)]
        for pos in np.ndindex(shells.shape):
            k = shells[pos] - 1
            mx[k] = max(mx[k], self.maxima[pos])
            sz[k] += self.sizes[pos]
            parts[k].append(float(self.sums[pos]))
        sm = np.array([math.fsum(p) for p in parts])
        return mx, sm, sz


# ---------------------------------------------------------------- preparation weights

@dataclass(frozen=True)
class PrepWeights:
    """Per-shell unnormalised squared amplitudes and the normalised amplitudes.

    Index k of each array corresponds to mu = mu_min + k.
    """

    scheme: BoxScheme
    psi_tilde_sq: np.ndarray
    psi: np.ndarray
    success_probability: float
    variant: str


def _stats_for(scheme: BoxScheme, u) -> BlockStats:
    if isinstance(u, BlockStats):
        if u.grid != scheme.grid:
            raise InputError("block statistics belong to a different grid")
        return u
    return BlockStats.from_function(scheme.grid, u)


def _finish(scheme, psi_sq, total_u, variant) -> PrepWeights:
    norm = math.fsum(psi_sq.tolist())
    if total_u <= 0 or norm <= 0:
        raise InputError("weights vanish everywhere")
    return PrepWeights(scheme, psi_sq, np.sqrt(psi_sq / norm), total_u / norm, variant)


def _weighted_total(scheme, sm) -> float:
    return math.fsum(sm[scheme.mu_min - 1:].tolist())


def prep_weights(scheme: BoxScheme, u) -> PrepWeights:
    """Nested preparation: each box B_mu is prepared with its generated bitstrings B'_mu.

    psi~_mu^2 = |B'_mu| (max_{Bmax \\ B_(mu-1)} u - max_{Bmax \\ B_mu} u), so that
    the per-vector amplitude telescopes to the largest u outside the inner box.
    ``u`` is a callable on (m, 3) Miller arrays or precomputed :class:`BlockStats`.
    """
    stats = _stats_for(scheme, u)
    mx, sm, _ = stats.shell_table(scheme.deltas, scheme.mu_max)
    lo = scheme.mu_min
    # outer[k] = max of u over shells k+1 .. mu_max (1-based mu)
    outer = np.maximum.accumulate(mx[::-1])[::-1]
    psi_sq = np.zeros(scheme.mu_max - lo + 1)
    for mu in range(lo, scheme.mu_max + 1):
        bp = box_sizes(scheme, mu)[1]
        nxt = outer[mu] if mu < scheme.mu_max else 0.0
        psi_sq[mu - lo] = bp * (outer[mu - 1] - nxt)
    return _finish(scheme, psi_sq, _weighted_total(scheme, sm), "nested")


def shell_prep_weights(scheme: BoxScheme, u) -> PrepWeights:
    """Disjoint-shell preparation without negative zeros: |B_mu \\ B_(mu-1)| times the shell max."""
    stats = _stats_for(scheme, u)
    mx, sm, sz = stats.shell_table(scheme.deltas, scheme.mu_max)
    lo = scheme.mu_min
    psi_sq = np.array([sz[mu - 1] * mx[mu - 1] for mu in range(lo, scheme.mu_max + 1)], dtype=float)
    return _finish(scheme, psi_sq, _weighted_total(scheme, sm), "shell")


def success_probability(scheme: BoxScheme, u, variant: str = "shell") -> float:
    """Probability that the inequality test flags success, before amplification."""
    if variant == "shell":
        return shell_prep_weights(scheme, u).success_probability
    if variant == "nested":
        return prep_weights(scheme, u).success_probability
    raise InputError(f"unknown preparation variant {variant!r}")


def inverse_square_weight(geom: ReciprocalGeometry) -> Callable[[np.ndarray], np.ndarray]:
    """u(v) = 1/|k_v|^2, the weighting of the Coulomb state."""
    return lambda pts: 1.0 / geom.norm_sq(pts)


def delta_candidates(max_delta: int):
    """Triples in 0..max_delta with a zero component, best-first tie order."""
    if not 0 <= max_delta <= MAX_DELTA:
        raise InputError(f"max_delta must be in 0..{MAX_DELTA}")
    rng = range(max_delta + 1)
    cands = [d for d in itertools.product(rng, rng, rng) if min(d) == 0]
    return sorted(cands, key=lambda d: (sum(d), d))


def optimize_deltas(grid: MillerGrid, geom: ReciprocalGeometry, max_delta: int = 3,
                    variant: str = "shell") -> tuple[tuple[int, int, int], float]:
    """Exhaustive search for the shifts maximising the Coulomb-state success probability."""
    stats = BlockStats.from_function(grid, inverse_square_weight(geom))
    best, best_p = None, -1.0
    for d in delta_candidates(max_delta):
        p = success_probability(build_scheme(grid, d), stats, variant)
        # strict improvement keeps the earlier (smaller, then lexicographic) triple on ties
        if p > best_p:
            best, best_p = d, p
    return best, best_p
