"""Normalisation constants of the block encoding.

Every function returns Hartree.  Per-nucleus quantities leave out the
factor eta (and L_alpha), so a full-system value is
eta * sum_alpha L_alpha * per_nucleus_alpha.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from . import kernels
from .errors import InfeasibleError, InputError
from .lattice import MillerGrid, ReciprocalGeometry
from .nested_boxes import BlockStats, block_ordered_points, build_scheme, shell_indices
from .pseudopotential import (LOCAL_POLY, PROJECTOR_POLY, GthSpecies, local_poly,
                              projector_constant, scaled_projector_constant, u_loc_k)

# sum_{v in G_0} 1/|v|^2 < LAMBDA_V_CUBE_CONSTANT * N^(1/3) for a cube of N points
LAMBDA_V_CUBE_CONSTANT = 15.3482
# the projector functions are negligible beyond this argument
RADIAL_CUTOFF = 12.0
# largest grid bit count for which the full q-maximisation is allowed
BRUTE_MAX_BITS = 4
# points per radial-relaxation batch
RELAXATION_CHUNK = 2048
STRATEGIES = ("brute", "decimated", "relaxation")
SQRT_8PI3 = math.sqrt(8.0 * math.pi ** 3)


# ---------------------------------------------------------------- kinetic and Coulomb

def lambda_t(eta: int, geom: ReciprocalGeometry, grid: MillerGrid) -> float:
    """eta/2 times the largest |k_q|^2 on G, attained at a corner of the grid."""
    g = geom.vectors
    span = [n - 1 for n in grid.sizes]
    best = 0.0
    for sy, sz in itertools.product((1, -1), repeat=2):
        k = span[0] * g[0] + sy * span[1] * g[1] + sz * span[2] * g[2]
        best = max(best, float(k @ k))
    return eta / 8.0 * best


def coulomb_sum(geom: ReciprocalGeometry, grid: MillerGrid, region: str = "box") -> float:
    """sum of 1/|k_v|^2 over a region without the origin, compensated and order-free."""
    if region not in ("box", "G_0"):
        raise InputError("the Coulomb sum runs over 'box' or 'G_0'")
    hx, hy, hz = grid.half_widths(region)
    ys, zs = np.meshgrid(np.arange(-hy, hy + 1), np.arange(-hz, hz + 1), indexing="ij")
    terms: list[float] = []
    for x in range(-hx, hx + 1):
        pts = np.stack([np.full(ys.shape, x), ys, zs], -1).reshape(-1, 3)
        k2 = geom.norm_sq(pts)
        terms.extend((1.0 / k2[k2 > 0]).tolist())
    return math.fsum(terms)


def lambda_v(eta: int, geom: ReciprocalGeometry, grid: MillerGrid, region: str = "box") -> float:
    """(2 pi / Omega) eta (eta - 1) times the Coulomb sum."""
    if eta < 1:
        raise InputError("eta must be at least 1")
    return 2.0 * math.pi / geom.volume * eta * (eta - 1) * coulomb_sum(geom, grid, region)


def lambda_v_cube_bound(eta: int, volume: float, n_points: int) -> float:
    """Upper bound on lambda_V for a cubic cell holding ``n_points`` grid points."""
    return (eta * (eta - 1) / (2.0 * math.pi * volume ** (1.0 / 3.0))
            * LAMBDA_V_CUBE_CONSTANT * n_points ** (1.0 / 3.0))


def cube_constant() -> float:
    """24 [pi/2 ln(1 + sqrt 2) + Ti_2(3 - sqrt 8) - Catalan], the cube-sum constant."""
    ti2, _ = integrate.quad(lambda t: math.atan(t) / t if t else 1.0, 0.0, 3.0 - math.sqrt(8.0))
    catalan = 0.915965594177219015
    return 24.0 * (math.pi / 2.0 * math.log(1.0 + math.sqrt(2.0)) + ti2 - catalan)


# ---------------------------------------------------------------- local part

def _local_terms(species: GthSpecies, k2: np.ndarray, volume: float) -> np.ndarray:
    """Per-vector separated magnitude: Coulomb-like term plus each |C_j poly_j| term, without the Gaussian."""
    r = species.r_loc
    x2 = r * r * k2
    out = 4.0 * math.pi * species.z_ion / (volume * k2)
    for j, c in enumerate(species.c_local, start=1):
        if c != 0.0:
            out = out + SQRT_8PI3 * r ** 3 / volume * np.abs(c * local_poly(j, x2))
    return out


def _box_reduce(geom, grid, fn, region="box") -> float:
    hx, hy, hz = grid.half_widths(region)
    ys, zs = np.meshgrid(np.arange(-hy, hy + 1), np.arange(-hz, hz + 1), indexing="ij")
    terms: list[float] = []
    for x in range(-hx, hx + 1):
        pts = np.stack([np.full(ys.shape, x), ys, zs], -1).reshape(-1, 3)
        k2 = geom.norm_sq(pts)
        k2 = k2[k2 > 0]
        terms.extend(fn(k2).tolist())
    return math.fsum(terms)


def lambda_loc_sum(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid,
                   region: str = "box") -> float:
    """Per-nucleus separated local sum over the grid."""
    r2 = species.r_loc ** 2
    return _box_reduce(geom, grid,
                       lambda k2: _local_terms(species, k2, geom.volume) * np.exp(-0.5 * r2 * k2),
                       region)


@lru_cache(maxsize=None)
def local_integral_coefficient(j: int) -> float:
    """Weight of |C_j| in the integral form: (1/sqrt(2 pi)) int 2 x^2 |poly_j(x^2)| e^{-x^2/2} dx."""
    poly = LOCAL_POLY[j - 1]

    def f(x):
        x2 = x * x
        return x2 * abs(sum(c * x2 ** k for k, c in enumerate(poly))) * math.exp(-0.5 * x2)

    roots = sorted(math.sqrt(r.real) for r in np.roots(poly[::-1]) if abs(r.imag) < 1e-12 and r.real > 0)
    val, _ = integrate.quad(f, 0.0, 40.0, points=roots or None, limit=200, epsabs=1e-13, epsrel=1e-12)
    return 2.0 * val / math.sqrt(2.0 * math.pi)


def lambda_loc_integral(species: GthSpecies) -> float:
    """Per-nucleus integral estimate of the separated local sum."""
    out = math.sqrt(2.0 / math.pi) * species.z_ion / species.r_loc
    for j, c in enumerate(species.c_local, start=1):
        out += local_integral_coefficient(j) * abs(c)
    return out


def lambda_loc_unseparated(species: GthSpecies, relative_sign: int = 1) -> float:
    """Per-nucleus integral of the local magnitude without separating its terms.

    2 int_0^inf | s Z/(pi r_loc) e^{-x^2/2} + x^2/sqrt(2 pi) sum_j C_j poly_j(x^2) e^{-x^2/2} | dx
    with s = ``relative_sign``.  s = +1 reproduces the reference integral table;
    s = -1 is the sign of the momentum-space local potential itself.
    """
    if relative_sign not in (1, -1):
        raise InputError("relative_sign must be +1 or -1")
    z, r = species.z_ion, species.r_loc

    coef = np.zeros(4)
    for j, c in enumerate(species.c_local, start=1):
        if c != 0.0:
            coef[:len(LOCAL_POLY[j - 1])] += c * np.array(LOCAL_POLY[j - 1])
    poly = Polynomial(coef)
    lead = relative_sign * z / (math.pi * r)
    scale = 1.0 / math.sqrt(2.0 * math.pi)

    def g(x):
        x2 = x * x
        return (lead + scale * x2 * poly(x2)) * np.exp(-0.5 * x2)

    # the Gaussian is below 1e-14 of its peak beyond x = 8.1; pad for the polynomial
    cut = 12.0
    xs = np.linspace(0.0, cut, 4001)
    vals = g(xs)
    sign_change = [0.5 * (xs[k] + xs[k + 1]) for k in np.nonzero(vals[:-1] * vals[1:] < 0)[0]]
    val, err = integrate.quad(lambda x: abs(g(x)), 0.0, cut, points=sign_change or None,
                              limit=400, epsabs=1e-12, epsrel=1e-11)
    if not math.isfinite(val) or err > 1e-8 * max(1.0, val):
        raise InputError(f"{species.label}: local integral did not converge (err {err:.2e})")
    return 2.0 * val


def lambda_loc(counts: dict[str, int], table: dict[str, GthSpecies], eta: int,
               geom: ReciprocalGeometry | None = None, grid: MillerGrid | None = None,
               variant: str = "sum") -> tuple[float, dict[str, float]]:
    """Full-system lambda_loc and its per-nucleus breakdown."""
    per: dict[str, float] = {}
    for label in sorted(counts):
        sp = table[label]
        if variant == "sum":
            if geom is None or grid is None:
                raise InputError("the sum variant needs a geometry and a grid")
            per[label] = lambda_loc_sum(sp, geom, grid)
        elif variant == "integral":
            per[label] = lambda_loc_integral(sp)
        else:
            raise InputError(f"unknown lambda_loc variant {variant!r}")
    total = eta * math.fsum(counts[k] * v for k, v in per.items())
    return total, per


# ---------------------------------------------------------------- aleph maximisation

def _padded(l: int, i: int) -> np.ndarray:
    c = np.zeros(3)
    poly = PROJECTOR_POLY[l][i - 1]
    c[:len(poly)] = poly
    return c


def aleph_stride(grid: MillerGrid, strategy: str) -> tuple[int, bool]:
    """q-grid stride and whether hill-climb refinement follows, for a strategy."""
    if strategy == "brute":
        if max(grid.bits) > BRUTE_MAX_BITS:
            raise InfeasibleError(
                f"brute-force maximisation is O(N^2) and infeasible at n={max(grid.bits)}; "
                "use --strategy decimated or relaxation")
        return 1, False
    if strategy == "decimated":
        return (2, True) if max(grid.bits) >= 5 else (1, False)
    raise InputError(f"strategy {strategy!r} has no q-grid")


def aleph(species: GthSpecies, nus, l: int, i: int, j: int, geom: ReciprocalGeometry,
          grid: MillerGrid, strategy: str = "decimated", legendre: bool = True) -> np.ndarray:
    """Max over q of |P_l F~_i(r|k_{q+nu}|) F~_j(r|k_q|)| / r^{2l} for each nu.

    ``relaxation`` returns the radial upper bound and ignores ``legendre``.
    """
    nus = np.asarray(nus, dtype=np.int64).reshape(-1, 3)
    r = species.r_proj[l]
    if strategy == "relaxation":
        knorm = np.sqrt(geom.norm_sq(nus))
        # aleph_tilde holds a (points x radial grid) array; bound its memory
        vals = np.concatenate([aleph_tilde(r * knorm[s:s + RELAXATION_CHUNK], l, i, j)
                               for s in range(0, len(knorm), RELAXATION_CHUNK)] or [np.zeros(0)])
        # infeasible transfers have no q at all
        hd = np.array(grid.half_widths("G_d"))
        vals = np.where(np.all(np.abs(nus) <= hd, axis=1), vals, 0.0)
        return vals / r ** (2 * l)
    stride, refine = aleph_stride(grid, strategy)
    vals = kernels.aleph_max(geom.gramian, r, l, _padded(l, i), _padded(l, j),
                             grid.half_widths("G"), nus, stride, refine, legendre)
    return vals / r ** (2 * l)


# ---------------------------------------------------------------- radial relaxation

_PROJECTOR_ARG_GRID = np.linspace(0.0, RADIAL_CUTOFF + 2.0, 1401)


@lru_cache(maxsize=None)
def _radial_poly(l: int, i: int) -> Polynomial:
    coef = np.zeros(l + 2 * len(PROJECTOR_POLY[l][i - 1]))
    for k, c in enumerate(PROJECTOR_POLY[l][i - 1]):
        coef[l + 2 * k] = c
    return Polynomial(coef)


@lru_cache(maxsize=None)
def _critical_points(l: int, i: int) -> np.ndarray:
    """Positive stationary points of F~_l^i: roots of P' - x P."""
    p = _radial_poly(l, i)
    d = p.deriv() - Polynomial([0.0, 1.0]) * p
    roots = d.roots()
    real = roots[np.abs(roots.imag) < 1e-9].real
    return np.sort(real[real > 0])


def _abs_f(l, i, x):
    p = _radial_poly(l, i)
    return np.abs(p(x) * np.exp(-0.5 * x * x))


def _range_max(l: int, i: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact max of |F~_l^i| on [lo, hi], elementwise."""
    best = np.maximum(_abs_f(l, i, lo), _abs_f(l, i, hi))
    for c in _critical_points(l, i):
        inside = (lo <= c) & (c <= hi)
        best = np.where(inside, np.maximum(best, _abs_f(l, i, c)), best)
    return best


def aleph_tilde(r, l: int, i: int, j: int) -> np.ndarray:
    """max |F~_i(r_p) F~_j(r_q)| over r_p, r_q >= 0 with |r_p - r_q| <= r <= r_p + r_q."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    a = _PROJECTOR_ARG_GRID
    fa = _abs_f(l, i, a)[None, :]
    rr = r[:, None]
    vals = fa * _range_max(l, j, np.abs(a[None, :] - rr), a[None, :] + rr)
    k = np.argmax(vals, axis=1)
    best = vals[np.arange(len(r)), k]
    # polish around the coarse argmax: the product is continuous in a
    h = a[1] - a[0]
    centre = a[k]
    for _ in range(3):
        offs = np.linspace(-h, h, 41)
        trial = np.clip(centre[:, None] + offs[None, :], 0.0, None)
        tv = _abs_f(l, i, trial) * _range_max(l, j, np.abs(trial - rr), trial + rr)
        kk = np.argmax(tv, axis=1)
        better = tv[np.arange(len(r)), kk]
        centre = np.where(better > best, trial[np.arange(len(r)), kk], centre)
        best = np.maximum(best, better)
        h = offs[1] - offs[0]
    return best


@lru_cache(maxsize=None)
def aleph_tilde_moment(l: int, i: int, j: int) -> float:
    """int_0^inf r^2 aleph~(r) dr, symmetric in (i, j) and species-independent."""
    i, j = min(i, j), max(i, j)
    upper = 2.0 * RADIAL_CUTOFF
    nodes, weights = np.polynomial.legendre.leggauss(24)
    edges = np.linspace(0.0, upper, 241)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * weights)
    r = np.concatenate(rs)
    w = np.concatenate(ws)
    vals = aleph_tilde(r, l, i, j)
    return math.fsum((w * r * r * vals).tolist())


def lambda_nonloc_integral(species: GthSpecies) -> float:
    """Per-nucleus integral estimate of the separated nonlocal lambda."""
    terms = []
    for l, i, j, e in species.channels():
        ct = scaled_projector_constant(l, i) * scaled_projector_constant(l, j)
        terms.append((2 * l + 1) / (8.0 * math.pi ** 3) * abs(e) * ct * aleph_tilde_moment(l, i, j))
    return math.fsum(terms)


# ---------------------------------------------------------------- explicit nonlocal sums

def _unique_channels(species: GthSpecies):
    """(l, i, j, |E_ij|, multiplicity) with i <= j; aleph_ij and aleph_ji share sums."""
    out = []
    for l, i, j, e in species.channels():
        if i <= j:
            out.append((l, i, j, abs(e), 1 if i == j else 2))
    return out


def _half_space(points: np.ndarray) -> np.ndarray:
    """Mask of vectors that are zero or lexicographically positive."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return (x > 0) | ((x == 0) & ((y > 0) | ((y == 0) & (z >= 0))))


def _mirror_fill(points: np.ndarray, mask: np.ndarray, half_vals: np.ndarray,
                 half_widths) -> np.ndarray:
    """Values on every point from values on the half space, using f(-v) = f(v)."""
    h = np.asarray(half_widths)
    dims = 2 * h + 1
    flat = lambda p: ((p[:, 0] + h[0]) * dims[1] + (p[:, 1] + h[1])) * dims[2] + (p[:, 2] + h[2])
    lookup = np.zeros(int(np.prod(dims)))
    hp = points[mask]
    lookup[flat(hp)] = half_vals
    lookup[flat(-hp)] = half_vals
    return lookup[flat(points)]


def aleph_on_points(species: GthSpecies, points: np.ndarray, l: int, i: int, j: int,
                    geom: ReciprocalGeometry, grid: MillerGrid, strategy: str,
                    legendre: bool = True) -> np.ndarray:
    """aleph over a point set closed under negation, halving the work when i == j."""
    if i != j:
        return aleph(species, points, l, i, j, geom, grid, strategy, legendre)
    mask = _half_space(points)
    half_vals = aleph(species, points[mask], l, i, j, geom, grid, strategy, legendre)
    bound = np.max(np.abs(points), axis=0)
    return _mirror_fill(points, mask, half_vals, bound)


def lambda_nonloc_sum(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid,
                      strategy: str = "decimated") -> float:
    """Per-nucleus separated sum over G_d of (2l+1)/(4 pi Omega) |E| C C aleph."""
    pts = grid.points("G_d")
    terms = []
    for l, i, j, e, mult in _unique_channels(species):
        r = species.r_proj[l]
        cc = projector_constant(l, i, r) * projector_constant(l, j, r)
        vals = aleph_on_points(species, pts, l, i, j, geom, grid, strategy)
        terms.append(mult * (2 * l + 1) / (4.0 * math.pi * geom.volume) * e * cc
                     * math.fsum(vals.tolist()))
    return math.fsum(terms)


def aleph_box_stats(species: GthSpecies, l: int, i: int, j: int, geom: ReciprocalGeometry,
                    grid: MillerGrid, strategy: str = "decimated", legendre: bool = True) -> BlockStats:
    """Block statistics of aleph over the outer box (zero outside G_d)."""
    pts = block_ordered_points(grid)
    hd = np.array(grid.half_widths("G_d"))
    inside = np.all(np.abs(pts) <= hd, axis=1)
    vals = np.zeros(len(pts))
    vals[inside] = aleph_on_points(species, pts[inside], l, i, j, geom, grid, strategy, legendre)
    return BlockStats.from_block_values(grid, vals)


BOX_OUTER_DOMAINS = ("G_d", "box")
ENVELOPE_SAMPLES = 8192
ENVELOPE_MARGIN = 1.01  # covers the gap between envelope samples


def _radial_envelope(l: int, i: int, j: int, x_max: float):
    """Non-increasing upper bound x -> max over y >= x of aleph_tilde(y)."""
    xs = np.linspace(0.0, x_max, ENVELOPE_SAMPLES)
    vals = np.concatenate([aleph_tilde(xs[s:s + RELAXATION_CHUNK], l, i, j)
                           for s in range(0, len(xs), RELAXATION_CHUNK)])
    suffix = np.maximum.accumulate(vals[::-1])[::-1] * ENVELOPE_MARGIN
    step = xs[1] - xs[0]
    return lambda x: suffix[np.minimum((x / step).astype(np.int64), len(xs) - 1)]


def aleph_shell_maxima(species: GthSpecies, l: int, i: int, j: int, geom: ReciprocalGeometry,
                       grid: MillerGrid, deltas, strategy: str = "decimated",
                       legendre: bool = True, outer: str = "G_d") -> tuple[np.ndarray, np.ndarray]:
    """(max of aleph, size) per nested-box shell mu = 1..mu_max, index mu - 1.

    ``outer`` picks where shell sizes are counted: ``G_d`` (the transfers that
    occur) or ``box``, the full signed box B_mu_max, one layer wider per axis.

    Points of a shell are visited by increasing |k|; the radial envelope bounds
    aleph from above, so the scan stops once it falls below the running maximum.
    Gives the same maxima as :func:`aleph_box_stats`.
    """
    if outer not in BOX_OUTER_DOMAINS:
        raise InputError(f"unknown outer domain {outer!r}; choose from {BOX_OUTER_DOMAINS}")
    scheme = build_scheme(grid, deltas, include_origin=True)
    pts = block_ordered_points(grid)
    shells = shell_indices(pts, scheme.deltas)
    hd = np.array(grid.half_widths("G_d"))
    inside = np.all(np.abs(pts) <= hd, axis=1)
    counted = shells[inside] if outer == "G_d" else shells
    sz = np.bincount(counted - 1, minlength=scheme.mu_max)[:scheme.mu_max].astype(np.int64)
    if strategy == "relaxation":
        mx, _, _ = aleph_box_stats(species, l, i, j, geom, grid, strategy, legendre).shell_table(
            scheme.deltas, scheme.mu_max)
        return mx, sz
    keep = inside
    if i == j:
        keep &= _half_space(pts)
    pts, shells = pts[keep], shells[keep]
    r = species.r_proj[l]
    knorm = np.sqrt(geom.norm_sq(pts))
    bound = _radial_envelope(l, i, j, r * float(knorm.max()) + 1.0)
    scale = r ** (2 * l)
    mx = np.zeros(scheme.mu_max)
    for mu in np.unique(shells):
        sel = np.flatnonzero(shells == mu)
        sel = sel[np.argsort(knorm[sel], kind="stable")]
        ub = bound(r * knorm[sel]) / scale
        best, start, batch = 0.0, 0, 64
        while start < len(sel) and ub[start] >= best:
            stop = min(start + batch, len(sel))
            best = max(best, float(aleph(species, pts[sel[start:stop]], l, i, j, geom, grid,
                                         strategy, legendre).max()))
            start, batch = stop, 2 * batch
        mx[mu - 1] = best
    return mx, sz


def lambda_nonloc_box(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid, deltas,
                      strategy: str = "decimated", outer: str = "G_d") -> float:
    """Per-nucleus sum with aleph replaced by its maximum over each nested-box shell."""
    scheme = build_scheme(grid, deltas, include_origin=True)
    terms = []
    for l, i, j, e, mult in _unique_channels(species):
        r = species.r_proj[l]
        cc = projector_constant(l, i, r) * projector_constant(l, j, r)
        mx, sz = aleph_shell_maxima(species, l, i, j, geom, grid, scheme.deltas, strategy, outer=outer)
        shell_total = math.fsum((mx * sz).tolist())
        terms.append(mult * (2 * l + 1) / (4.0 * math.pi * geom.volume) * e * cc * shell_total)
    return math.fsum(terms)


def _combined_channels(species: GthSpecies, volume: float):
    chans = []
    for l, i, j, e in species.channels():
        r = species.r_proj[l]
        w = (2 * l + 1) / (4.0 * math.pi * volume) * e * projector_constant(l, i, r) * projector_constant(l, j, r)
        chans.append((l, r, _padded(l, i), _padded(l, j), w))
    return chans


def lambda_nonloc_pointwise(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid,
                            strategy: str = "decimated") -> float:
    """Per-nucleus sum over G_d of max_q |u_non(q, q - nu)| with all channels combined."""
    if strategy == "relaxation":
        raise InputError("the pointwise nonlocal sum needs a q-grid strategy")
    stride, refine = aleph_stride(grid, strategy)
    pts = grid.points("G_d")
    mask = _half_space(pts)
    half_vals = kernels.combined_nonlocal_max(geom.gramian, _combined_channels(species, geom.volume),
                                              grid.half_widths("G"), pts[mask], stride, refine)
    vals = _mirror_fill(pts, mask, half_vals, grid.half_widths("G_d"))
    return math.fsum(vals.tolist())


NONLOCAL_VARIANTS = ("pointwise", "sum", "box", "integral")


def lambda_nonloc(counts: dict[str, int], table: dict[str, GthSpecies], eta: int,
                  geom: ReciprocalGeometry | None = None, grid: MillerGrid | None = None,
                  variant: str = "box", deltas=(0, 0, 0),
                  strategy: str = "decimated", box_outer: str = "G_d") -> tuple[float, dict[str, float]]:
    """Full-system lambda_nonloc and its per-nucleus breakdown."""
    if variant not in NONLOCAL_VARIANTS:
        raise InputError(f"unknown lambda_nonloc variant {variant!r}")
    if variant != "integral" and (geom is None or grid is None):
        raise InputError(f"the {variant} variant needs a geometry and a grid")
    per: dict[str, float] = {}
    for label in sorted(counts):
        sp = table[label]
        if variant == "integral":
            per[label] = lambda_nonloc_integral(sp)
        elif variant == "pointwise":
            per[label] = lambda_nonloc_pointwise(sp, geom, grid, strategy)
        elif variant == "sum":
            per[label] = lambda_nonloc_sum(sp, geom, grid, strategy)
        else:
            per[label] = lambda_nonloc_box(sp, geom, grid, deltas, strategy, box_outer)
    total = eta * math.fsum(counts[k] * v for k, v in per.items())
    return total, per


# ---------------------------------------------------------------- shell bounds and errors

def psi_bounds(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid, deltas,
               kind: int, l: int = 0, i: int = 1, j: int = 1, strategy: str = "decimated",
               legendre: bool = True) -> np.ndarray:
    """Shell maxima used as preparation amplitudes, index mu - 1.

    kind 0: e^{-x^2/2}/|k|^2 with x = r_loc |k|; kind 1: |poly_j(x^2)| e^{-x^2/2};
    kind 2: aleph for channel (l, i, j).  Local kinds leave the origin shell at zero.
    """
    scheme = build_scheme(grid, deltas, include_origin=(kind == 2))
    r2 = species.r_loc ** 2
    if kind == 0:
        stats = BlockStats.from_function(grid, lambda p: np.exp(-0.5 * r2 * geom.norm_sq(p)) / geom.norm_sq(p))
    elif kind == 1:
        stats = BlockStats.from_function(
            grid, lambda p: np.abs(local_poly(j, r2 * geom.norm_sq(p))) * np.exp(-0.5 * r2 * geom.norm_sq(p)))
    elif kind == 2:
        return aleph_shell_maxima(species, l, i, j, geom, grid, scheme.deltas, strategy, legendre)[0]
    else:
        raise InputError("kind must be 0, 1 or 2")
    mx, _, _ = stats.shell_table(scheme.deltas, scheme.mu_max)
    return mx


def interp_error_lambda(species: GthSpecies, geom: ReciprocalGeometry, grid: MillerGrid,
                        approx_exp, region: str = "box") -> float:
    """Per-nucleus local sum with e^{-z} replaced by |approx_exp(z) - e^{-z}|."""
    r2 = species.r_loc ** 2

    def fn(k2):
        z = 0.5 * r2 * k2
        return _local_terms(species, k2, geom.volume) * np.abs(approx_exp(z) - np.exp(-z))

    return _box_reduce(geom, grid, fn, region)


@dataclass(frozen=True)
class PositionErrorBound:
    local: float
    nonlocal_: float
    rigorous: float | None = None


def position_error_bound(delta_r: float, lambda_loc_value: float, lambda_nonloc_value: float,
                         species: list[GthSpecies]) -> PositionErrorBound:
    """Heuristic energy error from nuclear positions known to delta_r (Bohr)."""
    if delta_r < 0:
        raise InputError("delta_r must be non-negative")
    r_loc = min(sp.r_loc for sp in species)
    r_nl = min((r for sp in species for r in sp.r_proj), default=r_loc)
    return PositionErrorBound(delta_r * lambda_loc_value / r_loc, delta_r * lambda_nonloc_value / r_nl)


def position_error_rigorous(delta_r: float, eta: int, counts: dict[str, int],
                            table: dict[str, GthSpecies], geom: ReciprocalGeometry,
                            grid: MillerGrid) -> float:
    """eta delta_r sum_alpha L_alpha sum_{v in G_0} |k_v| |u_loc(k_v)| for the local part."""
    if delta_r < 0:
        raise InputError("delta_r must be non-negative")
    parts = []
    for label in sorted(counts):
        sp = table[label]
        s = _box_reduce(geom, grid, lambda k2: np.sqrt(k2) * np.abs(u_loc_k(sp, k2, geom.volume)), "G_0")
        parts.append(counts[label] * s)
    return eta * delta_r * math.fsum(parts)


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class LambdaReport:
    lambda_t: float
    lambda_v: float
    lambda_loc: float
    lambda_nonloc: float
    loc_variant: str
    nonloc_variant: str
    strategy: str
    loc_per_species: dict
    nonloc_per_species: dict
    interp_error: float | None = None

    @property
    def total(self) -> float:
        return self.lambda_t + self.lambda_v + self.lambda_loc + self.lambda_nonloc


def lambda_report(counts: dict[str, int], table: dict[str, GthSpecies], eta: int,
                  geom: ReciprocalGeometry, grid: MillerGrid, deltas=(0, 0, 0),
                  loc_variant: str = "sum", nonloc_variant: str = "box",
                  strategy: str = "decimated", approx_exp=None, box_outer: str = "G_d") -> LambdaReport:
    """Every lambda component for one system; ``approx_exp`` adds the interpolation error."""
    loc, loc_per = lambda_loc(counts, table, eta, geom, grid, loc_variant)
    nl, nl_per = lambda_nonloc(counts, table, eta, geom, grid, nonloc_variant, deltas, strategy, box_outer)
    err = None
    if approx_exp is not None:
        err = eta * math.fsum(counts[k] * interp_error_lambda(table[k], geom, grid, approx_exp)
                              for k in sorted(counts))
    return LambdaReport(lambda_t(eta, geom, grid), lambda_v(eta, geom, grid), loc, nl,
                        loc_variant, nonloc_variant, strategy, loc_per, nl_per, err)
