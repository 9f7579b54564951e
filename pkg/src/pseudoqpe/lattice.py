"""Simulation cells, reciprocal geometry and Miller-index grids.

All lengths are in Bohr.  Lattice vectors are stored as the rows of a 3x3
array, so ``cell.lattice[0]`` is the first Bravais vector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import InputError

TWO_PI = 2.0 * np.pi

# relative tolerance for recognising structural zeros and equalities in the Gramian
STRUCTURE_RTOL = 1e-9
# Cholesky pivots below this fraction of max|g_ij| count as singular
PD_PIVOT_RTOL = 1e-12

REGIONS = ("G", "G_d", "G_0", "box")


@dataclass(frozen=True)
class Atom:
    species: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class SimulationCell:
    """Bravais vectors (rows, Bohr) and an optional atom list."""

    lattice: np.ndarray
    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        a = np.array(self.lattice, dtype=float)
        if a.shape != (3, 3) or not np.all(np.isfinite(a)):
            raise InputError("lattice must be a finite 3x3 array")
        a.setflags(write=False)
        object.__setattr__(self, "lattice", a)
        atoms = tuple(self.atoms)
        for atom in atoms:
            if len(atom.position) != 3 or not all(np.isfinite(atom.position)):
                raise InputError(f"atom {atom.species} has a non-finite position")
        object.__setattr__(self, "atoms", atoms)

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.lattice))

    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=float).reshape(-1, 3)

    def species_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for atom in self.atoms:
            counts[atom.species] = counts.get(atom.species, 0) + 1
        return counts


@dataclass(frozen=True)
class ReciprocalGeometry:
    """Reciprocal vectors g(i) as rows, their Gramian and the cell volume."""

    vectors: np.ndarray
    gramian: np.ndarray
    volume: float

    def norm_sq(self, p) -> np.ndarray:
        """Squared norm of k_p for Miller vectors ``p`` (last axis of length 3)."""
        p = np.asarray(p, dtype=float)
        g = self.gramian
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        return (g[0, 0] * x * x + g[1, 1] * y * y + g[2, 2] * z * z
                + 2.0 * (g[0, 1] * x * y + g[1, 2] * y * z + g[0, 2] * x * z))

    def dot(self, p, q) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return np.einsum("...i,ij,...j->...", p, self.gramian, q)

    def kvec(self, p) -> np.ndarray:
        """Explicit Cartesian momentum sum_a p_a g(a)."""
        return np.asarray(p, dtype=float) @ self.vectors


def reciprocal_geometry(cell: SimulationCell) -> ReciprocalGeometry:
    a = cell.lattice
    det = np.linalg.det(a)
    scale = np.max(np.abs(a)) ** 3
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale:
        raise InputError("degenerate cell: lattice vectors are linearly dependent")
    if det < 0:
        raise InputError("lattice vectors must be right-handed (det > 0)")
    g = TWO_PI * np.linalg.inv(a).T
    gram = g @ g.T
    gram = 0.5 * (gram + gram.T)
    check_positive_definite(gram)
    g.setflags(write=False)
    gram.setflags(write=False)
    return ReciprocalGeometry(vectors=g, gramian=gram, volume=float(det))


def check_positive_definite(gram: np.ndarray) -> None:
    """Cholesky with an explicit pivot floor; raises on failure."""
    m = np.array(gram, dtype=float)
    floor = PD_PIVOT_RTOL * np.max(np.abs(m))
    n = m.shape[0]
    low = np.zeros_like(m)
    for j in range(n):
        pivot = m[j, j] - np.dot(low[j, :j], low[j, :j])
        if not pivot > floor:
            raise InputError(f"Gramian is not positive definite (pivot {pivot:.3e})")
        low[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            low[i, j] = (m[i, j] - np.dot(low[i, :j], low[j, :j])) / low[j, j]


@dataclass(frozen=True)
class MillerGrid:
    """Bit counts per axis; N_a = 2**n_a - 1 points per axis in G."""

    bits: tuple[int, int, int]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != 3 or min(bits) < 1:
            raise InputError("grid bits must be three integers >= 1")
        object.__setattr__(self, "bits", bits)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return tuple(2 ** b - 1 for b in self.bits)

    def half_widths(self, region: str) -> tuple[int, int, int]:
        """Largest |index| per axis for a region."""
        if region == "G":
            return tuple((n - 1) // 2 for n in self.sizes)
        if region in ("G_d", "G_0"):
            return tuple(n - 1 for n in self.sizes)
        if region == "box":
            return tuple(self.sizes)
        raise InputError(f"unknown region {region!r}")

    def count(self, region: str) -> int:
        hx, hy, hz = self.half_widths(region)
        total = (2 * hx + 1) * (2 * hy + 1) * (2 * hz + 1)
        return total - 1 if region in ("G_0", "box") else total

    def axes(self, region: str) -> list[np.ndarray]:
        return [np.arange(-h, h + 1) for h in self.half_widths(region)]

    def points(self, region: str) -> np.ndarray:
        """All Miller vectors of a region, z fastest, values ascending.

        ``box`` is the full signed box |v_a| <= 2**n_a - 1 without the origin,
        the support of the nested-box preparation.
        """
        ax = self.axes(region)
        mesh = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
        if region in ("G_0", "box"):
            mesh = mesh[np.any(mesh != 0, axis=1)]
        return mesh

    def enumerate(self, region: str) -> Iterator[tuple[int, int, int]]:
        ax = [range(-h, h + 1) for h in self.half_widths(region)]
        skip_origin = region in ("G_0", "box")
        for p in itertools.product(*ax):
            if skip_origin and p == (0, 0, 0):
                continue
            yield p


def tile_supercell(cell: SimulationCell, reps: Sequence[int]) -> SimulationCell:
    reps = tuple(int(r) for r in reps)
    if len(reps) != 3 or min(reps) < 1:
        raise InputError("supercell repetitions must be three integers >= 1")
    a = cell.lattice
    new_lattice = a * np.array(reps, dtype=float)[:, None]
    atoms = []
    for shift in itertools.product(*(range(r) for r in reps)):
        offset = np.array(shift, dtype=float) @ a
        for atom in cell.atoms:
            pos = tuple(float(v) for v in np.asarray(atom.position) + offset)
            atoms.append(Atom(atom.species, pos))
    return SimulationCell(new_lattice, tuple(atoms))


def _close(x: float, y: float, scale: float) -> bool:
    return abs(x - y) <= STRUCTURE_RTOL * scale


def classify_gramian(gram: np.ndarray) -> str:
    """Name of the cheapest arithmetic pattern matching a Gramian.

    Returned names match :data:`pseudoqpe.costmodel.ARITH_CASES`.
    """
    g = np.asarray(gram, dtype=float)
    s = float(np.max(np.abs(g)))
    g11, g22, g33 = g[0, 0], g[1, 1], g[2, 2]
    g12, g23, g13 = g[0, 1], g[1, 2], g[0, 2]
    z12, z23, z13 = (_close(v, 0.0, s) for v in (g12, g23, g13))

    if (not (z12 or z23 or z13) and _close(g11, g22, s) and _close(g22, g33, s)
            and all(_close(-3.0 * v, g11, s) for v in (g12, g23, g13))):
        return "diamond"
    if z12 and z23 and z13:
        if _close(g11, g22, s) or _close(g22, g33, s) or _close(g11, g33, s):
            return "two-equal-diag"
        return "orthogonal"
    if z13 and z23 and _close(g11, g22, s) and (_close(g11, 2 * g12, s) or _close(g11, -2 * g12, s)):
        return "hexagonal"
    if sum((z12, z23, z13)) == 2:
        if z12 and z23:
            return "one-product-xz"
        if z13 and z23:
            return "one-product-xy"
        return "one-product-yz"
    if not (z12 or z23 or z13) and _close(g11, g22, s) and _close(g23, -g13, s):
        return "mirror-xy"
    return "general"
