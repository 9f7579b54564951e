"""GTH pseudopotential parameters and their momentum-space functions.

Species parameters are read from CP2K-style text blocks.  The bundled LDA
(Pade) parameter set lives in ``data/gth_lda.txt``; files passed by the user
override species by label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .lattice import MillerGrid, ReciprocalGeometry, SimulationCell

DATASET_VERSION = "gth-lda-pade-1"
MAX_L = 2
MAX_PROJECTORS = 3
# asymmetry tolerated in a parsed h matrix before it is rejected
SYMMETRY_TOL = 1e-8

# Polynomial coefficients c_{x,li} of the projector radial parts, indexed [l][i-1].
PROJECTOR_POLY: tuple[tuple[tuple[int, ...], ...], ...] = (
    ((1,), (3, -1), (15, -10, 1)),
    ((1,), (5, -1), (35, -14, 1)),
    ((1,), (7, -1), (63, -18, 1)),
)

# C_li / (pi^{5/4} r_l^{l+3/2}) for each (l, i).
_PROJECTOR_PREFACTOR = (
    (4.0 * math.sqrt(2.0), 8.0 * math.sqrt(2.0 / 15.0), 16.0 / 3.0 * math.sqrt(2.0 / 105.0)),
    (8.0 * math.sqrt(1.0 / 3.0), 16.0 * math.sqrt(1.0 / 105.0), 32.0 / 3.0 * math.sqrt(1.0 / 1155.0)),
    (8.0 * math.sqrt(2.0 / 15.0), 16.0 / 3.0 * math.sqrt(2.0 / 105.0),
     32.0 / 3.0 * math.sqrt(2.0 / 15015.0)),
)

# Polynomials multiplying C_1..C_4 in the local term, in powers of x = (r_loc k)^2.
LOCAL_POLY = ((1.0,), (3.0, -1.0), (15.0, -10.0, 1.0), (105.0, -105.0, 21.0, -1.0))


def projector_constant(l: int, i: int, r_l: float) -> float:
    """Normalisation constant C_li for a projector of radius ``r_l``."""
    if not (0 <= l <= MAX_L and 1 <= i <= MAX_PROJECTORS):
        raise InputError(f"projector (l={l}, i={i}) out of range")
    return _PROJECTOR_PREFACTOR[l][i - 1] * math.pi ** 1.25 * r_l ** (l + 1.5)


def scaled_projector_constant(l: int, i: int) -> float:
    """C_li / r_l^{l+3/2}, independent of the species."""
    return projector_constant(l, i, 1.0)


def f_tilde(l: int, i: int, x):
    """Scaled projector x^l * (sum_x' c_x' x^{2x'}) * exp(-x^2/2)."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    poly = np.zeros_like(x2)
    for c in reversed(PROJECTOR_POLY[l][i - 1]):
        poly = poly * x2 + c
    out = x ** l * poly * np.exp(-0.5 * x2) if l else poly * np.exp(-0.5 * x2)
    return out if out.ndim else float(out)


def local_poly(j: int, x2):
    """Polynomial multiplying C_j in the local term, as a function of x^2."""
    x2 = np.asarray(x2, dtype=float)
    out = np.zeros_like(x2)
    for c in reversed(LOCAL_POLY[j - 1]):
        out = out * x2 + c
    return out


def legendre_weighted_product(l: int, pq, p2, q2):
    """(|p||q|)^l P_l(cos) written with the dot product and squared norms."""
    if l == 0:
        return np.ones_like(np.asarray(pq, dtype=float)) if np.ndim(pq) else 1.0
    if l == 1:
        return pq
    if l == 2:
        return 0.5 * (3.0 * np.asarray(pq) ** 2 - np.asarray(p2) * np.asarray(q2))
    raise InputError(f"l={l} unsupported (max {MAX_L})")


@dataclass(frozen=True, eq=False)
class GthSpecies:
    label: str
    z_ion: int
    r_loc: float
    c_local: tuple[float, float, float, float]
    r_proj: tuple[float, ...]
    h: tuple[np.ndarray, ...]
    name: str = ""
    shell_electrons: tuple[int, ...] = ()

    def __post_init__(self):
        if self.r_loc <= 0 or any(r <= 0 for r in self.r_proj):
            raise InputError(f"{self.label}: radii must be positive")
        if len(self.r_proj) != len(self.h) or len(self.h) > MAX_L + 1:
            raise InputError(f"{self.label}: inconsistent projector channels")
        mats = []
        for m in self.h:
            m = np.array(m, dtype=float).reshape(3, 3)
            if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
                raise InputError(f"{self.label}: h matrix is not symmetric")
            m = 0.5 * (m + m.T)
            m.setflags(write=False)
            mats.append(m)
        object.__setattr__(self, "h", tuple(mats))
        object.__setattr__(self, "c_local", tuple(float(c) for c in self.c_local))

    def _key(self):
        return (self.label, self.z_ion, self.r_loc, self.c_local, self.r_proj,
                tuple(tuple(m.ravel()) for m in self.h))

    def __eq__(self, other):
        return isinstance(other, GthSpecies) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @property
    def l_max(self) -> int:
        return len(self.r_proj) - 1

    def nprj(self, l: int) -> int:
        """Projectors in channel l, from the highest nonzero row of h."""
        m = self.h[l]
        rows = [k for k in range(3) if np.any(m[k] != 0.0) or np.any(m[:, k] != 0.0)]
        return rows[-1] + 1 if rows else 0

    @property
    def max_projector_index(self) -> int:
        return max((self.nprj(l) for l in range(self.l_max + 1)), default=0)

    def channels(self):
        """Yield (l, i, j, E_ij) for every nonzero matrix element."""
        for l, m in enumerate(self.h):
            for i in range(3):
                for j in range(3):
                    if m[i, j] != 0.0:
                        yield l, i + 1, j + 1, float(m[i, j])

    def term_count(self) -> int:
        """Independent values needed in the preparation (local parts + upper-triangle E)."""
        local = 1 + sum(1 for c in self.c_local if c != 0.0)
        nonlocal_ = sum(1 for l, i, j, _ in self.channels() if i <= j)
        return local + nonlocal_


def species_term_count(species: GthSpecies) -> int:
    return species.term_count()


def u_loc_k(species: GthSpecies, k_norm_sq, volume: float):
    """Local pseudopotential in momentum space (Hartree)."""
    k2 = np.asarray(k_norm_sq, dtype=float)
    if np.any(k2 <= 0):
        raise InputError("local potential diverges at k = 0")
    r = species.r_loc
    x2 = r * r * k2
    gauss = np.exp(-0.5 * x2)
    out = -4.0 * math.pi * species.z_ion / volume * gauss / k2
    poly = np.zeros_like(x2)
    for j, c in enumerate(species.c_local, start=1):
        if c != 0.0:
            poly = poly + c * local_poly(j, x2)
    out = out + math.sqrt(8.0 * math.pi ** 3) * r ** 3 / volume * gauss * poly
    return out if out.ndim else float(out)


def u_nonloc_k(species: GthSpecies, pq, p2, q2, volume: float):
    """Nonlocal element for momenta with dot product pq and squared norms p2, q2."""
    pq = np.asarray(pq, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    total = np.zeros(np.broadcast(pq, p2, q2).shape)
    for l, m in enumerate(species.h):
        r = species.r_proj[l]
        xp = r * np.sqrt(p2)
        xq = r * np.sqrt(q2)
        leg = legendre_weighted_product(l, pq, p2, q2)
        sign = -1.0 if l % 2 else 1.0
        acc = np.zeros_like(total)
        for i in range(1, 4):
            for j in range(1, 4):
                e = m[i - 1, j - 1]
                if e == 0.0:
                    continue
                cc = projector_constant(l, i, r) * projector_constant(l, j, r)
                # F~ carries x^l = r^l |k|^l; strip it because leg already holds |p|^l |q|^l
                fp = _radial_part(l, i, xp)
                fq = _radial_part(l, j, xq)
                acc = acc + e * cc * fp * fq
        total = total + sign * (2 * l + 1) / (4.0 * math.pi) * leg * acc
    total = total / volume
    return total if total.ndim else float(total)


def _radial_part(l: int, i: int, x):
    x2 = np.asarray(x, dtype=float) ** 2
    poly = np.zeros_like(x2)
    for c in reversed(PROJECTOR_POLY[l][i - 1]):
        poly = poly * x2 + c
    return poly * np.exp(-0.5 * x2)


def u_nonloc_element(species: GthSpecies, q, nu, geom: ReciprocalGeometry, grid: MillerGrid | None = None):
    """Nonlocal element between q and p = q - nu (Miller vectors)."""
    q = np.asarray(q)
    p = q - np.asarray(nu)
    if grid is not None:
        h = np.array(grid.half_widths("G"))
        if np.any(np.abs(q) > h) or np.any(np.abs(p) > h):
            raise InputError("q and q - nu must both lie in G")
    return u_nonloc_k(species, geom.dot(p, q), geom.norm_sq(p), geom.norm_sq(q), geom.volume)


# ---------------------------------------------------------------- parsing

def _tokens(line: str) -> list[str]:
    return line.split("#", 1)[0].split()


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"non-numeric field: {exc}", lineno) from None


def _int(token, lineno):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", lineno) from None


def parse_gth_blocks(text: str) -> dict[str, GthSpecies]:
    """Parse every species block in a CP2K-style GTH file."""
    lines = [(n, _tokens(raw)) for n, raw in enumerate(text.splitlines(), start=1)]
    lines = [(n, t) for n, t in lines if t]
    out: dict[str, GthSpecies] = {}
    pos = 0

    def pop():
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise ParseError("unexpected end of block", last)
        item = lines[pos]
        pos += 1
        return item

    while pos < len(lines):
        n, head = pop()
        label = head[0]
        if not label[:1].isalpha():
            raise ParseError(f"expected an element label, got {label!r}", n)
        name = head[1] if len(head) > 1 else ""
        n, shells = pop()
        shell_e = tuple(_int(t, n) for t in shells)
        z_ion = sum(shell_e)
        n, loc = pop()
        if len(loc) < 2:
            raise ParseError("local line needs r_loc and the coefficient count", n)
        r_loc = _floats(loc[:1], n)[0]
        nexp = _int(loc[1], n)
        if not 0 <= nexp <= 4 or len(loc) != 2 + nexp:
            raise ParseError(f"expected {nexp} local coefficients, found {len(loc) - 2}", n)
        coeffs = _floats(loc[2:], n) + [0.0] * (4 - nexp)
        n, nch = pop()
        nchan = _int(nch[0], n)
        if len(nch) != 1 or not 0 <= nchan <= MAX_L + 1:
            raise ParseError(f"channel count must be 0..{MAX_L + 1}", n)
        radii, mats = [], []
        for _ in range(nchan):
            n, first = pop()
            if len(first) < 2:
                raise ParseError("projector line needs r_l and the projector count", n)
            r_l = _floats(first[:1], n)[0]
            nprj = _int(first[1], n)
            if not 0 <= nprj <= MAX_PROJECTORS:
                raise ParseError(f"projector count {nprj} out of range", n)
            m = np.zeros((3, 3))
            row_vals = first[2:]
            for row in range(nprj):
                if row > 0:
                    n, row_vals = pop()
                vals = _floats(row_vals, n)
                if len(vals) != nprj - row:
                    raise ParseError(
                        f"h row {row + 1} should have {nprj - row} entries, found {len(vals)}", n)
                for k, v in enumerate(vals):
                    m[row, row + k] = v
                    m[row + k, row] = v
            if nprj == 0 and row_vals:
                raise ParseError("entries given for an empty channel", n)
            radii.append(r_l)
            mats.append(m)
        try:
            sp = GthSpecies(label=label, z_ion=z_ion, r_loc=r_loc, c_local=tuple(coeffs),
                            r_proj=tuple(radii), h=tuple(mats), name=name,
                            shell_electrons=shell_e)
        except InputError as exc:
            raise ParseError(str(exc), n) from None
        out[label] = sp
    return out


def parse_gth_text(text: str) -> GthSpecies:
    blocks = parse_gth_blocks(text)
    if len(blocks) != 1:
        raise ParseError(f"expected one species block, found {len(blocks)}")
    return next(iter(blocks.values()))


def format_gth(species: GthSpecies) -> str:
    """Serialise a species in the same block layout the parser reads."""
    shells = species.shell_electrons or (species.z_ion,)
    out = [f"{species.label} {species.name or 'GTH'}".rstrip(),
           "  " + "  ".join(f"{e:3d}" for e in shells)]
    ncoef = max((k + 1 for k, c in enumerate(species.c_local) if c != 0.0), default=0)
    loc = f"  {species.r_loc:.8f}  {ncoef}"
    loc += "".join(f"  {c:.8f}" for c in species.c_local[:ncoef])
    out.append(loc)
    out.append(f"  {len(species.r_proj)}")
    for l, r in enumerate(species.r_proj):
        nprj = species.nprj(l)
        m = species.h[l]
        for row in range(max(nprj, 1)):
            vals = "".join(f"  {m[row, k]:.8f}" for k in range(row, nprj))
            if row == 0:
                out.append(f"  {r:.8f}  {nprj}{vals}")
            else:
                out.append(" " * 16 + vals)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- bundled data

def data_dir() -> Path:
    """Dataset directory; ``PSEUDOQPE_DATA_DIR`` overrides the bundled one."""
    import os

    override = os.environ.get("PSEUDOQPE_DATA_DIR")
    return Path(override) if override else Path(__file__).with_name("data")


@lru_cache(maxsize=8)
def _load_bundled(path: str) -> dict[str, GthSpecies]:
    return parse_gth_blocks(Path(path).read_text())


def load_species_table(overrides: str | Path | None = None) -> dict[str, GthSpecies]:
    path = data_dir() / "gth_lda.txt"
    if not path.exists():
        raise InputError(f"dataset file not found: {path}")
    table = dict(_load_bundled(str(path)))
    if overrides is not None:
        p = Path(overrides)
        if not p.exists():
            raise InputError(f"potentials file not found: {p}")
        table.update(parse_gth_blocks(p.read_text()))
    return table


def get_species(label: str, table: dict[str, GthSpecies] | None = None) -> GthSpecies:
    table = table if table is not None else load_species_table()
    try:
        return table[label]
    except KeyError:
        raise InputError(f"no GTH parameters for species {label!r}") from None


# ---------------------------------------------------------------- dense matrix

DENSE_MAX_POINTS = 4096


def dense_potential_matrix(cell: SimulationCell, grid: MillerGrid,
                           table: dict[str, GthSpecies] | None = None) -> np.ndarray:
    """One-electron pseudopotential matrix over G (testing oracle).

    Entry (q, q') holds sum_l exp(-i k_nu . R_l) (u_loc(k_nu) + u_non(q, q'))
    with nu = q - q'.  The local term is dropped on the diagonal.
    """
    from .lattice import reciprocal_geometry

    if not cell.atoms:
        raise InputError("dense matrix needs atom positions")
    pts = grid.points("G")
    if len(pts) > DENSE_MAX_POINTS:
        raise InputError(f"grid too large for a dense matrix ({len(pts)} > {DENSE_MAX_POINTS} points)")
    table = table if table is not None else load_species_table()
    geom = reciprocal_geometry(cell)
    q = pts[:, None, :]
    qp = pts[None, :, :]
    nu = q - qp
    k_nu = geom.kvec(nu)
    k2_nu = geom.norm_sq(nu)
    pq = geom.dot(q, qp)
    q2 = geom.norm_sq(q)
    qp2 = geom.norm_sq(qp)
    off = k2_nu > 0
    mat = np.zeros(k2_nu.shape, dtype=complex)
    for label in sorted(cell.species_counts()):
        sp = get_species(label, table)
        uloc = np.zeros_like(k2_nu)
        uloc[off] = u_loc_k(sp, k2_nu[off], geom.volume)
        unon = u_nonloc_k(sp, pq, q2 * np.ones_like(qp2), qp2 * np.ones_like(q2), geom.volume)
        phase = np.zeros(k2_nu.shape, dtype=complex)
        for atom in cell.atoms:
            if atom.species == label:
                phase += np.exp(-1j * (k_nu @ np.asarray(atom.position)))
        mat += phase * (uloc + unon)
    return mat
