"""Toffoli ledger for one block encoding and the phase-estimation total.

Each entry carries the step it costs.  Steps ``1``..``16`` are the
pseudopotential preparation and select steps; ``i``..``ix`` are the shared
costs of the kinetic, Coulomb and register machinery.  Items the costing
treats as negligible appear with a zero count and a note, so the printed
ledger always sums to the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError
from .interpolation import interp_toffoli_cost, parse_interp_spec

ARITH_CASES = (
    "general",
    "mirror-xy",
    "one-product-xz",
    "one-product-xy",
    "one-product-yz",
    "hexagonal",
    "two-equal-diag",
    "orthogonal",
    "diamond",
)
DEFAULT_B = 20
DEFAULT_B_R = 7
DEFAULT_INTERP = "linear:256"
DEFAULT_EPSILON = 1.6e-3
# bits in the mantissa of the kinetic superposition size
KINETIC_D_BITS = 10


@dataclass(frozen=True)
class CostEntry:
    step: str
    label: str
    toffolis: int
    note: str = ""


@dataclass(frozen=True)
class CostReport:
    entries: tuple[CostEntry, ...]
    c_be: int
    lam: float | None = None
    epsilon: float | None = None
    iterations: int | None = None
    qpe_toffolis: int | None = None

    def by_step(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.step] = out.get(e.step, 0) + e.toffolis
        return out


@dataclass(frozen=True)
class SpeciesFeatures:
    """What the select arithmetic must support across all species present."""

    term_count: int  # sum over species of independent preparation values
    l_max: int
    max_projector: int
    species_count: int = 1
    max_nuclei_per_species: int = 1
    nuclei: int = 1


def species_features(counts: dict[str, int], table) -> SpeciesFeatures:
    if not counts:
        raise InputError("at least one species is needed")
    specs = [table[s] for s in counts]
    return SpeciesFeatures(
        term_count=sum(sp.term_count() for sp in specs),
        l_max=max(sp.l_max for sp in specs),
        max_projector=max(sp.max_projector_index for sp in specs),
        species_count=len(specs),
        max_nuclei_per_species=max(int(v) for v in counts.values()),
        nuclei=sum(int(v) for v in counts.values()),
    )


def _clog2(x: int) -> int:
    return 0 if x <= 1 else math.ceil(math.log2(x))


def _check_bits(bits) -> tuple[int, int, int]:
    bits = tuple(int(v) for v in bits)
    if len(bits) != 3 or min(bits) < 1:
        raise InputError("bits must be three positive integers")
    return bits


# ---------------------------------------------------------------- Gramian arithmetic

def _integer_and_real_parts(case: str, n, b: int) -> tuple[float, float]:
    """(integer squarings and products, multiplications by real constants) for a norm."""
    nx, ny, nz = n
    s1 = nx + ny + nz
    s2 = nx * nx + ny * ny + nz * nz
    if case == "general":
        return s1 * s1, 2.5 * s2 + s1 * s1 + 4 * b * s1
    if case == "mirror-xy":
        m = max(nx, ny)
        ints = m * m + nz * nz + 2 * nx * ny + 2 * m * nz
        real = 2 * m * (m + b) + 2 * nz * (nz + b) + (nx + ny) ** 2 / 2 + (nx + ny) * b
        return ints, real
    if case.startswith("one-product-"):
        pair = {"xz": (0, 2, 1), "xy": (0, 1, 2), "yz": (1, 2, 0)}[case[-2:]]
        ints = (n[pair[0]] + n[pair[1]]) ** 2 + n[pair[2]] ** 2
        return ints, 2 * s2 + 2 * b * s1
    if case == "hexagonal":
        return max(nx, ny) ** 2 + nz * nz + 2 * nx * ny, 2 * nz * (nz + b)
    if case == "two-equal-diag":
        return s2, 2 * nx * (nx + b)
    if case == "orthogonal":
        return s2, 2 * nx * (nx + b) + 2 * ny * (ny + b)
    if case == "diamond":
        return 3 * max(n) ** 2, 0
    raise InputError(f"unknown arithmetic case {case!r}; expected one of {ARITH_CASES}")


def gramian_arith_cost(case: str, bits, b: int, kind: str = "norm") -> int:
    """Toffolis for ||k_v||^2 (``norm``) or k_p . k_q (``dot``) under a Gramian pattern.

    A dot product replaces every squaring by a product of two registers and
    every cross product by two, so the integer part doubles while the real
    multiplications are unchanged.
    """
    n = _check_bits(bits)
    if kind not in ("norm", "dot"):
        raise InputError("kind must be 'norm' or 'dot'")
    if b < 1:
        raise InputError("b must be positive")
    ints, real = _integer_and_real_parts(case, n, b)
    if kind == "dot":
        ints *= 2
    return math.ceil(ints + real)


# ---------------------------------------------------------------- ledger pieces

def prep_cost(term_count: int, n_boxes: int, b: int, nuclei: int, b_r: int = DEFAULT_B_R,
              include_logs: bool = True, per_species: int | None = None) -> list[CostEntry]:
    """One pass of the pseudopotential preparation (steps 1-5).

    ``nuclei`` is the total count L read by the position QROM; the nucleus
    index only spans one species, so its superposition uses ``per_species``
    (default L).
    """
    per_species = nuclei if per_species is None else per_species
    if min(term_count, n_boxes, b, nuclei, b_r, per_species) < 1:
        raise InputError("preparation inputs must be positive")
    mn = term_count * n_boxes
    lg = _clog2(mn)
    log_note = "" if include_logs else "logarithmic, excluded"
    return [
        CostEntry("1", "equal superposition over the contiguous register",
                  4 * lg + 1 if include_logs else 0, log_note),
        CostEntry("1", "alias-sampling QROM", mn),
        CostEntry("1", "keep-register inequality test", b),
        CostEntry("1", "alt swap", lg if include_logs else 0, log_note),
        CostEntry("2", "parameter QROM", mn),
        CostEntry("3", "nu preparation in nested boxes", 30 * n_boxes + 2 * b),
        CostEntry("4", "equal superposition over nuclei of one species",
                  max(0, 7 * _clog2(per_species) + 2 * b_r - 6) if include_logs else 0, log_note),
        CostEntry("5", "QROM for nuclear positions", nuclei if include_logs else 0,
                  "" if include_logs else "linear in L, excluded"),
    ]


def pseudo_select_cost(features: SpeciesFeatures, bits, b: int, interp: str,
                       case: str) -> list[CostEntry]:
    """Pseudopotential arithmetic (steps 6-16) for the hardest species present."""
    n = _check_bits(bits)
    order, panels = parse_interp_spec(interp)
    sn = sum(n)
    b2 = b * b
    mp = features.max_projector
    poly = {1: 0, 2: 4 * b, 3: 14 * b}.get(mp)
    if poly is None:
        raise InputError("projector index must be 1, 2 or 3")
    quartic = mp == 3
    legendre2 = features.l_max >= 2
    return [
        CostEntry("6", "controlled copy of q", sn),
        CostEntry("7", "p = q - nu", sn),
        CostEntry("8a", "norm of k_q", gramian_arith_cost(case, n, b, "norm")),
        CostEntry("8b", "scale both norms by r^2", 2 * b2),
        CostEntry("8c", "square both scaled norms", b2 if quartic else 0,
                  "" if quartic else "no i,j = 3 projector"),
        CostEntry("8d", "sum of scaled norms", 0, "addition, excluded"),
        CostEntry("8e", "k_q . k_nu", gramian_arith_cost(case, n, b, "dot")),
        CostEntry("8f", "second Legendre polynomial", math.ceil(1.5 * b2) if legendre2 else 0,
                  "" if legendre2 else "l_max < 2"),
        CostEntry("9", f"exponential by {order} interpolation on {panels} panels",
                  interp_toffoli_cost(order, panels, b)),
        CostEntry("10", "projector polynomials in i and j", poly),
        CostEntry("11", "Legendre selection copy", 2 * b),
        CostEntry("12", "three products", 3 * b2),
        CostEntry("13", "multiply by the shell amplitude", b2),
        CostEntry("14", "controlled multiply by ||k_nu||^2", b2),
        CostEntry("15", "inequality test", 0, "linear in b, excluded"),
        CostEntry("16", "sign as a Z", 0, "constant, excluded"),
    ]


def kinetic_superposition_size(d_bits: int = KINETIC_D_BITS) -> int:
    """Largest d_bits-bit count; the power-of-two factor costs nothing."""
    return 2 ** d_bits - 1


def shared_encoding_cost(eta: int, bits, b: int, case: str, b_r: int = DEFAULT_B_R,
                         d_bits: int = KINETIC_D_BITS) -> list[CostEntry]:
    """Machinery common to the kinetic, Coulomb and pseudopotential terms."""
    n = _check_bits(bits)
    if eta < 1:
        raise InputError("eta must be positive")
    sn = sum(n)
    n_eta = _clog2(eta)
    d = kinetic_superposition_size(d_bits)
    norm = gramian_arith_cost(case, n, b, "norm")
    return [
        CostEntry("i", "term selection registers", 0, "small, excluded"),
        CostEntry("ii", "electron index superpositions", max(0, 14 * n_eta + 8 * b_r - 36)),
        CostEntry("iii", "kinetic register preparation and inverse",
                  2 * max(0, 3 * _clog2(d) + 2 * b_r - 9)),
        CostEntry("iv", "momentum register swaps", 4 * eta * sn + 4 * eta - 8),
        CostEntry("v", "kinetic inequality test", b),
        CostEntry("vi", "1/||k_nu|| state: norm three times", 3 * norm),
        CostEntry("vi", "1/||k_nu|| state: three multiplications", 3 * b * b),
        CostEntry("vii", "nuclear position QROM", 0, "counted in step 5"),
        CostEntry("viii", "nu additions into momentum registers", 8 * sn),
        CostEntry("ix", "phase factor products", sum(v * v for v in n) + 2 * b * sn),
    ]


# ---------------------------------------------------------------- totals

def n_boxes_for(bits, deltas) -> int:
    """Number of shells carrying pseudopotential values, mu_max - 1."""
    return max(a + d for a, d in zip(_check_bits(bits), deltas))


def block_encoding_total(features: SpeciesFeatures, eta: int, bits, deltas, case: str,
                         b: int = DEFAULT_B, b_r: int = DEFAULT_B_R,
                         interp: str = DEFAULT_INTERP, include_logs: bool = True) -> CostReport:
    """Complete ledger for one block encoding.

    The preparation is paid twice, once for its inverse.  ``include_logs=False``
    zeroes the logarithmic preparation terms and the position lookup, leaving
    only the leading-order counts.
    """
    bits = _check_bits(bits)
    if b < max(bits) + 2:
        raise InputError(f"b={b} must be at least max(n)+2={max(bits) + 2}")
    n_boxes = n_boxes_for(bits, deltas)
    prep = prep_cost(features.term_count, n_boxes, b, features.nuclei, b_r, include_logs,
                     features.max_nuclei_per_species)
    entries = [CostEntry(e.step, e.label, e.toffolis, e.note) for e in prep]
    entries += [CostEntry(e.step, e.label + " (inverse)", e.toffolis, e.note) for e in prep]
    entries += pseudo_select_cost(features, bits, b, interp, case)
    entries += shared_encoding_cost(eta, bits, b, case, b_r)
    if any(e.toffolis < 0 for e in entries):
        raise AssertionError("negative ledger entry")
    return CostReport(tuple(entries), sum(e.toffolis for e in entries))


def qpe_iterations(lam: float, epsilon: float) -> int:
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    if not lam > 0:
        raise InputError("lambda must be positive")
    return max(1, math.ceil(lam * math.pi / (2.0 * epsilon)))


def qpe_total(c_be: int, lam: float, epsilon: float = DEFAULT_EPSILON) -> int:
    """Toffolis for phase estimation: ceil(lambda pi / (2 epsilon)) block encodings."""
    return qpe_iterations(lam, epsilon) * int(c_be)


def with_qpe(report: CostReport, lam: float, epsilon: float = DEFAULT_EPSILON) -> CostReport:
    it = qpe_iterations(lam, epsilon)
    return CostReport(report.entries, report.c_be, lam, epsilon, it, it * report.c_be)
