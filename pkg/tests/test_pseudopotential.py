import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import sph_harm_y

from pseudoqpe.errors import InputError, ParseError
from pseudoqpe.lattice import Atom, MillerGrid, SimulationCell, reciprocal_geometry
from pseudoqpe.pseudopotential import (PROJECTOR_POLY, GthSpecies, dense_potential_matrix,
                                       f_tilde, format_gth, legendre_weighted_product,
                                       load_species_table, parse_gth_blocks, parse_gth_text,
                                       projector_constant, species_term_count, u_loc_k,
                                       u_nonloc_element, u_nonloc_k)

LI_BLOCK = """\
Li GTH-PADE-q1
    1
     0.78755305    2    -1.89261247     0.28605968
    2
     0.66637518    1     1.85881111
     1.07930561    1    -0.00589504
"""


def test_parse_li_block():
    sp = parse_gth_text(LI_BLOCK)
    assert sp.label == "Li" and sp.z_ion == 1
    assert sp.r_loc == 0.78755305
    assert sp.c_local == (-1.89261247, 0.28605968, 0.0, 0.0)
    assert sp.r_proj == (0.66637518, 1.07930561)
    assert sp.h[0][0, 0] == 1.85881111 and sp.h[1][0, 0] == -0.00589504


def test_bundled_table_matches_block(table):
    assert table["Li"] == parse_gth_text(LI_BLOCK)


def test_round_trip_every_bundled_species(table):
    for label, sp in table.items():
        assert parse_gth_text(format_gth(sp)) == sp, label


def test_asymmetric_matrix_rejected():
    h = np.zeros((3, 3))
    h[0, 1], h[1, 0] = 1.0, 1.0 + 1e-6
    with pytest.raises(InputError, match="symmetric"):
        GthSpecies("X", 1, 0.5, (0, 0, 0, 0), (0.4,), (h,))


def test_tiny_asymmetry_is_symmetrised():
    h = np.zeros((3, 3))
    h[0, 1], h[1, 0] = 1.0, 1.0 + 1e-10
    sp = GthSpecies("X", 1, 0.5, (0, 0, 0, 0), (0.4,), (h,))
    assert sp.h[0][0, 1] == sp.h[0][1, 0]


@pytest.mark.parametrize("text,line", [
    ("Li x\n 1\n 0.7 2 -1.8\n 0\n", 3),          # coefficient count mismatch
    ("Li x\n 1\n 0.7 0\n 1\n 0.6 2 1.0\n", 5),   # projector row ends early
    ("Li x\n 1\n 0.7 0\n 1\n 0.6 1 abc\n", 5),   # non-numeric
    ("Li x\n 1\n 0.7 0\n", 3),                   # missing channel count
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_gth_blocks(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_single_block_required():
    with pytest.raises(ParseError):
        parse_gth_text(LI_BLOCK + LI_BLOCK.replace("Li", "Na"))


def test_projector_constant_closed_form():
    assert projector_constant(0, 1, 1.0) == pytest.approx(4 * math.sqrt(2) * math.pi ** 1.25, rel=1e-15)
    assert PROJECTOR_POLY[0][2] == (15, -10, 1)
    assert all(PROJECTOR_POLY[l][0] == (1,) for l in range(3))
    with pytest.raises(InputError):
        projector_constant(3, 1, 1.0)


@settings(max_examples=50, deadline=None)
@given(l=st.integers(0, 2), i=st.integers(1, 3), r=st.floats(0.05, 3.0))
def test_projector_constant_scales_as_power(l, i, r):
    c = lambda rr: projector_constant(l, i, rr) / rr ** (l + 1.5)
    assert c(2 * r) == pytest.approx(c(r), rel=1e-13)
    assert projector_constant(l, i, r) > 0


def test_f_tilde_values():
    assert f_tilde(0, 1, 0.0) == 1.0
    for i in (1, 2, 3):
        assert f_tilde(1, i, 0.0) == 0.0
    assert f_tilde(0, 2, 1.0) == pytest.approx(2 * math.exp(-0.5), rel=1e-15)


def test_f_tilde_polynomial_matches_table():
    for l in range(3):
        for i in range(1, 4):
            c = PROJECTOR_POLY[l][i - 1]
            for x in (1.0, 2.0):
                poly = sum(cx * x ** (2 * k) for k, cx in enumerate(c))
                assert f_tilde(l, i, x) * math.exp(x * x / 2) / x ** l == pytest.approx(poly, rel=1e-13)


def test_legendre_weighted_product_cases():
    assert legendre_weighted_product(0, 0.3, 2.0, 5.0) == 1.0
    assert legendre_weighted_product(1, 0.5, 1.0, 1.0) == 0.5
    assert legendre_weighted_product(2, 1.0, 1.0, 1.0) == 1.0
    with pytest.raises(InputError):
        legendre_weighted_product(3, 1.0, 1.0, 1.0)


def _u_loc_reference(z, r, c, k2, omega):
    # transcription of the momentum-space local potential, term by term
    x2 = r * r * k2
    g = math.exp(-x2 / 2)
    polys = [1.0, 3 - x2, 15 - 10 * x2 + x2 ** 2, 105 - 105 * x2 + 21 * x2 ** 2 - x2 ** 3]
    return -4 * math.pi * z / omega * g / k2 + math.sqrt(8 * math.pi ** 3) * r ** 3 / omega * g * sum(
        cj * pj for cj, pj in zip(c, polys))


def test_u_loc_against_reference(table):
    c = table["C"]
    k2 = 1.0 / c.r_loc ** 2
    assert u_loc_k(c, k2, 100.0) == pytest.approx(
        _u_loc_reference(c.z_ion, c.r_loc, c.c_local, k2, 100.0), rel=1e-12)
    for label, sp in table.items():
        for k2 in (0.01, 0.7, 9.0):
            assert u_loc_k(sp, k2, 321.0) == pytest.approx(
                _u_loc_reference(sp.z_ion, sp.r_loc, sp.c_local, k2, 321.0), rel=1e-12, abs=1e-300), label


def test_u_loc_without_polynomial_is_pure_coulomb(table):
    mn = table["Mn"]
    assert all(c == 0 for c in mn.c_local)
    k2 = 0.8
    expect = -4 * math.pi * mn.z_ion / 50.0 * math.exp(-0.5 * mn.r_loc ** 2 * k2) / k2
    assert u_loc_k(mn, k2, 50.0) == pytest.approx(expect, rel=1e-14)


def test_u_loc_decays_and_diverges(table):
    c = table["C"]
    assert abs(u_loc_k(c, 1e4, 10.0)) < 1e-100
    with pytest.raises(InputError):
        u_loc_k(c, 0.0, 10.0)


def test_nonlocal_at_zero_momenta(table, diamond):
    c = table["C"]
    expect = projector_constant(0, 1, c.r_proj[0]) ** 2 * c.h[0][0, 0] / (4 * math.pi * diamond.volume)
    assert u_nonloc_element(c, (0, 0, 0), (0, 0, 0), diamond) == pytest.approx(expect, rel=1e-14)


def _sph_oracle(sp, kp, kq, omega):
    """Nonlocal element from the spherical-harmonic expansion of the projectors."""
    def angles(k):
        n = np.linalg.norm(k)
        if n == 0:
            return 0.0, 0.0
        return math.acos(np.clip(k[2] / n, -1, 1)), math.atan2(k[1], k[0])

    tp, pp = angles(kp)
    tq, pq = angles(kq)
    total = 0.0
    for l, h in enumerate(sp.h):
        r = sp.r_proj[l]
        ylm = sum(sph_harm_y(l, m, tp, pp) * np.conj(sph_harm_y(l, m, tq, pq)) for m in range(-l, l + 1))
        radial = 0.0
        for i in range(3):
            for j in range(3):
                if h[i, j]:
                    radial += (h[i, j] * projector_constant(l, i + 1, r) * projector_constant(l, j + 1, r)
                               * f_tilde(l, i + 1, r * np.linalg.norm(kp))
                               * f_tilde(l, j + 1, r * np.linalg.norm(kq)) / r ** (2 * l))
        total += (-1) ** l * ylm.real * radial
    return total / omega


def test_nonlocal_against_spherical_harmonics(table, lno):
    grid = MillerGrid((2, 2, 2))
    pts = grid.points("G")
    for label in ("Ni", "Li", "O"):
        sp = table[label]
        for q in pts:
            for p in pts:
                got = u_nonloc_element(sp, q, q - p, lno, grid)
                ref = _sph_oracle(sp, p @ lno.vectors, q @ lno.vectors, lno.volume)
                assert got == pytest.approx(ref, rel=1e-10, abs=1e-14), (label, q, p)


def test_nonlocal_symmetric_in_momenta(table, lno):
    rng = np.random.default_rng(0)
    ni = table["Ni"]
    for _ in range(50):
        q, p = rng.integers(-3, 4, 3), rng.integers(-3, 4, 3)
        assert u_nonloc_element(ni, q, q - p, lno) == pytest.approx(u_nonloc_element(ni, p, p - q, lno), rel=1e-13)


def test_nonlocal_outside_grid_rejected(table, lno):
    with pytest.raises(InputError):
        u_nonloc_element(table["C"], (2, 0, 0), (0, 0, 0), lno, MillerGrid((2, 2, 2)))


@pytest.mark.parametrize("label,count", [("C", 4), ("Li", 5), ("Ni", 11), ("Mn", 11), ("O", 4), ("N", 4)])
def test_term_counts(table, label, count):
    assert species_term_count(table[label]) == count


def _cell(atoms):
    a = np.array([[6.0, 0.3, 0.0], [0.0, 5.5, 0.4], [0.2, 0.0, 7.0]])
    return SimulationCell(a, tuple(Atom(s, p) for s, p in atoms))


def test_dense_matrix_single_atom_real_symmetric(table):
    m = dense_potential_matrix(_cell([("O", (0.0, 0.0, 0.0))]), MillerGrid((2, 2, 2)), table)
    assert np.allclose(m.imag, 0.0, atol=0)
    assert np.allclose(m, m.T, rtol=0, atol=1e-12)


def test_dense_matrix_hermitian_and_translation_invariant(table):
    atoms = [("Li", (0.3, 1.1, 2.0)), ("O", (2.5, 0.7, 4.1))]
    cell = _cell(atoms)
    grid = MillerGrid((2, 2, 2))
    m = dense_potential_matrix(cell, grid, table)
    assert np.max(np.abs(m - m.conj().T)) <= 1e-10 * np.max(np.abs(m))
    shift = cell.lattice[0] - 2 * cell.lattice[2]
    moved = _cell([(s, tuple(np.asarray(p) + shift)) for s, p in atoms])
    assert np.allclose(dense_potential_matrix(moved, grid, table), m, rtol=0, atol=1e-10 * np.max(np.abs(m)))


def test_dense_matrix_against_term_by_term_sum(table):
    atoms = [("Li", (0.3, 1.1, 2.0)), ("O", (2.5, 0.7, 4.1))]
    cell = _cell(atoms)
    grid = MillerGrid((2, 2, 2))
    geom = reciprocal_geometry(cell)
    m = dense_potential_matrix(cell, grid, table)
    pts = list(grid.enumerate("G"))
    for a, q in enumerate(pts):
        for b, qp in enumerate(pts):
            nu = np.subtract(q, qp)
            k = nu @ geom.vectors
            val = 0j
            for s, pos in atoms:
                sp = table[s]
                u = u_nonloc_k(sp, geom.dot(qp, q), geom.norm_sq(q), geom.norm_sq(qp), geom.volume)
                if nu.any():
                    u += _u_loc_reference(sp.z_ion, sp.r_loc, sp.c_local, float(k @ k), geom.volume)
                val += np.exp(-1j * float(k @ np.asarray(pos))) * u
            assert abs(m[a, b] - val) <= 1e-10 * max(1.0, abs(val))


def test_dense_matrix_refuses_large_grids(table):
    with pytest.raises(InputError, match="too large"):
        dense_potential_matrix(_cell([("C", (0, 0, 0))]), MillerGrid((5, 5, 5)), table)


def test_override_file_replaces_species(tmp_path, table):
    path = tmp_path / "li.txt"
    path.write_text(LI_BLOCK.replace("0.78755305", "0.80000000"))
    over = load_species_table(path)
    assert over["Li"].r_loc == 0.8 and over["C"] == table["C"]
