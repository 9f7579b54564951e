import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudoqpe.errors import InputError
from pseudoqpe.lattice import MillerGrid
from pseudoqpe.nested_boxes import (BlockStats, box_sizes, build_scheme, delta_candidates,
                                    inverse_square_weight, optimize_deltas, prep_weights,
                                    shell_index, shell_indices, shell_prep_weights,
                                    success_probability)

from conftest import cubic

deltas_st = st.tuples(*[st.integers(0, 2)] * 3).filter(lambda d: min(d) == 0)


def test_mu_max_examples():
    assert build_scheme(MillerGrid((6, 6, 6))).mu_max == 7
    assert build_scheme(MillerGrid((5, 5, 7)), (1, 1, 0)).mu_max == 8


def test_mu_min_follows_origin_flag():
    grid = MillerGrid((3, 3, 3))
    assert build_scheme(grid).mu_min == 2
    assert build_scheme(grid, include_origin=True).mu_min == 1


def test_deltas_validated():
    grid = MillerGrid((3, 3, 3))
    for bad in [(1, 1, 1), (-1, 0, 0), (0, 0)]:
        with pytest.raises(InputError):
            build_scheme(grid, bad)


def test_first_box_is_origin():
    scheme = build_scheme(MillerGrid((3, 3, 3)), (1, 0, 2))
    pts = MillerGrid((3, 3, 3)).points("G_d")
    inside = [tuple(p) for p in pts if scheme.contains(p, 1)]
    assert inside == [(0, 0, 0)]
    assert box_sizes(scheme, 1) == (1, 8)


def test_second_box_sizes():
    scheme = build_scheme(MillerGrid((4, 4, 4)))
    assert box_sizes(scheme, 2) == (27, 64)
    with pytest.raises(InputError):
        box_sizes(scheme, scheme.mu_max + 1)


def _bitstring_counts(bits, deltas, mu):
    """Enumerate sign/magnitude strings whose magnitude bit length fits the box."""
    per_axis_strings, per_axis_values = [], []
    for n, d in zip(bits, deltas):
        allowed = max(mu - d - 1, 0)
        strings = [(s, m) for s in (0, 1) for m in range(2 ** n) if m.bit_length() <= allowed]
        per_axis_strings.append(len(strings))
        per_axis_values.append(len({(-m if s else m) for s, m in strings}))
    return int(np.prod(per_axis_values)), int(np.prod(per_axis_strings))


@pytest.mark.parametrize("deltas", [(0, 0, 0), (1, 1, 0), (1, 0, 2), (0, 2, 1)])
def test_box_sizes_match_bitstring_enumeration(deltas):
    bits = (3, 3, 3)
    scheme = build_scheme(MillerGrid(bits), deltas, include_origin=True)
    for mu in range(1, scheme.mu_max + 1):
        assert box_sizes(scheme, mu) == _bitstring_counts(bits, deltas, mu), mu


@settings(max_examples=30, deadline=None)
@given(deltas=deltas_st)
def test_boxes_nest_and_shells_partition(deltas):
    grid = MillerGrid((3, 2, 3))
    scheme = build_scheme(grid, deltas, include_origin=True)
    box = grid.half_widths("box")
    pts = np.array(list(itertools.product(*[range(-h, h + 1) for h in box])))
    member = np.array([[scheme.contains(p, mu) for p in pts] for mu in range(1, scheme.mu_max + 1)])
    assert np.all(member[:-1] <= member[1:])
    assert member[-1].all()
    assert [int(m.sum()) for m in member] == [box_sizes(scheme, mu)[0] for mu in range(1, scheme.mu_max + 1)]
    first = member.argmax(axis=0) + 1
    assert np.array_equal(first, shell_indices(pts, deltas))


def test_shell_index_matches_predicate_at_four_bits():
    grid = MillerGrid((4, 4, 4))
    for deltas in [(0, 0, 0), (1, 1, 0), (2, 0, 1)]:
        scheme = build_scheme(grid, deltas, include_origin=True)
        for p in grid.points("G_d")[::7]:
            mu = shell_index(p, deltas)
            assert scheme.contains(p, mu) and (mu == 1 or not scheme.contains(p, mu - 1))


def _random_u(seed):
    rng = np.random.default_rng(seed)
    vals = {}

    def u(pts):
        out = np.empty(len(pts))
        for k, p in enumerate(map(tuple, pts)):
            if p not in vals:
                vals[p] = rng.uniform(0.0, 5.0)
            out[k] = vals[p]
        return out

    return u


def _shell_oracle(grid, deltas, u, mu_max):
    box = grid.half_widths("box")
    pts = np.array([p for p in itertools.product(*[range(-h, h + 1) for h in box]) if any(p)])
    vals = u(pts)
    mu = np.array([shell_index(p, deltas) for p in pts])
    mx = np.array([vals[mu == m].max() if np.any(mu == m) else 0.0 for m in range(1, mu_max + 1)])
    sz = np.array([int(np.sum(mu == m)) for m in range(1, mu_max + 1)])
    return mx, sz, vals.sum()


@pytest.mark.parametrize("seed,deltas", [(1, (0, 0, 0)), (2, (1, 0, 1)), (3, (0, 2, 0))])
def test_telescoping_identity(seed, deltas):
    grid = MillerGrid((3, 3, 3))
    u = _random_u(seed)
    scheme = build_scheme(grid, deltas)
    w = prep_weights(scheme, u)
    mx, _, _ = _shell_oracle(grid, deltas, u, scheme.mu_max)
    for mu in range(scheme.mu_min, scheme.mu_max + 1):
        tail = sum(w.psi_tilde_sq[m - scheme.mu_min] / box_sizes(scheme, m)[1]
                   for m in range(mu, scheme.mu_max + 1))
        assert tail == pytest.approx(mx[mu - 1:].max(), rel=1e-12)


@pytest.mark.parametrize("seed,deltas", [(4, (0, 0, 0)), (5, (1, 1, 0))])
def test_shell_weights_match_brute_force(seed, deltas):
    grid = MillerGrid((3, 3, 3))
    u = _random_u(seed)
    scheme = build_scheme(grid, deltas)
    w = shell_prep_weights(scheme, u)
    mx, sz, total = _shell_oracle(grid, deltas, u, scheme.mu_max)
    expect = sz[scheme.mu_min - 1:] * mx[scheme.mu_min - 1:]
    assert np.allclose(w.psi_tilde_sq, expect, rtol=1e-13)
    assert w.success_probability == pytest.approx(total / expect.sum(), rel=1e-12)
    assert np.sum(w.psi ** 2) == pytest.approx(1.0, abs=1e-12)


def test_constant_weight():
    grid = MillerGrid((3, 2, 3))
    scheme = build_scheme(grid, (1, 0, 0))
    one = lambda p: np.ones(len(p))
    nested = prep_weights(scheme, one)
    assert np.count_nonzero(nested.psi_tilde_sq) == 1 and nested.psi_tilde_sq[-1] > 0
    strings = box_sizes(scheme, scheme.mu_max)[1]
    assert nested.success_probability == pytest.approx(grid.count("box") / strings, rel=1e-14)
    shell = shell_prep_weights(scheme, one)
    sizes = [box_sizes(scheme, m)[0] - box_sizes(scheme, m - 1)[0] for m in range(2, scheme.mu_max + 1)]
    assert np.array_equal(shell.psi_tilde_sq, np.array(sizes, dtype=float))
    assert shell.success_probability == pytest.approx(1.0, rel=1e-14)


def test_single_spike_lands_in_its_shell():
    grid = MillerGrid((3, 3, 3))
    target = (3, -1, 0)
    u = lambda pts: np.where(np.all(pts == target, axis=1), 7.0, 0.0)
    scheme = build_scheme(grid)
    w = shell_prep_weights(scheme, u)
    k = shell_index(target, (0, 0, 0)) - scheme.mu_min
    assert w.psi_tilde_sq[k] > 0 and np.count_nonzero(w.psi_tilde_sq) == 1


def test_negative_or_zero_weights_rejected():
    scheme = build_scheme(MillerGrid((2, 2, 2)))
    with pytest.raises(InputError):
        prep_weights(scheme, lambda p: -np.ones(len(p)))
    with pytest.raises(InputError):
        success_probability(scheme, lambda p: np.zeros(len(p)))


@pytest.mark.parametrize("n,p", [(5, 0.23334), (6, 0.22339), (7, 0.21771)])
def test_diamond_success_probability(diamond, n, p):
    scheme = build_scheme(MillerGrid((n,) * 3))
    assert success_probability(scheme, inverse_square_weight(diamond)) == pytest.approx(p, abs=1e-4)


def test_calcium_titanate_success_probability(geom_of):
    scheme = build_scheme(MillerGrid((5, 5, 5)), (1, 1, 0))
    assert success_probability(scheme, inverse_square_weight(geom_of("CaTiO3"))) == pytest.approx(0.26494, abs=1e-4)


def test_success_probability_non_increasing_in_grid(geom_of, cells):
    for name in ("diamond", "Pt-2x2", "LNO-P2c"):
        geom = geom_of(name)
        d = cells[name]["deltas"]
        ps = [success_probability(build_scheme(MillerGrid((n,) * 3), d), inverse_square_weight(geom))
              for n in (4, 5, 6)]
        assert ps[0] >= ps[1] >= ps[2], name


def test_block_stats_reuse_matches_direct(diamond):
    grid = MillerGrid((4, 4, 4))
    u = inverse_square_weight(diamond)
    stats = BlockStats.from_function(grid, u)
    for d in [(0, 0, 0), (1, 1, 0), (0, 2, 1)]:
        scheme = build_scheme(grid, d)
        assert success_probability(scheme, stats) == success_probability(scheme, u)


def test_delta_candidates_order():
    c = delta_candidates(2)
    assert c[0] == (0, 0, 0)
    assert all(min(d) == 0 for d in c)
    assert [sum(d) for d in c] == sorted(sum(d) for d in c)
    with pytest.raises(InputError):
        delta_candidates(5)


def test_optimizer_prefers_smallest_on_ties():
    # on a cube no shift does strictly better, so the tie rule keeps zero
    best, _ = optimize_deltas(MillerGrid((3, 3, 3)), cubic(), 2)
    assert best == (0, 0, 0)
