"""Hot loops: the q-maximisation behind aleph and the combined nonlocal maximum.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  Set ``PSEUDOQPE_BACKEND=numpy`` to force
the numpy path (it is also used when numba is missing).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def backend() -> str:
    """Active backend name, re-read from the environment on every call."""
    want = os.environ.get("PSEUDOQPE_BACKEND", "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"PSEUDOQPE_BACKEND must be 'numba' or 'numpy', got {want!r}")
    return "numba" if (want == "numba" and HAS_NUMBA) else "numpy"


def _maybe_njit(**kw):
    def wrap(fn):
        if HAS_NUMBA:
            return numba.njit(cache=True, **kw)(fn)
        return fn
    return wrap


# ---------------------------------------------------------------- scalar helpers

@_maybe_njit()
def _radial(x2, c0, c1, c2, l, x):
    # c0 + c1 x^2 + c2 x^4, times x^l and the Gaussian
    poly = c0 + x2 * (c1 + x2 * c2)
    xl = 1.0
    for _ in range(l):
        xl *= x
    return xl * poly * math.exp(-0.5 * x2)


@_maybe_njit()
def _legendre_abs(l, pq, p2, q2):
    if l == 0:
        return 1.0
    den = math.sqrt(p2 * q2)
    if den == 0.0:
        return 1.0
    c = pq / den
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    if l == 1:
        return abs(c)
    return abs(0.5 * (3.0 * c * c - 1.0))


@_maybe_njit()
def _pair_value(gram, r, l, ci, cj, use_leg, qx, qy, qz, px, py, pz):
    q2 = (gram[0, 0] * qx * qx + gram[1, 1] * qy * qy + gram[2, 2] * qz * qz
          + 2.0 * (gram[0, 1] * qx * qy + gram[1, 2] * qy * qz + gram[0, 2] * qx * qz))
    p2 = (gram[0, 0] * px * px + gram[1, 1] * py * py + gram[2, 2] * pz * pz
          + 2.0 * (gram[0, 1] * px * py + gram[1, 2] * py * pz + gram[0, 2] * px * pz))
    fp = _radial(r * r * p2, ci[0], ci[1], ci[2], l, r * math.sqrt(p2))
    fq = _radial(r * r * q2, cj[0], cj[1], cj[2], l, r * math.sqrt(q2))
    v = abs(fp * fq)
    if use_leg and l > 0 and v > 0.0:
        pq = (gram[0, 0] * px * qx + gram[1, 1] * py * qy + gram[2, 2] * pz * qz
              + gram[0, 1] * (px * qy + py * qx) + gram[1, 2] * (py * qz + pz * qy)
              + gram[0, 2] * (px * qz + pz * qx))
        v *= _legendre_abs(l, pq, p2, q2)
    return v


# ---------------------------------------------------------------- aleph: numba path

@_maybe_njit()
def _aleph_numba(gram, r, l, ci, cj, use_leg, half, nus, stride, refine):
    """For each nu: max over q in G (q + nu in G) of |P_l F_i(p) F_j(q)|, p = q + nu."""
    m = nus.shape[0]
    out = np.zeros(m)
    hx, hy, hz = half[0], half[1], half[2]
    for k in range(m):
        nx, ny, nz = nus[k, 0], nus[k, 1], nus[k, 2]
        lox, hix = max(-hx, -hx - nx), min(hx, hx - nx)
        loy, hiy = max(-hy, -hy - ny), min(hy, hy - ny)
        loz, hiz = max(-hz, -hz - nz), min(hz, hz - nz)
        if lox > hix or loy > hiy or loz > hiz:
            continue
        best = -1.0
        bx, by, bz = lox, loy, loz
        # include the upper edge so the coarse pass reaches both boundaries
        for qx in range(lox, hix + 1):
            if stride > 1 and (qx - lox) % stride != 0 and qx != hix:
                continue
            for qy in range(loy, hiy + 1):
                if stride > 1 and (qy - loy) % stride != 0 and qy != hiy:
                    continue
                for qz in range(loz, hiz + 1):
                    if stride > 1 and (qz - loz) % stride != 0 and qz != hiz:
                        continue
                    v = _pair_value(gram, r, l, ci, cj, use_leg,
                                    qx, qy, qz, qx + nx, qy + ny, qz + nz)
                    if v > best:
                        best = v
                        bx, by, bz = qx, qy, qz
        if refine:
            moved = True
            while moved:
                moved = False
                cx, cy, cz = bx, by, bz
                for dx in range(-1, 2):
                    for dy in range(-1, 2):
                        for dz in range(-1, 2):
                            qx, qy, qz = cx + dx, cy + dy, cz + dz
                            if qx < lox or qx > hix or qy < loy or qy > hiy or qz < loz or qz > hiz:
                                continue
                            v = _pair_value(gram, r, l, ci, cj, use_leg,
                                            qx, qy, qz, qx + nx, qy + ny, qz + nz)
                            if v > best:
                                best = v
                                bx, by, bz = qx, qy, qz
                                moved = True
        out[k] = best
    return out


# ---------------------------------------------------------------- aleph: numpy path

def _radial_np(x2, c, l, x):
    poly = c[0] + x2 * (c[1] + x2 * c[2])
    return x ** l * poly * np.exp(-0.5 * x2)


def _pair_values_np(gram, r, l, ci, cj, use_leg, q, p):
    q2 = np.einsum("ni,ij,nj->n", q, gram, q)
    p2 = np.einsum("ni,ij,nj->n", p, gram, p)
    v = np.abs(_radial_np(r * r * p2, ci, l, r * np.sqrt(p2))
               * _radial_np(r * r * q2, cj, l, r * np.sqrt(q2)))
    if use_leg and l > 0:
        pq = np.einsum("ni,ij,nj->n", p, gram, q)
        den = np.sqrt(p2 * q2)
        c = np.clip(np.divide(pq, den, out=np.zeros_like(pq), where=den > 0), -1.0, 1.0)
        leg = np.abs(c) if l == 1 else np.abs(0.5 * (3.0 * c * c - 1.0))
        v = v * np.where(den > 0, leg, 1.0)
    return v


def _axis_samples(lo, hi, stride):
    vals = list(range(lo, hi + 1, stride))
    if vals[-1] != hi:
        vals.append(hi)
    return np.array(vals)


def _aleph_numpy(gram, r, l, ci, cj, use_leg, half, nus, stride, refine):
    out = np.zeros(len(nus))
    half = np.asarray(half)
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * 3), indexing="ij"), -1).reshape(-1, 3)
    for k, nu in enumerate(np.asarray(nus)):
        lo = np.maximum(-half, -half - nu)
        hi = np.minimum(half, half - nu)
        if np.any(lo > hi):
            continue
        axes = [_axis_samples(lo[a], hi[a], stride) for a in range(3)]
        q = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        vals = _pair_values_np(gram, r, l, ci, cj, use_leg, q.astype(float), (q + nu).astype(float))
        idx = int(np.argmax(vals))
        best, bq = vals[idx], q[idx]
        while refine:
            cand = bq + offsets
            ok = np.all((cand >= lo) & (cand <= hi), axis=1)
            cand = cand[ok]
            cv = _pair_values_np(gram, r, l, ci, cj, use_leg, cand.astype(float), (cand + nu).astype(float))
            j = int(np.argmax(cv))
            if cv[j] > best:
                best, bq = cv[j], cand[j]
            else:
                break
        out[k] = best
    return out


def aleph_max(gram, r, l, ci, cj, half, nus, stride=1, refine=False, use_legendre=True):
    """Vector of max_q |P_l F~_i(r|k_{q+nu}|) F~_j(r|k_q|)| over the nus given.

    ``ci``/``cj`` are the projector polynomial coefficients padded to length 3,
    ``half`` the half-widths of G.  The 1/r^{2l} factor is left to the caller.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    ci = np.ascontiguousarray(ci, dtype=float)
    cj = np.ascontiguousarray(cj, dtype=float)
    half = np.ascontiguousarray(half, dtype=np.int64)
    nus = np.ascontiguousarray(nus, dtype=np.int64).reshape(-1, 3)
    fn = _aleph_numba if backend() == "numba" else _aleph_numpy
    return fn(gram, float(r), int(l), ci, cj, bool(use_legendre), half, nus, int(stride), bool(refine))


# ---------------------------------------------------------------- combined nonlocal maximum

@_maybe_njit()
def _combined_value(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w, qx, qy, qz, px, py, pz):
    q2 = (gram[0, 0] * qx * qx + gram[1, 1] * qy * qy + gram[2, 2] * qz * qz
          + 2.0 * (gram[0, 1] * qx * qy + gram[1, 2] * qy * qz + gram[0, 2] * qx * qz))
    p2 = (gram[0, 0] * px * px + gram[1, 1] * py * py + gram[2, 2] * pz * pz
          + 2.0 * (gram[0, 1] * px * py + gram[1, 2] * py * pz + gram[0, 2] * px * pz))
    pq = (gram[0, 0] * px * qx + gram[1, 1] * py * qy + gram[2, 2] * pz * qz
          + gram[0, 1] * (px * qy + py * qx) + gram[1, 2] * (py * qz + pz * qy)
          + gram[0, 2] * (px * qz + pz * qx))
    tot = 0.0
    for c in range(chan_l.shape[0]):
        l = chan_l[c]
        r = chan_r[c]
        fp = _radial(r * r * p2, chan_ci[c, 0], chan_ci[c, 1], chan_ci[c, 2], 0, 0.0)
        fq = _radial(r * r * q2, chan_cj[c, 0], chan_cj[c, 1], chan_cj[c, 2], 0, 0.0)
        if l == 0:
            leg = 1.0
        elif l == 1:
            leg = -pq
        else:
            leg = 0.5 * (3.0 * pq * pq - p2 * q2)
        tot += chan_w[c] * leg * fp * fq
    return abs(tot)


@_maybe_njit()
def _combined_numba(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w, half, nus, stride, refine):
    m = nus.shape[0]
    out = np.zeros(m)
    hx, hy, hz = half[0], half[1], half[2]
    for k in range(m):
        nx, ny, nz = nus[k, 0], nus[k, 1], nus[k, 2]
        lox, hix = max(-hx, -hx - nx), min(hx, hx - nx)
        loy, hiy = max(-hy, -hy - ny), min(hy, hy - ny)
        loz, hiz = max(-hz, -hz - nz), min(hz, hz - nz)
        if lox > hix or loy > hiy or loz > hiz:
            continue
        best = -1.0
        bx, by, bz = lox, loy, loz
        for qx in range(lox, hix + 1):
            if stride > 1 and (qx - lox) % stride != 0 and qx != hix:
                continue
            for qy in range(loy, hiy + 1):
                if stride > 1 and (qy - loy) % stride != 0 and qy != hiy:
                    continue
                for qz in range(loz, hiz + 1):
                    if stride > 1 and (qz - loz) % stride != 0 and qz != hiz:
                        continue
                    v = _combined_value(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w,
                                        qx, qy, qz, qx + nx, qy + ny, qz + nz)
                    if v > best:
                        best = v
                        bx, by, bz = qx, qy, qz
        if refine:
            moved = True
            while moved:
                moved = False
                cx, cy, cz = bx, by, bz
                for dx in range(-1, 2):
                    for dy in range(-1, 2):
                        for dz in range(-1, 2):
                            qx, qy, qz = cx + dx, cy + dy, cz + dz
                            if qx < lox or qx > hix or qy < loy or qy > hiy or qz < loz or qz > hiz:
                                continue
                            v = _combined_value(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w,
                                                qx, qy, qz, qx + nx, qy + ny, qz + nz)
                            if v > best:
                                best = v
                                bx, by, bz = qx, qy, qz
                                moved = True
        out[k] = best
    return out


def _combined_numpy(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w, half, nus, stride, refine):
    out = np.zeros(len(nus))
    half = np.asarray(half)
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * 3), indexing="ij"), -1).reshape(-1, 3)

    def values(q, nu):
        p = (q + nu).astype(float)
        qf = q.astype(float)
        q2 = np.einsum("ni,ij,nj->n", qf, gram, qf)
        p2 = np.einsum("ni,ij,nj->n", p, gram, p)
        pq = np.einsum("ni,ij,nj->n", p, gram, qf)
        tot = np.zeros(len(q))
        for c in range(len(chan_l)):
            l, r = chan_l[c], chan_r[c]
            fp = _radial_np(r * r * p2, chan_ci[c], 0, 1.0)
            fq = _radial_np(r * r * q2, chan_cj[c], 0, 1.0)
            leg = 1.0 if l == 0 else (-pq if l == 1 else 0.5 * (3.0 * pq * pq - p2 * q2))
            tot += chan_w[c] * leg * fp * fq
        return np.abs(tot)

    for k, nu in enumerate(np.asarray(nus)):
        lo = np.maximum(-half, -half - nu)
        hi = np.minimum(half, half - nu)
        if np.any(lo > hi):
            continue
        axes = [_axis_samples(lo[a], hi[a], stride) for a in range(3)]
        q = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        vals = values(q, nu)
        idx = int(np.argmax(vals))
        best, bq = vals[idx], q[idx]
        while refine:
            cand = bq + offsets
            cand = cand[np.all((cand >= lo) & (cand <= hi), axis=1)]
            cv = values(cand, nu)
            j = int(np.argmax(cv))
            if cv[j] > best:
                best, bq = cv[j], cand[j]
            else:
                break
        out[k] = best
    return out


def combined_nonlocal_max(gram, channels, half, nus, stride=1, refine=False):
    """Vector of max_q |sum over channels| for the full nonlocal element.

    ``channels`` is a list of (l, r_l, ci, cj, weight) where weight already
    contains (2l+1)/(4 pi) E_ij C_li C_lj and the sign (-1)^l is applied here
    through the Legendre term.  Radial parts exclude the x^l factor, which the
    Legendre-weighted product supplies as |p|^l |q|^l.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    chan_l = np.array([c[0] for c in channels], dtype=np.int64)
    chan_r = np.array([c[1] for c in channels], dtype=float)
    chan_ci = np.array([c[2] for c in channels], dtype=float).reshape(-1, 3)
    chan_cj = np.array([c[3] for c in channels], dtype=float).reshape(-1, 3)
    chan_w = np.array([c[4] for c in channels], dtype=float)
    half = np.ascontiguousarray(half, dtype=np.int64)
    nus = np.ascontiguousarray(nus, dtype=np.int64).reshape(-1, 3)
    fn = _combined_numba if backend() == "numba" else _combined_numpy
    return fn(gram, chan_l, chan_r, chan_ci, chan_cj, chan_w, half, nus, int(stride), bool(refine))
