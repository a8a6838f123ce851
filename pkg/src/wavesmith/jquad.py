"""Quadrature template for the memory integral J[G] on a uniform grid.

J[G](x) = int int_R K(e^{y-z},1) G(x+y) G(x+z) dy dz over
R = {y, z <= 0, e^y + e^z >= 1}.  R is symmetric, so with S(s) = K(s)+K(-s)

    J = int_{-inf}^0 dy G(x+y) int_{lo(y)}^0 dz S(z-y) G(x+z),

lo(y) = y for y > -ln 2 and ln(1 - e^y) otherwise; the inner variable never
leaves [-ln 2, 0].  Below y = -W the inner range shrinks like e^y and the
strip contributes G(x) e^{-lam W} 2A(x-W) up to a relative O(e^{-W}).

History between nodes is the piecewise cubic Lagrange interpolant (stencil
centred on the cell, one-sided in the newest cell).  Every quadrature point
therefore touches fixed node offsets with fixed weights, and J at node n is
a bilinear form in the last m+2 node values: J_n = sum_ij M_ij G_{n-i} G_{n-j}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LN2 = math.log(2.0)


def stencil(s, h):
    """Node offsets (k >= 0, node at s = -k h) and cubic Lagrange weights for
    relative abscissae s <= 0.  Returns (offsets[n,4], weights[n,4])."""
    u = -np.asarray(s, dtype=float) / h
    c = np.floor(u).astype(np.int64)
    c = np.maximum(c, 0)
    first = np.where(c == 0, 0, c - 1)
    offs = first[:, None] + np.arange(4)[None, :]
    nodes = offs.astype(float)
    w = np.ones((u.size, 4))
    for a in range(4):
        for b in range(4):
            if a != b:
                w[:, a] *= (u - nodes[:, b]) / (nodes[:, a] - nodes[:, b])
    return offs, w


def _gauss_panels(breaks, ng):
    """Gauss-Legendre nodes/weights on consecutive panels of ``breaks``."""
    x, w = np.polynomial.legendre.leggauss(ng)
    a = np.asarray(breaks[:-1])[:, None]
    b = np.asarray(breaks[1:])[:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w[None, :]
    keep = (b - a)[:, 0] > 0
    return pts[keep].ravel(), wts[keep].ravel()


def _breaks(lo, hi, h):
    """Panel breakpoints on [lo, hi] (hi <= 0) aligned with the grid."""
    k_hi = math.floor(-hi / h + 1e-12)
    k_lo = math.ceil(-lo / h - 1e-12)
    inner = [-k * h for k in range(k_lo - 1, k_hi, -1) if lo < -k * h < hi]
    return [lo] + inner + [hi]


@dataclass(frozen=True)
class JTemplate:
    eps: float
    h: float
    W: float
    m: int            # W = m h; the tail uses A at offset m
    M: np.ndarray     # (rows, cols) bilinear weights, rows index y offsets
    ncols: np.ndarray  # per row, number of leading nonzero columns
    tail: float       # e^{-lam W}; tail term = tail * G_n * 2 A_{n-m}
    ng: int

    @property
    def depth(self) -> int:
        """Number of past nodes the template touches."""
        return self.M.shape[0] - 1


def kernel_sym(s, eps):
    k, l = 1.0 - 0.5 * eps, 0.5 * eps
    return 2.0 * np.cosh(k * s) + 2.0 * np.cosh(l * s)


@lru_cache(maxsize=32)
def build_template(eps: float, h: float, W: float = 20.0, ng: int = 4) -> JTemplate:
    if not (0.0 <= eps < 2.0):
        raise ValueError("eps must lie in [0, 2)")
    if h <= 0 or h > 0.25:
        raise ValueError("step h must lie in (0, 0.25]")
    m = int(round(W / h))
    W = m * h
    rows = m + 2
    cols = int(math.ceil(LN2 / h)) + 3
    M = np.zeros((rows, cols))

    ys, wy = _gauss_panels(_breaks(-LN2, 0.0, h), ng)
    yf, wf = _gauss_panels(_breaks(-W, -LN2, h), ng)
    ys = np.concatenate([ys, yf])
    wy = np.concatenate([wy, wf])
    oy, ly = stencil(ys, h)
    for y, w_y, o_y, l_y in zip(ys, wy, oy, ly):
        lo = y if y > -LN2 else math.log(-math.expm1(y))
        zs, wz = _gauss_panels(_breaks(lo, 0.0, h), ng)
        oz, lz = stencil(zs, h)
        wt = w_y * wz * kernel_sym(zs - y, eps)
        # sum over inner points of wt * lz[:, b] per node offset
        contrib = np.zeros(cols)
        np.add.at(contrib, oz.ravel(), (wt[:, None] * lz).ravel())
        for a in range(4):
            M[o_y[a]] += l_y[a] * contrib
    nz = np.abs(M) > 0
    ncols = np.array([(np.nonzero(r)[0].max() + 1) if r.any() else 0 for r in nz], dtype=np.int64)
    tail = math.exp(-0.5 * eps * W)
    M.setflags(write=False)
    return JTemplate(eps, h, W, m, M, ncols, tail, ng)


def j_from_template(tpl: JTemplate, G: np.ndarray, A: np.ndarray, n: int) -> float:
    """Evaluate J at node n from stored history (all nodes up to n known)."""
    rows, cols = tpl.M.shape
    if n - rows + 1 < 0:
        raise IndexError("history too short for the J window")
    gy = G[n - np.arange(rows)]
    gz = G[n - np.arange(cols)]
    return float(gy @ tpl.M @ gz) + tpl.tail * G[n] * 2.0 * A[n - tpl.m]


def discrete_g_inf(eps: float, h: float, W: float = 20.0, ng: int = 4) -> float:
    """Fixed point of the discrete identity for constant G (exact steady states
    of the exponential integrator, template sum for J, tail with A = G/eps)."""
    tpl = build_template(eps, h, W, ng)
    k, l = 1.0 - 0.5 * eps, 0.5 * eps
    s = 1.0 / (l * l) + 1.0 / (k * k) + float(tpl.M.sum()) + tpl.tail / l
    return 1.0 / s
