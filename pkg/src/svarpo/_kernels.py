"""Fused numba loops over the ``(p, p, p)`` constraint tensors.

These reproduce ``update_xi`` followed by the ``y`` part of
``dual_ascent`` in :mod:`svarpo.solver` in a single pass, and collect the
reductions the next sweep needs, so the tensors are read and written once
per sweep.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def xi_y_pass(lam, edge, xi, y, tau, rho, zk, z_in, z_out):
    """Update ``xi`` and ``y`` in place.

    ``edge`` is ``|At| w + tau (1 - w)``. On return ``zk[i, j] = sum_k (xi + y)``,
    ``z_in[i, k] = sum_j (xi + y)[j, i, k]`` and ``z_out[i, k] = sum_j (xi + y)[i, j, k]``.
    Returns ``(sum r^2, sum y r, sum dxi^2, sum xi_old^2)`` with ``r`` the
    constraint residual at the new iterate.
    """
    p = lam.shape[0]
    rr = 0.0
    yr = 0.0
    dxi = 0.0
    xio = 0.0
    z_in[:, :] = 0.0
    z_out[:, :] = 0.0
    for i in range(p):
        for j in range(p):
            zk[i, j] = 0.0
            if i == j:
                continue
            e = edge[i, j]
            acc = 0.0
            for k in range(p):
                cap = tau * (lam[i, k] - lam[j, k])
                if j != k:
                    cap += tau
                old = xi[i, j, k]
                v = cap - e - y[i, j, k]
                new = v if v > 0.0 else 0.0
                xi[i, j, k] = new
                r = e + new - cap
                yn = y[i, j, k] + r
                y[i, j, k] = yn
                rr += r * r
                yr += yn * r
                dxi += (new - old) * (new - old)
                xio += old * old
                z = new + yn
                acc += z
                z_out[i, k] += z
                z_in[j, k] += z
            zk[i, j] = acc
    return rr, yr, dxi, xio


@numba.njit(cache=True)
def tensor_sums(xi, y, zk, z_in, z_out):
    """The reductions of ``xi + y`` used by the ``At`` and ``lam`` updates."""
    p = xi.shape[0]
    z_in[:, :] = 0.0
    z_out[:, :] = 0.0
    for i in range(p):
        for j in range(p):
            zk[i, j] = 0.0
            if i == j:
                continue
            acc = 0.0
            for k in range(p):
                z = xi[i, j, k] + y[i, j, k]
                acc += z
                z_out[i, k] += z
                z_in[j, k] += z
            zk[i, j] = acc


def warmup():
    p = 2
    lam = np.zeros((p, p))
    t = np.zeros((p, p, p))
    m = np.zeros((p, p))
    xi_y_pass(lam, m, t, t.copy(), 1e-6, 1.0, m.copy(), m.copy(), m.copy())
    tensor_sums(t, t, m.copy(), m.copy(), m.copy())
