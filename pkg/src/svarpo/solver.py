"""Truncated-l1 outer loop around a multi-block ADMM for sparse SVAR estimation.

The contemporaneous matrix ``A`` is kept acyclic through the polyhedral
constraints

    tau*lam_ik + tau*1(j != k) - tau*lam_jk = |At_ij| w_ij + tau (1 - w_ij) + xi_ijk

for ``i != j`` and every ``k``, with ``w_ij = 1(|A_ij| < tau)`` refreshed in
the outer loop. Every primal block has a closed-form update; the data enter
only through three Gram matrices cached once per fit.

Tensors ``xi`` and ``y`` have shape ``(p, p, p)`` indexed ``[i, j, k]``; the
``i == j`` slices are unused and held at zero.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import _kernels
from .model import SVARModel, TimeSeriesSample, as_lag_stack, is_acyclic, support
from .ordering import PartialOrdering

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


# "threshold": w = 1(|At| < tau) starting from w = 1 everywhere.
# "acyclic": start with every allowed edge free, then keep the free set acyclic.
W_STRATEGIES = ("acyclic", "threshold")


@dataclass(frozen=True)
class Hyperparams:
    mu_A: float = 0.1
    mu_B: float = 0.12
    tau: float = 1e-4
    rho: float = 1.0
    max_outer: int = 10
    max_inner: int = 500
    tol_inner: float | None = None
    tol_outer: float = 0.0
    warm_start_B: bool = False
    w_strategy: str = "acyclic"

    def __post_init__(self):
        if self.mu_A < 0 or self.mu_B < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.w_strategy not in W_STRATEGIES:
            raise ValueError(f"w_strategy must be one of {W_STRATEGIES}")
        if self.tau <= 0 or self.rho <= 0:
            raise ValueError("tau and rho must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")

    def inner_tol(self, n):
        """Default ADMM tolerance: tighter when the sample is short."""
        if self.tol_inner is not None:
            return self.tol_inner
        return 1e-4 if n >= 100 else 1e-5

    def replace(self, **kw):
        return replace(self, **kw)


class Problem:
    """Data summaries and constraint geometry shared by every block update."""

    def __init__(self, X, X_lag, prior=None):
        X = np.asarray(X, dtype=float)
        X_lag = np.asarray(X_lag, dtype=float)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(X_lag))):
            raise ValueError("data contain non-finite values")
        self.n, self.p = X.shape
        self.dp = X_lag.shape[1]
        self.d = self.dp // self.p
        self.Gxx = X.T @ X / self.n
        self.Gxl = X.T @ X_lag / self.n
        self.Gll = X_lag.T @ X_lag / self.n
        self.prior = prior if prior is not None else PartialOrdering.empty(self.p)
        if self.prior.p != self.p:
            raise ValueError(f"prior has p={self.prior.p}, data have p={self.p}")
        self.allowed = self.prior.allowed_mask()
        self.forbidden = self.prior.mask()
        self.offdiag = ~np.eye(self.p, dtype=bool)
        # 1(j != k) on the (j, k) plane, broadcast over i.
        self.notjk = (1.0 - np.eye(self.p))[None, :, :]
        self.tmask = np.broadcast_to(self.offdiag[:, :, None], (self.p,) * 3)
        self._rho = None

    @classmethod
    def from_sample(cls, sample, d, prior=None):
        if isinstance(sample, TimeSeriesSample):
            X, X_lag = sample.lagged(d)
        else:
            X, X_lag = TimeSeriesSample(sample).lagged(d)
        return cls(X, X_lag, prior)

    def factor(self, rho):
        """Invert the row systems for ``A`` and the shared system for ``B``.

        ``rho`` and the data are fixed during a fit, so this is done once.
        ``HA[i]`` holds ``(Gxx[S_i, S_i] + rho I)^{-1}`` embedded on ``S_i``.
        """
        if self._rho == rho:
            return
        p = self.p
        self.HA = np.zeros((p, p, p))
        for i in range(p):
            S = np.flatnonzero(self.allowed[i])
            if S.size == 0:
                continue
            M = self.Gxx[np.ix_(S, S)] + rho * np.eye(S.size)
            cf = linalg.cho_factor(M, lower=True)
            self.HA[i][np.ix_(S, S)] = linalg.cho_solve(cf, np.eye(S.size))
        MB = self.Gll + rho * np.eye(self.dp)
        self.cfB = linalg.cho_factor(MB, lower=True)
        self._rho = rho

    def loss(self, A, B):
        """Least-squares loss ``(1/2n) ||X - X A' - X_lag B'||_F^2`` from the Gram matrices."""
        IA = np.eye(self.p) - A
        val = (np.sum((IA @ self.Gxx) * IA)
               - 2.0 * np.sum((IA @ self.Gxl) * B)
               + np.sum((B @ self.Gll) * B))
        return 0.5 * val


@dataclass
class SolverState:
    A: np.ndarray
    A_tilde: np.ndarray
    B: np.ndarray
    B_tilde: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    U_A: np.ndarray
    U_B: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros(cls, p, dp):
        z = np.zeros
        return cls(A=z((p, p)), A_tilde=z((p, p)), B=z((p, dp)), B_tilde=z((p, dp)),
                   lam=z((p, p)), xi=z((p, p, p)), U_A=z((p, p)), U_B=z((p, dp)),
                   y=z((p, p, p)), w=np.ones((p, p)))

    def copy(self):
        return SolverState(**{k: v.copy() for k, v in self.__dict__.items()})


@dataclass
class FitResult:
    A_hat: np.ndarray
    B_hat: list
    A_dense: np.ndarray
    state: SolverState
    hyperparams: Hyperparams
    trace: list = field(default_factory=list)
    outer_iters: int = 0
    inner_iters: int = 0
    converged: bool = True
    projected: bool = False

    @property
    def acyclic_after_projection(self):
        return is_acyclic(self.A_hat, 0.0)

    @property
    def objective_trace(self):
        return [row["lagrangian"] for row in self.trace]

    @property
    def model(self):
        return SVARModel(self.A_hat, self.B_hat)

    @property
    def skeleton(self):
        return support(self.A_hat, 0.0)


# ---------------------------------------------------------------- helpers

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _edge_term(state, tau):
    """``|At_ij| w_ij + tau (1 - w_ij)``."""
    return np.abs(state.A_tilde) * state.w + tau * (1.0 - state.w)


def _capacity(lam, tau, prob):
    """``tau*lam_ik + tau*1(j != k) - tau*lam_jk`` as an ``[i, j, k]`` tensor."""
    return tau * (lam[:, None, :] - lam[None, :, :] + prob.notjk)


def constraint_residual(state, prob, tau):
    """``r_ijk`` of the acyclicity equalities, zero on the unused ``i == j`` slices."""
    r = _edge_term(state, tau)[:, :, None] + state.xi - _capacity(state.lam, tau, prob)
    r[~prob.tmask] = 0.0
    return r


def update_w(A, tau):
    w = (np.abs(A) < tau).astype(float)
    np.fill_diagonal(w, 1.0)
    return w


def acyclic_w(A, tau):
    """``w`` whose free set (``w = 0``) is the greedy maximum-weight acyclic part of ``|A| >= tau``.

    Candidate edges are visited by decreasing magnitude, ties by ``(i, j)``,
    and an edge is kept unless it closes a directed cycle with the edges
    already kept. The free set is therefore always a DAG, so the constraints
    of the next inner solve are feasible.
    """
    M = np.abs(np.asarray(A, dtype=float))
    p = M.shape[0]
    np.fill_diagonal(M, 0.0)
    I, J = np.nonzero(M >= tau)
    order = np.lexsort((J, I, -M[I, J]))
    # reach[a, b]: there is a kept path b -> ... -> a (reflexive)
    reach = np.eye(p, dtype=bool)
    w = np.ones((p, p))
    for k in order:
        i, j = I[k], J[k]
        if reach[j, i]:
            continue
        w[i, j] = 0.0
        reach[np.ix_(reach[:, i], reach[j])] = True
    return w


# ---------------------------------------------------------------- block updates

def update_A(state, prob, h):
    prob.factor(h.rho)
    R = prob.Gxx - state.B @ prob.Gxl.T + h.rho * (state.A_tilde - state.U_A)
    R = np.where(prob.allowed, R, 0.0)
    return np.einsum("ijk,ik->ij", prob.HA, R)


def update_A_tilde(state, prob, h):
    p, tau, rho = prob.p, h.tau, h.rho
    v = state.A + state.U_A
    # sum_k pi_ijk with pi_ijk = xi + y - tau*lam_ik - tau*1(j != k) + tau*lam_jk
    lam_row = state.lam.sum(axis=1)
    pi_sum = ((state.xi + state.y).sum(axis=2)
              - tau * (lam_row[:, None] - lam_row[None, :]) - tau * (p - 1))
    free = soft_threshold(v, h.mu_A / rho)
    coupled = np.sign(v) * np.maximum(
        (rho * np.abs(v) - rho * pi_sum - h.mu_A) / (rho * (1 + p)), 0.0)
    At = np.where(state.w == 0, free, coupled)
    return np.where(prob.allowed, At, 0.0)


def update_B(state, prob, h):
    prob.factor(h.rho)
    R = (np.eye(prob.p) - state.A) @ prob.Gxl + h.rho * (state.B_tilde - state.U_B)
    return linalg.cho_solve(prob.cfB, R.T).T


def update_B_tilde(state, h):
    return soft_threshold(state.B + state.U_B, h.mu_B / h.rho)


def lambda_psi(state, prob, tau):
    """The ``p x p`` matrix ``psi`` whose linear image gives the optimal ``lam``."""
    p = prob.p
    a = _edge_term(state, tau)
    np.fill_diagonal(a, 0.0)
    Z = state.xi + state.y
    Z = np.where(prob.tmask, Z, 0.0)
    psi = (a.sum(axis=0) - a.sum(axis=1))[:, None] + Z.sum(axis=0) - Z.sum(axis=1)
    # -tau * (sum_{j != i} 1(i != k) - sum_{j != i} 1(j != k))
    psi -= tau * np.where(np.eye(p, dtype=bool), -(p - 1.0), 1.0)
    return psi


def update_lambda(state, prob, h):
    p, tau = prob.p, h.tau
    psi = lambda_psi(state, prob, tau)
    return -(psi + psi.sum(axis=0, keepdims=True) / (2.0 * p)) / (2.0 * tau * p)


def lambda_objective(lam, state, prob, tau):
    """``f(lam)``: the squared constraint residuals shifted by the scaled duals."""
    s = replace_lam(state, lam)
    r = constraint_residual(s, prob, tau) + np.where(prob.tmask, state.y, 0.0)
    return float(np.sum(r * r))


def replace_lam(state, lam):
    s = SolverState(**state.__dict__)
    s.lam = lam
    return s


def update_xi(state, prob, h):
    tau = h.tau
    v = (_capacity(state.lam, tau, prob) - _edge_term(state, tau)[:, :, None] - state.y)
    xi = np.maximum(v, 0.0)
    xi[~prob.tmask] = 0.0
    return xi


def dual_ascent(state, prob, h):
    r = constraint_residual(state, prob, h.tau)
    return (state.U_A + (state.A - state.A_tilde),
            state.U_B + (state.B - state.B_tilde),
            state.y + r)


def augmented_lagrangian(state, prob, h):
    rho = h.rho
    dA = state.A - state.A_tilde
    dB = state.B - state.B_tilde
    r = constraint_residual(state, prob, h.tau)
    return float(prob.loss(state.A, state.B)
                 + h.mu_A * np.abs(state.A_tilde).sum()
                 + h.mu_B * np.abs(state.B_tilde).sum()
                 + 0.5 * rho * np.sum(dA * dA) + rho * np.sum(dA * state.U_A)
                 + 0.5 * rho * np.sum(dB * dB) + rho * np.sum(dB * state.U_B)
                 + 0.5 * rho * np.sum(r * r) + rho * np.sum(state.y * r))


# ---------------------------------------------------------------- drivers

def _rel(new, old):
    return float(np.linalg.norm(new - old) / max(1.0, np.linalg.norm(old)))


def sweep(state, prob, h):
    """One primal cycle (A, At, B, Bt, lam, xi) followed by dual ascent.

    Returns the new state and the largest relative primal change.
    """
    s = state.copy()
    s.A = update_A(s, prob, h)
    s.A_tilde = update_A_tilde(s, prob, h)
    s.B = update_B(s, prob, h)
    s.B_tilde = update_B_tilde(s, h)
    s.lam = update_lambda(s, prob, h)
    s.xi = update_xi(s, prob, h)
    s.U_A, s.U_B, s.y = dual_ascent(s, prob, h)
    change = max(_rel(s.A, state.A), _rel(s.A_tilde, state.A_tilde),
                 _rel(s.B, state.B), _rel(s.B_tilde, state.B_tilde),
                 _rel(h.tau * s.lam, h.tau * state.lam), _rel(s.xi, state.xi))
    return s, change


class _Workspace:
    """Reductions of ``xi + y`` carried from one fused sweep to the next."""

    def __init__(self, state, prob):
        p = prob.p
        self.zk = np.zeros((p, p))
        self.z_in = np.zeros((p, p))
        self.z_out = np.zeros((p, p))
        _kernels.tensor_sums(state.xi, state.y, self.zk, self.z_in, self.z_out)


def _fast_sweep(s, prob, h, ws, constrained=True):
    """In-place equivalent of :func:`sweep` using the fused tensor kernel.

    With ``constrained`` off, the ``lam``, ``xi`` and ``y`` blocks are frozen
    and the sweep is a plain lasso ADMM step. Returns
    ``(change, sum r^2, sum y r)`` for the new iterate.
    """
    p, tau, rho = prob.p, h.tau, h.rho
    old = (s.A, s.A_tilde, s.B, s.B_tilde, tau * s.lam)
    s.A = update_A(s, prob, h)
    v = s.A + s.U_A
    lam_row = s.lam.sum(axis=1)
    pi_sum = ws.zk - tau * (lam_row[:, None] - lam_row[None, :]) - tau * (p - 1)
    coupled = np.sign(v) * np.maximum(
        (rho * np.abs(v) - rho * pi_sum - h.mu_A) / (rho * (1 + p)), 0.0)
    At = np.where(s.w == 0, soft_threshold(v, h.mu_A / rho), coupled)
    s.A_tilde = np.where(prob.allowed, At, 0.0)
    s.B = update_B(s, prob, h)
    s.B_tilde = update_B_tilde(s, h)
    rr = yr = dxi = xio = 0.0
    if constrained:
        edge = _edge_term(s, tau)
        np.fill_diagonal(edge, 0.0)
        psi = (edge.sum(axis=0) - edge.sum(axis=1))[:, None] + ws.z_in - ws.z_out
        psi -= tau * np.where(np.eye(p, dtype=bool), -(p - 1.0), 1.0)
        s.lam = -(psi + psi.sum(axis=0, keepdims=True) / (2.0 * p)) / (2.0 * tau * p)
        rr, yr, dxi, xio = _kernels.xi_y_pass(s.lam, edge, s.xi, s.y, tau, rho,
                                              ws.zk, ws.z_in, ws.z_out)
    s.U_A = s.U_A + (s.A - s.A_tilde)
    s.U_B = s.U_B + (s.B - s.B_tilde)
    new = (s.A, s.A_tilde, s.B, s.B_tilde, tau * s.lam)
    change = max(max(_rel(a, b) for a, b in zip(new, old)),
                 float(np.sqrt(dxi) / max(1.0, np.sqrt(xio))))
    return change, rr, yr


def _lagrangian_from_parts(s, prob, h, rr, yr):
    rho = h.rho
    dA = s.A - s.A_tilde
    dB = s.B - s.B_tilde
    return float(prob.loss(s.A, s.B)
                 + h.mu_A * np.abs(s.A_tilde).sum() + h.mu_B * np.abs(s.B_tilde).sum()
                 + 0.5 * rho * np.sum(dA * dA) + rho * np.sum(dA * s.U_A)
                 + 0.5 * rho * np.sum(dB * dB) + rho * np.sum(dB * s.U_B)
                 + 0.5 * rho * rr + rho * yr)


def admm_solve(state, prob, h, outer_iter=0, trace=None, tol=None, constrained=True):
    """Run sweeps until every block and every residual settles, or ``max_inner``.

    ``state`` is updated in place. Returns ``(state, sweeps, converged)``.
    With ``constrained`` off the acyclicity block is skipped and the
    recorded Lagrangian omits its two terms.
    """
    tol = h.inner_tol(prob.n) if tol is None else tol
    prob.factor(h.rho)
    ws = _Workspace(state, prob)
    for s in range(1, h.max_inner + 1):
        change, rr, yr = _fast_sweep(state, prob, h, ws, constrained)
        res_A = float(np.linalg.norm(state.A - state.A_tilde))
        res_B = float(np.linalg.norm(state.B - state.B_tilde))
        res_c = float(np.sqrt(rr))
        if trace is not None:
            trace.append({"outer_iter": outer_iter, "inner_iter": s,
                          "lagrangian": _lagrangian_from_parts(state, prob, h, rr, yr),
                          "primal_residual_A": res_A, "primal_residual_B": res_B,
                          "constraint_residual": res_c})
        if max(change, res_A, res_B, res_c) < tol:
            return state, s, True
    return state, h.max_inner, False


def project_to_dag(A, zero_tol=1e-8):
    """Drop the weakest edge on a cycle until the support is acyclic.

    Returns ``(A, changed)``.
    """
    from .model import CycleError, topological_order

    A = np.array(A, dtype=float)
    changed = False
    while True:
        try:
            topological_order(A, zero_tol)
            return A, changed
        except CycleError as err:
            cyc = err.cycle
            # cycle lists parent -> child, so the edge (u -> v) lives at A[v, u]
            edges = [(cyc[k + 1], cyc[k]) for k in range(len(cyc) - 1)]
            i, j = min(edges, key=lambda e: abs(A[e]))
            A[i, j] = 0.0
            changed = True


def _warm_B(prob, h):
    """Lasso fit of the lags with ``A = 0`` by proximal gradient."""
    step = 1.0 / np.linalg.eigvalsh(prob.Gll)[-1]
    B = np.zeros((prob.p, prob.dp))
    for _ in range(500):
        grad = B @ prob.Gll - prob.Gxl
        B_new = soft_threshold(B - step * grad, step * h.mu_B)
        if np.linalg.norm(B_new - B) < 1e-8 * max(1.0, np.linalg.norm(B)):
            return B_new
        B = B_new
    return B


def _initial_w(prob, h):
    if h.w_strategy == "acyclic":
        return np.where(prob.allowed, 0.0, 1.0)
    return np.ones((prob.p, prob.p))


def _next_w(state, prob, h):
    if h.w_strategy == "acyclic":
        w = acyclic_w(state.A_tilde, h.tau)
    else:
        w = update_w(state.A_tilde, h.tau)
    w[~prob.allowed] = 1.0
    return w


def fit(sample, d, prior=None, h=None, record_trace=True):
    """Estimate ``(A, B_1..B_d)`` from a de-meaned sample.

    The outer loop refreshes ``w`` from ``At`` and reruns the ADMM until
    ``w`` stops changing or ``max_outer`` is reached. The constraint block
    (``lam``, ``xi``, ``y``) restarts from zero whenever ``w`` changes, since
    the right-hand side of every constraint moves with ``w``. Entries of
    ``At`` below ``tau`` count as absent in the returned ``A_hat``.
    """
    h = Hyperparams() if h is None else h
    prob = sample if isinstance(sample, Problem) else Problem.from_sample(sample, d, prior)
    if prob.p < 2:
        raise ValueError("need at least two variables")
    prob.factor(h.rho)
    state = SolverState.zeros(prob.p, prob.dp)
    state.w = _initial_w(prob, h)
    if h.warm_start_B:
        state.B = _warm_B(prob, h)
        state.B_tilde = state.B.copy()
    trace = [] if record_trace else None
    inner_total = 0
    converged = True
    outer = 0
    for outer in range(1, h.max_outer + 1):
        if outer > 1:
            w_new = _next_w(state, prob, h)
            flips = int(np.sum(w_new != state.w))
            log.debug("outer %d: %d indicator flips", outer, flips)
            if flips <= h.tol_outer * prob.p ** 2:
                outer -= 1
                break
            state.w = w_new
            state.lam[:] = 0.0
            state.xi[:] = 0.0
            state.y[:] = 0.0
        # the all-free first round of the acyclic strategy is a plain lasso:
        # its constraints are infeasible whenever two variables may be mutual parents
        constrained = not (h.w_strategy == "acyclic" and outer == 1)
        state, n_inner, ok = admm_solve(state, prob, h, outer, trace, constrained=constrained)
        inner_total += n_inner
        converged = converged and ok
    if not converged:
        warnings.warn("ADMM hit max_inner before meeting the tolerance",
                      ConvergenceWarning, stacklevel=2)
    At = np.where(np.abs(state.A_tilde) >= h.tau, state.A_tilde, 0.0)
    A_hat, projected = project_to_dag(At, 0.0)
    if projected:
        log.info("support of At was cyclic; weakest cycle edges removed")
    B_hat = as_lag_stack(state.B_tilde, prob.p)
    return FitResult(A_hat=A_hat, B_hat=B_hat, A_dense=state.A.copy(), state=state,
                     hyperparams=h, trace=trace or [], outer_iters=outer,
                     inner_iters=inner_total, converged=converged, projected=projected)
