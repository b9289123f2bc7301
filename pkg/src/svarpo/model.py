"""SVAR model objects, companion form, stability and acyclicity checks.

Edge convention used throughout the package: ``A[i, j] != 0`` means node
``j`` is a parent of node ``i`` (edge ``j -> i``).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

ZERO_TOL = 1e-8


class StructuralSingularityError(ValueError):
    """Raised when ``I - A`` cannot be inverted."""


class CycleError(ValueError):
    """Raised when a support graph contains a directed cycle."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("support graph has a directed cycle: "
                         + " -> ".join(str(v) for v in self.cycle))


def _square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def support(M, zero_tol=ZERO_TOL):
    """Boolean off-diagonal support ``|M_ij| > zero_tol``."""
    S = np.abs(np.asarray(M, dtype=float)) > zero_tol
    np.fill_diagonal(S, False)
    return S


def as_lag_stack(B, p=None):
    """Coerce ``B`` into a list of ``p x p`` blocks.

    Accepts a list of blocks, a ``(d, p, p)`` array or the horizontally
    stacked ``p x (d p)`` layout used by the solver.
    """
    if isinstance(B, (list, tuple)):
        blocks = [np.asarray(b, dtype=float) for b in B]
    else:
        B = np.asarray(B, dtype=float)
        if B.ndim == 3:
            blocks = list(B)
        elif B.ndim == 2:
            q = B.shape[0] if p is None else p
            if B.shape[1] % q:
                raise ValueError(f"cannot split {B.shape} into {q}x{q} blocks")
            blocks = [B[:, k * q:(k + 1) * q] for k in range(B.shape[1] // q)]
        else:
            raise ValueError(f"unsupported lag array shape {B.shape}")
    if not blocks:
        raise ValueError("lag stack needs at least one block")
    q = blocks[0].shape[0]
    for b in blocks:
        if b.shape != (q, q):
            raise ValueError("all lag blocks must share the same p x p shape")
    return blocks


@dataclass
class SVARModel:
    """Contemporaneous matrix ``A`` plus lag blocks ``B_1 .. B_d``."""

    A: np.ndarray
    B: list = field(default_factory=list)

    def __post_init__(self):
        self.A = _square(self.A, "A")
        self.B = as_lag_stack(self.B, self.p)
        if self.B[0].shape[0] != self.p:
            raise ValueError("A and lag blocks disagree on p")

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def d(self):
        return len(self.B)

    @property
    def B_stacked(self):
        return np.hstack(self.B)

    def companion(self):
        return companion_matrix(self.A, self.B)

    def is_stable(self):
        return is_stable(self.A, self.B)

    def reduced_form(self):
        """Reduced-form lag blocks ``(I - A)^{-1} B_j``."""
        inv = _structural_inverse(self.A)
        return [inv @ b for b in self.B]


@dataclass
class TimeSeriesSample:
    """``n x p`` observations, rows ordered by time.

    ``means`` records the column means removed by :meth:`demeaned`.
    """

    data: np.ndarray
    means: np.ndarray | None = None
    names: list | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("sample data must be a 2-d array")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sample data contains non-finite values")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    def demeaned(self):
        mu = self.data.mean(axis=0)
        return TimeSeriesSample(self.data - mu, means=mu, names=self.names)

    def lagged(self, d):
        """Return ``(X_n, X_lag)`` with ``X_lag = [X_{t-1} | ... | X_{t-d}]``."""
        if d < 1:
            raise ValueError("lag order must be >= 1")
        if self.n <= d:
            raise ValueError(f"need n > d, got n={self.n}, d={d}")
        X = self.data
        n = self.n
        target = X[d:]
        lags = np.hstack([X[d - k:n - k] for k in range(1, d + 1)])
        return target, lags


@dataclass
class NoiseSpec:
    """Noise family and per-coordinate standard deviations."""

    family: str
    sigmas: np.ndarray
    df: float | None = None

    FAMILIES = ("gaussian", "laplace", "student_t")

    def __post_init__(self):
        self.family = self.family.lower()
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if np.any(self.sigmas <= 0):
            raise ValueError("noise sigmas must be positive")
        if self.family == "student_t":
            if self.df is None or self.df <= 2:
                raise ValueError("student_t noise needs df > 2")

    def sample(self, rng, n):
        """Draw ``n x p`` independent noise with the stated standard deviations."""
        p = self.sigmas.size
        if self.family == "gaussian":
            z = rng.standard_normal((n, p))
        elif self.family == "laplace":
            z = rng.laplace(0.0, 1.0 / np.sqrt(2.0), (n, p))
        else:
            z = rng.standard_t(self.df, (n, p)) / np.sqrt(self.df / (self.df - 2.0))
        return z * self.sigmas

    def to_dict(self):
        out = {"family": self.family, "sigmas": self.sigmas.tolist()}
        if self.df is not None:
            out["df"] = self.df
        return out


def _structural_inverse(A):
    A = _square(A, "A")
    M = np.eye(A.shape[0]) - A
    try:
        inv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise StructuralSingularityError("I - A is singular") from exc
    if not np.all(np.isfinite(inv)) or np.linalg.cond(M) > 1e14:
        raise StructuralSingularityError("I - A is numerically singular")
    return inv


def companion_matrix(A, B):
    """Companion-form transition matrix of the reduced VAR.

    The top block row holds ``(I - A)^{-1} B_j``; the rows below shift the
    state by one lag.
    """
    A = _square(A, "A")
    blocks = as_lag_stack(B, A.shape[0])
    p, d = A.shape[0], len(blocks)
    inv = _structural_inverse(A)
    Phi = np.zeros((d * p, d * p))
    for k, b in enumerate(blocks):
        Phi[:p, k * p:(k + 1) * p] = inv @ b
    if d > 1:
        Phi[p:, :(d - 1) * p] = np.eye((d - 1) * p)
    return Phi


def spectral_radius(M):
    M = _square(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_stable(A, B):
    return spectral_radius(companion_matrix(A, B)) < 1.0


def _parents(M, zero_tol):
    S = support(_square(M), zero_tol)
    return [np.flatnonzero(S[i]).tolist() for i in range(S.shape[0])]


def _find_cycle(S):
    """Return one directed cycle (list of nodes, parent to child) in support ``S``."""
    p = S.shape[0]
    children = [np.flatnonzero(S[:, j]).tolist() for j in range(p)]
    color = [0] * p
    for root in range(p):
        if color[root]:
            continue
        stack = [(root, iter(children[root]))]
        path = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                path.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(children[nxt])))
                path.append(nxt)
    return None


def topological_order(M, zero_tol=ZERO_TOL):
    """Kahn's algorithm; ties go to the smallest index.

    Returns 0-based node indices with every parent ahead of its children.
    """
    S = support(_square(M), zero_tol)
    p = S.shape[0]
    indeg = S.sum(axis=1).astype(int)
    heap = [i for i in range(p) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        j = heapq.heappop(heap)
        order.append(j)
        for i in np.flatnonzero(S[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                heapq.heappush(heap, int(i))
    if len(order) < p:
        raise CycleError(_find_cycle(S))
    return order


def is_acyclic(M, zero_tol=ZERO_TOL):
    try:
        topological_order(M, zero_tol)
    except CycleError:
        return False
    return True


def verify_acyclicity_certificate(M, lam, zero_tol=ZERO_TOL):
    """Check ``lam_ik + 1(j != k) - lam_jk >= 1(|M_ij| > zero_tol)`` for all ``i != j``, ``k``."""
    M = _square(M)
    lam = np.asarray(lam, dtype=float)
    p = M.shape[0]
    if lam.shape != (p, p):
        raise ValueError("certificate must be p x p")
    rhs = support(M, zero_tol).astype(float)
    lhs = lam[:, None, :] - lam[None, :, :] + (1.0 - np.eye(p))[None, :, :]
    ok = lhs >= rhs[:, :, None]
    ok[np.arange(p), np.arange(p), :] = True
    return bool(ok.all())
