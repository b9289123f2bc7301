"""Prior partial-ordering constraints on the contemporaneous matrix.

A :class:`PartialOrdering` is a set of forbidden cells ``(i, j)`` meaning
``A[i, j]`` is held at zero, i.e. ``j`` may not be a parent of ``i``.
Indices are 0-based in memory and 1-based in files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PartialOrdering:
    p: int
    forbidden: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        pairs = frozenset((int(i), int(j)) for i, j in self.forbidden if i != j)
        for i, j in pairs:
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"forbidden pair {(i, j)} out of range for p={self.p}")
        object.__setattr__(self, "forbidden", pairs)

    @classmethod
    def empty(cls, p):
        return cls(p, frozenset())

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls(mask.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def __len__(self):
        return len(self.forbidden)

    def mask(self):
        """``p x p`` boolean array, True on forbidden cells (diagonal excluded)."""
        m = np.zeros((self.p, self.p), dtype=bool)
        if self.forbidden:
            idx = np.array(sorted(self.forbidden))
            m[idx[:, 0], idx[:, 1]] = True
        return m

    def allowed_mask(self):
        """True where ``A[i, j]`` is free: off-diagonal and not forbidden."""
        m = ~self.mask()
        np.fill_diagonal(m, False)
        return m

    def allowed_parents(self, i):
        if not 0 <= i < self.p:
            raise IndexError(f"row {i} out of range for p={self.p}")
        return np.flatnonzero(self.allowed_mask()[i])

    def pairs(self):
        return sorted(self.forbidden)


def allowed_parents(P, i):
    return P.allowed_parents(i)


def from_tiers(tiers):
    """Forbid ``parent -> child`` whenever ``tier(parent) > tier(child)``."""
    t = np.asarray(tiers, dtype=int)
    if t.ndim != 1 or np.any(t < 1):
        raise ValueError("tiers must be a vector of positive integers")
    mask = t[None, :] > t[:, None]
    return PartialOrdering.from_mask(mask)


def from_regulator_target(gold):
    """Regulators may not receive edges and targets may not emit them.

    ``gold[i, j] != 0`` is an edge ``j -> i``. Nodes that both emit and
    receive, or do neither, are left unconstrained.
    """
    G = np.asarray(gold) != 0
    np.fill_diagonal(G, False)
    receives = G.any(axis=1)
    emits = G.any(axis=0)
    regulator = emits & ~receives
    target = receives & ~emits
    mask = np.zeros_like(G)
    mask[regulator, :] = True
    mask[:, target] = True
    np.fill_diagonal(mask, False)
    return PartialOrdering.from_mask(mask)


def random_nonsupport_mask(A_true, fraction, rng_seed, zero_tol=0.0):
    """Forbid a uniform random ``floor(fraction * |non-support|)`` subset of the true zeros.

    Sampling uses numpy's PCG64 generator seeded with ``rng_seed``.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    A = np.asarray(A_true, dtype=float)
    zeros = np.abs(A) <= zero_tol
    np.fill_diagonal(zeros, False)
    rows, cols = np.nonzero(zeros)
    m = int(np.floor(fraction * rows.size))
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    pick = rng.choice(rows.size, size=m, replace=False)
    return PartialOrdering(A.shape[0], frozenset(zip(rows[pick].tolist(), cols[pick].tolist())))


def read_tiers_csv(path, names=None):
    """Read a ``variable,tier`` file.

    ``variable`` is either a column name in ``names`` or a 1-based index.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"variable", "tier"}:
        raise ValueError(f"{path}: expected header 'variable,tier'")
    lookup = {n: k for k, n in enumerate(names)} if names else {}
    tiers = {}
    for r in rows:
        v = r["variable"].strip()
        k = lookup[v] if v in lookup else int(v) - 1
        tiers[k] = int(r["tier"])
    p = len(names) if names else max(tiers) + 1
    if sorted(tiers) != list(range(p)):
        raise ValueError(f"{path}: every variable needs exactly one tier")
    return np.array([tiers[k] for k in range(p)])


def read_forbidden_csv(path, p):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["child", "parent"]:
            raise ValueError(f"{path}: expected header 'child,parent'")
        pairs = [(int(r["child"]) - 1, int(r["parent"]) - 1) for r in reader]
    return PartialOrdering(p, frozenset(pairs))


def write_forbidden_csv(path, P):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["child", "parent"])
        for i, j in P.pairs():
            wr.writerow([i + 1, j + 1])


def load_prior(path, fmt, p, names=None):
    """Load a prior in one of the formats ``tiers``, ``pairs`` or ``gold``."""
    from .io import read_matrix_csv

    if fmt == "tiers":
        P = from_tiers(read_tiers_csv(path, names))
    elif fmt == "pairs":
        P = read_forbidden_csv(path, p)
    elif fmt == "gold":
        P = from_regulator_target(read_matrix_csv(path))
    else:
        raise ValueError(f"unknown prior format {fmt!r}")
    if P.p != p:
        raise ValueError(f"prior has p={P.p} but data has p={p}")
    return P
