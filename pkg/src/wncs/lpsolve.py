"""Dense two-phase simplex for ``min c^T p  s.t.  A p >= b, p >= 0``.

The tableau is kept in ``numpy.longdouble``; entering variables follow
Bland's lowest-index rule, which rules out cycling. Problems in scope are
a handful of rows and columns, so nothing here tries to be sparse.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

__all__ = ["LpStatus", "LpProblem", "LpOutcome", "solve"]

PIVOT_TOL = 1e-12


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (b.size, c.size):
            raise ConfigError(f"A has shape {A.shape}, expected ({b.size}, {c.size})")
        if c.size < 1 or b.size < 1:
            raise ConfigError("LP needs at least one variable and one constraint")
        for name, X in (("c", c), ("A", A), ("b", b)):
            if not np.all(np.isfinite(X)):
                raise ConfigError(f"LP data {name} has non-finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class LpOutcome:
    """Result of :func:`solve`.

    ``dual`` solves ``max b^T y s.t. A^T y <= c, y >= 0`` when optimal.
    ``farkas`` is set when infeasible: ``y >= 0``, ``A^T y <= 0``, ``b^T y > 0``.
    """

    status: LpStatus
    x: np.ndarray | None = None
    objective: float | None = None
    dual: np.ndarray | None = None
    farkas: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed: np.ndarray, cost_row: int, tol: float, phase1: bool) -> bool:
        """Iterate to optimality; return False if unbounded."""
        T = self.T
        m = len(self.basis)
        for _ in range(10000):
            reduced = T[cost_row, :-1]
            cand = np.nonzero(allowed & (reduced < -tol))[0]
            if cand.size == 0:
                return True
            j = int(cand[0])
            col = T[:m, j]
            pos = col > PIVOT_TOL
            if not np.any(pos):
                # entries at round-off level of the tableau carry no sign
                noise = 64 * np.finfo(T.dtype).eps * max(1.0, float(np.max(np.abs(col))))
                if phase1 or np.any(col > noise):
                    raise NumericalError(
                        f"degenerate pivot: column {j} has no entry above {PIVOT_TOL}"
                    )
                return False
            ratios = np.full(m, np.inf, dtype=T.dtype)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + 1e-15 * max(1.0, abs(float(best))))[0]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
        raise NumericalError("simplex iteration limit reached")


def solve(problem: LpProblem, tol: float = 1e-11) -> LpOutcome:
    """Solve ``min c^T p`` subject to ``A p >= b`` and ``p >= 0``.

    Raises
    ------
    NumericalError
        On a degenerate pivot with no admissible alternative.
    """
    c, A, b = problem.c, problem.A, problem.b
    m, n = A.shape
    d = np.where(b < 0, -1.0, 1.0)
    # columns: p (n), surplus s (m), artificial a (m), rhs
    ncol = n + 2 * m
    T = np.zeros((m + 2, ncol + 1), dtype=np.longdouble)
    T[:m, :n] = d[:, None] * A
    T[:m, n : n + m] = -np.diag(d)
    T[:m, n + m : n + 2 * m] = np.eye(m)
    T[:m, -1] = d * b
    # row m: phase-2 cost, row m + 1: phase-1 cost
    T[m, :n] = c
    T[m + 1, n + m : n + 2 * m] = 1.0
    tab = _Tableau(T, list(range(n + m, n + 2 * m)))
    for i in range(m):
        T[m + 1] -= T[i]
    T[m + 1, n + m : n + 2 * m] = 0.0  # exact zeros for basic columns

    scale = 1.0 + float(np.max(np.abs(b)))
    allowed = np.ones(ncol, dtype=bool)
    tab.run(allowed, m + 1, tol, phase1=True)
    phase1_obj = -float(T[m + 1, -1])
    if phase1_obj > 1e-9 * scale:
        # phase-1 duals on the sign-normalised rows, from the artificial columns
        y_prime = 1.0 - np.asarray(T[m + 1, n + m : n + 2 * m], dtype=float)
        y = np.maximum(d * y_prime, 0.0)
        return LpOutcome(LpStatus.INFEASIBLE, farkas=y, iterations=tab.iterations)

    # drive basic artificials at level zero out of the basis where possible
    for r in range(m):
        if tab.basis[r] >= n + m:
            row = T[r, : n + m]
            nz = np.nonzero(np.abs(row) > 1e-9)[0]
            if nz.size:
                tab.pivot(r, int(nz[0]))
            # otherwise the row is redundant; its artificial stays at zero

    allowed = np.zeros(ncol, dtype=bool)
    allowed[: n + m] = True
    bounded = tab.run(allowed, m, tol, phase1=False)
    if not bounded:
        return LpOutcome(LpStatus.UNBOUNDED, iterations=tab.iterations)

    x = np.zeros(n + 2 * m)
    for r, j in enumerate(tab.basis):
        x[j] = float(T[r, -1])
    p = np.maximum(x[:n], 0.0)
    # reduced cost of artificial column i is -y'_i (its phase-2 cost is 0)
    y_prime = -np.asarray(T[m, n + m : n + 2 * m], dtype=float)
    dual = d * y_prime
    return LpOutcome(
        LpStatus.OPTIMAL,
        x=p,
        objective=float(c @ p),
        dual=dual,
        iterations=tab.iterations,
    )
