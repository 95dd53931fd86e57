"""Numerical kernels: norms, eigenvalues, L2 gain, RK4 and seeded sampling.

The eigenvalue routine is written out (balancing, Householder Hessenberg
reduction, Francis double-shift QR) so that the L2-gain bisection does not
share code with the SVD-based frequency sweep used to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergenceError, NotHurwitzError, NumericalError

__all__ = [
    "spectral_norm",
    "abs_matrix",
    "eigenvalues",
    "is_hurwitz",
    "GainQuery",
    "l2_gain",
    "sweep_gain",
    "rk4_step",
    "make_rng",
    "sample_exponential",
    "sample_bernoulli",
    "sample_uniform_node",
]

_EPS = np.finfo(float).eps


def _finite_matrix(M, name="matrix") -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ConfigError(f"{name} has non-finite entries")
    return A


def abs_matrix(M) -> np.ndarray:
    """Entrywise absolute value."""
    return np.abs(np.asarray(M, dtype=float))


def spectral_norm(M, rtol: float = 1e-10, max_iter: int = 20000) -> float:
    """Largest singular value of ``M``.

    Power iteration on ``M^T M`` using the Rayleigh quotient. If it stalls
    (nearly equal top singular values), fall back to the eigenvalues of
    ``M^T M``.
    """
    A = _finite_matrix(M)
    if A.size == 0:
        return 0.0
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    scale = np.max(np.abs(G))
    if scale == 0.0:
        return 0.0
    G = G / scale
    # dominant column plus a fixed pseudo-random perturbation, so the start is
    # never orthogonal to the top eigenvector
    v = G[:, np.argmax(np.sum(G * G, axis=0))] + 1e-3 * np.random.default_rng(0).random(G.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ G @ v)
    converged = False
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            converged = True
            break
        w /= nw
        lam_new = float(w @ G @ w)
        done = abs(lam_new - lam) <= 1e-3 * rtol * lam_new and np.linalg.norm(w - v) < 1e-5
        v, lam = w, lam_new
        if done:
            converged = True
            break
    if not converged:
        lam = max(lam, float(np.max(eigenvalues(G).real)))
    return math.sqrt(max(lam, 0.0) * scale)


# ---------------------------------------------------------------- eigenvalues


def _balance(a: np.ndarray) -> None:
    """Diagonal similarity scaling by powers of two (in place)."""
    radix = 2.0
    sqrdx = radix * radix
    n = a.shape[0]
    done = False
    while not done:
        done = True
        for i in range(n):
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                while c > g * sqrdx:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    a[i, :] /= f
                    a[:, i] *= f


def _hessenberg(a: np.ndarray) -> None:
    """Householder reduction to upper Hessenberg form (in place)."""
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        a[k + 1 :, k:] -= 2.0 * np.outer(v, v @ a[k + 1 :, k:])
        a[:, k + 1 :] -= 2.0 * np.outer(a[:, k + 1 :] @ v, v)
        a[k + 2 :, k] = 0.0


def _hqr(a: np.ndarray, max_its: int) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR."""
    n = a.shape[0]
    wr = np.zeros(n, dtype=complex)
    anorm = 0.0
    for i in range(n):
        anorm += np.sum(np.abs(a[i, max(i - 1, 0) :]))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l > 0:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= _EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                    else:
                        wr[nn] = complex(x + p, -z)
                        wr[nn - 1] = complex(x + p, z)
                    nn -= 2
                else:
                    if its >= max_its:
                        raise NumericalError(
                            f"QR iteration did not converge after {max_its} sweeps"
                        )
                    if its % 10 == 0 and its > 0:
                        # exceptional shift
                        t += x
                        idx = np.arange(nn + 1)
                        a[idx, idx] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u <= _EPS * v:
                            break
                        m -= 1
                    for i in range(m, nn - 1):
                        a[i + 2, i] = 0.0
                        if i != m:
                            a[i + 2, i - 1] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = a[k + 2, k - 1] if k + 1 != nn else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            # row transformation
                            if k + 1 != nn:
                                pr = a[k, k : nn + 1] + q * a[k + 1, k : nn + 1] + r * a[k + 2, k : nn + 1]
                                a[k + 2, k : nn + 1] -= pr * z
                            else:
                                pr = a[k, k : nn + 1] + q * a[k + 1, k : nn + 1]
                            a[k + 1, k : nn + 1] -= pr * y
                            a[k, k : nn + 1] -= pr * x
                            # column transformation
                            mmin = min(nn, k + 3)
                            if k + 1 != nn:
                                pc = x * a[l : mmin + 1, k] + y * a[l : mmin + 1, k + 1] + z * a[l : mmin + 1, k + 2]
                                a[l : mmin + 1, k + 2] -= pc * r
                            else:
                                pc = x * a[l : mmin + 1, k] + y * a[l : mmin + 1, k + 1]
                            a[l : mmin + 1, k + 1] -= pc * q
                            a[l : mmin + 1, k] -= pc
            if not (l + 1 < nn):
                break
    return wr


def eigenvalues(M, max_its: int = 60) -> np.ndarray:
    """All eigenvalues of a real square matrix, as a complex array.

    Raises
    ------
    NumericalError
        If the QR iteration fails to split off an eigenvalue within
        ``max_its`` sweeps.
    """
    a = _finite_matrix(M).copy()
    if a.shape[0] != a.shape[1]:
        raise ConfigError(f"eigenvalues need a square matrix, got {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return np.array([complex(a[0, 0])])
    _balance(a)
    _hessenberg(a)
    return _hqr(a, max_its)


def is_hurwitz(A) -> bool:
    return bool(np.all(eigenvalues(A).real < 0))


# ------------------------------------------------------------------- L2 gain


@dataclass(frozen=True)
class GainQuery:
    """State-space system ``x' = Ax + Bu``, ``y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A = _finite_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        D = (np.zeros((C.shape[0], B.shape[1])) if self.D is None
             else np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1]))
        for name, X in (("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(X)):
                raise ConfigError(f"{name} has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    def frequency_response(self, omega: float) -> np.ndarray:
        n = self.A.shape[0]
        X = np.linalg.solve(1j * omega * np.eye(n) - self.A, self.B)
        return self.C @ X + self.D


def _hamiltonian(q: GainQuery, gamma: float) -> np.ndarray:
    A, B, C, D = q.A, q.B, q.C, q.D
    g2 = gamma * gamma
    R = D.T @ D - g2 * np.eye(D.shape[1])
    S = D @ D.T - g2 * np.eye(D.shape[0])
    Ri = np.linalg.inv(R)
    Si = np.linalg.inv(S)
    return np.block([
        [A - B @ Ri @ D.T @ C, -gamma * B @ Ri @ B.T],
        [gamma * C.T @ Si @ C, -A.T + C.T @ D @ Ri @ B.T],
    ])


def _has_imaginary_eig(H: np.ndarray, rel: float) -> bool:
    lam = eigenvalues(H)
    scale = max(np.max(np.abs(H)), 1.0)
    return bool(np.any(np.abs(lam.real) <= rel * scale))


def _sigma_max(G: np.ndarray) -> float:
    if G.size == 0:
        return 0.0
    return float(np.linalg.svd(G, compute_uv=False)[0])


def l2_gain(q: GainQuery, tol: float = 1e-6, imag_tol: float = 1e-8) -> float:
    """H-infinity norm of ``C (sI - A)^{-1} B + D`` by Hamiltonian bisection.

    ``gamma`` exceeds the norm iff the Hamiltonian built for ``gamma`` has no
    eigenvalue on the imaginary axis. The returned value is the upper end of
    the final bracket, so it is a certified upper bound within ``tol``.

    Raises
    ------
    NotHurwitzError
        If ``A`` has an eigenvalue with nonnegative real part.
    NumericalError
        If no upper bound is found.
    """
    lamA = eigenvalues(q.A)
    if np.any(lamA.real >= 0):
        raise NotHurwitzError(
            f"state matrix is not Hurwitz (max real part {np.max(lamA.real):.6g}); "
            "the gain is infinite"
        )
    if q.B.shape[1] == 0 or q.C.shape[0] == 0:
        return 0.0
    # lower bound from a few probe frequencies
    probes = {0.0}
    probes.update(float(abs(l.imag)) for l in lamA)
    probes.update(float(abs(l)) for l in lamA)
    lo = max(_sigma_max(q.frequency_response(w)) for w in probes)
    lo = max(lo, _sigma_max(q.D))
    if lo == 0.0:
        # transfer function could still be nonzero away from the probes
        lo = 1e-300
        hi = 1.0
        while _has_imaginary_eig(_hamiltonian(q, hi), imag_tol):
            hi *= 2.0
            if hi > 1e300:
                raise NumericalError("no upper bound found for the L2 gain")
        if not _has_imaginary_eig(_hamiltonian(q, hi * 1e-12), imag_tol):
            return 0.0
    else:
        hi = lo * (1.0 + 2.0 * tol)
        while _has_imaginary_eig(_hamiltonian(q, hi), imag_tol):
            lo = hi
            hi *= 2.0
            if hi > 1e300:
                raise NumericalError("no upper bound found for the L2 gain")
    for _ in range(400):
        if hi - lo <= tol * hi:
            break
        mid = math.sqrt(lo * hi) if lo > 1e-300 else 0.5 * hi
        if _has_imaginary_eig(_hamiltonian(q, mid), imag_tol):
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalError("L2 gain bisection did not converge")
    return hi


def sweep_gain(
    q: GainQuery,
    n_points: int = 400,
    w_min: float = 1e-3,
    w_max: float = 1e5,
    refine: bool = True,
) -> tuple[float, float]:
    """Frequency-sweep estimate of the H-infinity norm.

    Evaluates the largest singular value at ``omega = 0`` and on a
    log-spaced grid, then refines around the best grid points with
    golden-section search. Returns ``(gain, omega_peak)``.
    """
    grid = np.concatenate([[0.0], np.logspace(math.log10(w_min), math.log10(w_max), n_points)])
    vals = np.array([_sigma_max(q.frequency_response(w)) for w in grid])
    best = int(np.argmax(vals))
    gain, peak = float(vals[best]), float(grid[best])
    if not refine:
        return gain, peak

    def f(w):
        return _sigma_max(q.frequency_response(w))

    invphi = (math.sqrt(5) - 1) / 2
    for idx in np.argsort(vals)[::-1][:5]:
        a = grid[max(idx - 1, 0)]
        b = grid[min(idx + 1, len(grid) - 1)]
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(80):
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = f(d)
            if b - a <= 1e-12 * max(b, 1e-12):
                break
        for w, v in ((c, fc), (d, fd)):
            if v > gain:
                gain, peak = v, float(w)
    return gain, peak


# ----------------------------------------------------------------------- RK4


def rk4_step(f: Callable, t: float, state: np.ndarray, h) -> np.ndarray:
    """One classical Runge-Kutta step of ``state' = f(t, state)``.

    ``h`` may be a scalar or an array broadcastable against ``state`` (one
    step length per row in batched use).

    Raises
    ------
    DivergenceError
        If the update contains NaN or infinity.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0) or not np.all(np.isfinite(h_arr)):
        raise ConfigError("RK4 step length must be finite and nonnegative")
    half = 0.5 * h_arr
    t_flat = t + (h_arr.reshape(-1) if h_arr.ndim else h_arr)
    t_half = t + (half.reshape(-1) if half.ndim else half)
    k1 = f(t, state)
    k2 = f(t_half, state + half * k1)
    k3 = f(t_half, state + half * k2)
    k4 = f(t_flat, state + h_arr * k3)
    out = state + (h_arr / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("RK4 step produced a non-finite state")
    return out


# ------------------------------------------------------------------ sampling


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *stream)``.

    Streams with different keys are statistically independent, so trial
    ``i`` can use ``make_rng(seed, i)`` regardless of scheduling.
    """
    if seed is None or int(seed) < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def sample_exponential(rng: np.random.Generator, rate: float, size=None):
    """Inverse-CDF exponential draw(s), ``-ln(u) / rate`` with ``u`` in (0, 1]."""
    if not (rate > 0 and math.isfinite(rate)):
        raise ConfigError(f"exponential rate must be finite and positive, got {rate}")
    u = 1.0 - rng.random(size)  # in (0, 1]
    return -np.log(u) / rate


def sample_bernoulli(rng: np.random.Generator, p, size=None):
    """Threshold Bernoulli: 1 if ``u < p``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr > 1) or np.any(np.isnan(p_arr)):
        raise ConfigError(f"Bernoulli parameter must lie in [0, 1], got {p}")
    if size is None and p_arr.ndim:
        size = p_arr.shape
    return (rng.random(size) < p_arr).astype(np.int8)


def sample_uniform_node(rng: np.random.Generator, N: int, size=None):
    """Uniform index in ``0..N-1``."""
    if int(N) < 1:
        raise ConfigError(f"need at least one node, got N={N}")
    return rng.integers(0, int(N), size=size)
