"""Synthetic Kraichnan-type velocity modes on the flat 2-torus.

The velocity is a finite sum over lattice modes ``k`` in the shell
``N <= |k| <= 2N``.  Modes in the upper half plane ``K+`` carry a cosine,
their mirror images ``-k`` in ``K-`` a sine, and every mode is
divergence-free because its polarisation is ``k_perp = (-k2, k1)``.

Besides point evaluation of the fields this module provides the
x-independent Ito corrector matrix ``A^N(r)``, its large-``N`` limit
``A(r) = k_T (3|r|^2 I - 2 r r^T)`` and the x-diffusion coefficient
``alpha_N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .errors import DomainViolation, InvalidArgument
from .params import PhysParams

__all__ = [
    "ModeSet",
    "build_mode_set",
    "coefficient",
    "sigma_eval",
    "grad_sigma_apply",
    "corrector_matrix",
    "corrector_matrices",
    "corrector_matrix_direct",
    "limit_matrix",
    "x_diffusion_coefficient",
    "theta_fourth_moment",
    "flow_covariances",
    "FlowField",
]


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Enumerated Fourier modes of the shell ``N <= |k| <= 2N``.

    ``k`` has shape ``(M, 2)``; ``is_cos[i]`` is True for modes of ``K+``
    (cosine parity) and False for ``K-`` (sine parity).  Ordering is
    lexicographic in ``(k1, k2)`` inside each quadrant class, classes in the
    order ``K++, K+-, K-+, K--``, so cosine modes come first.
    """

    N: int
    k: np.ndarray
    is_cos: np.ndarray

    def __post_init__(self):
        self.k.setflags(write=False)
        self.is_cos.setflags(write=False)

    def __len__(self):
        return len(self.k)

    @cached_property
    def norm2(self) -> np.ndarray:
        return (self.k.astype(np.int64) ** 2).sum(axis=1)

    @cached_property
    def norm(self) -> np.ndarray:
        return np.sqrt(self.norm2.astype(float))

    @cached_property
    def k_perp(self) -> np.ndarray:
        return np.stack([-self.k[:, 1], self.k[:, 0]], axis=1)

    @cached_property
    def plus(self) -> np.ndarray:
        """The ``K+`` wave vectors (cosine modes), shape ``(M/2, 2)``."""
        return np.asarray(self.k[self.is_cos])

    @cached_property
    def partner(self) -> np.ndarray:
        """Index of the mode ``-k`` for every mode."""
        lookup = {tuple(kk): i for i, kk in enumerate(self.k.tolist())}
        return np.array([lookup[(-a, -b)] for a, b in self.k.tolist()], dtype=np.int64)


def _quadrant_masks(k1, k2):
    return (
        (k1 >= 0) & (k2 > 0),  # K++
        (k1 > 0) & (k2 <= 0),  # K+-
        (k1 < 0) & (k2 >= 0),  # K-+
        (k1 <= 0) & (k2 < 0),  # K--
    )


def build_mode_set(N: int) -> ModeSet:
    """All lattice modes with ``N <= |k| <= 2N``, classified by quadrant."""
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise InvalidArgument(f"shell index N must be a positive integer, got {N!r}")
    N = int(N)
    ax = np.arange(-2 * N, 2 * N + 1, dtype=np.int64)
    k1, k2 = (a.ravel() for a in np.meshgrid(ax, ax, indexing="ij"))
    n2 = k1 * k1 + k2 * k2
    shell = (n2 >= N * N) & (n2 <= 4 * N * N)
    k1, k2 = k1[shell], k2[shell]
    blocks, parity = [], []
    for q, mask in enumerate(_quadrant_masks(k1, k2)):
        a, b = k1[mask], k2[mask]
        order = np.lexsort((b, a))
        blocks.append(np.stack([a[order], b[order]], axis=1))
        parity.append(np.full(len(a), q < 2))
    return ModeSet(N=N, k=np.concatenate(blocks), is_cos=np.concatenate(parity))


def coefficient(k, p: PhysParams, N: int) -> float:
    """Mode amplitude ``theta_k = a_tau / |k|^2`` inside the shell, else 0."""
    k1, k2 = (int(v) for v in k)
    n2 = k1 * k1 + k2 * k2
    if n2 == 0:
        raise InvalidArgument("the zero mode has no coefficient")
    if N * N <= n2 <= 4 * N * N:
        return p.a_tau / n2
    return 0.0


def _theta(m: ModeSet, p: PhysParams) -> np.ndarray:
    return p.a_tau / m.norm2


def sigma_eval(m: ModeSet, p: PhysParams, x) -> np.ndarray:
    """Velocity vectors ``sigma_k(x)`` of every mode, shape ``(M, 2)``."""
    x = np.asarray(x, dtype=float) % (2 * np.pi)
    phase = m.k @ x
    trig = np.where(m.is_cos, np.cos(phase), np.sin(phase))
    return (_theta(m, p) * trig / m.norm)[:, None] * m.k_perp


def _check_disc(r, closed=False):
    r = np.asarray(r, dtype=float)
    s2 = float(r @ r)
    if s2 > 1.0 or (not closed and s2 >= 1.0):
        raise DomainViolation(f"|r| = {np.sqrt(s2):.6g} outside the unit disc")
    return r


def grad_sigma_apply(m: ModeSet, p: PhysParams, x, r) -> np.ndarray:
    """Stretching vectors ``(grad_x sigma_k(x)) r`` per mode, shape ``(M, 2)``.

    Each row is parallel to ``k_perp``: the gradient of a mode is the rank-one
    matrix ``k_perp k^T`` times a scalar.
    """
    r = _check_disc(r)
    x = np.asarray(x, dtype=float) % (2 * np.pi)
    phase = m.k @ x
    dtrig = np.where(m.is_cos, -np.sin(phase), np.cos(phase))
    scale = _theta(m, p) * dtrig * (m.k @ r) / m.norm
    return scale[:, None] * m.k_perp


def _plus_tensor(m: ModeSet, p: PhysParams):
    kp = m.plus.astype(float)
    n2 = (kp**2).sum(axis=1)
    th2 = (p.a_tau / n2) ** 2
    perp = np.stack([-kp[:, 1], kp[:, 0]], axis=1)
    return kp, th2 / n2, perp


def corrector_matrices(m: ModeSet, p: PhysParams, r) -> np.ndarray:
    """Vectorised closed form of ``A^N`` at points ``r`` of shape ``(..., 2)``."""
    r = np.asarray(r, dtype=float)
    kp, w, perp = _plus_tensor(m, p)
    # A^N is quadratic in r: A = sum_ab r_a r_b S_ab with S_ab = sum w k_a k_b perp perp^T
    S = np.einsum("k,ka,kb,ki,kj->abij", w, kp, kp, perp, perp)
    out = np.einsum("na,nb,abij->nij", r.reshape(-1, 2), r.reshape(-1, 2), S)
    return out.reshape(r.shape[:-1] + (2, 2))


def corrector_matrix(m: ModeSet, p: PhysParams, r) -> np.ndarray:
    """Ito corrector ``A^N(r) = sum_k (grad sigma_k r) (grad sigma_k r)^T``.

    Uses the x-free form ``sum_{K+} theta_k^2 (k.r)^2 k_perp k_perp^T / |k|^2``
    obtained by pairing each cosine mode with the sine mode at ``-k``.
    """
    r = _check_disc(r, closed=True)
    return corrector_matrices(m, p, r)


def corrector_matrix_direct(m: ModeSet, p: PhysParams, x, r) -> np.ndarray:
    """Brute-force x-dependent sum over all modes (no pairing used)."""
    v = grad_sigma_apply(m, p, x, r)
    return v.T @ v


def limit_matrix(r, k_T: float) -> np.ndarray:
    """Large-``N`` corrector ``k_T (3|r|^2 I - 2 r r^T)``."""
    if not k_T > 0:
        raise InvalidArgument(f"k_T must be positive, got {k_T}")
    r = np.asarray(r, dtype=float)
    s2 = (r**2).sum(axis=-1)[..., None, None]
    outer = r[..., :, None] * r[..., None, :]
    return k_T * (3.0 * s2 * np.eye(2) - 2.0 * outer)


def x_diffusion_coefficient(m: ModeSet, p: PhysParams) -> float:
    """``alpha_N = 1/2 sum_{K++} theta_k^2``."""
    k = m.k
    upper = (k[:, 0] >= 0) & (k[:, 1] > 0)
    return 0.5 * float(np.sum(_theta(m, p)[upper] ** 2))


def theta_fourth_moment(m: ModeSet, p: PhysParams) -> float:
    """``sum_K theta_k^4 |k|^2``, reported as a measured constant."""
    return float(np.sum(_theta(m, p) ** 4 * m.norm2))


def flow_covariances(m: ModeSet, p: PhysParams):
    """Per-unit-time covariances of the one-step flow increments.

    Returns ``(transport, gradient)``: the 2x2 covariance of
    ``sum_k sigma_k(x) dW^k`` and the 3x3 covariance of the entries
    ``(G11, G12, G21)`` of ``G = sum_k grad sigma_k(x) dW^k`` (``G22 = -G11``).
    Both are independent of ``x`` and the two blocks are uncorrelated, so
    an independent-flow step can be sampled exactly from them.
    """
    kp, w, perp = _plus_tensor(m, p)
    transport = np.einsum("k,ki,kj->ij", w, perp, perp)
    v = np.stack([perp[:, 0] * kp[:, 0], perp[:, 0] * kp[:, 1], perp[:, 1] * kp[:, 0]], axis=1)
    gradient = np.einsum("k,ki,kj->ij", w, v, v)
    return transport, gradient


class FlowField:
    """Fast evaluation of one flow realisation at many points.

    For a vector of per-mode increments (in ``ModeSet`` order) the velocity
    ``sum_k sigma_k(x) dW^k`` and its gradient are trigonometric polynomials
    of degree ``2N``.  They are evaluated exactly through the separable
    factorisation ``e^{ik.x} = e^{ik1 x1} e^{ik2 x2}``: one matrix product
    over ``k2`` followed by a short reduction over ``k1``.  Pairing ``k2`` with
    ``-k2`` turns the first factor into a real table of ``cos(k2 x2)`` and
    ``sin(k2 x2)``, which halves the work of the product.
    """

    def __init__(self, m: ModeSet, p: PhysParams, dtype=np.complex64):
        self.m = m
        self.N = m.N
        self.dtype = np.dtype(dtype)
        self._real = np.dtype(self.dtype.char.lower())
        n_cos = int(m.is_cos.sum())
        self._cos = np.arange(n_cos)
        self._sin = m.partner[:n_cos]
        kp = m.k[:n_cos]
        n2 = (kp.astype(float) ** 2).sum(axis=1)
        self._rho = p.a_tau / n2 / np.sqrt(n2)  # theta_k / |k|
        self._i1 = kp[:, 0]
        self._i2 = kp[:, 1] + 2 * self.N
        k2 = np.arange(-2 * self.N, 2 * self.N + 1, dtype=float)
        self._k2pow = np.stack([np.ones_like(k2), k2, k2 * k2])  # q = 0, 1, 2

    def coefficients(self, dW) -> np.ndarray:
        """Stacked inner-sum coefficients on the ``cos/sin(k2 x2)`` basis.

        Shape ``(2N + 1 + 2N, 3 (2N+1))``: rows ``k2 = 0..2N`` multiply
        ``cos(k2 x2)``, rows ``2N+1..4N`` multiply ``sin(k2 x2)`` for
        ``k2 = 1..2N``; columns are ``q (2N+1) + k1``.
        """
        dW = np.asarray(dW, dtype=float)
        N2 = 2 * self.N
        c = dW[self._sin] + 1j * dW[self._cos]
        base = np.zeros((N2 + 1, 2 * N2 + 1), dtype=complex)
        base[self._i1, self._i2] = self._rho * c
        full = (base[None, :, :] * self._k2pow[:, None, :]).reshape(-1, 2 * N2 + 1).T
        pos, neg = full[N2:], full[N2::-1]  # k2 = 0..N2 and -k2
        out = np.empty((2 * N2 + 1, full.shape[1]), dtype=complex)
        out[:N2 + 1] = pos + neg
        out[0] = pos[0]
        out[N2 + 1:] = 1j * (pos[1:] - neg[1:])
        return out.astype(self.dtype)

    def evaluate(self, X, dW, chunk=1024):
        """Velocity ``(n, 2)`` and gradient ``(n, 2, 2)`` at points ``X``."""
        X = np.ascontiguousarray(X, dtype=float)
        n = len(X)
        # real view of the complex coefficients: (re, im) interleaved columns
        coef = np.ascontiguousarray(self.coefficients(dW)).view(self._real)
        vel = np.empty((n, 2))
        grad = np.empty((n, 2, 2))
        N2 = 2 * self.N
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            E1, C2 = _phase_tables(X[lo:hi], N2, self.dtype.type(0), self._real.type(0))
            inner = (C2 @ coef).view(self.dtype)
            _reduce_fields(E1, inner, vel[lo:hi], grad[lo:hi])
        return vel, grad


@njit(cache=True)
def _phase_tables(X, N2, zero, rzero):
    # point-major tables e^{i k1 x1}, k1 = 0..N2, and [cos(k2 x2), k2 = 0..N2;
    # sin(k2 x2), k2 = 1..N2]
    n = X.shape[0]
    E1 = np.empty((n, N2 + 1), dtype=type(zero))
    C2 = np.empty((n, 2 * N2 + 1), dtype=type(rzero))
    for p in range(n):
        a = complex(np.cos(X[p, 0]), np.sin(X[p, 0]))
        b = complex(np.cos(X[p, 1]), np.sin(X[p, 1]))
        w1 = 1.0 + 0j
        w2 = 1.0 + 0j
        for j in range(N2 + 1):
            E1[p, j] = w1
            C2[p, j] = w2.real
            if j > 0:
                C2[p, N2 + j] = w2.imag
            w1 *= a
            w2 *= b
    return E1, C2


@njit(cache=True)
def _reduce_fields(E1, inner, vel, grad):
    # inner[p, q * K + k1] holds sum_k2 b k2^q e^{i k2 x2}
    n, K = E1.shape
    for p in range(n):
        s01 = 0.0
        s10 = 0.0
        s11 = 0.0
        s02 = 0.0
        s20 = 0.0
        for k1 in range(K):
            e = E1[p, k1]
            er = e.real
            ei = e.imag
            i0 = inner[p, k1]
            i1 = inner[p, K + k1]
            i2 = inner[p, 2 * K + k1]
            # only Re or Im of each product is needed
            s01 += er * i1.imag + ei * i1.real
            s10 += k1 * (er * i0.imag + ei * i0.real)
            s11 += k1 * (er * i1.real - ei * i1.imag)
            s02 += er * i2.real - ei * i2.imag
            s20 += k1 * k1 * (er * i0.real - ei * i0.imag)
        vel[p, 0] = -s01
        vel[p, 1] = s10
        grad[p, 0, 0] = -s11
        grad[p, 0, 1] = -s02
        grad[p, 1, 0] = s20
        grad[p, 1, 1] = s11
