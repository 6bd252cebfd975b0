"""Independent reference computations used by the tests.

Nothing here imports the package's numerical kernels; each oracle re-derives
its quantity from the defining formula by brute force.
"""

import math

import numpy as np
from numba import njit


def a_tau(lam, tau):
    return math.sqrt(lam / tau * 8.0 / (math.pi * math.log(2.0)))


def quadrant(k1, k2):
    if k1 >= 0 and k2 > 0:
        return "++"
    if k1 > 0 and k2 <= 0:
        return "+-"
    if k1 < 0 and k2 >= 0:
        return "-+"
    if k1 <= 0 and k2 < 0:
        return "--"
    raise ValueError("zero mode")


def brute_modes(N):
    """List of ``(k1, k2, parity)`` from a scan of ``[-2N, 2N]^2``."""
    out = []
    for k1 in range(-2 * N, 2 * N + 1):
        for k2 in range(-2 * N, 2 * N + 1):
            if (k1, k2) == (0, 0):
                continue
            n = math.sqrt(k1 * k1 + k2 * k2)
            if N <= n <= 2 * N:
                q = quadrant(k1, k2)
                out.append((k1, k2, "cos" if q[0] == "+" else "sin"))
    return out


def brute_corrector(N, lam, tau, x, r):
    """``sum_k (grad sigma_k(x) r)(grad sigma_k(x) r)^T`` over all modes.

    Gradients are built entry by entry from the defining trigonometric
    expression; no pairing of cos and sin modes is used.
    """
    at = a_tau(lam, tau)
    A = np.zeros((2, 2))
    for k1, k2, par in brute_modes(N):
        n2 = k1 * k1 + k2 * k2
        th = at / n2
        ph = k1 * x[0] + k2 * x[1]
        d = -math.sin(ph) if par == "cos" else math.cos(ph)
        perp = np.array([-k2, k1]) / math.sqrt(n2)
        grad = th * d * np.outer(perp, [k1, k2])
        v = grad @ r
        A += np.outer(v, v)
    return A


def brute_alpha(N, lam, tau):
    at = a_tau(lam, tau)
    tot = 0.0
    for k1, k2, _ in brute_modes(N):
        if quadrant(k1, k2) == "++":
            tot += (at / (k1 * k1 + k2 * k2)) ** 2
    return 0.5 * tot


def bisect_root(a, c, tol=1e-15):
    """Bisection for ``b (1 - b^2) + c b - a (1 - b^2) = 0`` on ``[0, 1)``."""
    lo, hi = 0.0, 1.0
    f = lambda b: b * (1 - b * b) + c * b - a * (1 - b * b)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def midpoint_disc_integral(fun, n=10**6):
    """``2 pi int_0^1 s fun(s) ds`` by the midpoint rule."""
    s = (np.arange(n) + 0.5) / n
    return 2 * math.pi * np.sum(s * fun(s)) / n


def fene_mean_sq(kappa):
    """Second moment of ``|R|`` under the thermal FENE law, closed form.

    ``int s^3 (1-s^2)^(k/2) / int s (1-s^2)^(k/2) = 1 / (k/2 + 2)``.
    """
    return 1.0 / (0.5 * kappa + 2.0)


def cartesian_operator(f, D, r0, h):
    """``div(D grad f)`` at ``r0`` by nested central differences.

    ``f`` maps a point to a scalar and ``D`` a point to a 2x2 matrix.
    """
    e = np.eye(2)

    def grad(p):
        return np.array([(f(p + h * e[i]) - f(p - h * e[i])) / (2 * h) for i in range(2)])

    def flux(p):
        return D(p) @ grad(p)

    return sum((flux(r0 + h * e[i])[i] - flux(r0 - h * e[i])[i]) / (2 * h) for i in range(2))


def radial_flux_operator_2d(kappa, alpha, Z, g):
    """Continuum ``div(M0 (I + alpha A(r)) grad g)`` as a point functional.

    ``M0`` is the corrected weight divided by ``Z`` and ``A(r) =
    3|r|^2 I - 2 r r^T`` is kept as a full tensor.
    """
    ex = kappa / (2 * (1 + alpha))

    def M0(p):
        s2 = p @ p
        return ((1 - s2) / (1 + alpha * s2)) ** ex / Z

    def D(p):
        s2 = p @ p
        return M0(p) * (np.eye(2) + alpha * (3 * s2 * np.eye(2) - 2 * np.outer(p, p)))

    def G(p):
        return g(math.sqrt(p @ p))

    return M0, D, G


@njit(cache=True)
def single_mode_reference(X0, R0, k, theta, kappa, beta, dW, dB):
    """Stochastic Heun on the full Stratonovich system for one cosine mode.

    The spring drift is explicit, so this is only meaningful at small steps.
    Row ``i`` of ``dW`` is ``(flow increment, step size)``; ``dB`` holds the
    thermal increments.
    """
    n = len(dW)
    kn = math.sqrt(k[0] * k[0] + k[1] * k[1])
    p0, p1 = -k[1] / kn, k[0] / kn
    x0, x1, r0, r1 = X0[0], X0[1], R0[0], R0[1]
    c = kappa / beta
    kick = math.sqrt(2.0 / beta)
    for i in range(n):
        w, h = dW[i, 0], dW[i, 1]
        ph = k[0] * x0 + k[1] * x1
        a = theta * math.cos(ph)
        g = -theta * math.sin(ph) * (k[0] * r0 + k[1] * r1)
        d = -c / (1.0 - r0 * r0 - r1 * r1)
        xp0 = x0 + a * p0 * w
        xp1 = x1 + a * p1 * w
        rp0 = r0 + g * p0 * w + d * r0 * h + kick * dB[i, 0]
        rp1 = r1 + g * p1 * w + d * r1 * h + kick * dB[i, 1]
        ph = k[0] * xp0 + k[1] * xp1
        a1 = theta * math.cos(ph)
        g1 = -theta * math.sin(ph) * (k[0] * rp0 + k[1] * rp1)
        d1 = -c / (1.0 - rp0 * rp0 - rp1 * rp1)
        x0 += 0.5 * (a + a1) * p0 * w
        x1 += 0.5 * (a + a1) * p1 * w
        r0 += 0.5 * (g + g1) * p0 * w + 0.5 * (d * r0 + d1 * rp0) * h + kick * dB[i, 0]
        r1 += 0.5 * (g + g1) * p1 * w + 0.5 * (d * r1 + d1 * rp1) * h + kick * dB[i, 1]
    return np.array([x0, x1, r0, r1])


def fene_relaxation_exact(s0, rate, t):
    """Solution of ``ds/dt = -rate s / (1 - s^2)``.

    The flow conserves ``log s - s^2 / 2 + rate t``; the root is found by
    bisection on ``(0, s0]``.
    """
    target = math.log(s0) - 0.5 * s0 * s0 - rate * t
    lo, hi = 0.0, s0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == 0.0 or math.log(mid) - 0.5 * mid * mid < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
