"""FENE dumbbells advected and stretched by the synthetic flow.

One step of size ``dt`` for a particle ``(X, R)`` is split as

1. transport ``X`` and stretch ``R`` with the flow increment (Heun rule),
2. thermal kick ``R += sqrt(2 dt / beta) xi``,
3. implicit spring: rescale ``|R|`` to the root in ``[0, 1)`` of
   ``b (1 + c / (1 - b^2)) = |R|`` with ``c = dt kappa / beta``.

The last step maps any intermediate vector back into the open disc, so
``|R| < 1`` holds for every step size.

Two flow models are provided.  With a shared flow every particle sees the
same realisation of ``sum_k sigma_k dW^k``, evaluated at the particle
positions by :class:`~fenelab.spectral_noise.FlowField`.  With independent
flows each particle carries its own realisation; since the one-step
increments at a point are Gaussian with x-independent covariance (see
:func:`~fenelab.spectral_noise.flow_covariances`) they are sampled exactly
from five aggregated normals instead of one normal per mode.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from . import rng
from .errors import DomainViolation, InvalidArgument, UnsolvableStep
from .params import PhysParams
from .spectral_noise import FlowField, ModeSet, flow_covariances, grad_sigma_apply, sigma_eval
from .weights import WeightSpec, corrected_exponent, corrected_weight, disc_normalize

TWO_PI = 2.0 * np.pi
SCHEMES = ("heun", "frozen")
INITS = ("origin", "fene", "corrected")


# --------------------------------------------------------------------------
# implicit spring


@njit(cache=True)
def _spring_residual(b, a, c):
    return b + c * b / (1.0 - b * b) - a


@njit(cache=True)
def _polish(b, a, c):
    # pick the neighbouring double with the smallest residual of the rational form
    best = b
    rb = abs(_spring_residual(b, a, c))
    for nb in (np.nextafter(b, 0.0), np.nextafter(b, 1.0)):
        if 0.0 <= nb < 1.0:
            rn = abs(_spring_residual(nb, a, c))
            if rn < rb:
                best, rb = nb, rn
    return best


@njit(cache=True)
def _spring_root(a, c):
    # p(b) = b^3 - a b^2 - (1 + c) b + a is decreasing on [0, min(a/(1+c), 1)]
    # with p(0) = a >= 0 and p(1) = -c < 0
    if a <= 0.0:
        return 0.0
    if c <= 0.0:
        return a
    hi = min(a / (1.0 + c), 1.0)
    s = min(a, 0.999)
    b = a / (1.0 + c / (1.0 - s * s))
    # three unconditional Newton steps: no data-dependent branches, so
    # consecutive particles overlap in the pipeline
    step = 0.0
    for _ in range(3):
        pb = ((b - a) * b - (1.0 + c)) * b + a
        dp = (3.0 * b - 2.0 * a) * b - (1.0 + c)
        step = pb / dp
        b = min(max(b - step, 0.0), hi)
    if not abs(step) <= 1e-9 * b:
        # safeguarded Newton on the bracket
        lo = 0.0
        for _ in range(100):
            pb = ((b - a) * b - (1.0 + c)) * b + a
            if pb > 0.0:
                lo = b
            elif pb < 0.0:
                hi = b
            else:
                break
            dp = (3.0 * b - 2.0 * a) * b - (1.0 + c)
            nb = b - pb / dp
            if not (lo <= nb <= hi):
                nb = 0.5 * (lo + hi)
            if abs(nb - b) <= 4.5e-16 * b:
                b = nb
                break
            b = nb
    # near b = 1 the cubic has a nearly double root when a is close to 1 and
    # loses digits; refine on the rational form, increasing and convex on
    # (0, 1).  Unconditional, again to keep the loop branch-free.
    top = np.nextafter(1.0, 0.0)
    for _ in range(2):
        w = 1.0 - b * b
        g = _spring_residual(b, a, c)
        dg = 1.0 + c * (1.0 + b * b) / (w * w)
        b = min(max(b - g / dg, 0.0), top)
    # only near b = 1 is the rational residual sensitive to the last ulp
    w = 1.0 - b * b
    if c * (1.0 + b * b) > 4.0 * w * w:
        return _polish(b, a, c)
    return b


def implicit_spring_root(a: float, c: float) -> float:
    """Unique ``b`` in ``[0, 1)`` with ``b (1 + c / (1 - b^2)) = a``.

    The returned double minimises the residual among its neighbours.  Near
    ``b = 1`` the residual is limited by conditioning to about
    ``ulp(b) (1 + c (1 + b^2) / (1 - b^2)^2) / 2``.

    Raises :class:`UnsolvableStep` when the spring is off (``c = 0``) and
    ``a >= 1``.
    """
    if not (a >= 0 and c >= 0):
        raise InvalidArgument(f"need a >= 0 and c >= 0, got a={a}, c={c}")
    if c == 0 and a >= 1:
        raise UnsolvableStep(f"no root in [0, 1) for a={a} without spring force")
    return float(_spring_root(float(a), float(c)))


@njit(cache=True)
def _spring_rescale(R, c):
    # apply the implicit spring to each row of R in place; count |R| >= 1
    bad = 0
    for i in range(R.shape[0]):
        a = math.sqrt(R[i, 0] * R[i, 0] + R[i, 1] * R[i, 1])
        if a > 0.0:
            b = _spring_root(a, c)
            if b >= 1.0:
                bad += 1
                b = np.nextafter(1.0, 0.0)
            R[i, 0] *= b / a
            R[i, 1] *= b / a
    return bad


# --------------------------------------------------------------------------
# single particle


@dataclass(frozen=True)
class ParticleState:
    """Centre ``X`` on the torus ``[0, 2 pi)^2`` and end-to-end vector ``R``."""

    X: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float) % TWO_PI
        R = np.asarray(self.R, dtype=float)
        if X.shape != (2,) or R.shape != (2,):
            raise InvalidArgument("X and R must be 2-vectors")
        if not float(R @ R) < 1.0:
            raise DomainViolation(f"|R| = {np.linalg.norm(R):.6g} is not < 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "R", R)


def _flow_at(m, p, x, dW):
    u = sigma_eval(m, p, x).T @ dW
    # gradient matrix sum_k grad sigma_k(x) dW^k, column by column
    G = np.column_stack([grad_sigma_apply(m, p, x, e).T @ dW for e in (np.array([0.5, 0.0]),
                                                                         np.array([0.0, 0.5]))])
    return u, 2.0 * G


def step_particle(st: ParticleState, p: PhysParams, m: ModeSet, dt, flow_increments,
                  thermal_increment, scheme="heun") -> ParticleState:
    """Advance one particle by one step.

    ``flow_increments`` holds one Brownian increment per mode (variance
    ``dt``) and ``thermal_increment`` a 2-vector with variance ``dt``.
    ``scheme="heun"`` uses the predictor-corrector rule on the joint
    ``(X, R)`` system; ``"frozen"`` evaluates the flow once at the start
    point and applies Heun to ``R`` only (the Stratonovich-to-Ito drift of
    these modes vanishes, so both schemes are consistent).
    """
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown scheme {scheme!r}")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    dW = np.asarray(flow_increments, dtype=float)
    if dW.shape != (len(m),):
        raise InvalidArgument("one flow increment per mode is required")
    X, R = st.X, st.R
    u0, G0 = _flow_at(m, p, X, dW)
    Rp = R + G0 @ R
    if scheme == "heun":
        Xp = X + u0
        u1, G1 = _flow_at(m, p, Xp, dW)
        X = X + 0.5 * (u0 + u1)
        R = R + 0.5 * (G0 @ R + G1 @ Rp)
    else:
        X = X + u0
        R = R + 0.5 * G0 @ (R + Rp)
    R = R + math.sqrt(2.0 / p.beta) * np.asarray(thermal_increment, dtype=float)
    a = float(np.hypot(R[0], R[1]))
    if a > 0:
        R = R * (implicit_spring_root(a, dt * p.kappa / p.beta) / a)
    return ParticleState(X % TWO_PI, R)


# --------------------------------------------------------------------------
# radial laws and histograms


class RadialSampler:
    """Inverse-CDF sampler of the radius with density ``∝ s M0(s)``.

    With ``v = s^2`` and ``y = (1 - v)^(e + 1)`` (``e`` the weight exponent)
    the CDF becomes a smooth integral in ``y``, which is tabulated and
    inverted by monotone interpolation.  For ``gamma = 0`` the inverse is
    exact: ``s^2 = 1 - (1 - U)^(1 / (e + 1))``.
    """

    def __init__(self, kappa, gamma=0.0, n_table=4097):
        self.kappa = float(kappa)
        self.gamma = float(gamma)
        self.e = corrected_exponent(kappa, gamma)
        if self.gamma > 0:
            ep1 = self.e + 1.0
            y = np.linspace(0.0, 1.0, n_table)
            z = 1.0 - y ** (1.0 / ep1)  # v as a function of y
            phi = (1.0 + self.gamma * z) ** (-self.e)
            H = np.zeros_like(y)
            # Simpson on each panel, with a midpoint evaluation
            ym = 0.5 * (y[1:] + y[:-1])
            pm = (1.0 + self.gamma * (1.0 - ym ** (1.0 / ep1))) ** (-self.e)
            H[1:] = np.cumsum((phi[1:] + 4 * pm + phi[:-1]) * np.diff(y) / 6.0)
            # fraction of mass with y' > y, i.e. with radius below s(y)
            frac = (H[-1] - H) / H[-1]
            self._inv = PchipInterpolator(frac[::-1], y[::-1])

    def radius(self, U):
        U = np.asarray(U, dtype=float)
        ep1 = self.e + 1.0
        if self.gamma == 0:
            v = -np.expm1(np.log1p(-U) / ep1)
        else:
            y = np.clip(self._inv(U), 0.0, 1.0)
            v = 1.0 - y ** (1.0 / ep1)
        return np.sqrt(np.clip(v, 0.0, 1.0 - 1e-16))


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n: int

    @property
    def width(self):
        return np.diff(self.edges)


def elongation_histogram(states, n_bins=40) -> Histogram:
    """Normalised histogram of ``|R|`` on ``[0, 1]`` with binomial errors.

    ``states`` may be an ``(n, 2)`` array of end-to-end vectors, a result of
    :func:`simulate_ensemble`, or a sequence of :class:`ParticleState`.
    """
    if n_bins < 10:
        raise InvalidArgument("n_bins must be at least 10")
    if hasattr(states, "R"):
        R = np.asarray(states.R)
    elif len(states) and isinstance(states[0], ParticleState):
        R = np.array([s.R for s in states])
    else:
        R = np.asarray(states, dtype=float)
    if R.size == 0:
        raise InvalidArgument("empty state set")
    s = np.hypot(R[:, 0], R[:, 1])
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts = np.histogram(np.minimum(s, 1.0), bins=edges)[0]
    n = len(s)
    w = np.diff(edges)
    prob = counts / n
    return Histogram(edges, prob / w, np.sqrt(prob * (1 - prob) / n) / w, counts, n)


def reference_marginal(kappa, gamma, n_bins=40) -> np.ndarray:
    """Bin averages of the radial density ``2 pi s M0(s) / Z`` on ``[0, 1]``."""
    if not gamma >= 0:
        raise InvalidArgument("gamma must be non-negative")
    Z = disc_normalize(WeightSpec("corrected", kappa, gamma))
    e = corrected_exponent(kappa, gamma)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    out = np.empty(n_bins)
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    for b in range(n_bins):
        lo, hi = edges[b], edges[b + 1]
        if b < n_bins - 1:
            val, _ = integrate.quad(lambda s: s * corrected_weight(s, kappa, gamma), lo, hi, **opts)
        else:
            # weight ~ (1 - s)^e at the boundary
            val, _ = integrate.quad(lambda s: s * ((1 + s) / (1 + gamma * s * s)) ** e, lo, hi,
                                    weight="alg", wvar=(0.0, e), **opts)
        out[b] = 2 * math.pi * val / Z / (hi - lo)
    return out


def chi2_statistic(counts, probs, min_expected=5.0):
    """Pearson statistic with tail bins pooled until each expects ``min_expected``.

    Returns ``(statistic, dof)``.
    """
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    E = n * np.asarray(probs, dtype=float)
    O = counts.copy()
    # pool from the outer edge inwards
    while len(E) > 1 and E[-1] < min_expected:
        E[-2] += E[-1]
        O[-2] += O[-1]
        E, O = E[:-1], O[:-1]
    return float(np.sum((O - E) ** 2 / E)), len(E) - 1


# --------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleConfig:
    """Numerical settings of an ensemble run.

    ``record_every`` is the cadence of the summary time series in steps.
    ``init`` selects the initial radial law: ``origin`` (``R = 0``), ``fene``
    or ``corrected`` (stationary laws with ``init_kappa``/``init_gamma``).
    """

    n_particles: int
    dt: float
    t_end: float
    seed: int
    shared_flow: bool = False
    record_every: int = 10
    init: str = "fene"
    init_kappa: Optional[float] = None
    init_gamma: float = 0.0
    scheme: str = "heun"
    max_wall_seconds: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.n_particles, bool) or int(self.n_particles) != self.n_particles \
                or self.n_particles < 1:
            raise InvalidArgument("n_particles must be a positive integer")
        if not (self.dt > 0 and self.t_end > 0):
            raise InvalidArgument("dt and t_end must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if self.record_every < 1:
            raise InvalidArgument("record_every must be positive")
        if self.init not in INITS:
            raise InvalidArgument(f"unknown init {self.init!r}")
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class EnsembleResult:
    X: np.ndarray
    R: np.ndarray
    times: np.ndarray
    mean_sq: np.ndarray
    frac_stretched: np.ndarray
    steps_done: int
    partial: bool = False
    violations: int = 0
    wall_seconds: float = field(default=0.0, compare=False)


def initial_states(cfg: EnsembleConfig, p: PhysParams):
    """Positions uniform on the torus, radii from the configured law."""
    n = cfg.n_particles
    U = rng.uniforms(cfg.seed, rng.INIT, 0, n, 4)
    X = TWO_PI * U[:, :2]
    if cfg.init == "origin":
        return X, np.zeros((n, 2))
    kappa = p.kappa if cfg.init_kappa is None else cfg.init_kappa
    gamma = 0.0 if cfg.init == "fene" else cfg.init_gamma
    s = RadialSampler(kappa, gamma).radius(U[:, 2])
    ang = TWO_PI * U[:, 3]
    return X, np.stack([s * np.cos(ang), s * np.sin(ang)], axis=1)


def _psd_sqrt(C):
    w, V = np.linalg.eigh(C)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@njit(cache=True, nogil=True)
def _independent_kernel(X, R, flow, thermal, Lt, Lg, kick, c):
    # flow row: 2 transport + 3 gradient normals, thermal row: 2 normals
    n = X.shape[0]
    for i in range(n):
        f = flow[i]
        X[i, 0] = (X[i, 0] + Lt * f[0]) % TWO_PI
        X[i, 1] = (X[i, 1] + Lt * f[1]) % TWO_PI
        g11 = Lg[0, 0] * f[2] + Lg[0, 1] * f[3] + Lg[0, 2] * f[4]
        g12 = Lg[1, 0] * f[2] + Lg[1, 1] * f[3] + Lg[1, 2] * f[4]
        g21 = Lg[2, 0] * f[2] + Lg[2, 1] * f[3] + Lg[2, 2] * f[4]
        r0 = R[i, 0]
        r1 = R[i, 1]
        # Heun with a frozen gradient: R + G R + G^2 R / 2
        p0 = g11 * r0 + g12 * r1
        p1 = g21 * r0 - g11 * r1
        q0 = g11 * p0 + g12 * p1
        q1 = g21 * p0 - g11 * p1
        R[i, 0] = r0 + p0 + 0.5 * q0 + kick * thermal[i, 0]
        R[i, 1] = r1 + p1 + 0.5 * q1 + kick * thermal[i, 1]
    return _spring_rescale(R, c)


def _summaries(R):
    s2 = R[:, 0] ** 2 + R[:, 1] ** 2
    return float(s2.mean()), float(np.mean(s2 > 0.81))


def simulate_ensemble(cfg: EnsembleConfig, p: PhysParams, m: ModeSet, init=None,
                      workers: int = 1) -> EnsembleResult:
    """Run an ensemble and record mean ``|R|^2`` and the fraction with ``|R| > 0.9``.

    Random numbers are addressed by ``(seed, channel, step, block)`` so the
    result is bitwise reproducible and independent of ``workers``.  If
    ``cfg.max_wall_seconds`` is exceeded the run stops after the current
    step and the result is flagged ``partial``.
    """
    t_start = time.perf_counter()
    if init is None:
        X, R = initial_states(cfg, p)
    else:
        X, R = (np.array(a, dtype=float) for a in init)
        if np.any(np.einsum("ij,ij->i", R, R) >= 1.0):
            raise DomainViolation("initial |R| must be < 1")
        X %= TWO_PI
    n, dt = cfg.n_particles, cfg.dt
    c = dt * p.kappa / p.beta
    kick = math.sqrt(2.0 * dt / p.beta)
    times, msq, frac = [0.0], [], []
    a, b = _summaries(R)
    msq.append(a)
    frac.append(b)
    violations = 0
    partial = False
    steps_done = 0

    if cfg.shared_flow:
        field_eval = FlowField(m, p)
        sqdt = math.sqrt(dt)
    else:
        T, C = flow_covariances(m, p)
        Lt = math.sqrt(T[0, 0] * dt)  # transport covariance is a multiple of I
        Lg = _psd_sqrt(C * dt)
        blocks = [(lo, min(lo + rng.BLOCK, n)) for lo in range(0, n, rng.BLOCK)]
        pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def run_block(step, b, lo, hi):
        flow = rng.generator(cfg.seed, rng.FLOW, step, b).standard_normal((hi - lo, 5))
        th = rng.generator(cfg.seed, rng.THERMAL, step, b).standard_normal((hi - lo, 2))
        return _independent_kernel(X[lo:hi], R[lo:hi], flow, th, Lt, Lg, kick, c)

    try:
        for step in range(1, cfg.n_steps + 1):
            if cfg.shared_flow:
                dW = rng.shared_normals(cfg.seed, rng.FLOW, step, len(m)) * sqdt
                u0, G0 = field_eval.evaluate(X, dW)
                GR = np.einsum("nij,nj->ni", G0, R)
                if cfg.scheme == "heun":
                    Xp = X + u0
                    u1, G1 = field_eval.evaluate(Xp, dW)
                    R = R + 0.5 * (GR + np.einsum("nij,nj->ni", G1, R + GR))
                    X = (X + 0.5 * (u0 + u1)) % TWO_PI
                else:
                    R = R + GR + 0.5 * np.einsum("nij,nj->ni", G0, GR)
                    X = (X + u0) % TWO_PI
                R += kick * rng.normals(cfg.seed, rng.THERMAL, step, n, 2)
                violations += _spring_rescale(R, c)
            elif pool is None:
                for b, (lo, hi) in enumerate(blocks):
                    violations += run_block(step, b, lo, hi)
            else:
                futs = [pool.submit(run_block, step, b, lo, hi) for b, (lo, hi) in enumerate(blocks)]
                violations += sum(f.result() for f in futs)
            steps_done = step
            if step % cfg.record_every == 0 or step == cfg.n_steps:
                times.append(step * dt)
                a, b = _summaries(R)
                msq.append(a)
                frac.append(b)
            if cfg.max_wall_seconds is not None and \
                    time.perf_counter() - t_start > cfg.max_wall_seconds and step < cfg.n_steps:
                partial = True
                if times[-1] != step * dt:
                    times.append(step * dt)
                    a, b = _summaries(R)
                    msq.append(a)
                    frac.append(b)
                break
    finally:
        if not cfg.shared_flow and pool is not None:
            pool.shutdown()
    return EnsembleResult(X=X, R=R, times=np.array(times), mean_sq=np.array(msq),
                          frac_stretched=np.array(frac), steps_done=steps_done,
                          partial=partial, violations=violations,
                          wall_seconds=time.perf_counter() - t_start)
