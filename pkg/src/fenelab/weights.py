"""Radial weights of the FENE model and regime diagnostics.

All weights are functions of the radius ``s = |r|`` on the closed unit disc:

* ``fene``       ``(1 - s^2)^(kappa/2)``
* ``corrected``  ``((1 - s^2) / (1 + gamma s^2))^(kappa / (2 (1 + gamma)))``
* ``epsilon``    ``exp(-kappa int_0^s u du / ((1 - u^2)(1 + sigma phi_eps(u)^2 u^2)))``

Values are unnormalised unless a normalisation constant is requested with
:func:`disc_normalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import DomainViolation, InvalidArgument

KINDS = ("fene", "corrected", "epsilon")

_QUAD_TOL = 1e-13


def _radius(s, closed=True):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > 1) or (not closed and np.any(s >= 1)):
        raise DomainViolation("radius outside [0, 1]")
    return s


def _check_kappa(kappa):
    if not (np.isfinite(kappa) and kappa > 0):
        raise InvalidArgument(f"kappa must be positive and finite, got {kappa}")


def fene_weight(s, kappa):
    """Unnormalised FENE weight ``(1 - s^2)^(kappa/2)``."""
    _check_kappa(kappa)
    s = _radius(s)
    return (1.0 - s * s) ** (0.5 * kappa)


def corrected_exponent(kappa, gamma):
    return kappa / (2.0 * (1.0 + gamma))


def corrected_weight(s, kappa, gamma):
    """Unnormalised stationary weight of the limit operator."""
    _check_kappa(kappa)
    if not gamma >= 0:
        raise InvalidArgument(f"gamma must be non-negative, got {gamma}")
    s = _radius(s)
    s2 = s * s
    return ((1.0 - s2) / (1.0 + gamma * s2)) ** corrected_exponent(kappa, gamma)


def _check_eps(epsilon):
    if not 0 < epsilon < 0.25:
        raise InvalidArgument(f"epsilon must lie in (0, 1/4), got {epsilon}")


def cutoff_profile(s, epsilon):
    """Cut-off equal to 1 for ``1 - s >= 2 eps`` and 0 for ``1 - s <= eps``.

    The band in between uses the cubic smoothstep ``3t^2 - 2t^3`` with
    ``t = (1 - s - eps) / eps``; its slope never exceeds ``1.5 / eps``.
    """
    _check_eps(epsilon)
    s = np.asarray(s, dtype=float)
    t = np.clip((1.0 - s - epsilon) / epsilon, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _plateau_log(s, kappa, sigma):
    # log of ((1-s^2)/(1+sigma s^2))^(kappa/(2(1+sigma)))
    s2 = s * s
    return corrected_exponent(kappa, sigma) * (math.log1p(-s2) - math.log1p(sigma * s2))


def _band_integral(a, b, sigma, epsilon):
    def f(u):
        ph = float(cutoff_profile(u, epsilon))
        return u / ((1.0 - u * u) * (1.0 + sigma * ph * ph * u * u))

    val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=_QUAD_TOL, limit=200)
    return val


def _epsilon_log(s, kappa, sigma, epsilon):
    s1, s2 = 1.0 - 2.0 * epsilon, 1.0 - epsilon
    if s <= s1:
        return _plateau_log(s, kappa, sigma)
    out = _plateau_log(s1, kappa, sigma)
    out -= kappa * _band_integral(s1, min(s, s2), sigma, epsilon)
    if s > s2:
        # phi vanishes: integrand u/(1-u^2) has a closed antiderivative
        out += 0.5 * kappa * (math.log1p(-s * s) - math.log1p(-s2 * s2))
    return out


def epsilon_weight(s, kappa, sigma, epsilon):
    """Intermediate weight with the cut-off switched into the mobility.

    Parameters
    ----------
    s : float or array_like
        Radii in ``[0, 1]``; ``s = 1`` returns the limit value 0.
    kappa : float
        Spring constant.
    sigma : float
        Turbulent stretching parameter ``lambda beta / (2 tau)``.
    epsilon : float
        Cut-off width in ``(0, 1/4)``.
    """
    _check_kappa(kappa)
    _check_eps(epsilon)
    if not sigma >= 0:
        raise InvalidArgument(f"sigma must be non-negative, got {sigma}")
    s = _radius(s)
    flat = np.atleast_1d(s).ravel()
    out = np.array([0.0 if v >= 1.0 else math.exp(_epsilon_log(float(v), kappa, sigma, epsilon))
                    for v in flat])
    return out.reshape(np.shape(s)) if np.ndim(s) else float(out[0])


@dataclass(frozen=True)
class WeightSpec:
    """A member of the radial weight family.

    For ``kind="epsilon"`` the ``gamma`` field holds the stretching
    parameter ``sigma``.
    """

    kind: str
    kappa: float
    gamma: float = 0.0
    epsilon: Optional[float] = None
    normalized: bool = False
    Z: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown weight kind {self.kind!r}")
        _check_kappa(self.kappa)
        if not self.gamma >= 0:
            raise InvalidArgument(f"gamma must be non-negative, got {self.gamma}")
        if self.kind == "epsilon":
            if self.epsilon is None:
                raise InvalidArgument("epsilon kind needs an epsilon value")
            _check_eps(self.epsilon)
        if self.normalized and not (self.Z is not None and self.Z > 0):
            raise InvalidArgument("normalized weight needs a positive Z")

    def raw(self, s):
        if self.kind == "fene":
            return fene_weight(s, self.kappa)
        if self.kind == "corrected":
            return corrected_weight(s, self.kappa, self.gamma)
        return epsilon_weight(s, self.kappa, self.gamma, self.epsilon)

    def __call__(self, s):
        v = self.raw(s)
        return v / self.Z if self.normalized else v

    def normalize(self) -> "WeightSpec":
        return replace(self, normalized=True, Z=disc_normalize(self))

    @property
    def tail_exponent(self) -> float:
        """Power of ``(1 - s^2)`` governing the weight at the boundary."""
        if self.kind == "corrected":
            return corrected_exponent(self.kappa, self.gamma)
        return 0.5 * self.kappa


def disc_normalize(w: WeightSpec) -> float:
    """``Z = 2 pi int_0^1 s w(s) ds`` for the unnormalised weight.

    After the substitution ``u = s^2`` the integrand is
    ``pi (1 - u)^p g(u)`` with smooth ``g``; the algebraic endpoint factor
    is handled by QUADPACK's ``alg`` weight.
    """
    if not isinstance(w, WeightSpec):
        raise InvalidArgument("disc_normalize expects a WeightSpec")
    p = w.tail_exponent
    if not p > -1:
        raise InvalidArgument("weight is not integrable on the disc")
    opts = dict(epsabs=0.0, epsrel=_QUAD_TOL, limit=200)
    if w.kind == "fene":
        val, _ = integrate.quad(lambda u: 1.0, 0.0, 1.0, weight="alg", wvar=(0.0, p), **opts)
    elif w.kind == "corrected":
        g = w.gamma
        val, _ = integrate.quad(lambda u: (1.0 + g * u) ** (-p), 0.0, 1.0,
                                weight="alg", wvar=(0.0, p), **opts)
    else:
        u2 = (1.0 - w.epsilon) ** 2
        u1 = (1.0 - 2.0 * w.epsilon) ** 2
        head, _ = integrate.quad(lambda u: w.raw(math.sqrt(u)), 0.0, u2, points=[u1], **opts)
        c = w.raw(math.sqrt(u2)) / (1.0 - u2) ** p
        tail, _ = integrate.quad(lambda u: c, u2, 1.0, weight="alg", wvar=(0.0, p), **opts)
        val = head + tail
    return math.pi * val


@dataclass(frozen=True)
class RegimeReport:
    """Coil-stretch exponent and validity flags of a parameter set."""

    h: float
    hardy_ok: bool
    smallness_ok: bool
    cutoff_required: bool
    gamma: float
    Wi: float
    alpha_phys: float
    threshold: float

    def as_dict(self):
        return dict(self.__dict__)


def coil_stretch_params(kappa, k_T, beta, threshold=0.1) -> RegimeReport:
    """Classify ``(kappa, k_T, beta)``.

    ``gamma = k_T beta / 2`` and ``h = kappa / (2 (1 + gamma))``.  The
    Weissenberg number uses the Lyapunov exponent ``2 k_T`` and the polymer
    time ``beta / kappa``, so ``Wi = 2 k_T beta / kappa`` and
    ``alpha_phys = kappa Wi / 2 = k_T beta``.
    """
    _check_kappa(kappa)
    if not beta > 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    if not k_T >= 0:
        raise InvalidArgument(f"k_T must be non-negative, got {k_T}")
    gamma = 0.5 * k_T * beta
    h = kappa / (2.0 * (1.0 + gamma))
    hardy_ok = h > 1.0
    small = k_T * beta <= threshold
    Wi = 2.0 * k_T * beta / kappa
    return RegimeReport(h=h, hardy_ok=hardy_ok, smallness_ok=small,
                        cutoff_required=not (hardy_ok and small), gamma=gamma,
                        Wi=Wi, alpha_phys=kappa * Wi / 2.0, threshold=threshold)


def stretched_coil_marginal(R, Wi, R0sq, b=1.0):
    """Published closed-form elongation marginal (unnormalised).

    ``R (1 + Wi/2 R^2/R0^2)^(-h) (1 - R^2/b)^h`` with
    ``h = b / (2 R0^2 + b Wi)``.
    """
    R = np.asarray(R, dtype=float)
    h = b / (2.0 * R0sq + b * Wi)
    return R * (1.0 + 0.5 * Wi * R * R / R0sq) ** (-h) * (1.0 - R * R / b) ** h


def marginal_equivalence_check(kappa, alpha, s_grid) -> float:
    """Max discrepancy between ``s M0(s)`` and the closed-form marginal.

    The closed form is evaluated with ``b = 1``, ``R0^2 = 1/kappa`` and
    ``Wi = 2 alpha / kappa``; both sides are divided by the same constant.
    """
    s = _radius(s_grid)
    lhs = s * corrected_weight(s, kappa, alpha)
    rhs = stretched_coil_marginal(s, Wi=2.0 * alpha / kappa, R0sq=1.0 / kappa)
    Z = disc_normalize(WeightSpec("corrected", kappa, alpha)) / (2.0 * math.pi)
    return float(np.max(np.abs(lhs - rhs)) / Z)


def hardy_ratio(kappa, gamma, coeffs) -> float:
    """Hardy quotient of the radial profile ``phi = M0 * q(s^2)``.

    Returns ``int d^-2 q^2 M0 / int (q^2 + |q'|^2) M0`` over the disc, with
    ``d = 1 - s`` the distance to the boundary and ``q`` the polynomial
    with coefficients ``coeffs`` (lowest degree first) in ``s^2``.
    Finite only when ``kappa / (2 (1 + gamma)) > 1``.
    """
    h = corrected_exponent(kappa, gamma)
    if not h > 1:
        raise InvalidArgument("Hardy quotient diverges unless kappa/(2(1+gamma)) > 1")
    q = np.polynomial.Polynomial(coeffs)
    dq = q.deriv()

    def smooth(s):
        # M0 / (1 - s)^h
        return (1.0 + s) ** h * (1.0 + gamma * s * s) ** (-h)

    def num(s):
        return 2 * math.pi * s * q(s * s) ** 2 * smooth(s)

    def den(s):
        grad = 2.0 * s * dq(s * s)
        return 2 * math.pi * s * (q(s * s) ** 2 + grad * grad) * smooth(s)

    opts = dict(weight="alg", epsabs=0.0, epsrel=1e-12, limit=200)
    a, _ = integrate.quad(num, 0.0, 1.0, wvar=(0.0, h - 2.0), **opts)
    b, _ = integrate.quad(den, 0.0, 1.0, wvar=(0.0, h), **opts)
    return a / b


def weight_table(s, kappa, gamma, epsilon):
    """Columns ``s, M, M0, M_eps`` of normalised weights for plotting."""
    s = _radius(s)
    fene = WeightSpec("fene", kappa).normalize()
    corr = WeightSpec("corrected", kappa, gamma).normalize()
    eps = WeightSpec("epsilon", kappa, gamma, epsilon).normalize()
    return {"s": s, "M": fene(s), "M0": corr(s), "M_eps": eps(s)}
