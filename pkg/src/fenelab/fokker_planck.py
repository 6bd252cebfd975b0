"""Radial finite-volume solver for the limit Fokker-Planck equation.

The equation is

    d_t f = 1/(zeta tau) div_r( M0 (1 + alpha |r|^2) grad_r (f / M0) )

restricted to radial densities on the unit disc.  For radial ``g`` the
tensor ``3|r|^2 I - 2 r r^T`` acts on ``grad g`` as the scalar ``|r|^2``, so
the mobility reduces to ``1 + alpha s^2``.

The unknown is stored as cell averages ``f_j``; fluxes are written in the
quotient ``g_j = f_j / M0_j``, which makes the sampled ``M0`` an exact
discrete kernel element.  The face weight vanishes at ``s = 1`` so the
no-flux condition needs no ghost cells.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal, lapack

from .errors import InvalidArgument, NumericalBreakdown
from .weights import WeightSpec, corrected_weight

SCHEMES = ("implicit_euler", "crank_nicolson")


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Graded cells ``[s_j, s_{j+1}]`` on ``[0, 1]``."""

    faces: np.ndarray
    grading: float = 1.0

    def __post_init__(self):
        f = self.faces
        if f.ndim != 1 or len(f) < 2 or f[0] != 0.0 or f[-1] != 1.0 or np.any(np.diff(f) <= 0):
            raise InvalidArgument("faces must increase strictly from 0 to 1")
        f.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return len(self.faces) - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    @property
    def volumes(self) -> np.ndarray:
        f = self.faces
        return math.pi * (f[1:] ** 2 - f[:-1] ** 2)

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (len(self.faces) == len(other.faces)
                                 and np.array_equal(self.faces, other.faces))


def build_radial_grid(n_cells: int, grading: float = 2.0, min_cells: int = 16) -> RadialGrid:
    """Faces ``s_j = 1 - (1 - j/n)^q``; ``q > 1`` refines towards ``s = 1``.

    ``min_cells`` is the smallest accepted resolution; lower it only for
    illustrative grids.
    """
    if isinstance(n_cells, bool) or int(n_cells) != n_cells or n_cells < max(1, min_cells):
        raise InvalidArgument(f"n_cells must be an integer >= {min_cells}, got {n_cells!r}")
    if not grading >= 1:
        raise InvalidArgument(f"grading exponent must be >= 1, got {grading}")
    n = int(n_cells)
    j = np.arange(n + 1) / n
    faces = 1.0 - (1.0 - j) ** grading
    faces[0], faces[-1] = 0.0, 1.0
    return RadialGrid(faces=faces, grading=float(grading))


@dataclass
class RadialDensity:
    """Cell averages on a radial grid, one row per x-slice.

    ``values`` has shape ``(n_cells,)`` or ``(n_slices, n_cells)``.
    """

    grid: RadialGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.grid.n_cells:
            raise InvalidArgument("values do not match the grid")
        if np.any(self.values < 0):
            raise InvalidArgument("density values must be non-negative")

    @property
    def mass(self):
        """Per-slice mass ``sum_j f_j v_j``."""
        return self.values @ self.grid.volumes


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Symmetric form of the flux stencil in the quotient variable.

    With ``B = diag(v_j M0_j)`` and ``K = D^T W D`` (``D`` the face
    difference, ``W`` the face transmissibilities) one step of the
    equation in ``g`` reads ``B dg/dt = -prefactor K g``.
    """

    grid: RadialGrid
    kappa: float
    alpha: float
    prefactor: float
    m0_cell: np.ndarray
    m0_face: np.ndarray
    trans: np.ndarray  # interior face transmissibilities, length n-1
    exploratory: bool = False
    weight: WeightSpec = field(default=None)

    @property
    def mass_matrix(self) -> np.ndarray:
        return self.grid.volumes * self.m0_cell

    def stiffness_bands(self):
        """Diagonal and off-diagonal of ``K`` (without the prefactor)."""
        t = self.trans
        d = np.zeros(self.grid.n_cells)
        d[:-1] += t
        d[1:] += t
        return d, -t

    def face_flux(self, f):
        """Outward flux through the interior faces for density ``f``."""
        g = np.asarray(f) / self.m0_cell
        return -self.prefactor * self.trans * np.diff(g, axis=-1)

    def apply(self, f):
        """Right-hand side ``(L f)_j`` as a cell average."""
        flux = self.face_flux(f)
        div = np.zeros(np.shape(f))
        div[..., :-1] -= flux
        div[..., 1:] += flux
        return div / self.grid.volumes

    def as_matrix(self):
        """Dense matrix of :meth:`apply` acting on cell values."""
        n = self.grid.n_cells
        return np.column_stack([self.apply(e) for e in np.eye(n)])


def assemble_radial_operator(grid: RadialGrid, kappa, alpha, zeta_tau) -> DiscreteOperator:
    """Finite-volume operator with stationary weight ``M0(kappa, alpha)``.

    Transmissibility of an interior face ``s_f`` between centres ``c_j`` and
    ``c_{j+1}`` is ``2 pi s_f M0(s_f) (1 + alpha s_f^2) / (c_{j+1} - c_j)``.
    """
    if not zeta_tau > 0:
        raise InvalidArgument(f"zeta*tau must be positive, got {zeta_tau}")
    if not alpha >= 0:
        raise InvalidArgument(f"alpha must be non-negative, got {alpha}")
    h = kappa / (2.0 * (1.0 + alpha))
    exploratory = not h > 1.0
    if exploratory:
        warnings.warn(f"kappa/(2(1+alpha)) = {h:.3g} <= 1: outside the validated regime",
                      RuntimeWarning, stacklevel=2)
    w = WeightSpec("corrected", kappa, alpha).normalize()
    c = grid.centers
    sf = grid.faces[1:-1]
    m0_cell = w(c)
    m0_face = w(grid.faces)
    trans = 2 * math.pi * sf * m0_face[1:-1] * (1.0 + alpha * sf * sf) / np.diff(c)
    return DiscreteOperator(grid=grid, kappa=float(kappa), alpha=float(alpha),
                            prefactor=1.0 / zeta_tau, m0_cell=m0_cell, m0_face=m0_face,
                            trans=trans, exploratory=exploratory, weight=w)


def steady_state(op: DiscreteOperator) -> RadialDensity:
    """Cell-sampled ``M0`` scaled to unit mass."""
    v = op.m0_cell / (op.m0_cell @ op.grid.volumes)
    return RadialDensity(op.grid, v)


class _TridiagSolver:
    """LU factorisation of ``B + c K`` reused over many steps."""

    def __init__(self, op: DiscreteOperator, c: float):
        d, e = op.stiffness_bands()
        B = op.mass_matrix
        diag = B + c * d
        off = c * e
        self._anorm = float(np.max(np.abs(diag) + np.r_[np.abs(off), 0] + np.r_[0, np.abs(off)]))
        dl, dd, du, du2, ipiv, info = lapack.dgttrf(off.copy(), diag.copy(), off.copy())
        if info != 0:
            raise NumericalBreakdown(f"tridiagonal factorisation failed (info={info})",
                                     condition=0.0)
        self._lu = (dl, dd, du, du2, ipiv)
        self.rcond = None

    def condition(self):
        if self.rcond is None:
            dl, dd, du, du2, ipiv = self._lu
            self.rcond, _ = lapack.dgtcon(dl, dd, du, du2, ipiv, self._anorm)
        return self.rcond

    def solve(self, rhs):
        dl, dd, du, du2, ipiv = self._lu
        x, info = lapack.dgttrs(dl, dd, du, du2, ipiv, np.asarray(rhs).T)
        x = np.asarray(x).T
        if info != 0 or not np.all(np.isfinite(x)):
            raise NumericalBreakdown("tridiagonal solve failed", condition=self.condition())
        return x


@dataclass
class Trajectory:
    times: np.ndarray
    states: list


def geometric_steps(t_end, dt0, dt_max, growth=1.05) -> np.ndarray:
    """Step sizes starting at ``dt0`` and growing geometrically to ``dt_max``.

    The last step is shortened so the steps sum to ``t_end``.
    """
    if not (0 < dt0 <= dt_max and growth >= 1 and t_end > 0):
        raise InvalidArgument("need 0 < dt0 <= dt_max, growth >= 1 and t_end > 0")
    steps, t, h = [], 0.0, dt0
    while t < t_end * (1 - 1e-14):
        h = min(h, t_end - t)
        steps.append(h)
        t += h
        h = min(h * growth, dt_max)
    return np.array(steps)


def evolve(f0: RadialDensity, op: DiscreteOperator, dt, t_end, scheme="implicit_euler",
           output_every: int = 1) -> Trajectory:
    """Time-step the equation from ``f0`` up to ``t_end``.

    ``dt`` is either a single step size (rounded so that an integer number
    of steps reaches ``t_end``) or an explicit array of step sizes, in
    which case ``t_end`` is ignored.  The update is computed in the
    quotient ``g`` and written back through the face fluxes of the new
    state, so per-slice mass changes only by round-off.  ``implicit_euler``
    keeps non-negative data non-negative for any step (M-matrix);
    ``crank_nicolson`` is second order.
    """
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown scheme {scheme!r}")
    if not f0.grid.same_as(op.grid):
        raise InvalidArgument("density and operator live on different grids")
    if np.ndim(dt) == 0:
        if not (dt > 0 and t_end >= 0):
            raise InvalidArgument("dt must be positive and t_end non-negative")
        n_steps = int(math.ceil(t_end / dt - 1e-12))
        steps = np.full(n_steps, t_end / n_steps if n_steps else 0.0)
    else:
        steps = np.asarray(dt, dtype=float)
        if np.any(steps <= 0):
            raise InvalidArgument("step sizes must be positive")
    if len(steps) == 0:
        return Trajectory(np.array([f0.time]), [f0])
    theta = 1.0 if scheme == "implicit_euler" else 0.5
    solvers = {}
    B = op.mass_matrix
    vol = op.grid.volumes
    f = np.array(f0.values, dtype=float)
    t = f0.time
    times, states = [t], [f0]
    for step, h in enumerate(steps, start=1):
        solver = solvers.get(h)
        if solver is None:
            solver = solvers[h] = _TridiagSolver(op, theta * h * op.prefactor)
        rhs = B * (f / op.m0_cell)
        if theta < 1.0:
            rhs = rhs + (1.0 - theta) * h * vol * op.apply(f)
        f_new = op.m0_cell * solver.solve(rhs)
        # conservative write-back
        flux = theta * op.face_flux(f_new) + (1.0 - theta) * op.face_flux(f)
        div = np.zeros_like(f)
        div[..., :-1] -= flux
        div[..., 1:] += flux
        f = f + h * div / vol
        if theta == 1.0:
            np.maximum(f, 0.0, out=f)  # removes round-off negatives only
        t += h
        if step % output_every == 0 or step == len(steps):
            times.append(t)
            states.append(RadialDensity(op.grid, np.maximum(f, 0.0) if theta < 1 else f.copy(),
                                        time=t))
    return Trajectory(np.array(times), states)


def weighted_norm(f: RadialDensity, w: WeightSpec, kind="H0") -> float:
    """Weighted ``H0`` norm or ``V0`` seminorm (not squared).

    ``H0``: ``sqrt(sum_j f_j^2 / M0_j v_j)``.  ``V0_seminorm``: face
    differences of ``f / M0`` weighted by ``M0`` at the face and the disc
    measure.  Multi-slice data sums over slices.
    """
    grid = f.grid
    m_c = w(grid.centers)
    vals = np.atleast_2d(f.values)
    if kind == "H0":
        return float(math.sqrt(np.sum(vals**2 / m_c * grid.volumes)))
    if kind == "V0_seminorm":
        c = grid.centers
        sf = grid.faces[1:-1]
        m_f = w(sf)
        q = np.diff(vals / m_c, axis=-1) / np.diff(c)
        # face control volume between neighbouring centres
        cv = math.pi * (c[1:] ** 2 - c[:-1] ** 2)
        return float(math.sqrt(np.sum(q**2 * m_f * cv)))
    raise InvalidArgument(f"unknown norm kind {kind!r}")


def h0_distance(f: RadialDensity, op: DiscreteOperator, area=1.0) -> float:
    """``H0`` distance between ``f`` and ``rho M0`` slice by slice.

    ``rho`` is the per-slice mass and ``area`` the x-measure of one
    slice.  Returns the squared distance integrated over x.
    """
    vals = np.atleast_2d(f.values)
    vol = op.grid.volumes
    m0 = op.m0_cell / (op.m0_cell @ vol)
    rho = vals @ vol
    diff = vals - rho[:, None] * m0
    return float(area * np.sum(diff**2 / m0 * vol))


def spectral_gap(op: DiscreteOperator, normalized=True) -> float:
    """Smallest non-zero eigenvalue of ``B^-1/2 K B^-1/2``.

    With ``normalized=True`` the ``1/(zeta tau)`` prefactor is dropped, so
    ``1 / gap`` is the weighted Poincare constant.
    """
    d, e = op.stiffness_bands()
    b = 1.0 / np.sqrt(op.mass_matrix)
    dd = d * b * b
    ee = e * b[:-1] * b[1:]
    try:
        vals = eigh_tridiagonal(dd, ee, eigvals_only=True, select="i", select_range=(0, 1))
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(f"eigensolver failed: {exc}") from exc
    gap = float(vals[1])
    return gap if normalized else gap * op.prefactor


@dataclass
class SweepRow:
    tau: float
    integral_distance: float
    mass_drift: float
    n_steps: int
    error: Optional[str] = None


@dataclass
class SweepResult:
    rows: list
    slope: Optional[float]
    slope_flag: Optional[str] = None
    trajectories: dict = field(default_factory=dict)


def loglog_slope(x, y) -> Optional[float]:
    """Ordinary least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def singular_limit_sweep(tau_list: Sequence[float], zeta, f0: RadialDensity, t_end, kappa,
                         lam, dt_max=1e-2, dt_rel=1e-3, growth=1.05, slice_area=1.0,
                         keep_trajectories=False) -> SweepResult:
    """Time-integrated ``H0`` distance to ``rho M0`` for a list of ``tau``.

    The operator uses ``alpha = zeta lam / 2`` and prefactor
    ``1/(zeta tau)``; each row is stepped with implicit Euler on
    geometrically growing steps that start at ``dt_rel zeta tau`` (so the
    fast initial relaxation is resolved at every ``tau``) and saturate at
    ``dt_max``.  The distance is integrated in time by the trapezoid rule.  A failing row is flagged and the sweep
    continues.  Integrals below the round-off floor ``(1e3 eps)^2
    ||f0||^2 t_end`` are reported as exactly zero.
    """
    rows = []
    trajs = {}
    alpha = 0.5 * zeta * lam
    m_init = np.atleast_1d(f0.mass)
    floor = (1e3 * np.finfo(float).eps) ** 2
    h0_sq = lambda op: float(np.sum(np.atleast_2d(f0.values) ** 2 / op.m0_cell * f0.grid.volumes))
    for tau in tau_list:
        if not tau > 0:
            rows.append(SweepRow(tau, float("nan"), float("nan"), 0, "non-positive tau"))
            continue
        try:
            op = assemble_radial_operator(f0.grid, kappa, alpha, zeta * tau)
            steps = geometric_steps(t_end, min(dt_max, dt_rel * zeta * tau), dt_max, growth)
            tr = evolve(f0, op, steps, t_end)
            d = np.array([h0_distance(s, op, slice_area) for s in tr.states])
            integral = float(trapezoid(d, tr.times))
            if integral <= floor * h0_sq(op) * t_end:
                integral = 0.0
            drift = max(float(np.max(np.abs(np.atleast_1d(s.mass) - m_init) / m_init))
                        for s in tr.states)
            rows.append(SweepRow(float(tau), integral, drift, len(tr.times) - 1))
            if keep_trajectories:
                trajs[float(tau)] = tr
        except NumericalBreakdown as exc:
            rows.append(SweepRow(float(tau), float("nan"), float("nan"), 0, str(exc)))
    dist = [r.integral_distance for r in rows]
    if all(r.error is None and r.integral_distance == 0.0 for r in rows):
        return SweepResult(rows, None, "all distances zero", trajs)
    slope = loglog_slope([r.tau for r in rows], dist)
    flag = None if slope is not None else "too few positive distances"
    return SweepResult(rows, slope, flag, trajs)
