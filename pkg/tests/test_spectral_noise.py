import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fenelab.errors import DomainViolation, InvalidArgument
from fenelab.params import PhysParams
from fenelab.spectral_noise import (FlowField, build_mode_set, coefficient, corrector_matrices,
                                    corrector_matrix, corrector_matrix_direct, flow_covariances,
                                    grad_sigma_apply, limit_matrix, sigma_eval,
                                    theta_fourth_moment, x_diffusion_coefficient)

from oracles import a_tau, brute_alpha, brute_corrector, brute_modes

UNIT = PhysParams(kappa=10.0, beta=1.0, lam=1.0, tau=1.0)
AT = math.sqrt(8 / (math.pi * math.log(2)))


# mode sets

def test_n1_modes_exact():
    m = build_mode_set(1)
    assert len(m) == 12
    plus = [tuple(k) for k, c in zip(m.k.tolist(), m.is_cos) if c]
    minus = [tuple(k) for k, c in zip(m.k.tolist(), m.is_cos) if not c]
    assert sorted(plus) == sorted([(0, 1), (1, 1), (0, 2), (1, 0), (1, -1), (2, 0)])
    assert sorted(minus) == sorted((-a, -b) for a, b in plus)
    assert (1, 1) in plus


@pytest.mark.parametrize("N", [1, 2, 4, 7])
def test_mode_set_matches_brute_force(N):
    m = build_mode_set(N)
    got = sorted((a, b, "cos" if c else "sin") for (a, b), c in zip(m.k.tolist(), m.is_cos))
    assert got == sorted(brute_modes(N))


def test_mode_order_is_lexicographic_per_quadrant_cos_first():
    m = build_mode_set(3)
    n_cos = int(m.is_cos.sum())
    assert m.is_cos[:n_cos].all() and not m.is_cos[n_cos:].any()
    k = m.k.tolist()
    quads = [(a >= 0 and b > 0, a > 0 and b <= 0, a < 0 and b >= 0, a <= 0 and b < 0).index(True)
             for a, b in k]
    assert quads == sorted(quads)
    for q in range(4):
        block = [tuple(v) for v, qq in zip(k, quads) if qq == q]
        assert block == sorted(block)


@pytest.mark.parametrize("N", [0, -1, 1.5, True])
def test_mode_set_rejects_bad_N(N):
    with pytest.raises(InvalidArgument):
        build_mode_set(N)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12))
def test_mode_set_invariants(N):
    m = build_mode_set(N)
    n = m.norm
    assert np.all((n >= N) & (n <= 2 * N))
    k1, k2 = m.k[:, 0], m.k[:, 1]
    plus = ((k1 >= 0) & (k2 > 0)) | ((k1 > 0) & (k2 <= 0))
    np.testing.assert_array_equal(plus, m.is_cos)
    assert len({(a, b, c) for (a, b), c in zip(m.k.tolist(), m.is_cos)}) == len(m)
    # -k maps K+ onto K- bijectively
    np.testing.assert_array_equal(m.k[m.partner], -m.k)
    assert not np.any(m.is_cos[m.partner] == m.is_cos)
    assert np.array_equal(np.sort(m.partner), np.arange(len(m)))


def test_mode_set_is_immutable():
    m = build_mode_set(2)
    with pytest.raises(ValueError):
        m.k[0, 0] = 5


# coefficients and fields

def test_coefficient_examples():
    assert coefficient((0, 1), UNIT, 1) == pytest.approx(AT, rel=1e-15)
    assert coefficient((3, 0), UNIT, 1) == 0.0
    assert coefficient((1, 1), UNIT, 1) == pytest.approx(AT / 2, rel=1e-15)
    with pytest.raises(InvalidArgument):
        coefficient((0, 0), UNIT, 1)


def test_a_tau_matches_formula():
    p = PhysParams(kappa=1, beta=1, lam=0.3, tau=0.7)
    assert p.a_tau == pytest.approx(a_tau(0.3, 0.7), rel=1e-15)


def test_sigma_at_origin_sin_modes_vanish():
    m = build_mode_set(3)
    v = sigma_eval(m, UNIT, (0.0, 0.0))
    assert np.all(v[~m.is_cos] == 0.0)


def test_sigma_cos_mode_value():
    m = build_mode_set(1)
    v = sigma_eval(m, UNIT, (0.0, math.pi / 3))
    i = [tuple(k) for k in m.k.tolist()].index((0, 1))
    np.testing.assert_allclose(v[i], [-AT / 2, 0.0], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.integers(1, 6))
def test_sigma_orthogonal_to_k(x1, x2, N):
    m = build_mode_set(N)
    v = sigma_eval(m, UNIT, (x1, x2))
    assert np.all(np.abs(np.einsum("ij,ij->i", v, m.k)) <= 1e-14 * (1 + np.abs(v).max()))


def test_grad_sigma_zero_r_and_parallel_to_kperp():
    m = build_mode_set(4)
    x = np.array([0.3, 2.1])
    assert np.all(grad_sigma_apply(m, UNIT, x, (0.0, 0.0)) == 0.0)
    g = grad_sigma_apply(m, UNIT, x, (0.4, -0.3))
    cross = g[:, 0] * m.k_perp[:, 1] - g[:, 1] * m.k_perp[:, 0]
    assert np.max(np.abs(cross)) <= 1e-14


def test_grad_sigma_central_difference():
    m = build_mode_set(4)
    x = np.array([1.1, -0.4])
    r = np.array([0.3, 0.5])
    h = 1e-5
    fd = sum(r[j] * (sigma_eval(m, UNIT, x + h * e) - sigma_eval(m, UNIT, x - h * e)) / (2 * h)
             for j, e in enumerate(np.eye(2)))
    g = grad_sigma_apply(m, UNIT, x, r)
    scale = np.abs(g).max()
    assert np.max(np.abs(fd - g)) <= 1e-8 * max(scale, 1.0)


@pytest.mark.parametrize("r", [(1.0, 0.0), (0.8, 0.7)])
def test_grad_sigma_domain(r):
    with pytest.raises(DomainViolation):
        grad_sigma_apply(build_mode_set(1), UNIT, (0, 0), r)


def test_divergence_free_by_central_differences():
    m = build_mode_set(6)
    h = 1e-5
    rs = np.random.default_rng(3)
    for _ in range(10):
        x = rs.uniform(0, 2 * np.pi, 2)
        div = sum((sigma_eval(m, UNIT, x + h * e)[:, i] - sigma_eval(m, UNIT, x - h * e)[:, i])
                  / (2 * h) for i, e in enumerate(np.eye(2)))
        assert np.max(np.abs(div)) <= 1e-8


# corrector

def test_corrector_zero_at_origin():
    assert np.all(corrector_matrix(build_mode_set(5), UNIT, (0.0, 0.0)) == 0.0)


def test_corrector_x_independent_against_direct_sum():
    m = build_mode_set(8)
    rs = np.random.default_rng(0)
    r = np.array([0.5, -0.3])
    A = corrector_matrix(m, UNIT, r)
    for _ in range(100):
        x = rs.uniform(0, 2 * np.pi, 2)
        D = corrector_matrix_direct(m, UNIT, x, r)
        assert np.max(np.abs(D - A)) <= 1e-12 * np.abs(A).max()


def test_corrector_matches_brute_oracle_n8():
    m = build_mode_set(8)
    r = np.array([0.5, 0.0])
    ref = brute_corrector(8, 1.0, 1.0, np.array([0.37, 1.9]), r)
    np.testing.assert_allclose(corrector_matrix(m, UNIT, r), ref, rtol=1e-12, atol=1e-15)


def test_corrector_vectorised_agrees():
    m = build_mode_set(5)
    R = np.random.default_rng(1).uniform(-0.6, 0.6, (7, 2))
    batch = corrector_matrices(m, UNIT, R)
    for r, A in zip(R, batch):
        np.testing.assert_allclose(A, corrector_matrix(m, UNIT, r), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 2 * np.pi), st.sampled_from([2, 8, 16]))
def test_corrector_symmetric_psd(s, phi, N):
    r = s * np.array([math.cos(phi), math.sin(phi)])
    if r @ r > 1:
        r /= math.sqrt(r @ r)
    A = corrector_matrix(build_mode_set(N), UNIT, r)
    assert A[0, 1] == pytest.approx(A[1, 0], abs=1e-15)
    assert np.linalg.eigvalsh(A).min() >= -1e-14


def test_corrector_uniform_bound():
    ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def opnorm(N):
        return np.linalg.norm(corrector_matrices(build_mode_set(N), UNIT, ring), ord=2,
                              axis=(1, 2)).max()

    C_A = opnorm(8)
    for N in (16, 32, 64):
        assert opnorm(N) <= 1.05 * C_A


def test_corrector_outside_disc_rejected():
    with pytest.raises(DomainViolation):
        corrector_matrix(build_mode_set(2), UNIT, (1.0, 0.1))


# limit matrix

def test_limit_matrix_examples():
    np.testing.assert_allclose(limit_matrix((1.0, 0.0), 1.0), [[1, 0], [0, 3]], atol=1e-15)
    assert np.all(limit_matrix((0.0, 0.0), 2.0) == 0)
    np.testing.assert_allclose(limit_matrix((0.6, 0.8), 2.0), [[4.56, -1.92], [-1.92, 3.44]],
                               atol=1e-13)
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidArgument):
            limit_matrix((0.1, 0.1), bad)


def test_limit_matrix_eigenpairs():
    rs = np.random.default_rng(5)
    for _ in range(50):
        r = rs.normal(size=2)
        kT = rs.uniform(0.1, 3)
        A = limit_matrix(r, kT)
        s2 = r @ r
        perp = np.array([-r[1], r[0]])
        assert np.max(np.abs(A @ r - kT * s2 * r)) <= 1e-12 * max(1, kT * s2)
        assert np.max(np.abs(A @ perp - 3 * kT * s2 * perp)) <= 1e-12 * max(1, kT * s2)


def test_corrector_approaches_limit():
    r = np.array([0.6, 0.3])
    errs = [np.linalg.norm(corrector_matrix(build_mode_set(N), UNIT, r) - limit_matrix(r, 1.0))
            for N in (4, 16, 64)]
    assert errs[0] > errs[1] > errs[2]


# x diffusion

def test_alpha_n1():
    expect = AT**2 / 2 * (1 + 1 / 4 + 1 / 16)
    assert x_diffusion_coefficient(build_mode_set(1), UNIT) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("N", [1, 3, 6])
def test_alpha_matches_oracle(N):
    got = x_diffusion_coefficient(build_mode_set(N), UNIT)
    assert got == pytest.approx(brute_alpha(N, 1.0, 1.0), rel=1e-13)
    assert got >= 0


def test_alpha_decreases_with_N():
    vals = [x_diffusion_coefficient(build_mode_set(N), UNIT) for N in (2, 4, 8, 16)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_theta_fourth_moment_bounded():
    vals = [theta_fourth_moment(build_mode_set(N), UNIT) for N in (1, 2, 4, 8, 16)]
    assert all(v > 0 for v in vals)
    assert max(vals) == vals[0]


# aggregated covariances and fast evaluation

def test_flow_covariances_reproduce_corrector_and_alpha():
    m = build_mode_set(6)
    T, C = flow_covariances(m, UNIT)
    alpha = x_diffusion_coefficient(m, UNIT)
    np.testing.assert_allclose(T, 2 * alpha * np.eye(2), rtol=1e-12, atol=1e-16)
    r = np.array([0.4, -0.7])
    # G r is linear in (G11, G12, G21) with G22 = -G11
    J = np.array([[r[0], r[1], 0.0], [-r[1], 0.0, r[0]]])
    np.testing.assert_allclose(J @ C @ J.T, corrector_matrix(m, UNIT, r), rtol=1e-12)


def test_flow_covariance_matches_direct_second_moment():
    m = build_mode_set(3)
    x = np.array([0.7, 2.2])
    T, _ = flow_covariances(m, UNIT)
    s = sigma_eval(m, UNIT, x)
    np.testing.assert_allclose(s.T @ s, T, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("dtype,tol", [(np.complex128, 1e-12), (np.complex64, 2e-5)])
def test_flow_field_matches_mode_sum(dtype, tol):
    m = build_mode_set(5)
    ff = FlowField(m, UNIT, dtype=dtype)
    rs = np.random.default_rng(2)
    dW = rs.normal(size=len(m))
    X = rs.uniform(0, 2 * np.pi, (9, 2))
    vel, grad = ff.evaluate(X, dW, chunk=4)
    for i in range(len(X)):
        v_ref = sigma_eval(m, UNIT, X[i]).T @ dW
        g_ref = np.column_stack([grad_sigma_apply(m, UNIT, X[i], e).T @ dW for e in np.eye(2) * 0.5]) * 2
        scale = max(np.abs(v_ref).max(), np.abs(g_ref).max())
        assert np.max(np.abs(vel[i] - v_ref)) <= tol * scale
        assert np.max(np.abs(grad[i] - g_ref)) <= tol * scale
        assert grad[i].trace() == pytest.approx(0.0, abs=1e-12 * scale)
