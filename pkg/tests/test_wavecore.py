"""Core operator checks.

The dense stencil table in ``literal_operator_matrix`` is written out
longhand from the scheme definition (identity rows at the two initial time
levels, then m/dt^2 second differences minus the lagged Laplacian) so the
vectorized implementation is compared against an independent construction,
not against itself.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagfwi.errors import DivergenceError
from lagfwi.grids import GridSpec, ModelGrid, SourceField, Wavefield, build_model
from lagfwi.wavecore import (
    DENOMINATOR_FLOOR_REL,
    adjoint_solve,
    apply_wave_operator,
    apply_wave_operator_transpose,
    correlation_terms,
    forward_solve,
    inject,
    laplacian,
    model_update_correlation,
    operator_time_curvature,
    preconditioned_ratio,
    sample,
    scattering_source,
    second_time_derivative,
    updated_model,
)

from conftest import random_model, random_source, random_wavefield


def literal_operator_matrix(m: ModelGrid) -> np.ndarray:
    """Dense A(m) assembled entry by entry from the stencil definition.

    Space-time unknowns are ordered (node, time) -> node * nt + n with
    node = iz * nx + ix.  Out-of-grid Laplacian neighbours are zero
    (homogeneous Dirichlet ghosts).
    """
    spec = m.spec
    nx, nz, nt = spec.nx, spec.nz, spec.nt
    n_total = spec.n_space * nt
    A = np.zeros((n_total, n_total))

    def idx(node, n):
        return node * nt + n

    wx = 1.0 / spec.dx**2
    wz = 1.0 / spec.dz**2
    for iz in range(nz):
        for ix in range(nx):
            node = iz * nx + ix
            c = m.values[node] / spec.dt**2
            A[idx(node, 0), idx(node, 0)] = 1.0
            A[idx(node, 1), idx(node, 1)] = 1.0
            for n in range(2, nt):
                row = idx(node, n)
                A[row, idx(node, n)] += c
                A[row, idx(node, n - 1)] += -2.0 * c
                A[row, idx(node, n - 2)] += c
                # minus Laplacian at the lagged time level
                A[row, idx(node, n - 1)] += 2.0 * wx
                if ix > 0:
                    A[row, idx(node - 1, n - 1)] -= wx
                if ix < nx - 1:
                    A[row, idx(node + 1, n - 1)] -= wx
                if spec.ndim == 2:
                    A[row, idx(node, n - 1)] += 2.0 * wz
                    if iz > 0:
                        A[row, idx(node - nx, n - 1)] -= wz
                    if iz < nz - 1:
                        A[row, idx(node + nx, n - 1)] -= wz
    return A


@pytest.mark.parametrize("ndim", [1, 2])
def test_operator_matches_literal_stencil_table(ndim, rng):
    if ndim == 1:
        spec = GridSpec(ndim=1, nx=5, nz=1, dx=7.0, dz=7.0, nt=6, dt=0.002)
    else:
        spec = GridSpec(ndim=2, nx=4, nz=3, dx=7.0, dz=9.0, nt=5, dt=0.002)
    m = random_model(spec, rng)
    A = literal_operator_matrix(m)
    u = random_wavefield(spec, rng)
    got = apply_wave_operator(m, u).values.ravel()
    assert np.max(np.abs(got - A @ u.values.ravel())) < 1e-12 * max(1.0, np.abs(A).max())

    v = random_source(spec, rng)
    got_t = apply_wave_operator_transpose(m, v).values.ravel()
    assert np.max(np.abs(got_t - A.T @ v.values.ravel())) < 1e-12 * max(1.0, np.abs(A).max())


def test_manufactured_quadratic_in_time(spec1d, model1d):
    # u(x, t) = t^2 has exact discrete second difference 2 dt^2 / dt^2 = 2,
    # and zero Laplacian away from the boundary ghosts.
    t = spec1d.times()
    u = Wavefield(spec1d, np.tile(t**2, (spec1d.n_space, 1)))
    f = apply_wave_operator(model1d, u)
    interior = slice(1, spec1d.nx - 1)
    expected = 2.0 * model1d.values[interior]
    for n in range(2, spec1d.nt):
        assert np.allclose(f.values[interior, n], expected, rtol=1e-11)


def test_identity_rows_pass_through_initial_levels(spec1d, model1d, rng):
    u = random_wavefield(spec1d, rng)
    f = apply_wave_operator(model1d, u)
    assert np.array_equal(f.values[:, :2], u.values[:, :2])


def test_forward_solve_inverts_operator(spec1d, model1d, rng):
    b = random_source(spec1d, rng)
    u = forward_solve(model1d, b)
    back = apply_wave_operator(model1d, u)
    assert np.max(np.abs(back.values - b.values)) < 1e-9 * np.abs(b.values).max()


def test_adjoint_solve_inverts_transpose(spec1d, model1d, rng):
    r = random_source(spec1d, rng)
    v = adjoint_solve(model1d, r)
    back = apply_wave_operator_transpose(model1d, Wavefield(spec1d, v.values))
    assert np.max(np.abs(back.values - r.values)) < 1e-9 * np.abs(r.values).max()


@pytest.mark.parametrize("ndim", [1, 2])
def test_dot_tests_tight(ndim, rng):
    """<Au, v> == <u, A^T v> and <A^-1 b, r> == <b, A^-T r> to 1e-12."""
    if ndim == 1:
        spec = GridSpec(ndim=1, nx=15, nz=1, dx=10.0, dz=10.0, nt=48, dt=0.003)
    else:
        spec = GridSpec(ndim=2, nx=7, nz=5, dx=10.0, dz=10.0, nt=20, dt=0.002)
    m = random_model(spec, rng)
    u = random_wavefield(spec, rng)
    v = random_source(spec, rng)
    lhs = float(np.vdot(apply_wave_operator(m, u).values, v.values))
    rhs = float(np.vdot(u.values, apply_wave_operator_transpose(m, v).values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)

    b = random_source(spec, rng)
    r = random_source(spec, rng)
    lhs = float(np.vdot(forward_solve(m, b).values, r.values))
    rhs = float(np.vdot(b.values, adjoint_solve(m, r).values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)


def test_sampling_injection_adjoint_pair(spec1d, geom1d, rng):
    u = random_wavefield(spec1d, rng)
    d = sample(u, geom1d)
    probe = np.asarray(rng.standard_normal(d.values.shape))
    from lagfwi.grids import TraceData

    lhs = float(np.vdot(d.values, probe))
    injected = inject(TraceData(spec1d, geom1d, probe))
    rhs = float(np.vdot(u.values, injected.values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)


def test_laplacian_is_symmetric(spec2d, rng):
    u = random_wavefield(spec2d, rng)
    w = random_wavefield(spec2d, rng)
    lhs = float(np.vdot(laplacian(u).values, w.values))
    rhs = float(np.vdot(u.values, laplacian(w).values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


def test_frozen_forward_field(spec1d, model1d, ricker_source):
    u = forward_solve(model1d, ricker_source)
    assert u.values[7, 20] == pytest.approx(-95.86058135327849, rel=1e-13)
    assert u.values[7, 22] == pytest.approx(-120.8670610771004, rel=1e-13)
    assert u.norm() == pytest.approx(2753.0022510015806, rel=1e-13)


def test_second_time_derivative_on_quadratic(spec1d):
    t = spec1d.times()
    u = Wavefield(spec1d, np.tile(3.0 * t**2, (spec1d.n_space, 1)))
    ddu = second_time_derivative(u)
    assert np.allclose(ddu.values, 6.0, rtol=1e-10)


def test_curvature_rows_align_with_operator(spec1d, model1d, rng):
    """d(A(m)u)/dm must be row aligned: zero at the identity rows, lagged
    second difference at the stencil rows."""
    u = random_wavefield(spec1d, rng)
    ddu = operator_time_curvature(u)
    assert np.array_equal(ddu[:, :2], np.zeros((spec1d.n_space, 2)))

    dm = 1e-7 * rng.standard_normal(spec1d.n_space)
    m2 = ModelGrid(spec1d, model1d.values + dm)
    diff = apply_wave_operator(m2, u).values - apply_wave_operator(model1d, u).values
    assert np.max(np.abs(diff - dm[:, None] * ddu)) < 1e-12 * np.abs(diff).max()


def test_splitting_identity_exact(spec1d, model1d, rng):
    """A(m + dm) u - A(m) u + phi(u, dm) = 0, exactly, for finite dm."""
    u = random_wavefield(spec1d, rng)
    dm = model1d.values * rng.uniform(-0.5, 0.5, spec1d.n_space)
    m2 = ModelGrid(spec1d, model1d.values + dm)
    phi = scattering_source(u, dm)
    resid = (
        apply_wave_operator(m2, u).values
        - apply_wave_operator(model1d, u).values
        + phi.values
    )
    scale = max(np.abs(phi.values).max(), 1.0)
    assert np.max(np.abs(resid)) <= 1e-12 * scale


def test_scattering_source_is_minus_dm_times_curvature(spec1d, rng):
    u = random_wavefield(spec1d, rng)
    dm = rng.standard_normal(spec1d.n_space)
    phi = scattering_source(u, dm)
    assert np.array_equal(phi.values, -dm[:, None] * operator_time_curvature(u))


def test_correlation_terms_against_direct_sums(spec1d, rng):
    v = random_wavefield(spec1d, rng)
    u = random_wavefield(spec1d, rng)
    num, den = correlation_terms(v, u)
    ddu = operator_time_curvature(u)
    num_direct = np.array(
        [sum(v.values[j, n] * ddu[j, n] for n in range(spec1d.nt)) for j in range(spec1d.n_space)]
    )
    den_direct = np.array(
        [sum(ddu[j, n] ** 2 for n in range(spec1d.nt)) for j in range(spec1d.n_space)]
    )
    assert np.allclose(num, num_direct, rtol=1e-12)
    assert np.allclose(den, den_direct, rtol=1e-12)


def test_preconditioned_ratio_floors_weak_nodes():
    num = np.array([2.0, 4.0, 6.0, 1.0])
    den = np.array([1.0, 2.0, 3.0, 1e-12])
    ratio = preconditioned_ratio(num, den)
    assert ratio[:3] == pytest.approx([2.0, 2.0, 2.0])
    # denominator below 1e-10 * max(den) leaves the node untouched
    assert den[3] < DENOMINATOR_FLOOR_REL * den.max()
    assert ratio[3] == 0.0


def test_updated_model_guards(spec1d, model1d):
    with pytest.raises(DivergenceError):
        updated_model(model1d, 1.0, np.full(spec1d.n_space, np.inf))
    with pytest.raises(DivergenceError):
        # stepping past zero squared slowness is a divergence, not a model
        updated_model(model1d, 1.0, np.full(spec1d.n_space, model1d.values.max()))


def test_structural_multiplier_inverts_update(spec1d, model1d, rng):
    """A multiplier of the exact scattered form v = -dm * ddu makes the
    unit-step correlation update recover m + dm on every active node."""
    u = forward_solve(model1d, random_source(spec1d, rng))
    dm = 1e-8 * rng.standard_normal(spec1d.n_space)
    ddu = operator_time_curvature(u)
    v = Wavefield(spec1d, -dm[:, None] * ddu)
    m_new = model_update_correlation(v, u, 1.0, model1d)
    active = np.sum(ddu**2, axis=1) > DENOMINATOR_FLOOR_REL * np.sum(ddu**2, axis=1).max()
    assert np.allclose(m_new.values[active], model1d.values[active] + dm[active], rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    nx=st.integers(min_value=3, max_value=9),
    nt=st.integers(min_value=3, max_value=12),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_dot_test_property(nx, nt, seed):
    spec = GridSpec(ndim=1, nx=nx, nz=1, dx=5.0, dz=5.0, nt=nt, dt=0.001)
    gen = np.random.default_rng(seed)
    m = random_model(spec, gen)
    u = random_wavefield(spec, gen)
    v = random_source(spec, gen)
    lhs = float(np.vdot(apply_wave_operator(m, u).values, v.values))
    rhs = float(np.vdot(u.values, apply_wave_operator_transpose(m, v).values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_operator_is_linear_in_field(seed):
    spec = GridSpec(ndim=1, nx=15, nz=1, dx=10.0, dz=10.0, nt=48, dt=0.003)
    gen = np.random.default_rng(seed)
    m = build_model(spec, 2000.0)
    u = random_wavefield(spec, gen)
    w = random_wavefield(spec, gen)
    a, b = gen.standard_normal(2)
    combo = Wavefield(spec, a * u.values + b * w.values)
    left = apply_wave_operator(m, combo).values
    right = a * apply_wave_operator(m, u).values + b * apply_wave_operator(m, w).values
    assert np.allclose(left, right, rtol=1e-12, atol=1e-9)
