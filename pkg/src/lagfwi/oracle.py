"""Dense brute-force references for tiny grids.

Everything here materializes operators as explicit matrices and leans on
LAPACK factorizations, so it is only usable on very small problems (the
size guard enforces that). The dense operator is assembled entry by entry
from the stencil definition, deliberately not sharing code with the
vectorized sweeps in wavecore, so the two paths cross-validate each other.

Space-time vectors are flattened with ``index = node * nt + n`` (time
fastest), matching ``values.ravel()`` of the field containers; receiver
vectors use ``index = receiver * nt + n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import OracleSizeError, SingularSystemError
from .grids import AcquisitionGeometry, GridSpec, ModelGrid, SourceField, TraceData, Wavefield
from .wavecore import operator_time_curvature, scattering_source, _forward_sweep

__all__ = [
    "SIZE_GUARD",
    "DenseOperator",
    "BornKernel",
    "assemble_dense_operator",
    "dense_laplacian",
    "dense_sampling_operator",
    "dense_saddle_solve",
    "dense_multiplier_source_space",
    "dense_multiplier_data_space",
    "assemble_born_kernel",
    "damped_ls_solve",
    "fd_gradient",
    "quadratic_model_minimizer",
]

SIZE_GUARD = 20000


def _guard(spec: GridSpec) -> int:
    n = spec.n_space * spec.nt
    if n > SIZE_GUARD:
        raise OracleSizeError(
            f"dense reference requested for {n} unknowns, guard is {SIZE_GUARD}"
        )
    return n


def dense_laplacian(spec: GridSpec) -> np.ndarray:
    """Dense zero-Dirichlet Laplacian on the flattened spatial nodes."""
    ns = spec.n_space
    lap = np.zeros((ns, ns))
    wx = 1.0 / spec.dx**2
    wz = 1.0 / spec.dz**2
    for iz in range(spec.nz):
        for ix in range(spec.nx):
            row = iz * spec.nx + ix
            lap[row, row] -= 2.0 * wx
            if ix > 0:
                lap[row, row - 1] += wx
            if ix < spec.nx - 1:
                lap[row, row + 1] += wx
            if spec.ndim == 2:
                lap[row, row] -= 2.0 * wz
                if iz > 0:
                    lap[row, row - spec.nx] += wz
                if iz < spec.nz - 1:
                    lap[row, row + spec.nx] += wz
    return lap


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Explicit N x N wave operator with helpers for dense solves."""

    spec: GridSpec
    matrix: np.ndarray

    def apply(self, u: Wavefield) -> SourceField:
        vec = self.matrix @ u.values.ravel()
        return SourceField(self.spec, vec.reshape(self.spec.shape))

    def solve(self, b: SourceField) -> Wavefield:
        vec = np.linalg.solve(self.matrix, b.values.ravel())
        return Wavefield(self.spec, vec.reshape(self.spec.shape))

    def solve_transpose(self, r: SourceField) -> Wavefield:
        vec = np.linalg.solve(self.matrix.T, r.values.ravel())
        return Wavefield(self.spec, vec.reshape(self.spec.shape))


def assemble_dense_operator(m: ModelGrid) -> DenseOperator:
    """Build A(m) explicitly from the stencil definition."""
    spec = m.spec
    n = _guard(spec)
    nt = spec.nt
    ns = spec.n_space
    lap = dense_laplacian(spec)
    a = np.zeros((n, n))
    nodes = np.arange(ns)
    for node in nodes:
        for tl in (0, 1):
            a[node * nt + tl, node * nt + tl] = 1.0
    c = m.values / spec.dt**2
    for tl in range(2, nt):
        rows = nodes * nt + tl
        a[rows, rows] += c
        a[rows, nodes * nt + tl - 1] += -2.0 * c
        a[rows, nodes * nt + tl - 2] += c
        # minus the Laplacian acting on time level tl - 1
        a[np.ix_(rows, nodes * nt + tl - 1)] -= lap
    return DenseOperator(spec, a)


def dense_sampling_operator(spec: GridSpec, geometry: AcquisitionGeometry) -> np.ndarray:
    """Dense M x N receiver restriction matrix P."""
    geometry.validate_for(spec)
    nt = spec.nt
    m_rows = geometry.n_receivers * nt
    p = np.zeros((m_rows, spec.n_space * nt))
    for r, node in enumerate(geometry.receiver_nodes):
        for tl in range(nt):
            p[r * nt + tl, node * nt + tl] = 1.0
    return p


def dense_saddle_solve(
    m: ModelGrid,
    b: SourceField,
    d: TraceData,
    mu: float,
    w: SourceField | None = None,
) -> tuple[Wavefield, Wavefield]:
    """Solve the coupled 2N x 2N penalty saddle system directly.

    The block system is [[A, -I/mu], [P^T P, A^T]] (u, v) = (b - w/mu, P^T d),
    where the w term appears only in the proximally regularized variant.
    """
    spec = m.spec
    n = _guard(spec)
    if mu <= 0:
        raise ValueError("mu must be positive")
    a = assemble_dense_operator(m).matrix
    p = dense_sampling_operator(spec, d.geometry)
    k = np.zeros((2 * n, 2 * n))
    k[:n, :n] = a
    k[:n, n:] = -np.eye(n) / mu
    k[n:, :n] = p.T @ p
    k[n:, n:] = a.T
    rhs = np.concatenate([b.values.ravel(), p.T @ d.values.ravel()])
    if w is not None:
        rhs[:n] -= w.values.ravel() / mu
    try:
        sol = np.linalg.solve(k, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"saddle system is singular: {exc}") from exc
    u = Wavefield(spec, sol[:n].reshape(spec.shape))
    v = Wavefield(spec, sol[n:].reshape(spec.shape))
    return u, v


def _dense_residual_pieces(m: ModelGrid, b: SourceField, d: TraceData):
    a = assemble_dense_operator(m).matrix
    p = dense_sampling_operator(m.spec, d.geometry)
    u0 = np.linalg.solve(a, b.values.ravel())
    delta_d = d.values.ravel() - p @ u0
    return a, p, delta_d


def dense_multiplier_source_space(
    m: ModelGrid, b: SourceField, d: TraceData, mu: float
) -> Wavefield:
    """Penalty multiplier via the N x N source-space normal matrix.

    v = (I + (1/mu) A^-T P^T P A^-1)^-1 A^-T P^T (d - P A^-1 b).
    """
    a, p, delta_d = _dense_residual_pieces(m, b, d)
    x = np.linalg.solve(a.T, p.T)  # A^-T P^T, one column per receiver sample
    n = a.shape[0]
    lhs = np.eye(n) + (x @ x.T) / mu
    v = np.linalg.solve(lhs, x @ delta_d)
    return Wavefield(m.spec, v.reshape(m.spec.shape))


def dense_multiplier_data_space(
    m: ModelGrid, b: SourceField, d: TraceData, mu: float
) -> Wavefield:
    """Penalty multiplier via the M x M data-space matrix.

    v = A^-T P^T (I + (1/mu) P A^-1 A^-T P^T)^-1 (d - P A^-1 b).

    Equal to the source-space formula for every mu > 0 (push-through
    identity); the pair gives a two-sided oracle for the reduced solves.
    """
    a, p, delta_d = _dense_residual_pieces(m, b, d)
    x = np.linalg.solve(a.T, p.T)
    m_rows = p.shape[0]
    lhs = np.eye(m_rows) + (x.T @ x) / mu
    v = x @ np.linalg.solve(lhs, delta_d)
    return Wavefield(m.spec, v.reshape(m.spec.shape))


@dataclass(frozen=True, eq=False)
class BornKernel:
    """Dense single-scattering map from model perturbations to traces."""

    spec: GridSpec
    geometry: AcquisitionGeometry
    matrix: np.ndarray  # (n_receivers * nt, n_space)


def assemble_born_kernel(
    m: ModelGrid, u: Wavefield, geometry: AcquisitionGeometry
) -> BornKernel:
    """Columns are P A(m)^-1 scattering_source(u, e_node) for each node.

    By bilinearity, BornKernel @ dm equals sampling the forward solve of
    scattering_source(u, dm) for any perturbation dm.
    """
    spec = m.spec
    _guard(spec)
    geometry.validate_for(spec)
    ddu = operator_time_curvature(u)
    ns = spec.n_space
    # one scattering source per node, batched over the trailing axis
    rhs = np.zeros((ns, spec.nt, ns))
    for node in range(ns):
        rhs[node, :, node] = -ddu[node]
    fields = _forward_sweep(spec, m.values, rhs)
    traces = fields[list(geometry.receiver_nodes)]  # (n_rec, nt, ns)
    matrix = traces.reshape(geometry.n_receivers * spec.nt, ns)
    return BornKernel(spec, geometry, matrix.copy())


def damped_ls_solve(matrix: np.ndarray, rhs: np.ndarray, damping: float) -> np.ndarray:
    """Solve min_x ||K x - rhs||^2 + damping ||x||^2 densely.

    damping > 0 goes through a Cholesky solve of the regularized normal
    equations; damping = 0 falls back to the minimum-norm least-squares
    solution so row-orthonormal kernels reproduce K^T rhs exactly.
    """
    if damping < 0:
        raise ValueError("damping must be non-negative")
    k = np.asarray(matrix, dtype=float)
    r = np.asarray(rhs, dtype=float).ravel()
    if k.shape[0] != r.shape[0]:
        raise ValueError("matrix and rhs row counts differ")
    if damping == 0.0:
        x, _, rank, _ = np.linalg.lstsq(k, r, rcond=None)
        if rank < min(k.shape):
            # minimum-norm solution of a rank-deficient problem; still valid
            pass
        return x
    normal = k.T @ k + damping * np.eye(k.shape[1])
    try:
        cho = scipy.linalg.cho_factor(normal)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystemError(str(exc)) from exc
    return scipy.linalg.cho_solve(cho, k.T @ r)


def _misfit(m: ModelGrid, sources, data) -> float:
    # plain forward modelling, kept free of wavecore's typed wrappers
    total = 0.0
    for b, d in zip(sources, data):
        u = _forward_sweep(m.spec, m.values, b.values)
        resid = u[list(d.geometry.receiver_nodes), :] - d.values
        total += 0.5 * float(np.sum(resid * resid))
    return total


def fd_gradient(m: ModelGrid, sources, data, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the reduced data misfit, node by node.

    ``h`` is a relative step: node x is probed at m(x) * (1 +/- h). The
    misfit is exactly the objective whose adjoint-state gradient the
    iteration schemes compute, which makes this the reference for gradient
    verification.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    sources = list(sources)
    data = list(data)
    grad = np.zeros(m.spec.n_space)
    base = m.values
    for node in range(m.spec.n_space):
        step = h * base[node]
        plus = base.copy()
        plus[node] += step
        minus = base.copy()
        minus[node] -= step
        f_plus = _misfit(ModelGrid(m.spec, plus), sources, data)
        f_minus = _misfit(ModelGrid(m.spec, minus), sources, data)
        grad[node] = (f_plus - f_minus) / (2.0 * step)
    return grad


def quadratic_model_minimizer(
    u: Wavefield,
    b: SourceField,
    m: ModelGrid,
    mu: float = 1.0,
    w: SourceField | None = None,
    rel_probe: float = 0.1,
) -> np.ndarray:
    """Per-node minimizer of mu/2 ||A(m') u - b||^2 + <w, A(m') u - b>.

    The objective separates over nodes and is exactly quadratic in each
    m'(x), so probing it at three model values and taking the vertex of the
    fitted parabola gives the exact alternating-minimization model update
    of the wavefield-reconstruction family, independent of any correlation
    formula. Nodes with zero curvature keep their current value.
    """
    from .wavecore import apply_wave_operator  # local import to avoid cycles

    spec = m.spec

    def node_objectives(values: np.ndarray) -> np.ndarray:
        r = apply_wave_operator(ModelGrid(spec, values), u).values - b.values
        per_node = 0.5 * mu * np.sum(r * r, axis=1)
        if w is not None:
            per_node += np.sum(w.values * r, axis=1)
        return per_node

    delta = rel_probe * m.values
    f_minus = node_objectives(m.values - delta)
    f_mid = node_objectives(m.values)
    f_plus = node_objectives(m.values + delta)
    curvature = f_minus - 2.0 * f_mid + f_plus
    out = m.values.copy()
    ok = curvature > 0.0
    out[ok] = m.values[ok] + 0.5 * delta[ok] * (f_minus[ok] - f_plus[ok]) / curvature[ok]
    return out
