"""Inversion iterations: one family of schemes around a single saddle point.

Every scheme in this module alternates between (a) estimating a wavefield u
and a multiplier-like field for each source and (b) applying the same
preconditioned correlation update to the model.  They differ only in which
linear system produces the fields and in which running quantities (Lagrange
multiplier w, scattering estimate lam, accumulated constraint error eps)
survive from one iteration to the next.

Scheme registry (name -> step semantics):

  fwi                 classic reduced-space gradient descent: u solves the
                      wave equation, v back-propagates the data residual.
  penalty-wavefield   u from the data-augmented normal equations, v = mu*(Au-b).
  penalty-multiplier  v from the damped trace system, u = A^-1(b + v/mu).
  wri-scaled          like penalty-multiplier but iterates the scaled
                      multiplier lam = v/mu with a unit model step.
  al-wavefield        augmented-Lagrangian flavour of penalty-wavefield: a
                      running multiplier w shifts the source and accumulates
                      mu*(Au-b) after each model update.
  al-multiplier       augmented-Lagrangian flavour of penalty-multiplier.
  gauss-newton        damped least-squares on the assembled Born kernel.
  gauss-seidel        gauss-newton with the background field refreshed by the
                      previous model increment before linearizing.
  split-gn            Born step split through the data-space system: solve for
                      the scattering source lam, correlate, unit step.
  split-gs            split-gn followed by a wavefield refresh u = A^-1(b+lam).
  refined-direct      multiplier increment equation assembled term by term.
  refined-rearranged  same iterates, right-hand side collected before solving.
  refined-epsilon     same iterates, bookkeeping through the accumulated
                      constraint error eps instead of (lam_prev, u_prev).

The penalty/al multiplier orientations and the split/refined family all call
into saddle.damped_trace_multiplier, so their agreement is structural, not a
numerical accident; tests pin the correspondences (split-gs tracks
penalty-multiplier, refined-epsilon tracks al-multiplier, the three refined
variants track each other) to round-off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig, build_acquisition, build_model_values, build_sources
from .errors import ConfigurationError, DivergenceError
from .grids import GridSpec, ModelGrid, SourceField, TraceData, Wavefield
from .oracle import assemble_born_kernel, damped_ls_solve
from .saddle import (
    HessianCache,
    PenaltyConfig,
    companion_wavefield,
    damped_trace_multiplier,
    solve_augmented_wavefield,
    solve_ls_multiplier,
)
from .wavecore import (
    apply_wave_operator,
    adjoint_solve,
    correlation_terms,
    forward_solve,
    inject,
    preconditioned_ratio,
    sample,
    scattering_source,
    updated_model,
)

SCHEMES = (
    "fwi",
    "penalty-wavefield",
    "penalty-multiplier",
    "wri-scaled",
    "al-wavefield",
    "al-multiplier",
    "gauss-newton",
    "gauss-seidel",
    "split-gn",
    "split-gs",
    "refined-direct",
    "refined-rearranged",
    "refined-epsilon",
)

UPDATE_MODES = ("sum-terms", "sum-updates")


@dataclass(frozen=True, eq=False)
class IterationState:
    """Everything a scheme carries between iterations.

    Per-source tuples all have one entry per source.  Fields a scheme does
    not use stay identically zero, so states can be handed between schemes
    (and logged) without special cases.
    """

    model: ModelGrid
    model_prev: ModelGrid
    wavefields: tuple[Wavefield, ...]
    multipliers: tuple[Wavefield, ...]          # v, the unscaled multiplier
    running_multipliers: tuple[SourceField, ...]  # w, augmented-Lagrangian memory
    scatter_sources: tuple[SourceField, ...]      # lam, scaled multiplier / Born source
    scatter_errors: tuple[SourceField, ...]       # eps, accumulated constraint error
    iteration: int = 0


def _zero_field(spec: GridSpec) -> Wavefield:
    return Wavefield(spec, np.zeros(spec.shape))


def _zero_source(spec: GridSpec) -> SourceField:
    return SourceField(spec, np.zeros(spec.shape))


def initial_state(model: ModelGrid, n_sources: int) -> IterationState:
    spec = model.spec
    zf = tuple(_zero_field(spec) for _ in range(n_sources))
    zs = tuple(_zero_source(spec) for _ in range(n_sources))
    return IterationState(
        model=model,
        model_prev=model,
        wavefields=zf,
        multipliers=zf,
        running_multipliers=zs,
        scatter_sources=zs,
        scatter_errors=zs,
        iteration=0,
    )


def _advance(
    state: IterationState,
    model: ModelGrid,
    *,
    wavefields=None,
    multipliers=None,
    running_multipliers=None,
    scatter_sources=None,
    scatter_errors=None,
) -> IterationState:
    """Build the next state, zeroing every per-source slot left unset."""
    spec = model.spec
    n = len(state.wavefields)
    zf = tuple(_zero_field(spec) for _ in range(n))
    zs = tuple(_zero_source(spec) for _ in range(n))
    return IterationState(
        model=model,
        model_prev=state.model,
        wavefields=tuple(wavefields) if wavefields is not None else zf,
        multipliers=tuple(multipliers) if multipliers is not None else zf,
        running_multipliers=tuple(running_multipliers) if running_multipliers is not None else zs,
        scatter_sources=tuple(scatter_sources) if scatter_sources is not None else zs,
        scatter_errors=tuple(scatter_errors) if scatter_errors is not None else zs,
        iteration=state.iteration + 1,
    )


def combined_model_update(
    m: ModelGrid,
    pairs,
    alpha: float,
    update_mode: str = "sum-terms",
) -> ModelGrid:
    """Multi-source correlation update.

    pairs is a sequence of (multiplier-like field, wavefield).  In
    "sum-terms" mode the per-node numerators and denominators are each summed
    over sources before the floored division; in "sum-updates" the floored
    per-source ratios are summed instead.  The two agree for a single source
    and differ (slightly) for several, so both are kept behind one switch.
    """
    if update_mode not in UPDATE_MODES:
        raise ConfigurationError(f"unknown update_mode {update_mode!r}")
    if update_mode == "sum-terms":
        numerator = np.zeros(m.spec.n_space)
        denominator = np.zeros(m.spec.n_space)
        for v_like, u in pairs:
            num, den = correlation_terms(v_like, u)
            numerator += num
            denominator += den
        update = preconditioned_ratio(numerator, denominator)
    else:
        update = np.zeros(m.spec.n_space)
        for v_like, u in pairs:
            num, den = correlation_terms(v_like, u)
            update += preconditioned_ratio(num, den)
    return updated_model(m, alpha, update)


def _as_wavefield(spec: GridSpec, values: np.ndarray) -> Wavefield:
    return Wavefield(spec, values)


def _residual_traces(data: TraceData, u: Wavefield) -> TraceData:
    predicted = sample(u, data.geometry)
    return TraceData(data.spec, data.geometry, data.values - predicted.values)


# ---------------------------------------------------------------------------
# scheme steps
# ---------------------------------------------------------------------------


def standard_fwi_step(
    state: IterationState,
    sources,
    data,
    alpha: float,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Reduced-space gradient step: adjoint field against the data residual."""
    m = state.model
    us, vs, pairs = [], [], []
    for b, d in zip(sources, data):
        u = forward_solve(m, b)
        v = adjoint_solve(m, inject(_residual_traces(d, u)))
        us.append(u)
        vs.append(v)
        pairs.append((v, u))
    m_new = combined_model_update(m, pairs, alpha, update_mode)
    return _advance(state, m_new, wavefields=us, multipliers=vs)


def penalty_step(
    state: IterationState,
    sources,
    data,
    cfg: PenaltyConfig,
    orientation: str = "multiplier",
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """One penalty iteration in either saddle orientation.

    Both orientations solve the same KKT system; "wavefield" eliminates v and
    runs CG on the data-augmented normal equations, "multiplier" eliminates u
    through the damped trace system.  v = mu*(A u - b) in exact arithmetic
    either way.
    """
    if orientation not in ("wavefield", "multiplier"):
        raise ConfigurationError(f"unknown penalty orientation {orientation!r}")
    m = state.model
    us, vs, pairs = [], [], []
    for b, d in zip(sources, data):
        if orientation == "wavefield":
            u, _ = solve_augmented_wavefield(m, b, d, cfg)
            v = _as_wavefield(m.spec, cfg.mu * (apply_wave_operator(m, u).values - b.values))
        else:
            v = solve_ls_multiplier(m, b, d, cfg, cache=cache)
            u = companion_wavefield(m, b, v, cfg)
        us.append(u)
        vs.append(v)
        pairs.append((v, u))
    m_new = combined_model_update(m, pairs, cfg.step_length, update_mode)
    return _advance(state, m_new, wavefields=us, multipliers=vs)


def wri_scaled_step(
    state: IterationState,
    sources,
    data,
    cfg: PenaltyConfig,
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Penalty iteration in the scaled multiplier lam = v/mu, unit model step.

    lam solves the damped data-space system directly against the residual of
    the plain forward field, the wavefield is refreshed as A^-1(b + lam), and
    the model update uses step length 1 (the 1/mu of the penalty scheme is
    absorbed into lam).
    """
    m = state.model
    us, lams, pairs = [], [], []
    for b, d in zip(sources, data):
        u0 = forward_solve(m, b)
        lam = damped_trace_multiplier(
            m, d.geometry, _residual_traces(d, u0).values, cfg.mu, cache=cache
        )
        u = forward_solve(m, SourceField(m.spec, b.values + lam.values))
        us.append(u)
        lams.append(SourceField(m.spec, lam.values))
        pairs.append((lam, u))
    m_new = combined_model_update(m, pairs, 1.0, update_mode)
    return _advance(state, m_new, wavefields=us, scatter_sources=lams)


def al_step(
    state: IterationState,
    sources,
    data,
    cfg: PenaltyConfig,
    orientation: str = "multiplier",
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Augmented-Lagrangian iteration (method of multipliers).

    Identical to penalty_step except the running multiplier w shifts the
    source term, and after the model update w accumulates the constraint
    residual mu*(A(m_new) u - b) evaluated at the *updated* model.
    """
    if orientation not in ("wavefield", "multiplier"):
        raise ConfigurationError(f"unknown al orientation {orientation!r}")
    m = state.model
    us, vs, pairs = [], [], []
    for b, d, w in zip(sources, data, state.running_multipliers):
        if orientation == "wavefield":
            u, _ = solve_augmented_wavefield(m, b, d, cfg, w=w)
            v = _as_wavefield(
                m.spec, w.values + cfg.mu * (apply_wave_operator(m, u).values - b.values)
            )
        else:
            v = solve_ls_multiplier(m, b, d, cfg, mode="al", w=w, cache=cache)
            u = companion_wavefield(m, b, v, cfg, mode="al", w=w)
        us.append(u)
        vs.append(v)
        pairs.append((v, u))
    m_new = combined_model_update(m, pairs, cfg.step_length, update_mode)
    ws_new = [
        SourceField(
            m.spec,
            w.values + cfg.mu * (apply_wave_operator(m_new, u).values - b.values),
        )
        for b, u, w in zip(sources, us, state.running_multipliers)
    ]
    return _advance(
        state, m_new, wavefields=us, multipliers=vs, running_multipliers=ws_new
    )


def gauss_newton_step(
    state: IterationState,
    sources,
    data,
    damping: float,
) -> IterationState:
    """Damped Gauss-Newton on the assembled Born kernel.

    Stacks the per-source kernels and residuals into one damped least-squares
    problem for the model increment.  Dense kernel assembly, so only sensible
    at workbench scale.
    """
    m = state.model
    us = []
    blocks, rhs = [], []
    for b, d in zip(sources, data):
        u = forward_solve(m, b)
        us.append(u)
        blocks.append(assemble_born_kernel(m, u, d.geometry).matrix)
        rhs.append(_residual_traces(d, u).values.ravel())
    dm = damped_ls_solve(np.vstack(blocks), np.concatenate(rhs), damping)
    m_new = updated_model(m, -1.0, dm)
    return _advance(state, m_new, wavefields=us)


def gauss_seidel_step(
    state: IterationState,
    sources,
    data,
    damping: float,
) -> IterationState:
    """Gauss-Newton with the linearization field refreshed before the solve.

    The background field for the Born kernel is re-solved with the previous
    model increment injected as a scattering source, so the kernel already
    "feels" the last update.  On the first iteration (zero increment) this
    coincides with gauss_newton_step.
    """
    m = state.model
    dm_prev = m.values - state.model_prev.values
    us = []
    blocks, rhs = [], []
    for b, d, u_prev in zip(sources, data, state.wavefields):
        u_lin = forward_solve(
            m,
            SourceField(m.spec, b.values + scattering_source(u_prev, dm_prev).values),
        )
        u0 = forward_solve(m, b)
        us.append(u_lin)
        blocks.append(assemble_born_kernel(m, u_lin, d.geometry).matrix)
        rhs.append(_residual_traces(d, u0).values.ravel())
    dm = damped_ls_solve(np.vstack(blocks), np.concatenate(rhs), damping)
    m_new = updated_model(m, -1.0, dm)
    return _advance(state, m_new, wavefields=us)


def split_gn_step(
    state: IterationState,
    sources,
    data,
    damping: float,
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Born step split through the data-space system.

    Instead of assembling the Born kernel, solve the damped system for the
    scattering source lam that explains the residual, then correlate lam
    against the background field with a unit step.  The wavefield carried to
    the next iteration is the plain background field.
    """
    m = state.model
    us, lams, pairs = [], [], []
    for b, d in zip(sources, data):
        u0 = forward_solve(m, b)
        lam = damped_trace_multiplier(
            m, d.geometry, _residual_traces(d, u0).values, damping, cache=cache
        )
        us.append(u0)
        lams.append(SourceField(m.spec, lam.values))
        pairs.append((lam, u0))
    m_new = combined_model_update(m, pairs, 1.0, update_mode)
    return _advance(state, m_new, wavefields=us, scatter_sources=lams)


def split_gs_step(
    state: IterationState,
    sources,
    data,
    damping: float,
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """split_gn_step plus an immediate wavefield refresh u = A^-1(b + lam).

    The refreshed field both enters the correlation update and is carried to
    the next iteration, which makes this scheme iterate-for-iterate identical
    to penalty-multiplier with lam = v/mu and step 1 vs 1/mu.
    """
    m = state.model
    us, lams, pairs = [], [], []
    for b, d in zip(sources, data):
        u0 = forward_solve(m, b)
        lam = damped_trace_multiplier(
            m, d.geometry, _residual_traces(d, u0).values, damping, cache=cache
        )
        u = forward_solve(m, SourceField(m.spec, b.values + lam.values))
        us.append(u)
        lams.append(SourceField(m.spec, lam.values))
        pairs.append((lam, u))
    m_new = combined_model_update(m, pairs, 1.0, update_mode)
    return _advance(state, m_new, wavefields=us, scatter_sources=lams)


def refined_step(
    state: IterationState,
    sources,
    data,
    damping: float,
    variant: str = "direct",
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Refined scattering iteration, three algebraically equal assemblies.

    All variants damp the *updated* multiplier, not the bare increment; that
    choice is what keeps their iterates identical.

      direct      solve for the increment dlam from the linearized data
                  equation S dlam = delta_d - S phi, with the damping centred
                  on lam_prev + dlam; phi = scattering_source(u_prev, m - m_prev).
      rearranged  collect the right-hand side delta_d + S(lam_prev - phi)
                  first, solve once for the full lam.
      epsilon     track eps = accumulated constraint error instead of
                  (lam_prev, phi); rhs is delta_d + S eps and the wavefield
                  refresh subtracts eps.  eps then absorbs A(m_new) u - b,
                  which also makes this variant match al-multiplier with
                  lam = v/mu and eps = w/mu.
    """
    if variant not in ("direct", "rearranged", "epsilon"):
        raise ConfigurationError(f"unknown refined variant {variant!r}")
    m = state.model
    spec = m.spec
    dm_prev = m.values - state.model_prev.values
    us, lams, pairs = [], [], []
    eps_in = state.scatter_errors
    for b, d, u_prev, lam_prev, eps in zip(
        sources, data, state.wavefields, state.scatter_sources, eps_in
    ):
        u0 = forward_solve(m, b)
        delta_d = _residual_traces(d, u0).values
        if variant == "direct":
            phi = scattering_source(u_prev, dm_prev)
            s_phi = sample(forward_solve(m, phi), d.geometry).values
            s_lam = sample(forward_solve(m, lam_prev), d.geometry).values
            increment_rhs = delta_d - s_phi
            dlam = (
                damped_trace_multiplier(
                    m, d.geometry, increment_rhs + s_lam, damping, cache=cache
                ).values
                - lam_prev.values
            )
            lam = SourceField(spec, lam_prev.values + dlam)
            u = forward_solve(
                m,
                SourceField(spec, b.values + phi.values + lam.values - lam_prev.values),
            )
        elif variant == "rearranged":
            phi = scattering_source(u_prev, dm_prev)
            shift = SourceField(spec, lam_prev.values - phi.values)
            rhs = delta_d + sample(forward_solve(m, shift), d.geometry).values
            lam = SourceField(
                spec, damped_trace_multiplier(m, d.geometry, rhs, damping, cache=cache).values
            )
            u = forward_solve(
                m,
                SourceField(spec, b.values + lam.values + phi.values - lam_prev.values),
            )
        else:
            rhs = delta_d + sample(forward_solve(m, eps), d.geometry).values
            lam = SourceField(
                spec, damped_trace_multiplier(m, d.geometry, rhs, damping, cache=cache).values
            )
            u = forward_solve(m, SourceField(spec, b.values + lam.values - eps.values))
        us.append(u)
        lams.append(lam)
        pairs.append((Wavefield(spec, lam.values), u))
    m_new = combined_model_update(m, pairs, 1.0, update_mode)
    if variant == "epsilon":
        eps_new = [
            SourceField(spec, eps.values + apply_wave_operator(m_new, u).values - b.values)
            for b, u, eps in zip(sources, us, eps_in)
        ]
    else:
        eps_new = None
    return _advance(
        state,
        m_new,
        wavefields=us,
        scatter_sources=lams,
        scatter_errors=eps_new,
    )


def reduced_objective_and_gradient(m: ModelGrid, sources, data):
    """Reduced-space data misfit and its exact discrete gradient.

    Returns (0.5 * sum_s ||P u_s - d_s||^2, per-node gradient).  The gradient
    is the adjoint-state correlation <v_s, ddu_s>_t summed over sources with
    v_s back-propagating (d_s - P u_s); it matches brute-force finite
    differences of the misfit because the correlation uses the same lagged
    curvature that the operator derivative d(Au)/dm produces.
    """
    misfit = 0.0
    gradient = np.zeros(m.spec.n_space)
    for b, d in zip(sources, data):
        u = forward_solve(m, b)
        residual = _residual_traces(d, u)
        misfit += 0.5 * float(np.sum(residual.values**2))
        v = adjoint_solve(m, inject(residual))
        num, _ = correlation_terms(v, u)
        gradient += num
    return misfit, gradient


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostics:
    """One row of the convergence log.

    model_error is relative (||m - m_true|| / ||m_true||), NaN when no true
    model is available.  seconds is wall time for the iteration and is
    excluded from any determinism or regression comparison.
    """

    iteration: int
    misfit: float
    constraint: float
    model_error: float
    v_norm: float
    w_norm: float
    seconds: float

    def as_row(self) -> tuple:
        return (
            self.iteration,
            self.misfit,
            self.constraint,
            self.model_error,
            self.v_norm,
            self.w_norm,
            self.seconds,
        )


DIAGNOSTIC_FIELDS = (
    "iter",
    "misfit",
    "constraint",
    "model_error",
    "v_norm",
    "w_norm",
    "seconds",
)


@dataclass(frozen=True)
class InversionResult:
    model: ModelGrid
    history: tuple[Diagnostics, ...]
    status: str
    state: IterationState | None = None


def _norm_sq(fields) -> float:
    return float(sum(np.sum(f.values**2) for f in fields))


def _diagnostics(
    state: IterationState,
    sources,
    data,
    true_model: ModelGrid | None,
    seconds: float,
) -> Diagnostics:
    m = state.model
    misfit = 0.0
    constraint = 0.0
    for b, d, u in zip(sources, data, state.wavefields):
        misfit += 0.5 * float(np.sum(_residual_traces(d, u).values ** 2))
        constraint += float(
            np.sum((apply_wave_operator(m, u).values - b.values) ** 2)
        )
    if true_model is None:
        model_error = float("nan")
    else:
        denom = float(np.linalg.norm(true_model.values))
        model_error = float(np.linalg.norm(m.values - true_model.values)) / denom
    v_norm = np.sqrt(_norm_sq(state.multipliers) + _norm_sq(state.scatter_sources))
    w_norm = np.sqrt(_norm_sq(state.running_multipliers) + _norm_sq(state.scatter_errors))
    return Diagnostics(
        iteration=state.iteration,
        misfit=misfit,
        constraint=np.sqrt(constraint),
        model_error=model_error,
        v_norm=float(v_norm),
        w_norm=float(w_norm),
        seconds=seconds,
    )


def step_scheme(
    scheme: str,
    state: IterationState,
    sources,
    data,
    cfg: PenaltyConfig,
    cache: HessianCache | None = None,
    update_mode: str = "sum-terms",
) -> IterationState:
    """Dispatch a single iteration of the named scheme."""
    if scheme == "fwi":
        return standard_fwi_step(state, sources, data, cfg.step_length, update_mode)
    if scheme == "penalty-wavefield":
        return penalty_step(state, sources, data, cfg, "wavefield", cache, update_mode)
    if scheme == "penalty-multiplier":
        return penalty_step(state, sources, data, cfg, "multiplier", cache, update_mode)
    if scheme == "wri-scaled":
        return wri_scaled_step(state, sources, data, cfg, cache, update_mode)
    if scheme == "al-wavefield":
        return al_step(state, sources, data, cfg, "wavefield", cache, update_mode)
    if scheme == "al-multiplier":
        return al_step(state, sources, data, cfg, "multiplier", cache, update_mode)
    if scheme == "gauss-newton":
        return gauss_newton_step(state, sources, data, cfg.mu)
    if scheme == "gauss-seidel":
        return gauss_seidel_step(state, sources, data, cfg.mu)
    if scheme == "split-gn":
        return split_gn_step(state, sources, data, cfg.mu, cache, update_mode)
    if scheme == "split-gs":
        return split_gs_step(state, sources, data, cfg.mu, cache, update_mode)
    if scheme.startswith("refined-"):
        variant = scheme.split("-", 1)[1]
        return refined_step(state, sources, data, cfg.mu, variant, cache, update_mode)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def run_inversion(
    config: ExperimentConfig,
    data,
    true_model: ModelGrid | None = None,
) -> InversionResult:
    """Run the configured scheme until a stopping rule fires.

    data is one TraceData per source, in the order build_sources produces
    them.  true_model (when given, e.g. from build_model_values on the
    config's true-model descriptor) only feeds the model_error column.

    History always has an iteration-0 row evaluated at the initial model
    with plain forward fields, before any stepping.  Stopping rules:

      * reduced data misfit 0.5*||P A(m)^-1 b - d||^2 at the current model
        falls to stop.misfit_tol times the data energy 0.5*||d||^2.  The
        reduced misfit is recomputed from exact solves because the relaxed
        wavefields of the penalty/AL family fit the data by construction
        and say nothing about model convergence.
      * relative constraint norm (against ||b||) <= stop.constraint_tol,
        checked from iteration 1 on (iteration 0 has exact-solve fields)
      * iteration count reaching stop.max_iter
      * divergence (non-finite diagnostics or a failed update) aborts with
        the last valid state and status "diverged"
    """
    if config.scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {config.scheme!r}")
    if config.update_mode not in UPDATE_MODES:
        raise ConfigurationError(f"unknown update_mode {config.update_mode!r}")
    spec = config.grid
    geometry = build_acquisition(config)
    sources = build_sources(config)
    if len(data) != len(sources):
        raise ConfigurationError(
            f"got {len(data)} data records for {len(sources)} sources"
        )
    for d in data:
        if d.geometry.receiver_nodes != geometry.receiver_nodes:
            raise ConfigurationError("data receivers disagree with configured geometry")
    m0 = ModelGrid(spec, build_model_values(spec, config.initial_model))
    state = initial_state(m0, len(sources))

    cfg = config.penalty
    cache = HessianCache()
    t0 = time.perf_counter()
    warm = replace(
        state,
        wavefields=tuple(forward_solve(m0, b) for b in sources),
    )
    history = [_diagnostics(warm, sources, data, true_model, time.perf_counter() - t0)]
    data_energy = 0.5 * sum(float(np.sum(d.values**2)) for d in data)
    source_scale = np.sqrt(sum(float(np.sum(b.values**2)) for b in sources))

    def reduced_misfit(model: ModelGrid) -> float:
        total = 0.0
        for b, d in zip(sources, data):
            predicted = sample(forward_solve(model, b), d.geometry)
            total += 0.5 * float(np.sum((predicted.values - d.values) ** 2))
        return total

    status = "max_iter"
    if history[0].misfit <= config.stop.misfit_tol * data_energy:
        # initial model already explains the data
        return InversionResult(m0, tuple(history), "misfit_tol", warm)

    for _ in range(config.stop.max_iter):
        t_iter = time.perf_counter()
        try:
            new_state = step_scheme(
                config.scheme, state, sources, data, cfg,
                cache=cache, update_mode=config.update_mode,
            )
        except DivergenceError:
            status = "diverged"
            break
        diag = _diagnostics(
            new_state, sources, data, true_model, time.perf_counter() - t_iter
        )
        if not np.isfinite(diag.misfit) or not np.isfinite(diag.constraint):
            status = "diverged"
            break
        state = new_state
        history.append(diag)
        if reduced_misfit(state.model) <= config.stop.misfit_tol * data_energy:
            status = "misfit_tol"
            break
        if source_scale > 0 and diag.constraint / source_scale <= config.stop.constraint_tol:
            status = "constraint_tol"
            break
        if config.mu_growth != 1.0:
            # step_length keeps tracking 1/mu unless alpha was pinned
            cfg = replace(cfg, mu=cfg.mu * config.mu_growth)
    return InversionResult(state.model, tuple(history), status, state)
