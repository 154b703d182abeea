"""Discrete local Ricci flow on quadratic patches.

The state of a patch is its V-field: V_j(p), the normal components of the
tangent derivative along x^j, sampled at every point p of the patch. One
explicit step moves every V_j by

    F_j(p) = -(Ric_jj - lam * C * g_jj) V_j(p) / (1 + |V_j(p)|^2)

with the bracket taken at the patch center, then re-estimates grad V by least
squares over the patch and recomputes g = I + V V^T and Ric from grad V.

Patches never exchange information. ``run_flow`` advances all of them in one
batched array program, which is arithmetically identical to stepping them one
at a time with ``flow_step``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FlowDivergenceError, NumericalError
from .patch_model import QuadraticPatch, curvature, tangent_derivatives

log = logging.getLogger(__name__)


@dataclass
class FlowConfig:
    dt: float = 0.1
    tol: float = 1e-4
    max_iters: int = 5000
    target_c: Optional[float] = None
    adaptive: bool = True
    lam: float = 1.0
    stall_iters: int = 50
    stall_rtol: float = 1e-8
    monitor: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def tolerance(self, C: float) -> float:
        return self.tol * max(1.0, abs(C))


@dataclass
class FlowState:
    patch_index: int
    coords: np.ndarray  # (m, d) tangent coordinates, center first
    v_field: np.ndarray  # (m, d, D-d): v_field[p, j] = V_j(p)
    grad_v: np.ndarray  # (d, d, D-d): grad_v[k, j] = nabla_k V_j
    metric: np.ndarray  # (m, d, d)
    ricci: np.ndarray  # (d, d)
    ricci_scalar: np.ndarray  # (m,)
    iteration: int = 0
    energy_trace: list = field(default_factory=list)
    dt: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def center_scalar(self) -> float:
        return float(self.ricci_scalar[0])

    def energy(self, C: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.square(self.ricci_scalar[0] - C))


@dataclass
class FlowResult:
    states: list
    converged: np.ndarray
    c_used: float
    total_energy: float
    flowed_patches: list
    initial_energy: float = 0.0
    monitor_ok: Optional[np.ndarray] = None
    membership: Optional[list] = None

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.converged))

    @property
    def iterations(self) -> np.ndarray:
        return np.array([s.iteration for s in self.states])

    @property
    def center_scalars(self) -> np.ndarray:
        return np.array([s.center_scalar for s in self.states])


def choose_target_c(reports, target_c: Optional[float] = None, floor: float = 1e-8) -> float:
    """Target curvature: mean center scalar Ricci, floored at ``floor``."""
    if target_c is not None:
        return float(target_c)
    scalars = np.array([r.scalar for r in reports], dtype=float)
    return float(max(scalars.mean() if scalars.size else 0.0, floor))


# batched kernels; leading axes are patches

def ricci_from_gradient(grad_v: np.ndarray) -> np.ndarray:
    """ric_jk = sum_l (nabla_l V_l . nabla_k V_j - nabla_l V_j . nabla_l V_k)."""
    trace_term = np.einsum("...lla->...a", grad_v)
    ric = np.einsum("...a,...kja->...jk", trace_term, grad_v) - np.einsum("...lja,...lka->...jk", grad_v, grad_v)
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def _metrics(v_field: np.ndarray) -> np.ndarray:
    d = v_field.shape[-2]
    return np.eye(d) + np.einsum("...pja,...pka->...pjk", v_field, v_field)


def _scalars(metric: np.ndarray, ric: np.ndarray) -> np.ndarray:
    d = ric.shape[-1]
    try:
        ginv = np.linalg.inv(metric)
    except np.linalg.LinAlgError:
        # a metric that lost rank in floating point means the step blew up
        return np.full(metric.shape[:-2], np.nan)
    return np.einsum("...pjk,...kj->...p", ginv, ric) / d


def gradient_operator(coords: np.ndarray):
    """Least-squares operator mapping point samples to linear-fit slopes.

    Returns (op, deficient) where op has shape (..., d, m).
    """
    coords = np.asarray(coords, dtype=float)
    m, d = coords.shape[-2:]
    A = np.concatenate([np.ones(coords.shape[:-1] + (1,)), coords], axis=-1)
    AtA = np.swapaxes(A, -1, -2) @ A
    scale = np.maximum(np.trace(AtA, axis1=-2, axis2=-1) / (d + 1), 1.0)
    rank = np.linalg.matrix_rank(A)
    deficient = np.asarray(rank < d + 1)
    ridge = np.where(deficient, 1e-8 * scale, 0.0)
    M = AtA + ridge[..., None, None] * np.eye(d + 1)
    op = np.linalg.solve(M, np.swapaxes(A, -1, -2))
    return op[..., 1:, :], deficient


def apply_gradient(op: np.ndarray, v_field: np.ndarray, symmetrize: bool = True) -> np.ndarray:
    grad = np.einsum("...km,...mja->...kja", op, v_field)
    if symmetrize:
        grad = 0.5 * (grad + np.swapaxes(grad, -3, -2))
    return grad


def discrete_gradient(v_field: np.ndarray, coords: np.ndarray, symmetrize: bool = True,
                      warn: Optional[list] = None) -> np.ndarray:
    """Linear least-squares slopes of every V_j^alpha against tangent coordinates.

    Returns grad[k, j, alpha] = d V_j^alpha / d x^k; the fit's constant term is
    dropped. Rank-deficient designs get a 1e-8 ridge.
    """
    op, deficient = gradient_operator(coords)
    if warn is not None and np.any(deficient):
        warn.append("rank-deficient gradient fit; ridge applied")
    return apply_gradient(op, v_field, symmetrize)


def flow_velocity(v_field, ricci, metric, C, lam=1.0):
    """F_j(p) with the bracket (Ric_jj - lam C g_jj) evaluated at the center."""
    g0 = metric[..., 0, :, :]
    bracket = np.diagonal(ricci, axis1=-2, axis2=-1) - lam * C * np.diagonal(g0, axis1=-2, axis2=-1)
    norms = 1.0 + np.einsum("...pja,...pja->...pj", v_field, v_field)
    return -(bracket[..., None, :, None] * v_field) / norms[..., None]


def _advance(v_field, ricci, metric, op, dt, C, lam):
    dt = np.asarray(dt, dtype=float)
    step = flow_velocity(v_field, ricci, metric, C, lam)
    v_new = v_field + dt.reshape(dt.shape + (1,) * 3) * step
    metric_new = _metrics(v_new)
    grad_new = apply_gradient(op, v_new)
    ric_new = ricci_from_gradient(grad_new)
    return v_new, grad_new, metric_new, ric_new, _scalars(metric_new, ric_new)


def init_flow_state(patch: QuadraticPatch, patch_index: Optional[int] = None) -> FlowState:
    coords = patch.neighbor_coords
    m = coords.shape[0]
    v = np.empty((m, patch.d, patch.codim))
    for p in range(m):
        v[p] = tangent_derivatives(patch, coords[p]).T
    grad = patch.hessians().transpose(1, 2, 0).copy()
    metric = _metrics(v)
    ric = ricci_from_gradient(grad)
    return FlowState(
        patch_index=patch.center_index if patch_index is None else patch_index,
        coords=coords,
        v_field=v,
        grad_v=grad,
        metric=metric,
        ricci=ric,
        ricci_scalar=_scalars(metric, ric),
    )


def flow_step(state: FlowState, dt: float, C: float, lam: float = 1.0) -> FlowState:
    op, deficient = gradient_operator(state.coords)
    v, grad, metric, ric, scal = _advance(state.v_field, state.ricci, state.metric, op, dt, C, lam)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(scal))):
        raise FlowDivergenceError(state.patch_index, state.iteration + 1)
    warns = list(state.warnings)
    if deficient:
        warns.append("rank-deficient gradient fit; ridge applied")
    return FlowState(
        patch_index=state.patch_index, coords=state.coords, v_field=v, grad_v=grad,
        metric=metric, ricci=ric, ricci_scalar=scal, iteration=state.iteration + 1,
        energy_trace=list(state.energy_trace), dt=dt, warnings=warns,
    )


def _inv_sqrt(g: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(g)
    return (U / np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2)


def equivalence_bounds_ok(g0, gt, elapsed_t, c_bound, slack: float = 1.05):
    """Elementwise check e^{-2ct} g0 <= g(t) <= e^{2ct} g0 (with slack) per leading index."""
    elapsed_t = np.asarray(elapsed_t, dtype=float)
    c_bound = np.asarray(c_bound, dtype=float)
    with np.errstate(over="ignore"):  # an infinite bound is simply vacuous
        lo = np.exp(-2.0 * c_bound * elapsed_t) / slack
        hi = np.exp(2.0 * c_bound * elapsed_t) * slack
    isq = _inv_sqrt(g0)
    ev = np.linalg.eigvalsh(isq @ gt @ isq)
    evmin = ev.min(axis=-1).reshape(ev.shape[0], -1).min(axis=1)
    evmax = ev.max(axis=-1).reshape(ev.shape[0], -1).max(axis=1)
    return (evmin >= lo) & (evmax <= hi)


def metric_equivalence_monitor(state: FlowState, g0, elapsed_t: float, c_bound: float,
                               slack: float = 1.05) -> bool:
    """True iff all eigenvalues of g0^{-1/2} g(t) g0^{-1/2} lie within e^{+-2ct} (x slack)."""
    g0 = np.asarray(g0, dtype=float)
    if g0.ndim == 2:
        g0 = np.broadcast_to(g0, state.metric.shape)
    return bool(equivalence_bounds_ok(g0[None], state.metric[None], elapsed_t, c_bound, slack)[0])


def reconstruct_patch(state: FlowState) -> np.ndarray:
    """Deformed patch Y_i: tangent coordinates kept, normals from a refit chart.

    A quadratic q^alpha(t) = b^alpha . t + t^T H^alpha t / 2 is fitted so that
    its gradient matches the flowed V-field in least squares; the normal
    coordinates are q(t) at the unchanged tangent coordinates.
    """
    t = state.coords
    m, d = t.shape
    codim = state.v_field.shape[2]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    A = np.zeros((m, d, d + len(pairs)))
    A[:, :, :d] = np.eye(d)
    for c, (i, j) in enumerate(pairs):
        A[:, i, d + c] += t[:, j]
        if i != j:
            A[:, j, d + c] += t[:, i]
    A = A.reshape(m * d, -1)
    rhs = state.v_field.reshape(m * d, codim)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    b = sol[:d]
    H = np.zeros((d, d, codim))
    for c, (i, j) in enumerate(pairs):
        H[i, j] = H[j, i] = sol[d + c]
    normals = t @ b + 0.5 * np.einsum("pi,ija,pj->pa", t, H, t)
    return np.hstack([t, normals])


def _speed_bound(ric, metric, C, lam):
    """Bound on the metric's log-rate: max |Ricci eigenvalue| and the center brackets.

    With the normalization term the metric moves at up to
    2 |Ric_jj - lam C g_jj| per unit time, so both enter the bound.
    """
    eig = np.abs(np.linalg.eigvalsh(ric)).max(axis=-1)
    g0 = metric[..., 0, :, :]
    bracket = np.abs(np.diagonal(ric, axis1=-2, axis2=-1) - lam * C * np.diagonal(g0, axis1=-2, axis2=-1))
    return np.maximum(eig, bracket.max(axis=-1))


def _group_by_shape(states):
    groups = {}
    for i, s in enumerate(states):
        groups.setdefault(s.v_field.shape, []).append(i)
    return groups


def _run_group(states, C, config, trace):
    """Adaptive batched flow for patches of identical shape."""
    P = len(states)
    coords = np.stack([s.coords for s in states])
    v = np.stack([s.v_field for s in states])
    grad = np.stack([s.grad_v for s in states])
    metric = np.stack([s.metric for s in states])
    ric = np.stack([s.ricci for s in states])
    scal = np.stack([s.ricci_scalar for s in states])
    op, deficient = gradient_operator(coords)
    g_init = metric.copy()

    tol = config.tolerance(C)
    dt0 = config.dt
    dt = np.full(P, dt0)
    energy = (scal[:, 0] - C) ** 2
    traces = [[float(e)] for e in energy]
    iters = np.zeros(P, dtype=int)
    streak = np.zeros(P, dtype=int)
    stalled = np.zeros(P, dtype=int)
    elapsed = np.zeros(P)
    c_bound = _speed_bound(ric, metric, C, config.lam)
    monitor_ok = np.ones(P, dtype=bool)
    converged = np.abs(scal[:, 0] - C) <= tol
    active = ~converged
    notes = [[] for _ in range(P)]
    for i in np.flatnonzero(deficient):
        notes[i].append("rank-deficient gradient fit; ridge applied")

    while np.any(active):
        idx = np.flatnonzero(active)
        nv, ng, nm, nr, ns = _advance(v[idx], ric[idx], metric[idx], op[idx], dt[idx], C, config.lam)
        finite = np.all(np.isfinite(nv).reshape(len(idx), -1), axis=1) & np.all(np.isfinite(ns), axis=1)
        if not np.all(finite):
            bad = idx[~finite][0]
            raise FlowDivergenceError(states[bad].patch_index, int(iters[bad]) + 1)
        e_new = (ns[:, 0] - C) ** 2
        accept = np.ones(len(idx), dtype=bool)
        if config.adaptive:
            accept = e_new <= energy[idx]
        rej = idx[~accept]
        dt[rej] *= 0.5
        streak[rej] = 0
        underflow = rej[dt[rej] < dt0 * 1e-12]
        for i in underflow:
            notes[i].append("step size underflow")
        active[underflow] = False

        acc = idx[accept]
        if acc.size:
            a = np.flatnonzero(accept)
            decrease = energy[acc] - e_new[a]
            stalled[acc] = np.where(decrease <= config.stall_rtol * energy[acc], stalled[acc] + 1, 0)
            v[acc], grad[acc], metric[acc], ric[acc], scal[acc] = nv[a], ng[a], nm[a], nr[a], ns[a]
            energy[acc] = e_new[a]
            iters[acc] += 1
            elapsed[acc] += dt[acc]
            for i, e in zip(acc, e_new[a]):
                traces[i].append(float(e))
            if trace is not None:
                for i in acc:
                    trace.write(json.dumps({"patch": states[i].patch_index, "iteration": int(iters[i]),
                                            "energy": float(energy[i]),
                                            "abs_residual": float(abs(scal[i, 0] - C))}) + "\n")
            c_bound[acc] = np.maximum(c_bound[acc], _speed_bound(ric[acc], metric[acc], C, config.lam))
            if config.monitor:
                chk = acc[monitor_ok[acc]]
                if chk.size:
                    ok = equivalence_bounds_ok(g_init[chk], metric[chk], elapsed[chk], c_bound[chk])
                    for i in chk[~ok]:
                        log.debug("metric equivalence violated on patch %d at iteration %d",
                                  states[i].patch_index, iters[i])
                        notes[i].append(f"metric equivalence violated at iteration {iters[i]}")
                    monitor_ok[chk[~ok]] = False
            done = np.abs(scal[acc, 0] - C) <= tol
            converged[acc[done]] = True
            active[acc[done]] = False
            stall = acc[~done & (stalled[acc] >= config.stall_iters)]
            for i in stall:
                notes[i].append("energy stalled")
            active[stall] = False
            capped = acc[~done & (iters[acc] >= config.max_iters)]
            active[capped] = False
            streak[acc] += 1
            grow = acc[streak[acc] >= 10]
            dt[grow] = np.minimum(2.0 * dt[grow], dt0)
            streak[grow] = 0

    out = []
    for i, s in enumerate(states):
        out.append(FlowState(
            patch_index=s.patch_index, coords=s.coords, v_field=v[i], grad_v=grad[i], metric=metric[i],
            ricci=ric[i], ricci_scalar=scal[i], iteration=int(iters[i]), energy_trace=traces[i],
            dt=float(dt[i]), warnings=notes[i],
        ))
    return out, converged, monitor_ok


def run_flow(patches, config: Optional[FlowConfig] = None, trace_path=None, C: Optional[float] = None,
             membership=None) -> FlowResult:
    """Flow every patch to constant curvature C (auto-chosen when not given).

    ``membership`` (global point indices per patch) is carried through to
    the result for the alignment stage.
    """
    config = config or FlowConfig()
    if C is None:
        C = choose_target_c([curvature(p) for p in patches], config.target_c)
    init = [init_flow_state(p, patch_index=i) for i, p in enumerate(patches)]
    initial = float(sum(s.energy(C) for s in init))
    if not np.isfinite(initial):
        raise NumericalError(f"initial flow energy overflows for target curvature C={C!r}")
    states = [None] * len(init)
    conv = np.zeros(len(init), dtype=bool)
    mon = np.ones(len(init), dtype=bool)
    trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for _, members in sorted(_group_by_shape(init).items()):
            out, c, m = _run_group([init[i] for i in members], C, config, trace)
            for j, i in enumerate(members):
                states[i] = out[j]
            conv[members] = c
            mon[members] = m
    finally:
        if trace is not None:
            trace.close()
    total = float(sum((s.center_scalar - C) ** 2 for s in states))
    if not np.all(conv):
        log.info("%d of %d patches did not converge", int((~conv).sum()), len(conv))
    if not np.all(mon):
        log.warning("metric equivalence bound violated on %d of %d patches", int((~mon).sum()), len(mon))
    return FlowResult(
        states=states,
        converged=conv,
        c_used=float(C),
        total_energy=total,
        flowed_patches=[reconstruct_patch(s) for s in states],
        initial_energy=initial,
        monitor_ok=mon,
        membership=None if membership is None else [np.asarray(m) for m in membership],
    )
