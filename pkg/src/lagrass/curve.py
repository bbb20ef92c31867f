"""Curves of Lagrangian subspaces: velocity, curvature, transport.

A curve is a frame-valued callable on a real interval plus bookkeeping
(domain, finite-difference step, evaluation grid). Differentiation runs
through moving Darboux charts: the chart origin for a stencil centered
at t is the curve point itself, so the local graph matrix vanishes at
the center and the five stencil values form a symmetric-matrix family
that ordinary central differences apply to.

Operator conventions. All operators on a curve point v(t) are reported
as matrices in the coordinates induced by a stated 2n x n basis whose
columns span v(t); the basis travels with the result so callers can
realign operators computed in different charts. The curvature operator
is the matrix Schwarzian

    R(t) = (1/2) Sdot^-1 Sdddot - (3/4) (Sdot^-1 Sddot)^2,

and the same operator is recomputed independently through the
infinitesimal cross-ratio of the derivative curve with the curve, which
is the main internal consistency check of the module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import core
from .errors import (
    ChartFailure,
    NotInChart,
    NotMonotone,
    NotRegular,
    NotTransversal,
    SearchExhausted,
)

# a velocity is treated as singular when |Sdot^-1| exceeds this
REGULARITY_CAP = 1e8
FLAT_TOL = 1e-6


@dataclass
class GrassmannCurve:
    space: core.SymplecticSpace
    eval: Callable[[float], core.LagrangianFrame]
    domain: Tuple[float, float]
    fd_step: Optional[float] = None
    grid: Optional[np.ndarray] = None

    def __post_init__(self):
        t0, t1 = self.domain
        if not t1 > t0:
            raise ValueError("domain must be a nondegenerate interval")
        length = t1 - t0
        if self.fd_step is None:
            self.fd_step = 1e-3 * length
        if self.grid is None:
            # grid spacing capped at ten finite-difference steps
            npts = max(33, int(np.ceil(length / (10.0 * self.fd_step))) + 1)
            self.grid = np.linspace(t0, t1, npts)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def frame(self, t: float) -> core.LagrangianFrame:
        return self.eval(t)


def from_chart_family(n: int, matrix_func, domain,
                      fd_step: Optional[float] = None) -> GrassmannCurve:
    """Curve from a symmetric-matrix family S(t) in the standard chart."""
    space = core.standard_space(n)
    chart = core.standard_chart(space)

    def ev(t):
        s = np.atleast_2d(np.asarray(matrix_func(t), dtype=float))
        return core.frame_from_chart(core.ChartRep(chart=chart,
                                                   S=0.5 * (s + s.T)))

    return GrassmannCurve(space=space, eval=ev, domain=tuple(domain),
                          fd_step=fd_step)


@dataclass(frozen=True)
class VelocityForm:
    at: float
    form: np.ndarray      # symmetric n x n, quadratic in the basis coords
    basis: np.ndarray     # 2n x n, spans the curve point

    @property
    def inertia(self) -> core.Inertia:
        return core.inertia(self.form)


@dataclass(frozen=True)
class CurveOperator:
    matrix: np.ndarray
    basis: np.ndarray
    kind: str             # curvature | cross_ratio | transport_generator
    at: Optional[float] = None


@dataclass(frozen=True)
class CurvatureForm:
    at: float
    form: np.ndarray      # sym(Sdot R): curvature paired with the velocity
    basis: np.ndarray
    sign: float           # +1 increasing curve, -1 decreasing

    @property
    def inertia(self) -> core.Inertia:
        return core.inertia(self.form)


def _d1(m, h):
    return (m[0] - 8.0 * m[1] + 8.0 * m[3] - m[4]) / (12.0 * h)


def _d2(m, h):
    return (-m[0] + 16.0 * m[1] - 30.0 * m[2] + 16.0 * m[3] - m[4]) \
        / (12.0 * h * h)


def _d3(m, h):
    return (-m[0] + 2.0 * m[1] - 2.0 * m[3] + m[4]) / (2.0 * h ** 3)


def _sym(m):
    return 0.5 * (m + m.T)


# stencil offsets in units of the step; the outer pair serves only the
# third derivative, whose single 5-point stencil is O(h^2): combining
# the h and 2h stencils restores O(h^4)
_OFFSETS = (-4, -2, -1, 0, 1, 2, 4)


def _inner(mats):
    return [mats[1], mats[2], mats[3], mats[4], mats[5]]


def _jerk(mats, h):
    narrow = _d3(_inner(mats), h)
    wide = _d3([mats[0], mats[1], mats[3], mats[5], mats[6]], 2.0 * h)
    return (4.0 * narrow - wide) / 3.0


def _chart_and_stencil(curve: GrassmannCurve, t: float,
                       fd_step: Optional[float] = None):
    """Darboux chart centered at the curve point holding the full stencil."""
    h = curve.fd_step if fd_step is None else fd_step
    frames = [curve.eval(t + k * h) for k in _OFFSETS]
    try:
        others = frames[:3] + frames[4:]
        delta = core.transversal_complement(frames[3], avoid=others)
        chart = core.darboux_chart(frames[3], delta)
        mats = [core.chart_coords(fr, chart).S for fr in frames]
    except (SearchExhausted, NotInChart, NotTransversal) as exc:
        raise ChartFailure(f"no common chart for the stencil at t={t:g}") \
            from exc
    return chart, mats, h


def _require_regular(sdot: np.ndarray):
    sv = np.linalg.svd(sdot, compute_uv=False)
    if sv[-1] * REGULARITY_CAP <= 1.0:
        raise NotRegular("velocity is numerically singular "
                         f"(smallest singular value {sv[-1]:.3e})")


def velocity_form(curve: GrassmannCurve, t: float,
                  fd_step: Optional[float] = None) -> VelocityForm:
    chart, mats, h = _chart_and_stencil(curve, t, fd_step)
    sdot = _sym(_d1(_inner(mats), h))
    n = chart.n
    return VelocityForm(at=t, form=sdot, basis=chart.basis[:, :n])


def cross_ratio(v0: core.LagrangianFrame, v1: core.LagrangianFrame,
                v2: core.LagrangianFrame, v3: core.LagrangianFrame,
                rank_tol: float = core.RANK_TOL) -> CurveOperator:
    """Cross-ratio of four points, as an operator on v1.

    Composition of the projector onto v3 along v2 with the projector
    onto v1 along v0, restricted to v1. Equal consecutive arguments
    degenerate gracefully: with v2 = v0 the operator is the identity.
    """
    p01 = core.projector(v0, v1, rank_tol)
    p23 = core.projector(v2, v3, rank_tol)
    z1 = v1.columns
    image = p01 @ (p23 @ z1)
    matrix, *_ = np.linalg.lstsq(z1, image, rcond=None)
    return CurveOperator(matrix=matrix, basis=z1, kind="cross_ratio")


def infinitesimal_cross_ratio(c0: GrassmannCurve, c1: GrassmannCurve,
                              t: float,
                              fd_step: Optional[float] = None) -> CurveOperator:
    """Pairing of the velocities of two curves, as an operator on c1(t).

    In a chart centered at c1(t) the matrix is
    (S0 - S1)^-1 Sdot0 (S0 - S1)^-1 Sdot1; it requires the two curve
    points to be transversal at t.
    """
    h0 = c0.fd_step if fd_step is None else fd_step
    h1 = c1.fd_step if fd_step is None else fd_step
    f0 = [c0.eval(t + k * h0) for k in (-2, -1, 0, 1, 2)]
    f1 = [c1.eval(t + k * h1) for k in (-2, -1, 0, 1, 2)]
    center = f1[2]
    try:
        avoid = f0 + f1[:2] + f1[3:]
        delta = core.transversal_complement(center, avoid=avoid)
        chart = core.darboux_chart(center, delta)
        s0 = [core.chart_coords(fr, chart).S for fr in f0]
        s1 = [core.chart_coords(fr, chart).S for fr in f1]
    except (SearchExhausted, NotInChart, NotTransversal) as exc:
        raise ChartFailure(f"no common chart for the pair at t={t:g}") from exc
    gap = s0[2] - s1[2]
    sv = np.linalg.svd(gap, compute_uv=False)
    if sv[-1] <= core.RANK_TOL * max(sv[0], 1e-300):
        raise NotTransversal("curve points coincide at the evaluation time")
    gap_inv = np.linalg.inv(gap)
    matrix = gap_inv @ _d1(s0, h0) @ gap_inv @ _d1(s1, h1)
    n = chart.n
    return CurveOperator(matrix=matrix, basis=chart.basis[:, :n],
                         kind="cross_ratio", at=t)


def pair_ratio(curve: GrassmannCurve, tau: float, t: float,
               fd_step: Optional[float] = None) -> CurveOperator:
    """Velocity pairing of the same curve at two distinct times.

    Blows up like (tau - t)^-2 as the times merge, with the curvature
    over three as the next coefficient; tests exploit that expansion.
    """
    shift = tau - t
    shifted = GrassmannCurve(
        space=curve.space,
        eval=lambda u: curve.eval(u + shift),
        domain=(curve.domain[0] - shift, curve.domain[1] - shift),
        fd_step=curve.fd_step)
    return infinitesimal_cross_ratio(shifted, curve, t, fd_step)


def derivative_curve(curve: GrassmannCurve, t: float,
                     fd_step: Optional[float] = None) -> core.LagrangianFrame:
    """The complement point spanned by canonically normalized velocities."""
    chart, mats, h = _chart_and_stencil(curve, t, fd_step)
    sdot = _d1(_inner(mats), h)
    _require_regular(sdot)
    sdot_inv = np.linalg.inv(sdot)
    a = _sym(-0.5 * sdot_inv @ _d2(_inner(mats), h) @ sdot_inv)
    n = chart.n
    e, f = chart.basis[:, :n], chart.basis[:, n:]
    return core.make_frame(curve.space, e @ a + f)


def derivative_family(curve: GrassmannCurve,
                      fd_step: Optional[float] = None) -> GrassmannCurve:
    """The derivative curve as a curve; domain shrinks by the stencil margin."""
    h = curve.fd_step if fd_step is None else fd_step
    t0, t1 = curve.domain
    return GrassmannCurve(
        space=curve.space,
        eval=lambda tau: derivative_curve(curve, tau, h),
        domain=(t0 + 4.0 * h, t1 - 4.0 * h),
        fd_step=curve.fd_step)


def curvature(curve: GrassmannCurve, t: float,
              fd_step: Optional[float] = None) -> CurveOperator:
    chart, mats, h = _chart_and_stencil(curve, t, fd_step)
    sdot = _d1(_inner(mats), h)
    _require_regular(sdot)
    sdot_inv = np.linalg.inv(sdot)
    lead = 0.5 * sdot_inv @ _jerk(mats, h)
    quad = sdot_inv @ _d2(_inner(mats), h)
    n = chart.n
    return CurveOperator(matrix=lead - 0.75 * quad @ quad,
                         basis=chart.basis[:, :n], kind="curvature", at=t)


def curvature_via_cross_ratio(curve: GrassmannCurve, t: float,
                              fd_step: Optional[float] = None) -> CurveOperator:
    """Independent curvature path through the derivative curve.

    The derivative-curve points are sampled with a quarter of the outer
    step: their truncation bias passes through the inverse of the gap
    matrix twice, so it needs more headroom than the outer stencil.
    """
    h = curve.fd_step if fd_step is None else fd_step
    return infinitesimal_cross_ratio(derivative_family(curve, 0.25 * h),
                                     curve, t, h)


def _monotone_sign(sdot: np.ndarray, n: int) -> float:
    ine = core.inertia(sdot)
    if ine.pos == n:
        return 1.0
    if ine.neg == n:
        return -1.0
    raise NotMonotone("velocity form is not definite")


def curvature_form(curve: GrassmannCurve, t: float,
                   fd_step: Optional[float] = None) -> CurvatureForm:
    """Curvature paired with the velocity form, for monotone curves.

    The reported form is sym(Sdot R); its inertia matches the inertia of
    the velocity of the derivative curve. For an increasing curve it is
    the curvature form in the velocity inner product, for a decreasing
    curve its negative.
    """
    chart, mats, h = _chart_and_stencil(curve, t, fd_step)
    sdot = _d1(_inner(mats), h)
    _require_regular(sdot)
    sign = _monotone_sign(_sym(sdot), chart.n)
    sdot_inv = np.linalg.inv(sdot)
    quad = sdot_inv @ _d2(_inner(mats), h)
    r = 0.5 * sdot_inv @ _jerk(mats, h) - 0.75 * quad @ quad
    form = _sym(sdot @ r)
    n = chart.n
    return CurvatureForm(at=t, form=form, basis=chart.basis[:, :n], sign=sign)


def transport_generator(curve: GrassmannCurve, t: float,
                        fd_step: Optional[float] = None) -> CurveOperator:
    """Curvature in the velocity-orthonormal gauge at a single time.

    The basis is the curve-point frame scaled by (eps Sdot)^(-1/2); in it
    the curvature operator of a monotone curve is symmetric up to the
    finite-difference noise floor.
    """
    chart, mats, h = _chart_and_stencil(curve, t, fd_step)
    sdot = _d1(_inner(mats), h)
    _require_regular(sdot)
    sym_sdot = _sym(sdot)
    sign = _monotone_sign(sym_sdot, chart.n)
    x = core.sym_inv_sqrt(sign * sym_sdot)
    sdot_inv = np.linalg.inv(sdot)
    quad = sdot_inv @ _d2(_inner(mats), h)
    r = 0.5 * sdot_inv @ _jerk(mats, h) - 0.75 * quad @ quad
    matrix = np.linalg.solve(x, r @ x)
    n = chart.n
    return CurveOperator(matrix=matrix, basis=chart.basis[:, :n] @ x,
                         kind="transport_generator", at=t)


@dataclass(frozen=True)
class TransportResult:
    t0: float
    t1: float
    matrix: np.ndarray          # 2n x 2n propagator in the moving frame
    frame0: np.ndarray          # 2n x n initial moving frame
    frame1: np.ndarray          # 2n x n transported frame
    generators: List[Tuple[float, np.ndarray]]
    drift: float                # gap between span(frame1) and the curve point


def transport(curve: GrassmannCurve, t0: float, t1: float,
              step: Optional[float] = None,
              fd_step: Optional[float] = None) -> TransportResult:
    """Propagator of the second-order frame equation along the curve.

    A moving frame of curve points with velocities in the derivative
    curve obeys frame'' = -R(t) frame; in the frame coordinates the
    system reads x' = -y, y' = A(t) x with A(t) the curvature matrix in
    the marched frame, and the returned matrix propagates (x, y) from t0
    to t1. The initial frame is orthonormal for the velocity inner
    product, which keeps A(t) symmetric and the propagator symplectic.
    """
    if not t1 > t0:
        raise ValueError("transport needs t1 > t0")
    n = curve.space.n
    if step is None:
        step = 0.005 * curve.length
    nsteps = max(8, int(np.ceil((t1 - t0) / step)))
    dt = (t1 - t0) / nsteps

    cache = {}

    def geometry(tau):
        key = int(round((tau - t0) / (0.5 * dt)))
        if key not in cache:
            chart, mats, h = _chart_and_stencil(curve, tau, fd_step)
            sdot = _d1(_inner(mats), h)
            _require_regular(sdot)
            sdot_inv = np.linalg.inv(sdot)
            sdd = _d2(_inner(mats), h)
            quad = sdot_inv @ sdd
            r = 0.5 * sdot_inv @ _jerk(mats, h) - 0.75 * quad @ quad
            cache[key] = (chart, _sym(sdot), sdot, sdot_inv, sdd, r)
        return cache[key]

    chart0, sym_sdot0, sdot0, sdot_inv0, sdd0, r0 = geometry(t0)
    sign = _monotone_sign(sym_sdot0, n)
    x0 = core.sym_inv_sqrt(sign * sym_sdot0)
    a0 = _sym(-0.5 * sdot_inv0 @ sdd0 @ sdot_inv0)
    e0, f0 = chart0.basis[:, :n], chart0.basis[:, n:]
    z = e0 @ x0
    w = (e0 @ a0 + f0) @ (sdot0 @ x0)
    gamma = np.eye(2 * n)
    frame0 = z.copy()
    generators: List[Tuple[float, np.ndarray]] = []

    def rhs(tau, state):
        z_s, w_s, g_s = state
        chart, _, _, _, _, r = geometry(tau)
        x = (chart.basis_inv @ z_s)[:n]
        amat = _sym(np.linalg.solve(x, r @ x))
        e = chart.basis[:, :n]
        k = np.block([[np.zeros((n, n)), -np.eye(n)],
                      [amat, np.zeros((n, n))]])
        return (w_s, -e @ (r @ x), k @ g_s), amat

    t = t0
    for _ in range(nsteps):
        state = (z, w, gamma)
        k1, a_node = rhs(t, state)
        generators.append((t, a_node))
        k2, _ = rhs(t + 0.5 * dt,
                    tuple(s + 0.5 * dt * k for s, k in zip(state, k1)))
        k3, _ = rhs(t + 0.5 * dt,
                    tuple(s + 0.5 * dt * k for s, k in zip(state, k2)))
        k4, _ = rhs(t + dt,
                    tuple(s + dt * k for s, k in zip(state, k3)))
        z, w, gamma = tuple(
            s + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
            for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        t += dt

    _, a_end = rhs(t1, (z, w, gamma))
    generators.append((t1, a_end))
    end_frame = core.make_frame(curve.space, z)
    drift = core.subspace_gap(end_frame, curve.eval(t1))
    return TransportResult(t0=t0, t1=t1, matrix=gamma, frame0=frame0,
                           frame1=z, generators=generators, drift=drift)


def fundamental_matrix(a_func, t0: float, t1: float,
                       step: float = 1e-3) -> np.ndarray:
    """Propagator of x' = -y, y' = A(t) x for a given matrix family."""
    a0 = np.atleast_2d(np.asarray(a_func(t0), dtype=float))
    n = a0.shape[0]
    nsteps = max(1, int(np.ceil((t1 - t0) / step)))
    dt = (t1 - t0) / nsteps

    def k_of(tau):
        a = np.atleast_2d(np.asarray(a_func(tau), dtype=float))
        return np.block([[np.zeros((n, n)), -np.eye(n)],
                         [a, np.zeros((n, n))]])

    gamma = np.eye(2 * n)
    t = t0
    for _ in range(nsteps):
        k1 = k_of(t) @ gamma
        k2 = k_of(t + 0.5 * dt) @ (gamma + 0.5 * dt * k1)
        k3 = k_of(t + 0.5 * dt) @ (gamma + 0.5 * dt * k2)
        k4 = k_of(t + dt) @ (gamma + dt * k3)
        gamma = gamma + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return gamma


def reparametrize(curve: GrassmannCurve, phi, new_domain,
                  fd_step: Optional[float] = None) -> GrassmannCurve:
    """Precompose the curve with a time change phi."""
    return GrassmannCurve(space=curve.space,
                          eval=lambda tau: curve.eval(phi(tau)),
                          domain=tuple(new_domain), fd_step=fd_step)


def schwarzian(phi, t: float, h: float = 2e-3) -> float:
    """Schwarzian-type derivative phi'''/(2 phi') - (3/4)(phi''/phi')^2."""
    vals = [phi(t + k * h) for k in _OFFSETS]
    d1 = _d1(_inner(vals), h)
    d2 = _d2(_inner(vals), h)
    d3 = _jerk(vals, h)
    return d3 / (2.0 * d1) - 0.75 * (d2 / d1) ** 2


@dataclass(frozen=True)
class CurveClassification:
    regular: bool
    monotone: Optional[str]       # "increasing" | "decreasing" | None
    flat: Optional[bool]
    symmetric: Optional[bool]


def classify(curve: GrassmannCurve, samples: int = 9,
             sym_tol: float = 1e-3) -> CurveClassification:
    """Coarse flags from interior samples of the curve.

    Regularity and monotonicity read the velocity form on a sample grid;
    flatness thresholds the curvature norm; the symmetry flag checks
    that the curvature matrix stays constant in the marched frame, which
    characterizes curves reproduced by their double derivative curve.
    Flags that cannot be evaluated (flat/symmetric for irregular or
    non-monotone curves) come back as None.
    """
    t0, t1 = curve.domain
    margin = 4.5 * curve.fd_step
    ts = np.linspace(t0 + margin, t1 - margin, samples)
    regular = True
    signs = []
    for t in ts:
        try:
            vf = velocity_form(curve, t)
        except ChartFailure:
            regular = False
            continue
        sv = np.linalg.svd(vf.form, compute_uv=False)
        if sv[-1] * REGULARITY_CAP <= 1.0:
            regular = False
        ine = vf.inertia
        if ine.pos == curve.space.n:
            signs.append(1)
        elif ine.neg == curve.space.n:
            signs.append(-1)
        else:
            signs.append(0)
    if signs and all(s == 1 for s in signs):
        monotone = "increasing"
    elif signs and all(s == -1 for s in signs):
        monotone = "decreasing"
    else:
        monotone = None
    if not regular:
        return CurveClassification(regular=False, monotone=monotone,
                                   flat=None, symmetric=None)

    flat = True
    for t in ts:
        r = curvature(curve, t)
        if np.linalg.norm(r.matrix) > FLAT_TOL:
            flat = False
            break

    if monotone is None:
        return CurveClassification(regular=True, monotone=None,
                                   flat=flat, symmetric=None)
    if flat:
        # zero curvature is trivially constant in any marched frame
        return CurveClassification(regular=True, monotone=monotone,
                                   flat=True, symmetric=True)
    tr = transport(curve, ts[0], ts[-1])
    a_ref = tr.generators[0][1]
    scale = 1.0 + np.linalg.norm(a_ref)
    symmetric = all(np.linalg.norm(a - a_ref) <= sym_tol * scale
                    for _, a in tr.generators)
    return CurveClassification(regular=True, monotone=monotone,
                               flat=flat, symmetric=symmetric)
