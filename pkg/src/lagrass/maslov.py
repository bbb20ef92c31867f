"""Integer invariants of Lagrangian curves against a reference train.

The train of a reference subspace Pi is the set of Lagrangian subspaces
meeting Pi nontrivially. Crossings of the train are counted three ways:
the pair index of an endpoint pair (inertia of a chart-free quadratic
form, degenerate configurations welcome), the Maslov index of a
piecewise-smooth curve (adaptive chart subdivision, one inertia
difference per piece), and conjugate-point lists with multiplicities
for regular monotone curves (bisection on the chart-matrix inertia).
The Morse index of a regular extremal is the multiplicity sum of its
Jacobi curve against the initial subspace.

Sign convention: a transversal crossing counts +dim when the velocity
form is positive on the intersection, so monotone increasing curves
accumulate positive index and monotone decreasing curves negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import core
from .curve import REGULARITY_CAP, GrassmannCurve, velocity_form
from .errors import (
    ChartFailure,
    DegenerateEndpoint,
    EndpointOnTrain,
    NotInChart,
    NotMonotone,
    NotRegular,
    NotTransversal,
    SubdivisionFailure,
)

MAX_DEPTH = 32
_MIN_MARGIN = 1e-2    # acceptable chart transversality at sample frames
_GOOD_MARGIN = 0.5    # short-circuit score for the candidate search
_CERT_SAMPLES = 9
_SCAN_SAMPLES = 33
_TIME_TOL = 1e-10     # of the domain length, crossing localization
_NUDGE = 1e-6         # of the piece length, off-train shifts
_MULT_TOL = 1e-6


@dataclass(frozen=True)
class PairIndex:
    """Index of an ordered subspace pair against a reference, doubled.

    Degenerate configurations make the index a half integer, so the
    doubled value is stored exactly; integer() converts and refuses
    stray halves.
    """

    doubled: int

    @property
    def value(self) -> float:
        return 0.5 * self.doubled

    def integer(self) -> int:
        if self.doubled % 2:
            raise ValueError(f"pair index {self.value} is a half integer")
        return self.doubled // 2


@dataclass(frozen=True)
class ConjugatePoint:
    t: float
    multiplicity: int


@dataclass(frozen=True)
class IndexReport:
    value: int
    subdivision: List[float]
    charts_used: int
    endpoint_transversal: bool


def _span(cols: np.ndarray, rank_tol: float = core.RANK_TOL) -> np.ndarray:
    u, sv, _ = np.linalg.svd(cols, full_matrices=False)
    kept = sv > rank_tol * max(sv[0] if sv.size else 0.0, 1e-300)
    return u[:, kept]


def _meet(a: np.ndarray, b: np.ndarray,
          rank_tol: float = core.RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the intersection of two column spans."""
    if a.shape[1] == 0 or b.shape[1] == 0:
        return a[:, :0]
    stacked = np.hstack([a, -b])
    _, sv, vt = np.linalg.svd(stacked, full_matrices=True)
    rank = int((sv > rank_tol * max(sv[0], 1e-300)).sum())
    kernel = vt[rank:].T
    if kernel.shape[1] == 0:
        return a[:, :0]
    return core.orthonormal_columns(a @ kernel[:a.shape[1]])


def pair_index(train: core.LagrangianFrame, lam0: core.LagrangianFrame,
               lam1: core.LagrangianFrame,
               rank_tol: float = core.RANK_TOL) -> PairIndex:
    """Pair index of (lam0, lam1) against the train of the reference.

    The quadratic form lives on (lam0 + lam1) intersected with the
    reference: a vector there splits as x0 + x1 with x_i in lam_i, and
    the form is sigma(x1, x). Its inertia plus half the boundary
    intersection dimensions minus the triple intersection gives the
    index; the result equals the Maslov index of any simple monotone
    increasing curve from lam0 to lam1.
    """
    sigma = train.space.form
    z0, z1 = lam0.columns, lam1.columns
    w = _meet(_span(np.hstack([z0, z1]), rank_tol), train.columns, rank_tol)
    if w.shape[1]:
        coeffs, *_ = np.linalg.lstsq(np.hstack([z0, z1]), w, rcond=None)
        x1 = z1 @ coeffs[train.n:]
        g = x1.T @ sigma @ w
        ind_q = core.inertia(0.5 * (g + g.T), rank_tol).neg
    else:
        ind_q = 0
    d0 = core.intersection_dim(train, lam0, rank_tol)
    d1 = core.intersection_dim(train, lam1, rank_tol)
    d01 = _meet(_meet(z0, z1, rank_tol), train.columns, rank_tol).shape[1]
    return PairIndex(doubled=2 * ind_q + d0 + d1 - 2 * d01)


# --------------------------------------------------------- piece subdivision


def _margin(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.svd(np.hstack([a, b]), compute_uv=False)[-1])


def _piece_delta(space, train, frames, seed, need_train):
    """Best complement covering every sample frame (and maybe the train).

    Candidates: the sigma-orthogonal complements of the middle sample
    and of the train, then seeded graphs over the train's canonical
    chart, which are transversal to the train by construction. The
    score of a candidate is its worst transversality margin; a score
    above _GOOD_MARGIN wins immediately.
    """
    sigma = space.form
    mid = frames[len(frames) // 2]
    musts = list(frames) + ([train] if need_train else [])

    def score(cand):
        return min(_margin(cand.columns, fr.columns) for fr in musts)

    best, best_score = None, _MIN_MARGIN

    def consider(cols):
        nonlocal best, best_score
        try:
            cand = core.make_frame(space, cols)
        except ValueError:
            return None
        sc = score(cand)
        if sc >= best_score:
            best, best_score = cand, sc
        return best if best_score >= _GOOD_MARGIN else None

    for cols in (sigma @ mid.columns, sigma @ train.columns):
        hit = consider(cols)
        if hit is not None:
            return hit
    try:
        jtrain = core.make_frame(space, sigma @ train.columns)
        base = core.darboux_chart(train, jtrain)
    except (ValueError, NotTransversal):
        base = None
    if base is not None:
        n = space.n
        e, f = base.basis[:, :n], base.basis[:, n:]
        rng = np.random.default_rng(seed)
        for _ in range(16):
            a = rng.standard_normal((n, n))
            hit = consider(f + e @ (a + a.T))
            if hit is not None:
                return hit
    return best


def _nudged_mid(at, train, a, b):
    mid = 0.5 * (a + b)
    if core.intersection_dim(at(mid), train) == 0:
        return mid
    delta = _NUDGE * (b - a)
    for k in (1, -1, 3, -3, 9, -9, 27, -27):
        cand = mid + k * delta
        if a < cand < b and core.intersection_dim(at(cand), train) == 0:
            return cand
    raise SubdivisionFailure(f"no off-train subdivision point near t={mid:g}")


def _pieces(space, train, at, a, b, max_gap, seed, need_train, depth=0):
    """Subdivide [a, b] into chart-covered pieces, recursively.

    A piece is accepted when its sample frames march in steps of at
    most max_gap and a single complement clears every sample; with
    need_train the complement must also clear the train (the piece
    chart is centered on it) and split points are nudged off the train
    so per-piece index differences add up.
    """
    if depth > MAX_DEPTH:
        raise SubdivisionFailure(
            f"subdivision depth {MAX_DEPTH} exceeded on [{a:g}, {b:g}]")
    ts = np.linspace(a, b, _CERT_SAMPLES)
    frames = [at(t) for t in ts]
    delta = None
    if all(core.subspace_gap(frames[i], frames[i + 1]) <= max_gap
           for i in range(len(frames) - 1)):
        delta = _piece_delta(space, train, frames, seed, need_train)
    if delta is None:
        mid = _nudged_mid(at, train, a, b) if need_train else 0.5 * (a + b)
        return (_pieces(space, train, at, a, mid, max_gap, seed, need_train,
                        depth + 1)
                + _pieces(space, train, at, mid, b, max_gap, seed, need_train,
                          depth + 1))
    chart = core.darboux_chart(train, delta) if need_train else None
    return [(a, b, chart)]


def _chart_matrix(frame, chart, t):
    try:
        return core.chart_coords(frame, chart).S
    except NotInChart as exc:
        raise ChartFailure(f"curve left the piece chart at t={t:g}") from exc


def _memoized(curve: GrassmannCurve):
    memo = {}

    def at(t):
        key = float(t)
        if key not in memo:
            memo[key] = curve.eval(key)
        return memo[key]

    return at


def _monotone_direction(curve: GrassmannCurve, strict: bool,
                        samples: int = 7) -> int:
    t0, t1 = curve.domain
    margin = 4.5 * curve.fd_step
    signs = set()
    for t in np.linspace(t0 + margin, t1 - margin, samples):
        vf = velocity_form(curve, t)
        if strict:
            sv = np.linalg.svd(vf.form, compute_uv=False)
            if sv[-1] * REGULARITY_CAP <= 1.0:
                raise NotRegular(f"velocity is numerically singular at t={t:g}")
        ine = vf.inertia
        if ine.pos and ine.neg:
            raise NotMonotone(f"velocity form is indefinite at t={t:g}")
        if ine.pos:
            signs.add(1)
        elif ine.neg:
            signs.add(-1)
    if signs == {1}:
        return 1
    if signs == {-1}:
        return -1
    raise NotMonotone("velocity form has no consistent sign")


# --------------------------------------------------------------- public ops


def maslov_index(curve: GrassmannCurve, train: core.LagrangianFrame,
                 max_gap: float = 0.15, seed: int = 0) -> IndexReport:
    """Maslov index of the curve against the train of the reference.

    The domain is subdivided until every piece sits inside one chart
    centered on the reference; a piece contributes the inertia
    difference of its endpoint chart matrices and the nudged-off-train
    subdivision points make the contributions additive. The value does
    not depend on the subdivision or the chart schedule, which is the
    main invariance test of this module.
    """
    a, b = curve.domain
    at = _memoized(curve)
    for end in (a, b):
        if core.intersection_dim(at(end), train) > 0:
            raise EndpointOnTrain(
                f"curve endpoint t={end:g} meets the reference subspace")
    pieces = _pieces(curve.space, train, at, a, b, max_gap, seed, True)
    value = 0
    subdivision = [a]
    for pa, pb, chart in pieces:
        sa = _chart_matrix(at(pa), chart, pa)
        sb = _chart_matrix(at(pb), chart, pb)
        value += core.inertia(sa).neg - core.inertia(sb).neg
        subdivision.append(pb)
    return IndexReport(value=value, subdivision=subdivision,
                       charts_used=len(pieces), endpoint_transversal=True)


def maslov_index_monotone(curve: GrassmannCurve, train: core.LagrangianFrame,
                          max_gap: float = 0.15, seed: int = 0) -> IndexReport:
    """Maslov index of a monotone curve as a telescoping pair-index sum.

    Chart-free alternative to maslov_index: each simple piece of an
    increasing curve contributes the pair index of its endpoints, and a
    decreasing curve is the reversed increasing one with opposite sign.
    Subdivision points may sit on the train; the half-integer
    corrections cancel in the sum whenever the curve endpoints are off
    the train.
    """
    a, b = curve.domain
    at = _memoized(curve)
    for end in (a, b):
        if core.intersection_dim(at(end), train) > 0:
            raise EndpointOnTrain(
                f"curve endpoint t={end:g} meets the reference subspace")
    direction = _monotone_direction(curve, strict=False)
    pieces = _pieces(curve.space, train, at, a, b, max_gap, seed, False)
    doubled = 0
    for pa, pb, _ in pieces:
        if direction > 0:
            doubled += pair_index(train, at(pa), at(pb)).doubled
        else:
            doubled += pair_index(train, at(pb), at(pa)).doubled
    if doubled % 2:
        raise ValueError("pair-index pieces sum to a half integer; "
                         "the subdivision lost an endpoint correction")
    value = doubled // 2 if direction > 0 else -(doubled // 2)
    return IndexReport(value=value,
                       subdivision=[a] + [pb for _, pb, _ in pieces],
                       charts_used=len(pieces), endpoint_transversal=True)


def _trim(at, train, end, other):
    """Step off the train from a curve endpoint sitting on it."""
    if core.intersection_dim(at(end), train) == 0:
        return end
    length = abs(other - end)
    sign = 1.0 if other > end else -1.0
    step = _NUDGE * length
    while step < 0.25 * length:
        cand = end + sign * step
        if core.intersection_dim(at(cand), train) == 0:
            return cand
        step *= 2.0
    raise SubdivisionFailure(
        f"curve sticks to the reference subspace near t={end:g}")


def _locate(indf, tl, tr, il, ir, tol, depth=0):
    """Bisect an inertia change down to tol, splitting on intermediate
    levels so several nearby crossings come out separately."""
    if depth > 64:
        raise SubdivisionFailure("crossing localization did not stabilize")
    out = []
    while tr - tl > tol:
        tm = 0.5 * (tl + tr)
        im = indf(tm)
        if im == il:
            tl = tm
        elif im == ir:
            tr = tm
        else:
            out.extend(_locate(indf, tl, tm, il, im, tol, depth + 1))
            out.extend(_locate(indf, tm, tr, im, ir, tol, depth + 1))
            return out
    out.append((0.5 * (tl + tr), abs(il - ir)))
    return out


def conjugate_points(curve: GrassmannCurve, train: core.LagrangianFrame,
                     max_gap: float = 0.15,
                     seed: int = 0) -> List[ConjugatePoint]:
    """Train-crossing times with multiplicities, for regular monotone
    curves.

    Monotonicity makes the chart eigenvalues move one way, so the
    negative-eigenvalue count bisects cleanly and steps by the full
    multiplicity at each isolated crossing. Endpoint times lying on the
    reference (a Jacobi curve starts there) are stepped over by a
    vanishing trim; multiplicities are read as the near-kernel dimension
    of the chart matrix at the located time.
    """
    _monotone_direction(curve, strict=True)
    a, b = curve.domain
    at = _memoized(curve)
    lo = _trim(at, train, a, b)
    hi = _trim(at, train, b, a)
    pieces = _pieces(curve.space, train, at, lo, hi, max_gap, seed, True)
    tol = _TIME_TOL * curve.length
    found = []
    for pa, pb, chart in pieces:

        def indf(t, chart=chart):
            return core.inertia(_chart_matrix(at(t), chart, t)).neg

        ts = np.linspace(pa, pb, _SCAN_SAMPLES)
        inds = [indf(t) for t in ts]
        for i in range(len(ts) - 1):
            if inds[i] == inds[i + 1]:
                continue
            for t_star, jump in _locate(indf, ts[i], ts[i + 1],
                                        inds[i], inds[i + 1], tol):
                eigs = np.abs(np.linalg.eigvalsh(
                    _chart_matrix(at(t_star), chart, t_star)))
                null = int((eigs <= _MULT_TOL * (1.0 + eigs.max())).sum())
                found.append(ConjugatePoint(t=float(t_star),
                                            multiplicity=null if null
                                            else jump))
    found.sort(key=lambda p: p.t)
    merged: List[ConjugatePoint] = []
    for p in found:
        if merged and abs(p.t - merged[-1].t) <= 10.0 * tol:
            continue
        merged.append(p)
    return merged


def morse_index_regular_extremal(jc: GrassmannCurve, max_gap: float = 0.15,
                                 seed: int = 0) -> int:
    """Morse index of the extremal behind a Jacobi curve.

    Equals the total multiplicity of interior conjugate points against
    the initial subspace; a horizon whose endpoint subspace still meets
    the initial one has a degenerate second variation and is refused.
    """
    t0, t1 = jc.domain
    train = jc.eval(t0)
    if core.intersection_dim(jc.eval(t1), train) > 0:
        raise DegenerateEndpoint(
            "endpoint subspace meets the initial subspace; the second "
            "variation is degenerate at this horizon")
    pts = conjugate_points(jc, train, max_gap=max_gap, seed=seed)
    return int(sum(p.multiplicity for p in pts))
