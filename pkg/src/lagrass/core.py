"""Symplectic vector spaces, Lagrangian frames, Darboux charts, inertia.

Conventions (fixed here, inherited everywhere else):
  * phase vectors are stacked (p, q) with the fiber block p first,
  * the standard form is sigma((p,q),(p',q')) = p.q' - p'.q, i.e. the
    matrix J = [[0, I], [-I, 0]],
  * graph subspaces are over the first factor: {(z, S z)} with frame
    [I; S], so the vertical fiber is [I; 0] and the horizontal is [0; I].

All rank and transversality decisions are relative with tolerance
rank_tol (default 1e-9). Frames are column-orthonormalized on
construction; subspace identity is always tested through principal
angles, never through raw matrix comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotInChart, NotTransversal, SearchExhausted

RANK_TOL = 1e-9
ISOTROPY_TOL = 1e-8

# deterministic schedule for transversal_complement: canonical complement,
# graphs k*I, then this many seeded random symmetric graphs
_GRAPH_KS = (1, -1, 2, -2, 3, -3, 4, -4)
_RANDOM_TRIES = 23
MAX_CANDIDATES = 1 + len(_GRAPH_KS) + _RANDOM_TRIES


@dataclass(frozen=True)
class SymplecticSpace:
    n: int
    form: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.form, dtype=float)
        if f.shape != (2 * self.n, 2 * self.n):
            raise ValueError("form must be 2n x 2n")
        scale = np.linalg.norm(f)
        if np.linalg.norm(f + f.T) > 1e-12 * max(scale, 1.0):
            raise ValueError("form must be skew-symmetric")
        if np.linalg.svd(f, compute_uv=False)[-1] <= 1e-12 * max(scale, 1.0):
            raise ValueError("form must be nondegenerate")
        object.__setattr__(self, "form", f)

    @property
    def dim(self) -> int:
        return 2 * self.n


@dataclass(frozen=True)
class LagrangianFrame:
    space: SymplecticSpace
    columns: np.ndarray  # 2n x n, orthonormal

    @property
    def n(self) -> int:
        return self.space.n


@dataclass(frozen=True)
class Chart:
    """Darboux chart built from a transversal Lagrangian pair (Pi, Delta).

    basis is the 2n x 2n matrix [E | F] with E spanning Pi, F spanning
    Delta and sigma(e_i, f_j) = delta_ij; subspaces transversal to Delta
    appear as graphs {(z, S z)} in these coordinates, with Pi the zero
    graph and ker S = (subspace intersect Pi).
    """

    pi_frame: LagrangianFrame
    delta_frame: LagrangianFrame
    basis: np.ndarray
    basis_inv: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.pi_frame.n

    @property
    def space(self) -> SymplecticSpace:
        return self.pi_frame.space


@dataclass(frozen=True)
class ChartRep:
    chart: Chart
    S: np.ndarray


@dataclass(frozen=True)
class QuadraticForm:
    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.dim, self.dim):
            raise ValueError("matrix dimension mismatch")
        scale = np.linalg.norm(m)
        if np.linalg.norm(m - m.T) > 1e-8 * max(scale, 1.0):
            raise ValueError("matrix must be symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))


@dataclass(frozen=True)
class Inertia:
    neg: int
    zero: int
    pos: int

    @property
    def dim(self) -> int:
        return self.neg + self.zero + self.pos


def standard_space(n: int) -> SymplecticSpace:
    """Standard 2n-dimensional symplectic space with form [[0, I], [-I, 0]]."""
    if n < 1:
        raise ValueError("n must be positive")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    form = np.block([[zero, eye], [-eye, zero]])
    return SymplecticSpace(n=n, form=form)


def vertical_frame(space: SymplecticSpace) -> LagrangianFrame:
    """The fiber subspace {(p, 0)}."""
    cols = np.vstack([np.eye(space.n), np.zeros((space.n, space.n))])
    return make_frame(space, cols)


def horizontal_frame(space: SymplecticSpace) -> LagrangianFrame:
    """The base subspace {(0, q)}."""
    cols = np.vstack([np.zeros((space.n, space.n)), np.eye(space.n)])
    return make_frame(space, cols)


def orthonormal_columns(cols: np.ndarray, rank_tol: float = RANK_TOL):
    """QR-orthonormalize, raising if columns are numerically dependent."""
    cols = np.asarray(cols, dtype=float)
    q, r = np.linalg.qr(cols)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= rank_tol * max(diag.max(), 1e-300):
        raise ValueError("columns are numerically rank deficient")
    return q


def make_frame(space: SymplecticSpace, columns: np.ndarray,
               rank_tol: float = RANK_TOL) -> LagrangianFrame:
    """Orthonormalize columns and validate the Lagrangian invariants."""
    cols = np.asarray(columns, dtype=float)
    if cols.shape != (space.dim, space.n):
        raise ValueError("frame must be 2n x n")
    q = orthonormal_columns(cols, rank_tol)
    defect = np.linalg.norm(q.T @ space.form @ q)
    if defect > ISOTROPY_TOL:
        raise ValueError(f"frame is not isotropic (defect {defect:.3e})")
    return LagrangianFrame(space=space, columns=q)


def subspace_gap(f0: LagrangianFrame, f1: LagrangianFrame) -> float:
    """sin of the largest principal angle between the two subspaces.

    Computed as the spectral norm of the difference of orthogonal
    projectors, which stays accurate near zero where sqrt(1 - cos^2)
    would lose half the digits.
    """
    p0 = f0.columns @ f0.columns.T
    p1 = f1.columns @ f1.columns.T
    return float(np.linalg.norm(p0 - p1, 2))


def same_subspace(f0: LagrangianFrame, f1: LagrangianFrame,
                  tol: float = 1e-8) -> bool:
    return subspace_gap(f0, f1) <= tol


def intersection_dim(f0: LagrangianFrame, f1: LagrangianFrame,
                     rank_tol: float = RANK_TOL) -> int:
    """dim of the intersection, read off the rank defect of [Z0 | Z1]."""
    stacked = np.hstack([f0.columns, f1.columns])
    sv = np.linalg.svd(stacked, compute_uv=False)
    return int(np.sum(sv <= rank_tol * sv[0]))


def is_transversal(f0: LagrangianFrame, f1: LagrangianFrame,
                   rank_tol: float = RANK_TOL) -> bool:
    return intersection_dim(f0, f1, rank_tol) == 0


def projector(v0: LagrangianFrame, v1: LagrangianFrame,
              rank_tol: float = RANK_TOL) -> np.ndarray:
    """Projector onto v1 along v0 (kernel contains v0, identity on v1)."""
    n = v0.n
    stacked = np.hstack([v0.columns, v1.columns])
    sv = np.linalg.svd(stacked, compute_uv=False)
    if sv[-1] <= rank_tol * sv[0]:
        raise NotTransversal("v0 and v1 intersect nontrivially")
    sel = np.zeros((2 * n, 2 * n))
    sel[n:, n:] = np.eye(n)
    return stacked @ sel @ np.linalg.inv(stacked)


def darboux_chart(pi_frame: LagrangianFrame,
                  delta_frame: LagrangianFrame,
                  rank_tol: float = RANK_TOL) -> Chart:
    """Assemble the Darboux basis [E | F] from a transversal pair."""
    space = pi_frame.space
    sigma = space.form
    e = pi_frame.columns
    g = e.T @ sigma @ delta_frame.columns
    sv = np.linalg.svd(g, compute_uv=False)
    if sv[-1] <= rank_tol * max(sv[0], 1e-300):
        raise NotTransversal("Pi and Delta intersect nontrivially")
    f = delta_frame.columns @ np.linalg.inv(g)
    basis = np.hstack([e, f])
    # sigma-orthogonality makes the inverse explicit: M^T sigma M = J
    jstd = standard_space(space.n).form
    basis_inv = -jstd @ basis.T @ sigma
    return Chart(pi_frame=pi_frame, delta_frame=delta_frame,
                 basis=basis, basis_inv=basis_inv)


def standard_chart(space: SymplecticSpace) -> Chart:
    return darboux_chart(vertical_frame(space), horizontal_frame(space))


def graph_coords(chart: Chart, columns: np.ndarray,
                 rank_tol: float = RANK_TOL) -> np.ndarray:
    """Raw graph matrix of an n-dim subspace in the chart, no symmetry check.

    Non-Lagrangian subspaces are welcome here; they come out with an
    asymmetric matrix, which is exactly how tests detect them.
    """
    w = chart.basis_inv @ np.asarray(columns, dtype=float)
    n = chart.n
    top, bottom = w[:n], w[n:]
    sv = np.linalg.svd(top, compute_uv=False)
    if sv[-1] <= rank_tol * max(sv[0], 1e-300):
        raise NotInChart("subspace meets the chart complement Delta")
    return np.linalg.solve(top.T, bottom.T).T


def chart_coords(frame: LagrangianFrame, chart: Chart,
                 rank_tol: float = RANK_TOL) -> ChartRep:
    s = graph_coords(chart, frame.columns, rank_tol)
    asym = np.linalg.norm(s - s.T)
    if asym > 1e-6 * (1.0 + np.linalg.norm(s)):
        raise ValueError(f"chart matrix asymmetric ({asym:.3e}); "
                         "input subspace is not Lagrangian")
    return ChartRep(chart=chart, S=0.5 * (s + s.T))


def frame_from_chart(rep: ChartRep) -> LagrangianFrame:
    n = rep.chart.n
    e = rep.chart.basis[:, :n]
    f = rep.chart.basis[:, n:]
    return make_frame(rep.chart.space, e + f @ rep.S)


def inertia(q, rank_tol: float = RANK_TOL) -> Inertia:
    """Eigenvalue inertia with a relative zero threshold."""
    m = q.matrix if isinstance(q, QuadraticForm) else np.asarray(q, dtype=float)
    m = 0.5 * (m + m.T)
    if m.size == 0:
        return Inertia(0, 0, 0)
    eigs = np.linalg.eigvalsh(m)
    scale = np.abs(eigs).max()
    # below ~100 eps the matrix is indistinguishable from the zero matrix
    if scale <= 2.5e-14:
        return Inertia(0, m.shape[0], 0)
    thr = rank_tol * scale
    neg = int(np.sum(eigs < -thr))
    pos = int(np.sum(eigs > thr))
    return Inertia(neg=neg, zero=m.shape[0] - neg - pos, pos=pos)


def _graph_candidate(space: SymplecticSpace, s: np.ndarray) -> LagrangianFrame:
    cols = np.vstack([np.eye(space.n), s])
    return make_frame(space, cols)


def transversal_complement(frame: LagrangianFrame, avoid=(),
                           rank_tol: float = RANK_TOL,
                           seed: int = 0) -> LagrangianFrame:
    """Deterministic search for a Lagrangian complement.

    Schedule: sigma-orthogonal complement J*Lambda, then the graphs
    {(z, k z)} for small integers k, then seeded random symmetric
    graphs. The first candidate transversal to the frame and to every
    member of `avoid` wins; SearchExhausted after MAX_CANDIDATES.
    """
    space = frame.space
    must_miss = [frame, *avoid]

    def ok(candidate: LagrangianFrame) -> bool:
        return all(is_transversal(candidate, other, rank_tol)
                   for other in must_miss)

    cand = make_frame(space, space.form @ frame.columns)
    if ok(cand):
        return cand
    for k in _GRAPH_KS:
        cand = _graph_candidate(space, float(k) * np.eye(space.n))
        if ok(cand):
            return cand
    rng = np.random.default_rng(seed)
    for _ in range(_RANDOM_TRIES):
        a = rng.standard_normal((space.n, space.n))
        cand = _graph_candidate(space, a + a.T)
        if ok(cand):
            return cand
    raise SearchExhausted(
        f"no transversal complement among {MAX_CANDIDATES} candidates")


def random_symplectic(space: SymplecticSpace, rng,
                      factors: int = 4, scale: float = 0.5) -> np.ndarray:
    """Random symplectic matrix as a product of elementary factors."""
    n = space.n
    eye = np.eye(n)
    zero = np.zeros((n, n))
    jstd = np.block([[zero, eye], [-eye, zero]])
    t = np.eye(2 * n)
    for _ in range(factors):
        kind = rng.integers(0, 4)
        if kind == 0:
            a = np.eye(n) + scale * rng.standard_normal((n, n)) / np.sqrt(n)
            fac = np.block([[a, zero], [zero, np.linalg.inv(a).T]])
        elif kind == 1:
            b = rng.standard_normal((n, n)) * scale
            fac = np.block([[eye, b + b.T], [zero, eye]])
        elif kind == 2:
            c = rng.standard_normal((n, n)) * scale
            fac = np.block([[eye, zero], [c + c.T, eye]])
        else:
            fac = jstd
        t = t @ fac
    return t


def random_lagrangian(space: SymplecticSpace, rng) -> LagrangianFrame:
    t = random_symplectic(space, rng)
    return make_frame(space, t @ vertical_frame(space).columns)


def symplectic_defect(space: SymplecticSpace, t: np.ndarray) -> float:
    sigma = space.form
    return float(np.linalg.norm(t.T @ sigma @ t - sigma)
                 / np.linalg.norm(sigma))


def sym_inv_sqrt(m: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Inverse square root of a symmetric positive definite matrix."""
    m = 0.5 * (m + np.asarray(m).T)
    w, v = np.linalg.eigh(m)
    if w.min() <= rank_tol * max(abs(w).max(), 1e-300):
        raise ValueError("matrix is not positive definite")
    return v @ np.diag(1.0 / np.sqrt(w)) @ v.T
