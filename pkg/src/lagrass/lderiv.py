"""Constrained critical points and their phase-space linearizations.

A finite-dimensional variational problem is a scalar objective together
with a vector constraint map.  At a critical point of the objective
restricted to a level set of the constraint, the second-order data is a
pair (A, Q): the constraint Jacobian and the multiplier-corrected
Hessian.  This module extracts that pair, restricts the Hessian to the
constraint kernel, and maps the pair to a Lagrangian subspace of the
standard symplectic space on the constraint target,

    L(A, Q) = {(zeta, A v) : zeta A + v^T Q = 0},

whose position relative to the fiber {(zeta, 0)} mirrors the
degeneracy of the restricted Hessian.  Index deltas along parametric
families are computed by running the intersection count of
:mod:`lagrass.maslov` over the resulting curve of subspaces and are
cross-checked against direct inertia bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import core
from .curve import GrassmannCurve
from .errors import DimensionDefect, EndpointDegenerate, RankDrop
from .maslov import maslov_index

NEWTON_TOL = 1e-10
FD_STEP = 1e-6


def _nullspace(mat: np.ndarray, rank_tol: float = core.RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the right nullspace, possibly zero columns."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    _, sv, vt = np.linalg.svd(mat)
    top = sv[0] if sv.size else 0.0
    rank = int((sv > rank_tol * max(top, 1.0e-300)).sum())
    return vt[rank:].T


def _span(cols: np.ndarray, rank_tol: float = core.RANK_TOL) -> np.ndarray:
    if cols.size == 0:
        return cols.reshape(cols.shape[0], 0)
    u, sv, _ = np.linalg.svd(cols, full_matrices=False)
    rank = int((sv > rank_tol * max(sv[0], 1.0e-300)).sum())
    return u[:, :rank]


def _rank(mat: np.ndarray, rank_tol: float = core.RANK_TOL) -> int:
    sv = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    if sv.size == 0:
        return 0
    return int((sv > rank_tol * max(sv[0], 1.0e-300)).sum())


# --------------------------------------------------------------- the problem


@dataclass
class FiniteProblem:
    """Objective and constraint with optional analytic derivatives.

    Derivative callbacks left as None are replaced by central finite
    differences with step ``fd_step`` scaled by the evaluation point.
    The ``fd_fallback`` flag records that substitution so reports can
    mark derived quantities as approximate.
    """

    dim_w: int
    m: int
    j_value: Callable[[np.ndarray], float]
    phi_value: Callable[[np.ndarray], np.ndarray]
    j_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    j_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    phi_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    phi_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = FD_STEP

    @property
    def fd_fallback(self) -> bool:
        return any(cb is None for cb in
                   (self.j_grad, self.j_hess, self.phi_jac, self.phi_hess))

    def _h(self, w: np.ndarray) -> float:
        return self.fd_step * (1.0 + float(np.abs(w).max(initial=0.0)))

    def grad_j(self, w: np.ndarray) -> np.ndarray:
        if self.j_grad is not None:
            return np.asarray(self.j_grad(w), dtype=float)
        h = self._h(w)
        out = np.zeros(self.dim_w)
        for i in range(self.dim_w):
            e = np.zeros(self.dim_w)
            e[i] = h
            out[i] = (self.j_value(w + e) - self.j_value(w - e)) / (2.0 * h)
        return out

    def hess_j(self, w: np.ndarray) -> np.ndarray:
        if self.j_hess is not None:
            mat = np.asarray(self.j_hess(w), dtype=float)
            return 0.5 * (mat + mat.T)
        h = self._h(w)
        mat = np.zeros((self.dim_w, self.dim_w))
        for i in range(self.dim_w):
            ei = np.zeros(self.dim_w)
            ei[i] = h
            for j in range(i, self.dim_w):
                ej = np.zeros(self.dim_w)
                ej[j] = h
                val = (self.j_value(w + ei + ej) - self.j_value(w + ei - ej)
                       - self.j_value(w - ei + ej)
                       + self.j_value(w - ei - ej)) / (4.0 * h * h)
                mat[i, j] = mat[j, i] = val
        return mat

    def jac_phi(self, w: np.ndarray) -> np.ndarray:
        if self.phi_jac is not None:
            return np.atleast_2d(np.asarray(self.phi_jac(w), dtype=float))
        h = self._h(w)
        cols = []
        for i in range(self.dim_w):
            e = np.zeros(self.dim_w)
            e[i] = h
            cols.append((np.asarray(self.phi_value(w + e), dtype=float)
                         - np.asarray(self.phi_value(w - e), dtype=float))
                        / (2.0 * h))
        return np.column_stack(cols)

    def hess_phi(self, w: np.ndarray) -> np.ndarray:
        """Stack of component Hessians, shape (m, dim_w, dim_w)."""
        if self.phi_hess is not None:
            ten = np.asarray(self.phi_hess(w), dtype=float)
            return 0.5 * (ten + np.swapaxes(ten, 1, 2))
        h = self._h(w)
        ten = np.zeros((self.m, self.dim_w, self.dim_w))
        for i in range(self.dim_w):
            ei = np.zeros(self.dim_w)
            ei[i] = h
            for j in range(i, self.dim_w):
                ej = np.zeros(self.dim_w)
                ej[j] = h
                val = (np.asarray(self.phi_value(w + ei + ej), dtype=float)
                       - np.asarray(self.phi_value(w + ei - ej), dtype=float)
                       - np.asarray(self.phi_value(w - ei + ej), dtype=float)
                       + np.asarray(self.phi_value(w - ei - ej), dtype=float)
                       ) / (4.0 * h * h)
                ten[:, i, j] = ten[:, j, i] = val
        return ten

    def corrected_hessian(self, w: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        """Objective Hessian minus the multiplier-weighted constraint one."""
        mat = self.hess_j(w) - np.tensordot(np.asarray(zeta, dtype=float),
                                            self.hess_phi(w), axes=1)
        return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class LagrangianPoint:
    """Candidate critical point with its row of multipliers."""

    w: np.ndarray
    zeta: np.ndarray


def stationarity_residual(problem: FiniteProblem,
                          point: LagrangianPoint) -> float:
    r = point.zeta @ problem.jac_phi(point.w) - problem.grad_j(point.w)
    return float(np.linalg.norm(r))


def lagrangian_point(problem: FiniteProblem,
                     w0: np.ndarray,
                     zeta0: np.ndarray,
                     target: Optional[np.ndarray] = None,
                     tol: float = NEWTON_TOL,
                     max_iter: int = 60) -> LagrangianPoint:
    """Damped Newton refinement of the multiplier equations.

    With ``target`` given the constraint value is pinned as well,
    otherwise only stationarity is solved and the constraint level
    floats.  Raises ValueError when the residual fails to reach ``tol``.
    """
    w = np.asarray(w0, dtype=float).copy()
    zeta = np.asarray(zeta0, dtype=float).copy()

    def residual(w_, zeta_):
        r = zeta_ @ problem.jac_phi(w_) - problem.grad_j(w_)
        if target is not None:
            r = np.concatenate([r, np.asarray(problem.phi_value(w_),
                                              dtype=float) - target])
        return r

    r = residual(w, zeta)
    for _ in range(max_iter):
        norm = np.linalg.norm(r)
        if norm <= tol:
            return LagrangianPoint(w=w, zeta=zeta)
        a = problem.jac_phi(w)
        q = problem.corrected_hessian(w, zeta)
        top = np.hstack([-q, a.T])
        if target is None:
            jac = top
        else:
            jac = np.vstack([top,
                             np.hstack([a, np.zeros((problem.m, problem.m))])])
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        lam = 1.0
        while True:
            w_try = w + lam * step[:problem.dim_w]
            z_try = zeta + lam * step[problem.dim_w:]
            r_try = residual(w_try, z_try)
            if np.linalg.norm(r_try) <= (1.0 - 0.25 * lam) * norm:
                break
            lam *= 0.5
            if lam < 1e-8:
                break
        w, zeta, r = w_try, z_try, r_try
    if np.linalg.norm(r) <= tol:
        return LagrangianPoint(w=w, zeta=zeta)
    raise ValueError(
        f"no stationary point within {max_iter} iterations, "
        f"residual {np.linalg.norm(r):.3e}")


# ---------------------------------------------------------- second variation


@dataclass(frozen=True)
class LDerivData:
    """Constraint Jacobian A and corrected Hessian Q at a critical point."""

    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if q.shape[0] != q.shape[1] or a.shape[1] != q.shape[0]:
            raise ValueError("incompatible shapes for A and Q")
        skew = np.linalg.norm(q - q.T)
        if skew > 1e-8 * (1.0 + np.linalg.norm(q)):
            raise ValueError(f"Q not symmetric, defect {skew:.3e}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "Q", 0.5 * (q + q.T))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def dim_w(self) -> int:
        return self.A.shape[1]


def lderiv_data(problem: FiniteProblem, point: LagrangianPoint) -> LDerivData:
    return LDerivData(A=problem.jac_phi(point.w),
                      Q=problem.corrected_hessian(point.w, point.zeta))


def _kernel_restriction(data: LDerivData,
                        rank_tol: float = core.RANK_TOL) -> np.ndarray:
    k = _nullspace(data.A, rank_tol)
    return k.T @ data.Q @ k


def hessian_on_kernel(problem: FiniteProblem,
                      point: LagrangianPoint,
                      rank_tol: float = core.RANK_TOL) -> core.QuadraticForm:
    """Corrected Hessian restricted to the constraint kernel.

    The constraint Jacobian must have full row rank at the point; a
    rank drop means the multiplier rule itself degenerates and the
    restriction is not the right object to look at.
    """
    data = lderiv_data(problem, point)
    if _rank(data.A, rank_tol) < problem.m:
        raise RankDrop(
            f"constraint Jacobian rank {_rank(data.A, rank_tol)} < {problem.m}")
    mat = _kernel_restriction(data, rank_tol)
    return core.QuadraticForm(dim=mat.shape[0], matrix=mat)


def l_derivative(data: LDerivData,
                 rank_tol: float = core.RANK_TOL) -> core.LagrangianFrame:
    """Lagrangian subspace attached to the pair (A, Q).

    Solutions (zeta, v) of zeta A + v^T Q = 0 are pushed to phase
    space as (zeta, A v).  The image is Lagrangian whenever it has the
    full dimension m; a computed shortfall signals that the kernel
    extraction lost directions to cancellation.
    """
    m = data.m
    null = _nullspace(np.hstack([data.A.T, data.Q]), rank_tol)
    zeta = null[:m]
    v = null[m:]
    cols = _span(np.vstack([zeta, data.A @ v]), rank_tol)
    if cols.shape[1] != m:
        raise DimensionDefect(
            f"solution space maps to dimension {cols.shape[1]}, expected {m}")
    return core.make_frame(core.standard_space(m), cols)


@dataclass(frozen=True)
class DualityCheck:
    hessian_nondegenerate: bool
    transversal_to_fiber: bool


def duality_check(data: LDerivData,
                  rank_tol: float = core.RANK_TOL) -> DualityCheck:
    """Both sides of the degeneracy correspondence, computed separately.

    Nondegeneracy of the kernel restriction and transversality of
    L(A, Q) to the fiber are equivalent; returning both booleans lets
    tests confirm the equivalence instead of assuming it.
    """
    if _rank(data.A, rank_tol) < data.m:
        raise RankDrop("constraint Jacobian is rank deficient")
    rest = _kernel_restriction(data, rank_tol)
    nondeg = core.inertia(rest, rank_tol).zero == 0
    frame = l_derivative(data, rank_tol)
    fiber = core.vertical_frame(core.standard_space(data.m))
    trans = core.intersection_dim(frame, fiber, rank_tol) == 0
    return DualityCheck(hessian_nondegenerate=nondeg,
                        transversal_to_fiber=trans)


def family_index_delta(family: Callable[[float], LDerivData],
                       tau0: float,
                       tau1: float,
                       max_gap: float = 0.15,
                       seed: int = 0) -> int:
    """Drop in the restricted-Hessian index across a parameter interval.

    The family is mapped to a curve of Lagrangian subspaces and the
    intersection count with the fiber is accumulated; the result is
    cross-checked against the endpoint inertias and must match, so a
    family that violates the continuity assumptions in between raises
    instead of returning a silently wrong integer.
    """
    tau0, tau1 = float(tau0), float(tau1)
    ends = []
    for tau in (tau0, tau1):
        ine = core.inertia(_kernel_restriction(family(tau)))
        if ine.zero:
            raise EndpointDegenerate(
                f"restricted Hessian singular at tau={tau:g}")
        ends.append(ine.neg)
    m = family(tau0).m
    space = core.standard_space(m)
    curve = GrassmannCurve(space=space,
                           eval=lambda tau: l_derivative(family(tau)),
                           domain=(tau0, tau1))
    report = maslov_index(curve, core.vertical_frame(space),
                          max_gap=max_gap, seed=seed)
    direct = ends[0] - ends[1]
    if report.value != direct:
        raise ArithmeticError(
            f"intersection count {report.value} disagrees with endpoint "
            f"inertia drop {direct}")
    return report.value
