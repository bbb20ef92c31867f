"""Hamiltonian systems on the standard phase space and their Jacobi curves.

Phase points are z = (x, y) with x the fiber block, and the flow is
x' = -dH/dy, y' = dH/dx.  The variational flow transports tangent frames
backwards along a trajectory, so pushing the fiber through it traces the
Jacobi curve of the initial point as a curve in the Lagrange
Grassmannian.  The module also carries the canonical-connection
machinery: connection coefficients from the Hessian blocks, curvature
operators of the field both by the exact natural-system shortcut and by
a generic double-bracket evaluation, level-set reduction to a quotient
symplectic space, and the Legendre-type monotonicity scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import core
from .curve import GrassmannCurve
from .errors import (BlowUp, DimensionDefect, NotRegular, ReductionRefused,
                     TangentFiber)

BLOWUP_CAP = 1e8
DEFAULT_STEP = 1e-3
THIRD_FD_STEP = 1e-4
EQUILIBRIUM_TOL = 1e-8


@dataclass
class HamiltonianSystem:
    """Callback bundle for one Hamiltonian.

    ``eval(x, y)`` returns the value, the gradient stacked as (dH/dx,
    dH/dy), and the full symmetric Hessian.  ``hxx_rate`` optionally
    supplies the derivative of the xx Hessian block along the flow,
    which the connection solver otherwise acquires by a directional
    finite difference of the Hessian callback.
    """

    n: int
    eval: Callable[[np.ndarray, np.ndarray],
                   Tuple[float, np.ndarray, np.ndarray]]
    family: str = "custom"
    hxx_rate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def _split(self, z: np.ndarray):
        z = np.asarray(z, dtype=float)
        return z[:self.n], z[self.n:]

    def value(self, z: np.ndarray) -> float:
        return float(self.eval(*self._split(z))[0])

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval(*self._split(z))[1], dtype=float)

    def hessian(self, z: np.ndarray) -> np.ndarray:
        mat = np.asarray(self.eval(*self._split(z))[2], dtype=float)
        defect = np.linalg.norm(mat - mat.T)
        if defect > 1e-6 * (1.0 + np.linalg.norm(mat)):
            raise ValueError(f"Hessian callback asymmetric, defect {defect:.3e}")
        return 0.5 * (mat + mat.T)

    def field(self, z: np.ndarray) -> np.ndarray:
        g = self.gradient(z)
        return np.concatenate([-g[self.n:], g[:self.n]])

    def linearization(self, z: np.ndarray) -> np.ndarray:
        """Jacobian of the Hamiltonian field, equal to -J Hess."""
        h2 = self.hessian(z)
        n = self.n
        return np.block([[-h2[n:, :n], -h2[n:, n:]],
                         [h2[:n, :n], h2[:n, n:]]])


# ------------------------------------------------------------------ builders


def natural_system(n: int,
                   u_value: Callable[[np.ndarray], float],
                   u_grad: Callable[[np.ndarray], np.ndarray],
                   u_hess: Callable[[np.ndarray], np.ndarray]) -> HamiltonianSystem:
    """Kinetic-plus-potential Hamiltonian H = |x|^2/2 + U(y)."""

    def ev(x, y):
        h = 0.5 * float(x @ x) + float(u_value(y))
        grad = np.concatenate([x, np.asarray(u_grad(y), dtype=float)])
        hess = np.zeros((2 * n, 2 * n))
        hess[:n, :n] = np.eye(n)
        hess[n:, n:] = np.asarray(u_hess(y), dtype=float)
        return h, grad, hess

    return HamiltonianSystem(n=n, eval=ev, family="natural",
                             hxx_rate=lambda x, y: np.zeros((n, n)))


def quadratic_potential_system(k_mat: np.ndarray) -> HamiltonianSystem:
    """Natural system with U(y) = y^T K y / 2."""
    k_mat = np.asarray(k_mat, dtype=float)
    k_mat = 0.5 * (k_mat + k_mat.T)
    n = k_mat.shape[0]
    return natural_system(n,
                          u_value=lambda y: 0.5 * float(y @ k_mat @ y),
                          u_grad=lambda y: k_mat @ y,
                          u_hess=lambda y: k_mat)


def metric_system(n: int,
                  g: Callable[[np.ndarray], np.ndarray],
                  u_value: Optional[Callable] = None,
                  u_grad: Optional[Callable] = None,
                  u_hess: Optional[Callable] = None,
                  dg: Optional[Callable] = None,
                  d2g: Optional[Callable] = None,
                  fd_step: float = 1e-6) -> HamiltonianSystem:
    """Metric Hamiltonian H = x^T g(y) x / 2 + U(y).

    ``dg(y)`` stacks the y-partials of g as a (n, n, n) tensor indexed
    by the differentiation direction first; ``d2g(y)`` the second
    partials as (n, n, n, n).  Missing derivative callbacks fall back
    to central differences of the level below.
    """

    def dg_at(y):
        if dg is not None:
            return np.asarray(dg(y), dtype=float)
        out = np.zeros((n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = fd_step
            out[k] = (np.asarray(g(y + e), dtype=float)
                      - np.asarray(g(y - e), dtype=float)) / (2.0 * fd_step)
        return out

    def d2g_at(y):
        if d2g is not None:
            return np.asarray(d2g(y), dtype=float)
        out = np.zeros((n, n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = fd_step
            out[k] = (dg_at(y + e) - dg_at(y - e)) / (2.0 * fd_step)
        return out

    def pot(y):
        if u_value is None:
            return 0.0, np.zeros(n), np.zeros((n, n))
        return (float(u_value(y)), np.asarray(u_grad(y), dtype=float),
                np.asarray(u_hess(y), dtype=float))

    def ev(x, y):
        gm = np.asarray(g(y), dtype=float)
        gm = 0.5 * (gm + gm.T)
        dgm = dg_at(y)
        u0, u1, u2 = pot(y)
        h = 0.5 * float(x @ gm @ x) + u0
        grad_y = 0.5 * np.einsum("kij,i,j->k", dgm, x, x) + u1
        grad = np.concatenate([gm @ x, grad_y])
        hxy = np.column_stack([dgm[k] @ x for k in range(n)])
        hyy = 0.5 * np.einsum("klij,i,j->kl", d2g_at(y), x, x) + u2
        hess = np.block([[gm, hxy], [hxy.T, hyy]])
        return h, grad, hess

    def rate(x, y):
        dgm = dg_at(y)
        ydot = np.asarray(g(y), dtype=float) @ x
        return np.einsum("kij,k->ij", dgm, ydot)

    return HamiltonianSystem(n=n, eval=ev, family="metric", hxx_rate=rate)


def _poly_diff(terms, k):
    out = []
    for coeff, exps in terms:
        if exps[k] > 0:
            new = list(exps)
            new[k] -= 1
            out.append((coeff * exps[k], tuple(new)))
    return out


def _poly_eval(terms, z):
    total = 0.0
    for coeff, exps in terms:
        total += coeff * float(np.prod(z ** np.asarray(exps)))
    return total


def polynomial_system(n: int, terms: Sequence, family: str = "custom") -> HamiltonianSystem:
    """Hamiltonian given by monomial terms (coeff, exponents over (x, y)).

    All derivatives, including the third-order rate the connection
    needs, come from exact term-by-term differentiation.
    """
    base = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]
    dim = 2 * n
    for _, exps in base:
        if len(exps) != dim:
            raise ValueError(f"exponent tuple must have length {dim}")
    grads = [_poly_diff(base, k) for k in range(dim)]
    hesses = [[_poly_diff(grads[k], l) for l in range(dim)] for k in range(dim)]
    # gradient tables of every xx-Hessian entry, for the exact flow rate
    third = [[[_poly_diff(hesses[i][j], k) for k in range(dim)]
              for j in range(n)] for i in range(n)]

    def ev(x, y):
        z = np.concatenate([x, y])
        h = _poly_eval(base, z)
        grad = np.array([_poly_eval(grads[k], z) for k in range(dim)])
        hess = np.array([[_poly_eval(hesses[k][l], z) for l in range(dim)]
                         for k in range(dim)])
        return h, grad, hess

    def rate(x, y):
        z = np.concatenate([x, y])
        grad = np.array([_poly_eval(grads[k], z) for k in range(dim)])
        zdot = np.concatenate([-grad[n:], grad[:n]])
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = sum(_poly_eval(third[i][j][k], z) * zdot[k]
                                for k in range(dim))
        return out

    return HamiltonianSystem(n=n, eval=ev, family=family, hxx_rate=rate)


# ---------------------------------------------------------------- integrator


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray

    @property
    def energy_drift(self) -> float:
        return float(np.abs(self.energies - self.energies[0]).max())


@dataclass
class VariationalFlow:
    times: np.ndarray
    matrices: np.ndarray

    def symplectic_defect(self) -> float:
        n2 = self.matrices.shape[1]
        j = core.standard_space(n2 // 2).form
        worst = 0.0
        for mat in self.matrices:
            worst = max(worst, np.linalg.norm(mat.T @ j @ mat - j))
        return worst


def _grid(horizon: float, step: float) -> np.ndarray:
    if step <= 0.0:
        raise ValueError("step must be positive")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    count = int(math.ceil(horizon / step - 1e-12))
    times = np.minimum(step * np.arange(count + 1), horizon)
    times[-1] = horizon
    return times


def _check_cap(z: np.ndarray, t: float):
    if not np.all(np.isfinite(z)) or np.abs(z).max() > BLOWUP_CAP:
        raise BlowUp(f"state left the norm cap near t={t:g}")


def _rk4_state(sys: HamiltonianSystem, z: np.ndarray, dt: float) -> np.ndarray:
    k1 = sys.field(z)
    k2 = sys.field(z + 0.5 * dt * k1)
    k3 = sys.field(z + 0.5 * dt * k2)
    k4 = sys.field(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_pair(sys: HamiltonianSystem, z: np.ndarray, phi: np.ndarray,
              dt: float):
    def rhs(zc, pc):
        return sys.field(zc), sys.linearization(zc) @ pc

    a1, b1 = rhs(z, phi)
    a2, b2 = rhs(z + 0.5 * dt * a1, phi + 0.5 * dt * b1)
    a3, b3 = rhs(z + 0.5 * dt * a2, phi + 0.5 * dt * b2)
    a4, b4 = rhs(z + dt * a3, phi + dt * b3)
    z_new = z + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    phi_new = phi + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    return z_new, phi_new


def flow(sys: HamiltonianSystem, z0: np.ndarray, horizon: float,
         step: float = DEFAULT_STEP) -> Trajectory:
    """Fixed-step fourth-order integration of the Hamiltonian field."""
    times = _grid(horizon, step)
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (2 * sys.n,):
        raise ValueError(f"initial state must have shape ({2 * sys.n},)")
    states = np.empty((len(times), 2 * sys.n))
    energies = np.empty(len(times))
    states[0], energies[0] = z, sys.value(z)
    for k in range(len(times) - 1):
        z = _rk4_state(sys, z, times[k + 1] - times[k])
        _check_cap(z, times[k + 1])
        states[k + 1], energies[k + 1] = z, sys.value(z)
    return Trajectory(times=times, states=states, energies=energies)


def variational_flow(sys: HamiltonianSystem,
                     traj: Trajectory) -> VariationalFlow:
    """Backward transport matrices along a trajectory.

    The forward fundamental solution of the linearized field is
    integrated together with the state and inverted symplectically, so
    each output matrix carries the tangent space at time t back to the
    start; pushing the fiber frame through these matrices yields the
    Jacobi curve.
    """
    n2 = 2 * sys.n
    j = core.standard_space(sys.n).form
    z = traj.states[0].copy()
    phi = np.eye(n2)
    mats = np.empty((len(traj.times), n2, n2))
    mats[0] = np.eye(n2)
    for k in range(len(traj.times) - 1):
        z, phi = _rk4_pair(sys, z, phi, traj.times[k + 1] - traj.times[k])
        _check_cap(z, traj.times[k + 1])
        _check_cap(phi.ravel(), traj.times[k + 1])
        mats[k + 1] = -j @ phi.T @ j
    return VariationalFlow(times=traj.times.copy(), matrices=mats)


class DenseFlow:
    """Checkpointed flow with single-step dense evaluation.

    Integrates over [-margin, horizon + margin] so curves declared on
    [0, horizon] can be probed by stencils that stick out slightly past
    the endpoints; the default margin gives the widest default stencil
    twice its reach. A single instance can back both a Jacobi curve and
    orbit sampling, saving the repeated integration.
    """

    def __init__(self, sys: HamiltonianSystem, z0: np.ndarray,
                 horizon: float, step: float = DEFAULT_STEP,
                 margin: Optional[float] = None):
        self.sys = sys
        self.horizon = float(horizon)
        if margin is None:
            # default stencils reach 4 fd steps past either endpoint
            margin = max(8.0e-3 * self.horizon, 4.0 * step)
        self.t_lo, self.t_hi = -float(margin), self.horizon + float(margin)
        n2 = 2 * sys.n
        z0 = np.asarray(z0, dtype=float).copy()

        def march(span, sign):
            grid = _grid(span, step) if span > 0 else np.array([0.0])
            states = [z0]
            phis = [np.eye(n2)]
            for k in range(len(grid) - 1):
                z, phi = _rk4_pair(sys, states[-1], phis[-1],
                                   sign * (grid[k + 1] - grid[k]))
                _check_cap(z, sign * grid[k + 1])
                _check_cap(phi.ravel(), sign * grid[k + 1])
                states.append(z)
                phis.append(phi)
            return grid, states, phis

        fwd_t, fwd_z, fwd_p = march(self.t_hi, 1.0)
        bwd_t, bwd_z, bwd_p = march(-self.t_lo, -1.0)
        self.times = np.concatenate([-bwd_t[::-1][:-1], fwd_t])
        self.states = np.array(bwd_z[::-1][:-1] + fwd_z)
        self.phis = np.array(bwd_p[::-1][:-1] + fwd_p)
        self._j = core.standard_space(sys.n).form

    def _at(self, t: float):
        t = float(t)
        span = self.t_hi - self.t_lo
        pad = 1e-9 * (1.0 + span)
        if t < self.t_lo - pad or t > self.t_hi + pad:
            raise ValueError(f"time {t:g} outside the integrated window")
        t = min(max(t, self.t_lo), self.t_hi)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = max(0, min(k, len(self.times) - 1))
        dt = t - self.times[k]
        if dt <= 1e-14 * (1.0 + span):
            return self.states[k], self.phis[k]
        return _rk4_pair(self.sys, self.states[k], self.phis[k], dt)

    def state(self, t: float) -> np.ndarray:
        return self._at(t)[0]

    def gamma(self, t: float) -> np.ndarray:
        phi = self._at(t)[1]
        return -self._j @ phi.T @ self._j


def jacobi_curve(sys: HamiltonianSystem, z0: np.ndarray, horizon: float,
                 step: float = DEFAULT_STEP,
                 dense: Optional[DenseFlow] = None) -> GrassmannCurve:
    """Curve traced by the fiber under backward transport from z0.

    Monotone decreasing whenever the xx Hessian block stays positive
    definite along the orbit. Pass a prebuilt dense flow to share the
    integration with other orbit consumers.
    """
    if dense is None:
        dense = DenseFlow(sys, z0, horizon, step)
    space = core.standard_space(sys.n)
    vert = core.vertical_frame(space).columns

    def ev(t):
        return core.make_frame(space, dense.gamma(t) @ vert)

    return GrassmannCurve(space=space, eval=ev, domain=(0.0, float(horizon)))


# --------------------------------------------------------- level reduction


@dataclass
class LevelReduction:
    """Frozen Darboux realization of the quotient along one level set."""

    space: core.SymplecticSpace
    u: np.ndarray
    v: np.ndarray
    basis: np.ndarray
    _proj: np.ndarray

    def project(self, w: np.ndarray) -> np.ndarray:
        return self._proj @ np.asarray(w, dtype=float)

    def reduce_frame(self, frame: core.LagrangianFrame,
                     rank_tol: float = core.RANK_TOL) -> core.LagrangianFrame:
        z = frame.columns
        sigma = core.standard_space(z.shape[0] // 2).form
        r = np.atleast_2d(self.u @ sigma @ z)
        scale = max(np.abs(r).max(), 1.0)
        if np.abs(r).max() <= rank_tol * scale:
            inside = np.eye(z.shape[1])
        else:
            _, sv, vt = np.linalg.svd(r)
            keep = int((sv > rank_tol * sv[0]).sum())
            inside = vt[keep:].T
        cols = self._proj @ z @ inside
        u_, sv, _ = np.linalg.svd(cols, full_matrices=False)
        rank = int((sv > rank_tol * max(sv[0], 1e-300)).sum())
        half = self.space.dim // 2
        if rank != half:
            raise DimensionDefect(
                f"quotient image has dimension {rank}, expected {half}")
        return core.make_frame(self.space, u_[:, :rank])


def level_reduction(sys: HamiltonianSystem, z0: np.ndarray) -> LevelReduction:
    """Darboux basis of the symplectic quotient by the flow direction.

    Refuses one-degree-of-freedom systems (the quotient is a point) and
    trajectories whose velocity is vertical at z0, where the level set
    fails to project to the base.
    """
    n = sys.n
    if n == 1:
        raise ReductionRefused("quotient is zero-dimensional for n=1")
    z0 = np.asarray(z0, dtype=float)
    u = sys.field(z0)
    speed = np.linalg.norm(u)
    if speed <= EQUILIBRIUM_TOL * (1.0 + np.linalg.norm(z0)):
        raise TangentFiber("stationary point: the level set has no flow direction")
    if np.linalg.norm(u[n:]) <= EQUILIBRIUM_TOL * speed:
        raise TangentFiber("flow direction lies in the fiber at z0")
    sigma = core.standard_space(n).form
    v = -sigma @ u / float(u @ u)
    null = np.linalg.svd(np.vstack([u @ sigma, v @ sigma]))[2][2:].T
    pool = [null[:, k] for k in range(null.shape[1])]
    es, fs = [], []
    while pool:
        e = pool.pop(0)
        pair = np.array([abs(e @ sigma @ w) for w in pool])
        if pair.size == 0 or pair.max() <= 1e-12:
            raise DimensionDefect("degenerate pairing in the quotient basis")
        idx = int(pair.argmax())
        f = pool.pop(idx)
        f = f / float(e @ sigma @ f)
        pool = [w - float(w @ sigma @ f) * e + float(w @ sigma @ e) * f
                for w in pool]
        es.append(e)
        fs.append(f)
    basis = np.column_stack(es + fs)
    space = core.standard_space(n - 1)
    check = basis.T @ sigma @ basis
    if np.linalg.norm(check - space.form) > 1e-9:
        raise DimensionDefect("quotient basis failed the Darboux check")
    paired = basis.T @ sigma
    half = n - 1
    proj = np.vstack([-paired[half:], paired[:half]])
    return LevelReduction(space=space, u=u, v=v, basis=basis, _proj=proj)


def reduced_jacobi_curve(sys: HamiltonianSystem, z0: np.ndarray,
                         horizon: float, step: float = DEFAULT_STEP,
                         dense: Optional[DenseFlow] = None) -> GrassmannCurve:
    """Jacobi curve pushed to the quotient along the energy level."""
    red = level_reduction(sys, z0)
    full = jacobi_curve(sys, z0, horizon, step, dense=dense)

    def ev(t):
        return red.reduce_frame(full.eval(t))

    return GrassmannCurve(space=red.space, eval=ev,
                          domain=(0.0, float(horizon)))


# -------------------------------------------------- connection and curvature


def connection_ode2(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    at: Tuple[np.ndarray, np.ndarray],
                    f_x: Optional[Callable] = None,
                    fd_step: float = 1e-6) -> np.ndarray:
    """Connection coefficients of a second-order field y'' = f(y', y).

    Half the x-Jacobian of the right side, differentiated numerically
    when no Jacobian callback is supplied.
    """
    x = np.asarray(at[0], dtype=float)
    y = np.asarray(at[1], dtype=float)
    if f_x is not None:
        return 0.5 * np.atleast_2d(np.asarray(f_x(x, y), dtype=float))
    cols = []
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = fd_step
        cols.append((np.asarray(f(x + e, y), dtype=float)
                     - np.asarray(f(x - e, y), dtype=float)) / (2.0 * fd_step))
    return 0.5 * np.column_stack(cols)


def _regular_or_raise(hxx: np.ndarray):
    sv = np.linalg.svd(hxx, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise NotRegular("xx Hessian block is singular at the point")


def _hxx_rate(sys: HamiltonianSystem, z: np.ndarray,
              fd_step: float) -> np.ndarray:
    n = sys.n
    if sys.hxx_rate is not None:
        return np.asarray(sys.hxx_rate(z[:n], z[n:]), dtype=float)
    zeta = sys.field(z)
    speed = np.linalg.norm(zeta)
    if speed == 0.0:
        return np.zeros((n, n))
    d = fd_step * (1.0 + np.abs(z).max())
    unit = zeta / speed
    plus = sys.hessian(z + d * unit)[:n, :n]
    minus = sys.hessian(z - d * unit)[:n, :n]
    return (plus - minus) / (2.0 * d) * speed


def connection_hamiltonian(sys: HamiltonianSystem,
                           at: Tuple[np.ndarray, np.ndarray],
                           fd_step: float = THIRD_FD_STEP) -> np.ndarray:
    """Connection matrix C from the Hessian blocks.

    Solves 2 hxx C hxx = (rate of hxx along the flow) - hxy hxx -
    hxx hyx; the result must come out symmetric, which is a structural
    consequence of the flow preserving the symplectic form.
    """
    z = np.concatenate([np.asarray(at[0], dtype=float),
                        np.asarray(at[1], dtype=float)])
    n = sys.n
    h2 = sys.hessian(z)
    hxx = h2[:n, :n]
    hxy = h2[:n, n:]
    _regular_or_raise(hxx)
    rhs = _hxx_rate(sys, z, fd_step) - hxy @ hxx - hxx @ hxy.T
    half = np.linalg.solve(hxx, rhs)
    c = 0.5 * np.linalg.solve(hxx, half.T).T
    defect = np.linalg.norm(c - c.T)
    if defect > 1e-6 * (1.0 + np.linalg.norm(c)):
        raise ValueError(f"connection asymmetric, defect {defect:.3e}")
    return 0.5 * (c + c.T)


def curvature_via_brackets(sys: HamiltonianSystem,
                           at: Tuple[np.ndarray, np.ndarray],
                           fd_step: float = THIRD_FD_STEP) -> np.ndarray:
    """Curvature operator from the double-bracket formula.

    Brackets the field twice against each vertical basis direction,
    with the horizontal projection taken in the canonical connection;
    derivatives of the horizontal field are acquired by a directional
    finite difference along the flow.
    """
    n = sys.n
    z0 = np.concatenate([np.asarray(at[0], dtype=float),
                         np.asarray(at[1], dtype=float)])
    c0 = connection_hamiltonian(sys, at, fd_step)
    dzeta0 = sys.linearization(z0)
    zeta0 = sys.field(z0)
    speed = np.linalg.norm(zeta0)

    def phi_field(z, i):
        b = -sys.hessian(z)[:n, :n][:, i]
        cz = connection_hamiltonian(sys, (z[:n], z[n:]), fd_step)
        return np.concatenate([cz.T @ b, b])

    rmat = np.empty((n, n))
    d = fd_step * (1.0 + np.abs(z0).max())
    for i in range(n):
        if speed == 0.0:
            dphi = np.zeros(2 * n)
        else:
            unit = zeta0 / speed
            dphi = (phi_field(z0 + d * unit, i)
                    - phi_field(z0 - d * unit, i)) / (2.0 * d) * speed
        br = dphi - dzeta0 @ phi_field(z0, i)
        ver = br[:n] - c0.T @ br[n:]
        rmat[:, i] = -ver
    return rmat


def curvature_operator_field(sys: HamiltonianSystem,
                             at: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Curvature operator of the field in the fiber basis at a point."""
    z = np.concatenate([np.asarray(at[0], dtype=float),
                        np.asarray(at[1], dtype=float)])
    n = sys.n
    h2 = sys.hessian(z)
    _regular_or_raise(h2[:n, :n])
    if sys.family == "natural":
        if np.linalg.norm(h2[:n, :n] - np.eye(n)) > 1e-8:
            raise ValueError("natural system must have identity xx block")
        return h2[n:, n:].copy()
    return curvature_via_brackets(sys, at)


# ------------------------------------------------------------- monotonicity


@dataclass(frozen=True)
class MonotonicityReport:
    times: np.ndarray
    inertias: tuple
    uniform_definite: bool
    sign: int


def monotonicity_test(sys: HamiltonianSystem,
                      traj: Trajectory,
                      max_samples: int = 201) -> MonotonicityReport:
    """Inertia scan of the xx Hessian block along a trajectory."""
    count = len(traj.times)
    idx = np.unique(np.linspace(0, count - 1,
                                min(count, max_samples)).astype(int))
    inertias = []
    for k in idx:
        hxx = sys.hessian(traj.states[k])[:sys.n, :sys.n]
        inertias.append(core.inertia(hxx))
    pos = all(i.neg == 0 and i.zero == 0 for i in inertias)
    neg = all(i.pos == 0 and i.zero == 0 for i in inertias)
    sign = 1 if pos else (-1 if neg else 0)
    return MonotonicityReport(times=traj.times[idx],
                              inertias=tuple(inertias),
                              uniform_definite=sign != 0,
                              sign=sign)
