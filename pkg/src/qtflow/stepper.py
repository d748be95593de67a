"""Time integration of the mass-lumped, linearly implicit tensor flow.

One step solves a single SPD system for the new Q field.  Because the
lumped inner product is diagonal, the auxiliary variable can be eliminated
exactly before the solve:

    r_new(z) = r(z) + P(Q(z)) : (Q_new(z) - Q(z))

holds nodewise, so substituting the midpoint value of r into the momentum
equation turns the coupled (Q, r) update into

    [ (1/dt + sigma/dt^2) diag(w) + L1 K + (L2+L3)/2 D + R ] q_new = rhs,

where w are the lumped weights, K the interleaved scalar stiffness, D the
divergence form and R the per-node rank-one operator
x -> w_z (p_z . x_z) p_z built from P at the current state.  With sigma = 0
the two-level terms drop and only one history level is kept.

Fields are stored over all mesh nodes; the homogeneous Dirichlet condition
keeps boundary Q entries at zero, and boundary r values stay at their
initial value because their update increment vanishes there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assembly
from .mesh import StructuredMesh
from .model import Params, STTensor2, aux_P, aux_r
from .solver import ConvergenceError, StepOperator, cg_solve


@dataclass
class SimState:
    """Two-level state (Q^{n-1}, Q^n, r^n); Qprev is None when sigma = 0."""

    Qprev: np.ndarray | None  # (N, 2) or None
    Qcurr: np.ndarray         # (N, 2)
    r: np.ndarray             # (N,)
    n: int
    t: float


def interpolate_qfield(mesh: StructuredMesh, data) -> np.ndarray:
    """Nodal interpolation with homogeneous Dirichlet boundary values.

    data is either a callable (x, y) -> (q1, q2) or an (N, 2) array of
    nodal values; boundary entries are forced to zero either way.
    """
    if callable(data):
        q1, q2 = data(mesh.nodes[:, 0], mesh.nodes[:, 1])
        field = np.column_stack([
            np.broadcast_to(q1, mesh.n_nodes),
            np.broadcast_to(q2, mesh.n_nodes),
        ]).astype(float)
    else:
        field = np.array(data, dtype=float)
        if field.shape != (mesh.n_nodes, 2):
            raise ValueError("field shape %s does not match mesh" % (field.shape,))
    field[mesh.is_boundary] = 0.0
    return field


def nodal_r(mesh: StructuredMesh, p: Params, Qfield: np.ndarray) -> np.ndarray:
    return np.asarray(aux_r(STTensor2(Qfield[:, 0], Qfield[:, 1]), p))


def initialize(mesh: StructuredMesh, p: Params, dt: float, Q0, Qt0=None) -> SimState:
    """Build the starting state.

    For sigma > 0 the second level is the explicit start
    Q^1 = Q^0 + dt * Qt0 and r^1 follows from the lumped r update; for
    sigma = 0 a single level suffices and Qt0 is ignored.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    Q0f = interpolate_qfield(mesh, Q0)
    r0 = nodal_r(mesh, p, Q0f)
    if p.sigma == 0.0:
        return SimState(Qprev=None, Qcurr=Q0f, r=r0, n=0, t=0.0)

    Qt0f = np.zeros_like(Q0f) if Qt0 is None else interpolate_qfield(mesh, Qt0)
    Q1 = Q0f + dt * Qt0f
    P0 = aux_P(STTensor2(Q0f[:, 0], Q0f[:, 1]), p)
    dq = Q1 - Q0f
    r1 = r0 + 2.0 * (P0.q1 * dq[:, 0] + P0.q2 * dq[:, 1])
    return SimState(Qprev=Q0f, Qcurr=Q1, r=r1, n=1, t=dt)


def build_default_Qt0(mesh: StructuredMesh, p: Params,
                      Q0field: np.ndarray, r0field: np.ndarray) -> np.ndarray:
    """Discrete initial time derivative L1*Lap(Q0) - r0 P(Q0).

    The Laplacian acts through the assembled stiffness and the inverse
    lumped mass, keeping the initialization consistent with the mesh.
    """
    idx = mesh.interior_nodes
    K = assembly.assemble_stiffness(mesh)
    x0 = Q0field[idx].reshape(-1)
    gamma_dof = np.repeat(mesh.gamma[idx], 2)
    lap = -(p.L1) * (K @ x0) / gamma_dof

    P0 = aux_P(STTensor2(Q0field[idx, 0], Q0field[idx, 1]), p)
    out = np.zeros_like(Q0field)
    out[idx, 0] = lap.reshape(-1, 2)[:, 0] - r0field[idx] * P0.q1
    out[idx, 1] = lap.reshape(-1, 2)[:, 1] - r0field[idx] * P0.q2
    return out


def step(state: SimState, p: Params, dt: float, mesh: StructuredMesh,
         K, D, weights, cg_tol: float = 1e-10, maxiter: int | None = None) -> SimState:
    """Advance one time step; returns the new state."""
    idx = mesh.interior_nodes
    qn = state.Qcurr[idx].reshape(-1)
    rn = state.r[idx]
    Pn = aux_P(STTensor2(state.Qcurr[idx, 0], state.Qcurr[idx, 1]), p)
    pvec = np.column_stack([Pn.q1, Pn.q2])

    sigma = p.sigma
    cm = 1.0 / dt + sigma / dt ** 2
    ck = p.L1
    cd = 0.5 * (p.L2 + p.L3)
    A = StepOperator(weights, K, D, pvec, cm, ck, cd)

    rhs = (1.0 / dt + 2.0 * sigma / dt ** 2) * (weights * qn)
    if sigma > 0.0:
        qprev = state.Qprev[idx].reshape(-1)
        rhs -= (sigma / dt ** 2) * (weights * qprev)
    rhs -= ck * (K @ qn)
    if D is not None and cd != 0.0:
        rhs -= cd * (D @ qn)
    rhs -= weights * np.column_stack([rn * Pn.q1, rn * Pn.q2]).reshape(-1)
    s = (pvec * qn.reshape(-1, 2)).sum(axis=1)
    rhs += weights * (pvec * s[:, None]).reshape(-1)

    x, _ = cg_solve(A, rhs, tol=cg_tol, maxiter=maxiter, x0=qn)
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("non-finite values in Q update", residual=float("nan"))

    Qnew = np.zeros_like(state.Qcurr)
    Qnew[idx] = x.reshape(-1, 2)
    dq = Qnew[idx] - state.Qcurr[idx]
    rnew = state.r.copy()
    rnew[idx] += 2.0 * (pvec[:, 0] * dq[:, 0] + pvec[:, 1] * dq[:, 1])
    if not np.all(np.isfinite(rnew)):
        raise ConvergenceError("non-finite values in r update", residual=float("nan"))

    return SimState(
        Qprev=state.Qcurr if sigma > 0.0 else None,
        Qcurr=Qnew,
        r=rnew,
        n=state.n + 1,
        t=state.t + dt,
    )
