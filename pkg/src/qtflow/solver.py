"""Preconditioned conjugate gradients for the per-step SPD system.

The operator of one implicit time step is applied matrix-free: the sparse
stiffness and divergence forms are reused across steps and the per-node
rank-one term coming from the energy quadratization is recomputed from the
current state without assembling a matrix.
"""

from __future__ import annotations

import numpy as np


class ConvergenceError(RuntimeError):
    """CG failed to reach the requested residual within maxiter."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class StepOperator:
    """SPD operator  c_m diag(w) + c_k K + c_d D + rank-one per node.

    The rank-one part applies x -> w_z (p_z . x_z) p_z at every interior
    node z, where p_z holds the reduced components of the quadratization
    gradient at that node.  Pass p_nodes=None to disable it.
    """

    def __init__(self, weights, stiffness, div_form, p_nodes,
                 mass_coef, grad_coef, div_coef):
        self.w = weights
        self.K = stiffness
        self.D = div_form
        self.p = p_nodes
        self.cm = float(mass_coef)
        self.ck = float(grad_coef)
        self.cd = float(div_coef)
        self.n = weights.shape[0]

        diag = self.cm * self.w + self.ck * self.K.diagonal()
        if self.D is not None and self.cd != 0.0:
            diag = diag + self.cd * self.D.diagonal()
        if self.p is not None:
            diag = diag + self.w * (self.p ** 2).reshape(-1)
        self.diag = diag

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.cm * (self.w * x) + self.ck * (self.K @ x)
        if self.D is not None and self.cd != 0.0:
            y += self.cd * (self.D @ x)
        if self.p is not None:
            x2 = x.reshape(-1, 2)
            s = (self.p * x2).sum(axis=1)
            y += self.w * (self.p * s[:, None]).reshape(-1)
        return y


def cg_solve(A: StepOperator, rhs: np.ndarray, tol: float = 1e-10,
             maxiter: int | None = None, x0: np.ndarray | None = None):
    """Solve A x = rhs to a relative residual of tol.

    Returns (x, iterations).  The final residual is re-verified with an
    explicit multiply; raises ConvergenceError when maxiter is exhausted.
    """
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros_like(rhs), 0
    if maxiter is None:
        maxiter = 10 * rhs.shape[0]

    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - A.matvec(x)
    if np.linalg.norm(r) <= tol * norm_b:
        return x, 0

    z = r / A.diag
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxiter + 1):
        Ap = A.matvec(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * norm_b:
            true_r = rhs - A.matvec(x)
            if np.linalg.norm(true_r) <= tol * norm_b:
                return x, k
            r = true_r  # recurrence drifted; continue from the true residual
        z = r / A.diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    res = float(np.linalg.norm(rhs - A.matvec(x)) / norm_b)
    raise ConvergenceError(
        "CG did not converge in %d iterations (relative residual %.3e)"
        % (maxiter, res),
        residual=res,
    )
