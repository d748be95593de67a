"""Pointwise Q-tensor algebra in reduced two-component coordinates.

A symmetric trace-free 2x2 tensor is stored as the pair (q1, q2) with

    Q = [[q1, q2],
         [q2, -q1]].

Every operation accepts scalars or numpy arrays in the components, so the
same functions serve single-point checks and whole nodal fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Params:
    """Material and scheme constants.

    L1, L2, L3 are the elastic constants, (a, b, c) the bulk coefficients,
    A0 the positive shift that keeps the quadratized energy density
    positive, sigma the inertial constant, and M the mobility (fixed to 1).
    """

    L1: float
    L2: float
    L3: float
    a: float
    b: float
    c: float
    A0: float
    sigma: float
    M: float = 1.0

    def __post_init__(self):
        if self.c <= 0.0:
            raise ValueError("bulk coefficient c must be positive")
        if self.L1 <= 0.0:
            raise ValueError("elastic constant L1 must be positive")
        if self.L2 + self.L3 < 0.0:
            raise ValueError("L2 + L3 must be nonnegative")
        if self.A0 <= 0.0:
            raise ValueError("energy shift A0 must be positive")
        if self.sigma < 0.0:
            raise ValueError("inertial constant sigma must be nonnegative")


@dataclass(frozen=True)
class STTensor2:
    """Reduced coordinates of a symmetric trace-free 2x2 tensor."""

    q1: float | np.ndarray
    q2: float | np.ndarray


def frob_dot(A: STTensor2, B: STTensor2):
    """Frobenius contraction A:B; both off-diagonal and both diagonal
    entries contribute, hence the factor 2 on the reduced components."""
    return 2.0 * (A.q1 * B.q1 + A.q2 * B.q2)


def trace_q2(Q: STTensor2):
    """tr(Q^2), which equals |Q|_F^2 for symmetric trace-free 2x2."""
    return 2.0 * (Q.q1 * Q.q1 + Q.q2 * Q.q2)


def bulk_potential(Q: STTensor2, p: Params):
    """Quartic bulk energy density evaluated at Q."""
    t2 = trace_q2(Q)
    # tr(Q^3) vanishes identically for symmetric trace-free 2x2 matrices;
    # the b term is kept in the formula for fidelity to the 3D form.
    t3 = 0.0
    return 0.5 * p.a * t2 - (p.b / 3.0) * t3 + 0.25 * p.c * t2 * t2


def bulk_derivative_f(Q: STTensor2, p: Params) -> STTensor2:
    """Variational derivative f of the bulk potential.

    In 2D the b term cancels exactly: Q^2 is a multiple of the identity, so
    it equals its own isotropic part and the deviator is zero.  What is
    left is (a + c tr(Q^2)) Q.
    """
    s = p.a + p.c * trace_q2(Q)
    return STTensor2(s * Q.q1, s * Q.q2)


def aux_r(Q: STTensor2, p: Params):
    """Auxiliary variable r = sqrt(2 (bulk + A0)); requires a positive
    radicand, i.e. A0 large enough on the sampled states."""
    rad = 2.0 * (bulk_potential(Q, p) + p.A0)
    if np.min(rad) <= 0.0:
        raise ValueError(
            "nonpositive radicand in auxiliary variable: A0=%g is too small"
            % p.A0
        )
    return np.sqrt(rad)


def aux_P(Q: STTensor2, p: Params) -> STTensor2:
    """Variational derivative of r, i.e. P = f(Q) / r(Q)."""
    r = aux_r(Q, p)
    f = bulk_derivative_f(Q, p)
    return STTensor2(f.q1 / r, f.q2 / r)
