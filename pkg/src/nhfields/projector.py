"""Constraint distribution, compatibility test, and nonholonomic projectors.

The constraint distribution is spanned by the jet-vertical fields
zeta_alpha solving

    (zeta_alpha)^a_mu  d2L/dv^a_mu dv^b_nu = (C_alpha)^nu_b,

which realizes i_{zeta_alpha} Omega_L = -Phi_alpha.  When the matrix
zeta_alpha(phi_beta) is invertible the tangent space splits as
T C (+) span{zeta}, with projectors P (onto TC) and Q = I - P.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraint import ConstraintSpec, chetaev_coefficients, constraint_forms
from .exceptions import (
    CompatibilityError,
    InternalConsistencyError,
    RegularityError,
)
from .exterior import TangentVector
from .jet import Dims, JetPoint
from .lagrangian import DerivativeBundle, hessian_flat, omega_form


@dataclass(frozen=True)
class ZetaBasis:
    """Components (zeta_alpha)^a_mu of the constraint distribution basis.

    The zeta_alpha are vertical over the total space, so only the jet block
    is stored; shape (k, m, n+1).
    """

    zeta: np.ndarray

    @property
    def k(self) -> int:
        return self.zeta.shape[0]

    def vector(self, alpha: int) -> TangentVector:
        m, nx = self.zeta.shape[1:]
        return TangentVector(np.zeros(nx), np.zeros(m), self.zeta[alpha])

    def dense(self) -> np.ndarray:
        """Rows (k, N) of the zeta vectors in the full layout."""
        k, m, nx = self.zeta.shape
        N = nx + m + m * nx
        rows = np.zeros((k, N))
        rows[:, nx + m :] = self.zeta.reshape(k, -1)
        return rows


@dataclass(frozen=True)
class ProjectorPair:
    """Complementary projectors P (onto TC) and Q (onto the constraint
    distribution), plus the inverse compatibility matrix Lam with the
    convention Q = zeta_alpha Lam^{alpha beta} dphi_beta."""

    P: np.ndarray
    Q: np.ndarray
    Lam: np.ndarray
    zeta: np.ndarray
    dphi: np.ndarray


def solve_zeta_flat(H_flat: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Solve the zeta systems given the flattened Hessian.

    H_flat: (..., mn, mn) in a-major/mu-minor flattening; coeffs (C_alpha)
    as (..., k, n+1, m).  Returns (..., k, m, n+1).  Batched.
    """
    k, nx, m = coeffs.shape[-3:]
    rhs = np.swapaxes(coeffs, -1, -2).reshape(coeffs.shape[:-3] + (k, m * nx))
    try:
        # H symmetric: the row-form equation zeta H = C transposes to H zeta = C
        sol = np.linalg.solve(H_flat, np.swapaxes(rhs, -1, -2))
    except np.linalg.LinAlgError as exc:
        raise RegularityError(f"Hessian is singular in the zeta solve: {exc}") from exc
    return np.swapaxes(sol, -1, -2).reshape(coeffs.shape[:-3] + (k, m, nx))


def solve_zeta(bundle: DerivativeBundle, coeffs: np.ndarray,
               p: JetPoint | None = None, check: bool | None = None,
               tol: float = 1e-9, rng=None, tuples: int = 20) -> ZetaBasis:
    """Constraint distribution basis at one point.

    By default the defining form identity
    i_{zeta_alpha} Omega_L + Phi_alpha = 0 is verified on random
    (n+1)-tuples of tangent vectors whenever the jet point is supplied
    (the identity needs the contact forms at p); pass ``check=False`` to
    skip the verification in hot loops.
    """
    zeta = solve_zeta_flat(hessian_flat(bundle), coeffs)
    zb = ZetaBasis(zeta)
    if check is None:
        check = p is not None
    if check:
        if p is None:
            raise InternalConsistencyError("zeta verification needs the jet point")
        resid = zeta_residual(bundle, coeffs, zb, p, rng=rng, tuples=tuples)
        if resid > tol:
            raise InternalConsistencyError(
                f"i_zeta Omega_L + Phi residual {resid:.3e} exceeds {tol:.1e}"
            )
    return zb


def zeta_residual(bundle: DerivativeBundle, coeffs: np.ndarray, zb: ZetaBasis,
                  p: JetPoint, rng=None, tuples: int = 20,
                  spec: ConstraintSpec | None = None) -> float:
    """max |(i_{zeta_alpha} Omega_L + Phi_alpha)(random (n+1)-tuple)|."""
    rng = np.random.default_rng(0) if rng is None else rng
    m, nx = p.v.shape
    dims = Dims(nx - 1, m)
    omega = omega_form(bundle, p)
    if spec is None:
        spec = ConstraintSpec(
            Dims(nx - 1, m, zb.k), [_zero_phi] * zb.k, "custom", lambda _p: coeffs
        )
    phis = constraint_forms(spec, p, coeffs)
    vecs = rng.uniform(-1.0, 1.0, size=(tuples, nx, dims.N))
    worst = 0.0
    for alpha in range(zb.k):
        contracted = omega.contract(zb.vector(alpha))
        vals = contracted.eval_batch(vecs) + phis[alpha].eval_batch(vecs)
        worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def _zero_phi(x, y, v):
    return 0.0 * v[0][0]


def compatibility_matrix(zb: ZetaBasis, dphidv: np.ndarray,
                         tol: float = 1e-10) -> dict:
    """mmat[alpha][beta] = zeta_alpha(phi_beta) and the invertibility verdict.

    The tolerance is scale-relative: the smallest singular value is compared
    against tol times the natural entry scale ||zeta_alpha|| ||dphi_beta||.
    """
    mmat = np.einsum("kav,lav->kl", zb.zeta, dphidv)
    scale = float(
        np.max(np.linalg.norm(zb.zeta.reshape(zb.k, -1), axis=1))
        * np.max(np.linalg.norm(dphidv.reshape(dphidv.shape[0], -1), axis=1))
    )
    svals = np.linalg.svd(mmat, compute_uv=False)
    smin = float(svals[-1]) if len(svals) else 0.0
    compatible = bool(smin > tol * max(scale, 1e-300))
    return {"mmat": mmat, "det": float(np.linalg.det(mmat)), "compatible": compatible}


def build_projectors(zb: ZetaBasis, spec: ConstraintSpec, p: JetPoint,
                     tol: float = 1e-9) -> ProjectorPair:
    """Nonholonomic projector pair at an on-constraint compatible point.

    Q = zeta_alpha Lam^{alpha beta} dphi_beta with Lam = inv(mmat)^T, fixed
    by Q(zeta_gamma) = zeta_gamma; P = I - Q.  TC is the kernel of the full
    differentials dphi (x-, y- and v-blocks included).  All projector
    invariants are verified before returning.
    """
    spec.require_on_constraint(p)
    _, _, dphidv = spec.derivatives(p)
    comp = compatibility_matrix(zb, dphidv)
    if not comp["compatible"]:
        raise CompatibilityError(
            f"compatibility matrix is singular (det {comp['det']:.3e}); the "
            "constraint distribution meets TC nontrivially"
        )
    Z = zb.dense()  # (k, N)
    dphi = spec.full_differentials(p)  # (k, N)
    Lam = np.linalg.inv(comp["mmat"]).T
    Q = Z.T @ Lam @ dphi
    N = Q.shape[0]
    P = np.eye(N) - Q
    scale = max(1.0, float(np.linalg.norm(Q, 2)))
    checks = {
        "P^2-P": np.linalg.norm(P @ P - P, 2),
        "Q^2-Q": np.linalg.norm(Q @ Q - Q, 2),
        "PQ": np.linalg.norm(P @ Q, 2),
        "dphi.P": np.linalg.norm(dphi @ P, 2),
        "Q.zeta-zeta": np.linalg.norm(Q @ Z.T - Z.T, 2),
    }
    worst = max(checks.values())
    if worst > tol * scale:
        bad = max(checks, key=checks.get)
        raise InternalConsistencyError(
            f"projector invariant {bad} violated: residual {checks[bad]:.3e}"
        )
    return ProjectorPair(P, Q, Lam, zb.zeta.copy(), dphi)


def projector_from_model(bundle: DerivativeBundle, spec: ConstraintSpec,
                         p: JetPoint, check_zeta: bool = False) -> tuple:
    """Convenience pipeline: coefficients, zeta basis, projector pair."""
    coeffs = chetaev_coefficients(spec, p)
    zb = solve_zeta(bundle, coeffs, p, check=check_zeta)
    return coeffs, zb, build_projectors(zb, spec, p)
