"""Incompressible barotropic fluid on a 3+1 base: closed forms and identities.

The Lagrangian is rho (|v_0|^2 / 2 - W(J) - mu |v_i|^2 / 2) with
J = det(v^a_i) and stored energy W(J) = kappa (J-1)^2 / 2 + beta (J-1);
the constraint is J = 1.  The spatial Hessian of the stored energy has the
closed form

    d2W/dv^a_i dv^b_j = W'' K^i_a K^j_b
        + W' J ((v^-1)^i_a (v^-1)^j_b - (v^-1)^i_b (v^-1)^j_a),

with K = J v^-T the cofactor matrix, so the constraint direction zeta, the
compatibility scalar f = zeta(phi) and the rank-one projector
P = I - f^-1 dphi (x) zeta all have closed forms that cross-check the
generic pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .constraint import ConstraintSpec, chetaev_coefficients, incompressibility_constraint
from .exceptions import (
    CompatibilityError,
    InternalConsistencyError,
    InvalidArgumentError,
)
from .jet import Dims, JetPoint
from .lagrangian import LagrangianModel, derivative_bundle
from .projector import solve_zeta


@dataclass(frozen=True)
class FluidParams:
    """Material density rho, stored-energy parameters, optional regularizer.

    beta = W'(1) must be nonzero when mu = 0: with W'(1) = 0 the spatial
    Hessian at the identity degenerates to the rank-one cofactor square and
    the Lagrangian is not regular there.
    """

    rho: float = 1.0
    kappa: float = 1.0
    beta: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidArgumentError("material density rho must be positive")
        if self.kappa < 0 or self.mu < 0:
            raise InvalidArgumentError("kappa and mu must be nonnegative")
        if self.mu == 0.0 and self.beta == 0.0:
            raise InvalidArgumentError(
                "beta = 0 with no regularizer makes the Hessian singular on "
                "the constraint set"
            )

    def W(self, J):
        return 0.5 * self.kappa * (J - 1.0) * (J - 1.0) + self.beta * (J - 1.0)

    def dW(self, J):
        return self.kappa * (J - 1.0) + self.beta

    def d2W(self, J):
        return self.kappa + 0.0 * J


def fluid_lagrangian(params: FluidParams | None = None) -> LagrangianModel:
    params = params or FluidParams()

    def fn(x, y, v):
        kinetic = 0.0
        for a in range(3):
            kinetic = kinetic + v[a][0] * v[a][0]
        J = ad.det([[v[a][i + 1] for i in range(3)] for a in range(3)])
        L = 0.5 * kinetic - params.W(J)
        if params.mu:
            frob = 0.0
            for a in range(3):
                for i in range(3):
                    frob = frob + v[a][i + 1] * v[a][i + 1]
            L = L - 0.5 * params.mu * frob
        return params.rho * L

    return LagrangianModel("fluid", Dims(3, 3), fn)


def spatial_hessian_closed(params: FluidParams, vsp: np.ndarray) -> np.ndarray:
    """d2L/dv^a_i dv^b_j from the barotropic closed form, shape (3,3,3,3)
    indexed [a, i, b, j]."""
    J = np.linalg.det(vsp)
    vinv = np.linalg.inv(vsp)  # (v^-1)^i_a = vinv[i, a]
    K = J * vinv.T  # K[a, i] = J (v^-1)^i_a
    dK = J * (
        np.einsum("ia,jb->aibj", vinv, vinv) - np.einsum("ib,ja->aibj", vinv, vinv)
    )  # d K[a,i] / d v[b,j]
    d2W = params.d2W(J) * np.einsum("ai,bj->aibj", K, K) + params.dW(J) * dK
    H = -params.rho * d2W
    if params.mu:
        H = H - params.rho * params.mu * np.einsum(
            "ab,ij->aibj", np.eye(3), np.eye(3)
        )
    return H


def fluid_quantities(params: FluidParams, p: JetPoint,
                     spec: ConstraintSpec | None = None,
                     f_tol: float = 1e-12) -> dict:
    """J, inverse and cofactor of the spatial block, zeta, f, and P at p.

    zeta comes from the generic constraint-distribution solve on the full
    automatic-differentiation Hessian; the same vector is recomputed from
    the closed-form spatial Hessian (temporal block rho I solved trivially)
    and both must agree, which pins the sign and density conventions.
    """
    if (p.n, p.m) != (3, 3):
        raise InvalidArgumentError("the fluid scenario lives on n = 3, m = 3")
    vsp = p.v[:, 1:]
    J = float(np.linalg.det(vsp))
    if abs(J) < 1e-12:
        raise InvalidArgumentError("spatial jet block is singular")
    vinv = np.linalg.inv(vsp)
    C_matrix = J * vinv.T  # C^i_a as [a, i]: dJ/dv^a_i

    model = fluid_lagrangian(params)
    spec = spec or incompressibility_constraint()
    bundle = derivative_bundle(model, p)
    coeffs = chetaev_coefficients(spec, p)
    zb = solve_zeta(bundle, coeffs, p, check=False)
    zeta = zb.zeta[0]  # (m, n+1)

    # closed form: temporal block rho I gives zeta_0 = C^0 / rho = 0; the
    # spatial block solves H_sp zeta_sp = K
    Hsp = spatial_hessian_closed(params, vsp).reshape(9, 9)
    zeta_sp = np.linalg.solve(Hsp, C_matrix.reshape(9)).reshape(3, 3)
    zeta_closed = np.zeros((3, 4))
    zeta_closed[:, 1:] = zeta_sp
    if np.max(np.abs(zeta - zeta_closed)) > 1e-9 * (1.0 + np.max(np.abs(zeta))):
        raise InternalConsistencyError(
            "closed-form zeta disagrees with the generic solve: "
            f"max diff {np.max(np.abs(zeta - zeta_closed)):.3e}"
        )

    f = float(np.einsum("ai,ai->", zeta[:, 1:], C_matrix))
    if abs(f) < f_tol:
        raise CompatibilityError(f"compatibility scalar f = {f:.3e} vanishes")

    dims = spec.dims
    dphi = spec.full_differentials(p)[0]  # (N,)
    zeta_dense = zb.dense()[0]
    P = np.eye(dims.N) - np.outer(zeta_dense, dphi) / f
    return {"J": J, "vinv": vinv, "C": C_matrix, "zeta": zeta, "f": f,
            "P": P, "zeta_basis": zb}


# ---------------------------------------------------------------------------
# the constraint is a null Lagrangian: its cofactor rows are divergence
# free on jet data of sections, and it is itself a total divergence

_PATCH_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _patch_derivative(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order interior first derivative on a non-periodic grid patch.

    Only values at points with a full stencil neighborhood are meaningful;
    callers must trim two layers per differentiated axis.
    """
    out = np.zeros_like(arr)
    r = 2
    sl_out = [slice(None)] * arr.ndim
    sl_out[axis] = slice(r, arr.shape[axis] - r)
    acc = np.zeros_like(arr[tuple(sl_out)])
    for s, c in zip(range(-r, r + 1), _PATCH_STENCIL):
        if c != 0.0:
            sl = [slice(None)] * arr.ndim
            sl[axis] = slice(r + s, arr.shape[axis] - r + s)
            acc += c * arr[tuple(sl)]
    out[tuple(sl_out)] = acc / h
    return out


def _interior(arr: np.ndarray, axes, r: int = 2) -> np.ndarray:
    """Trim the stencil margin along the differentiated axes only."""
    sl = [slice(None)] * arr.ndim
    for ax in axes:
        if arr.shape[ax] <= 2 * r:
            raise InvalidArgumentError(
                f"axis {ax} has {arr.shape[ax]} points, need more than {2 * r}"
            )
        sl[ax] = slice(r, arr.shape[ax] - r)
    return arr[tuple(sl)]


def _section_jet(section, shape, spacings):
    """Sample y, dy/dx and the sampled coordinates of a section on a patch.

    ``section(x)`` maps coordinate arrays (.., 4) to field values (.., 3)
    in generic scalars; the Jacobian comes from forward differentiation, so
    no periodicity of y is needed.
    """
    axes = [np.arange(N) * h for N, h in zip(shape, spacings)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # (.., 4)
    xs = [ad.Dual.seed(coords[..., mu], 4, mu) for mu in range(4)]
    out = section(xs)
    y = np.stack([np.asarray(o.val, dtype=float) for o in out], axis=-1)
    jac = np.stack([o.grad for o in out], axis=-2)  # (.., 3, 4)
    return coords, y, jac


def null_lagrangian_residual(section, shape=(16, 16, 16, 16),
                             spacings=None) -> float:
    """max interior |d/dx^i K^i_a(v(x))| for the sampled section.

    The constraint has no y-dependence and no temporal jet dependence, so
    the null-Lagrangian identity reduces to the divergence-free rows of the
    cofactor matrix; total derivatives are 4th-order finite differences of
    the composed map x -> K(v(x)) on the patch.
    """
    spacings = spacings or tuple(1.0 / N for N in shape)
    _, _, jac = _section_jet(section, shape, spacings)
    vsp = jac[..., :, 1:]  # (.., 3, 3)
    J = np.linalg.det(vsp)
    if np.min(np.abs(J)) < 1e-8:
        raise InvalidArgumentError("spatial jet block is (near) singular on the patch")
    K = J[..., None, None] * np.swapaxes(np.linalg.inv(vsp), -1, -2)
    div = np.zeros(shape + (3,))
    for i in range(3):
        div += _patch_derivative(K[..., :, i], axis=1 + i, h=spacings[1 + i])
    return float(np.max(np.abs(_interior(div, (1, 2, 3)))))


def psi_divergence_residual(section, shape=(8, 8, 8, 8),
                            spacings=None) -> float:
    """max interior |phi - d psi^mu / dx^mu| for the potential
    psi^0 = 0, psi^i = (J y^a (v^-1)^i_a - x^i) / 3.

    The total derivative runs through the composed dependence on
    (x, y(x), v(x)) by finite differences of the sampled psi field.
    """
    spacings = spacings or tuple(1.0 / N for N in shape)
    coords, y, jac = _section_jet(section, shape, spacings)
    vsp = jac[..., :, 1:]
    J = np.linalg.det(vsp)
    if np.min(np.abs(J)) < 1e-8:
        raise InvalidArgumentError("spatial jet block is (near) singular on the patch")
    vinv = np.linalg.inv(vsp)  # [.., i, a]
    psi = (
        J[..., None] * np.einsum("...ia,...a->...i", vinv, y)
        - coords[..., 1:]
    ) / 3.0
    div = np.zeros(shape)
    for i in range(3):
        div += _patch_derivative(psi[..., i], axis=1 + i, h=spacings[1 + i])
    phi = J - 1.0
    return float(np.max(np.abs(_interior(phi - div, (1, 2, 3)))))
