"""Lagrangian models, machine-accurate derivative bundles, and Omega_L.

The (n+2)-form Omega_L is assembled pointwise from its coordinate
expression

    Omega_L = -dL/dy^a  dy^a ^ d^{n+1}x
              - d(dL/dv^a_mu) ^ theta^a ^ d^n x_mu,

where d(dL/dv^a_mu) is the full differential (x-, y- and v-blocks) taken
from the derivative bundle and theta^a are the contact forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .exceptions import DimensionMismatchError, EvaluationError, InvalidArgumentError
from .exterior import Form
from .jet import Dims, JetPoint, contact_covectors


@dataclass(frozen=True)
class LagrangianModel:
    """A Lagrangian L(x, y, v) over generic scalars.

    ``fn(x, y, v)`` receives x as a list of n+1 scalars, y as a list of m
    scalars and v as a nested (m)(n+1) list; entries are floats, arrays, or
    dual numbers, so forward-mode differentiation extracts exact first and
    second derivatives.
    """

    name: str
    dims: Dims
    fn: Callable

    def __call__(self, p: JetPoint) -> float:
        return float(
            np.asarray(self.fn(list(p.x), list(p.y), [list(row) for row in p.v]))
        )


@dataclass(frozen=True)
class DerivativeBundle:
    """All partial derivatives of L needed by the field equations.

    Shapes (batch dims allowed in front): L (),  dLdy (m,), dLdv (m, n+1),
    H (m, n+1, m, n+1) with H[a, mu, b, nu] = d2L/dv^a_mu dv^b_nu,
    d2Ldydv (m, m, n+1) with [b, a, mu] = d2L/dy^b dv^a_mu,
    d2Ldxdv (n+1, m, n+1) with [tau, a, mu] = d2L/dx^tau dv^a_mu.
    """

    L: np.ndarray
    dLdy: np.ndarray
    dLdv: np.ndarray
    H: np.ndarray
    d2Ldydv: np.ndarray
    d2Ldxdv: np.ndarray

    @property
    def dims(self) -> Dims:
        m, nx = self.dLdv.shape[-2:]
        return Dims(nx - 1, m)


def _seed_inputs(cls, x, y, v, dims: Dims):
    xs = [cls.seed(x[..., t], dims.N, dims.ix(t)) for t in range(dims.nx)]
    ys = [cls.seed(y[..., a], dims.N, dims.iy(a)) for a in range(dims.m)]
    vs = [
        [cls.seed(v[..., a, mu], dims.N, dims.iv(a, mu)) for mu in range(dims.nx)]
        for a in range(dims.m)
    ]
    return xs, ys, vs


def derivative_bundle_arrays(model: LagrangianModel, x, y, v) -> DerivativeBundle:
    """Derivative bundle over arrays of jet coordinates (batched)."""
    dims = model.dims
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    out = model.fn(*_seed_inputs(ad.Dual2, x, y, v, dims))
    if not isinstance(out, ad.Dual2):
        raise EvaluationError(f"model {model.name!r} did not stay in dual arithmetic")
    m, nx = dims.m, dims.nx
    sl_y = slice(nx, nx + m)
    sl_v = slice(nx + m, dims.N)
    batch = out.val.shape
    dLdy = out.grad[..., sl_y]
    dLdv = out.grad[..., sl_v].reshape(batch + (m, nx))
    H = out.hess[..., sl_v, sl_v].reshape(batch + (m, nx, m, nx))
    d2Ldydv = out.hess[..., sl_y, sl_v].reshape(batch + (m, m, nx))
    d2Ldxdv = out.hess[..., :nx, sl_v].reshape(batch + (nx, m, nx))
    bundle = DerivativeBundle(out.val, dLdy, dLdv, H, d2Ldydv, d2Ldxdv)
    for name in ("L", "dLdy", "dLdv", "H", "d2Ldydv", "d2Ldxdv"):
        arr = getattr(bundle, name)
        if not np.isfinite(arr).all():
            bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))[0]
            raise EvaluationError(
                f"model {model.name!r}: non-finite {name} at index {tuple(bad)}"
            )
    return bundle


def derivative_bundle(model: LagrangianModel, p: JetPoint) -> DerivativeBundle:
    """Derivative bundle at a single jet point."""
    if (p.n, p.m) != (model.dims.n, model.dims.m):
        raise DimensionMismatchError(
            f"point dims (n={p.n}, m={p.m}) do not match model {model.dims}"
        )
    return derivative_bundle_arrays(model, p.x, p.y, p.v)


def first_derivatives_arrays(model: LagrangianModel, x, y, v):
    """Cheap first-order pass: (L, dLdy (.., m), dLdv (.., m, n+1))."""
    dims = model.dims
    out = model.fn(*_seed_inputs(ad.Dual, np.asarray(x, float), np.asarray(y, float),
                                 np.asarray(v, float), dims))
    m, nx = dims.m, dims.nx
    batch = out.val.shape
    return (
        out.val,
        out.grad[..., nx : nx + m],
        out.grad[..., nx + m :].reshape(batch + (m, nx)),
    )


def hessian_flat(bundle: DerivativeBundle) -> np.ndarray:
    """H as a (m(n+1), m(n+1)) matrix in the (a-major, mu-minor) flattening."""
    m, nx = bundle.dLdv.shape[-2:]
    return bundle.H.reshape(bundle.H.shape[: -4] + (m * nx, m * nx))


def regularity_check(model: LagrangianModel, p: JetPoint,
                     det_tol: float = 1e-10, cond_tol: float = 1e12) -> dict:
    """Determinant and condition number of the Hessian; non-regularity is a
    result, not an error."""
    Hf = hessian_flat(derivative_bundle(model, p))
    det = float(np.linalg.det(Hf))
    svals = np.linalg.svd(Hf, compute_uv=False)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else np.inf
    return {"det": det, "cond": cond, "regular": abs(det) > det_tol and cond < cond_tol}


def omega_form(bundle: DerivativeBundle, p: JetPoint) -> Form:
    """Omega_L at p as an explicit (n+2)-form term list."""
    m, nx = p.v.shape
    n = nx - 1
    dims = Dims(n, m)
    theta = contact_covectors(p)
    terms = []
    # term 1: -dL/dy^a dy^a ^ d^{n+1}x
    vol = list(range(nx))
    for a in range(m):
        coeff = -float(bundle.dLdy[a])
        if coeff != 0.0:
            terms.append((coeff, [dims.iy(a)] + vol))
    # term 2: -d(dL/dv^a_mu) ^ theta^a ^ d^n x_mu, with
    # d^n x_mu = (-1)^mu dx^0 ^ .. (omit mu) .. ^ dx^n
    for a in range(m):
        for mu in range(nx):
            diff = np.zeros(dims.N)
            diff[:nx] = bundle.d2Ldxdv[:, a, mu]
            for b in range(m):
                diff[dims.iy(b)] = bundle.d2Ldydv[b, a, mu]
            diff[nx + m :] = bundle.H[:, :, a, mu].reshape(-1)
            rest = [nu for nu in range(nx) if nu != mu]
            terms.append((-((-1.0) ** mu), [diff, theta[a]] + rest))
    if not terms:
        # L with vanishing derivatives: represent the zero form explicitly
        terms.append((0.0, [dims.iy(0)] + vol))
    return Form.from_terms(terms, dim=dims.N)


def omega_eval_batch(bundle: DerivativeBundle, v: np.ndarray,
                     vecs: np.ndarray) -> np.ndarray:
    """Evaluate Omega_L on one (n+2)-tuple of vectors per batch point.

    bundle entries carry a leading batch shape B..., v has shape
    (B..., m, n+1) and vecs (B..., n+2, N); returns (B...,).  Same terms as
    :func:`omega_form`, vectorized over the batch.
    """
    v = np.asarray(v, dtype=float)
    vecs = np.asarray(vecs, dtype=float)
    m, nx = v.shape[-2:]
    n = nx - 1
    dims = Dims(n, m)
    batch = v.shape[:-2]
    q = n + 2
    if vecs.shape != batch + (q, dims.N):
        raise DimensionMismatchError(
            f"expected vectors of shape {batch + (q, dims.N)}, got {vecs.shape}"
        )
    total = np.zeros(batch)
    # contact covectors theta^a paired with every vector: (B.., m, q)
    theta_pair = vecs[..., dims.iy(0) : dims.iy(0) + m] .swapaxes(-1, -2) \
        - np.einsum("...an,...qn->...aq", v, vecs[..., :nx])
    x_pair = vecs[..., :nx]  # (B.., q, nx): dx^nu paired with vectors
    A = np.empty(batch + (q, q))
    # term 1: -dL/dy^a dy^a ^ dx^0 ^ ... ^ dx^n
    for a in range(m):
        A[..., 0, :] = vecs[..., dims.iy(a)]
        for nu in range(nx):
            A[..., 1 + nu, :] = x_pair[..., nu]
        total -= bundle.dLdy[..., a] * np.linalg.det(A)
    # term 2: -d(dL/dv^a_mu) ^ theta^a ^ d^n x_mu
    for a in range(m):
        for mu in range(nx):
            diff = np.zeros(batch + (dims.N,))
            diff[..., :nx] = bundle.d2Ldxdv[..., :, a, mu]
            diff[..., nx : nx + m] = bundle.d2Ldydv[..., :, a, mu]
            diff[..., nx + m :] = bundle.H[..., :, :, a, mu].reshape(batch + (m * nx,))
            A[..., 0, :] = np.einsum("...n,...qn->...q", diff, vecs)
            A[..., 1, :] = theta_pair[..., a, :]
            row = 2
            for nu in range(nx):
                if nu != mu:
                    A[..., row, :] = x_pair[..., nu]
                    row += 1
            total -= ((-1.0) ** mu) * np.linalg.det(A)
    return total


def omega_L_eval(model: LagrangianModel, p: JetPoint, vecs) -> float:
    """Evaluate Omega_L(p) on exactly n+2 tangent vectors."""
    if len(vecs) != p.n + 2:
        raise DimensionMismatchError(
            f"Omega_L takes n+2 = {p.n + 2} vectors, got {len(vecs)}"
        )
    return omega_form(derivative_bundle(model, p), p)(vecs)


# ---------------------------------------------------------------------------
# built-in model registry

def _wave_model(params=None) -> LagrangianModel:
    """1+1 wave Lagrangian L = (v_0^2 - v_1^2)/2."""

    def fn(x, y, v):
        return 0.5 * (v[0][0] * v[0][0] - v[0][1] * v[0][1])

    return LagrangianModel("wave", Dims(1, 1), fn)


def _quadratic_model(params=None) -> LagrangianModel:
    """L = sum v^2 / 2 + coupling * y^a v^a_0, any (n, m)."""
    params = params or {}
    n = int(params.get("n", 1))
    m = int(params.get("m", 1))
    coupling = float(params.get("coupling", 0.0))

    def fn(x, y, v):
        total = 0.0
        for a in range(m):
            for mu in range(n + 1):
                total = total + 0.5 * (v[a][mu] * v[a][mu])
            if coupling:
                total = total + coupling * (y[a] * v[a][0])
        return total

    return LagrangianModel("quadratic", Dims(n, m), fn)


def _fluid_model(params=None) -> LagrangianModel:
    from .fluid import FluidParams, fluid_lagrangian

    if isinstance(params, dict):
        params = FluidParams(**params)
    return fluid_lagrangian(params or FluidParams())


MODELS: dict[str, Callable] = {
    "wave": _wave_model,
    "quadratic": _quadratic_model,
    "fluid": _fluid_model,
}


def make_model(name: str, params=None) -> LagrangianModel:
    if name not in MODELS:
        raise InvalidArgumentError(
            f"unknown model {name!r}; available: {sorted(MODELS)}"
        )
    return MODELS[name](params)
