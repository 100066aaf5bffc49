"""Constraint functions, Chetaev coefficients, and constraint (n+1)-forms.

A constraint specification holds k scalar functions phi_alpha(x, y, v) over
generic scalars so that all first derivatives come from forward-mode
differentiation.  Constraint forms are

    Phi_alpha = (C_alpha)^mu_a theta^a ^ d^n x_mu,

with the Chetaev choice (C_alpha)^mu_a = d phi_alpha / d v^a_mu by default,
or a user-supplied coefficient field.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .exceptions import (
    ConstraintRankError,
    DimensionMismatchError,
    InvalidArgumentError,
    OffConstraintError,
)
from .exterior import Form
from .jet import Dims, JetPoint, contact_covectors


@dataclass(frozen=True)
class ConstraintSpec:
    """k constraint functions with their coefficient rule.

    coeff_mode is "chetaev" or "custom"; in custom mode ``custom_coeffs(p)``
    must return the (k, n+1, m) coefficient array (C_alpha)^mu_a.
    Constraints are evaluated on a neighborhood of the constraint set, not
    only on it, since projector construction needs off-manifold derivatives.
    """

    dims: Dims
    funcs: Sequence[Callable]
    coeff_mode: str = "chetaev"
    custom_coeffs: Callable | None = None
    on_tol: float = 1e-8
    name: str = "custom"

    def __post_init__(self):
        if len(self.funcs) != self.dims.k:
            raise InvalidArgumentError(
                f"got {len(self.funcs)} functions for k={self.dims.k}"
            )
        if self.coeff_mode not in ("chetaev", "custom"):
            raise InvalidArgumentError(f"unknown coeff_mode {self.coeff_mode!r}")
        if self.coeff_mode == "custom" and self.custom_coeffs is None:
            raise InvalidArgumentError("custom mode needs a coefficient function")

    @property
    def k(self) -> int:
        return self.dims.k

    # -- evaluation ---------------------------------------------------------

    def values_arrays(self, x, y, v) -> np.ndarray:
        """phi_alpha over coordinate arrays; returns (..., k)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        xs = [x[..., t] for t in range(self.dims.nx)]
        ys = [y[..., a] for a in range(self.dims.m)]
        vs = [[v[..., a, mu] for mu in range(self.dims.nx)] for a in range(self.dims.m)]
        return np.stack(
            [np.asarray(f(xs, ys, vs), dtype=float) for f in self.funcs], axis=-1
        )

    def values(self, p: JetPoint) -> np.ndarray:
        return self.values_arrays(p.x, p.y, p.v)

    def derivatives_arrays(self, x, y, v):
        """(dphidx (..,k,n+1), dphidy (..,k,m), dphidv (..,k,m,n+1))."""
        dims = self.dims
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        xs = [ad.Dual.seed(x[..., t], dims.N, dims.ix(t)) for t in range(dims.nx)]
        ys = [ad.Dual.seed(y[..., a], dims.N, dims.iy(a)) for a in range(dims.m)]
        vs = [
            [ad.Dual.seed(v[..., a, mu], dims.N, dims.iv(a, mu)) for mu in range(dims.nx)]
            for a in range(dims.m)
        ]
        grads = []
        for f in self.funcs:
            out = f(xs, ys, vs)
            if not isinstance(out, ad.Dual):
                out = ad.Dual.seed(np.asarray(out, dtype=float) + 0.0 * x[..., 0], dims.N)
            grads.append(out.grad)
        g = np.stack(grads, axis=-2)  # (.., k, N)
        m, nx = dims.m, dims.nx
        batch = g.shape[:-2]
        return (
            g[..., :nx],
            g[..., nx : nx + m],
            g[..., nx + m :].reshape(batch + (dims.k, m, nx)),
        )

    def derivatives(self, p: JetPoint):
        return self.derivatives_arrays(p.x, p.y, p.v)

    def full_differentials(self, p: JetPoint) -> np.ndarray:
        """Dense rows (k, N) of the differentials d phi_alpha at p."""
        dphidx, dphidy, dphidv = self.derivatives(p)
        k = self.dims.k
        return np.concatenate(
            [dphidx, dphidy, dphidv.reshape(k, -1)], axis=-1
        )

    def require_on_constraint(self, p: JetPoint, tol: float | None = None):
        vals = self.values(p)
        tol = self.on_tol if tol is None else tol
        if np.max(np.abs(vals), initial=0.0) > tol:
            raise OffConstraintError(
                f"point is off the constraint set: |phi| = {np.abs(vals).max():.3e} "
                f"(tolerance {tol:.1e}, values {vals.tolist()})"
            )


def chetaev_coefficients(spec: ConstraintSpec, p: JetPoint) -> np.ndarray:
    """(C_alpha)^mu_a, shape (k, n+1, m): dphi/dv in Chetaev mode, the user
    matrix in custom mode."""
    if spec.coeff_mode == "custom":
        C = np.asarray(spec.custom_coeffs(p), dtype=float)
        expected = (spec.k, spec.dims.nx, spec.dims.m)
        if C.shape != expected:
            raise DimensionMismatchError(
                f"custom coefficients shape {C.shape}, expected {expected}"
            )
        return C
    _, _, dphidv = spec.derivatives(p)
    return np.swapaxes(dphidv, -1, -2)  # (k, m, n+1) -> (k, n+1, m)


def constraint_forms(spec: ConstraintSpec, p: JetPoint, coeffs: np.ndarray | None = None):
    """The k constraint forms Phi_alpha at p as explicit Form objects."""
    if coeffs is None:
        coeffs = chetaev_coefficients(spec, p)
    theta = contact_covectors(p)
    m, nx = p.v.shape
    forms = []
    for alpha in range(spec.k):
        terms = []
        for a in range(m):
            for mu in range(nx):
                rest = [nu for nu in range(nx) if nu != mu]
                terms.append(
                    (coeffs[alpha, mu, a] * ((-1.0) ** mu), [theta[a]] + rest)
                )
        forms.append(Form.from_terms(terms, dim=spec.dims.N))
    return forms


def constraint_form_eval(spec: ConstraintSpec, p: JetPoint, vecs) -> np.ndarray:
    """Evaluate all Phi_alpha on exactly n+1 tangent vectors."""
    if len(vecs) != spec.dims.nx:
        raise DimensionMismatchError(
            f"constraint forms take n+1 = {spec.dims.nx} vectors, got {len(vecs)}"
        )
    return np.array([f(vecs) for f in constraint_forms(spec, p)])


def phi_eval_batch(coeffs: np.ndarray, v: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Evaluate all Phi_alpha on one (n+1)-tuple of vectors per batch point.

    coeffs (B.., k, n+1, m), v (B.., m, n+1), vecs (B.., n+1, N);
    returns (B.., k).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    v = np.asarray(v, dtype=float)
    vecs = np.asarray(vecs, dtype=float)
    m, nx = v.shape[-2:]
    k = coeffs.shape[-3]
    batch = v.shape[:-2]
    q = nx
    theta_pair = vecs[..., nx : nx + m].swapaxes(-1, -2) - np.einsum(
        "...an,...qn->...aq", v, vecs[..., :nx]
    )
    x_pair = vecs[..., :nx]
    out = np.zeros(batch + (k,))
    A = np.empty(batch + (q, q))
    for a in range(m):
        for mu in range(nx):
            A[..., 0, :] = theta_pair[..., a, :]
            row = 1
            for nu in range(nx):
                if nu != mu:
                    A[..., row, :] = x_pair[..., nu]
                    row += 1
            det = np.linalg.det(A)
            out += ((-1.0) ** mu) * coeffs[..., :, mu, a] * det[..., None]
    return out


def constraint_rank_check(spec: ConstraintSpec, p: JetPoint) -> int:
    """Rank of dphi/dv at an on-constraint point; raises if below k.

    In custom mode the user coefficient matrix must have full rank on the
    constraint set as well, since it spans the constraint forms there.
    """
    spec.require_on_constraint(p)
    _, _, dphidv = spec.derivatives(p)
    rank = _rank_or_raise(dphidv.reshape(spec.k, -1), spec.k,
                          "constraint jet derivatives")
    if spec.coeff_mode == "custom":
        C = chetaev_coefficients(spec, p)
        _rank_or_raise(C.reshape(spec.k, -1), spec.k, "custom coefficients")
    return rank


def _rank_or_raise(mat: np.ndarray, k: int, label: str) -> int:
    svals = np.linalg.svd(mat, compute_uv=False)
    smax = svals[0] if len(svals) else 0.0
    rank = int(np.sum(svals > 1e-8 * max(smax, 1e-300)))
    if rank < k:
        _, _, vt = np.linalg.svd(mat.T)
        combo = vt[-1]
        raise ConstraintRankError(
            f"{label} have rank {rank} < k={k}; deficient combination "
            f"~ {np.round(combo, 6).tolist()}"
        )
    return rank


# ---------------------------------------------------------------------------
# built-in constraint registry

def linear_transport_constraint(dims: Dims | None = None, speed: float = 2.0,
                                coeff_mode: str = "chetaev",
                                custom_coeffs: Callable | None = None) -> ConstraintSpec:
    """phi = v_0 - speed * v_1 for a single field on a 1+1 base."""
    dims = dims or Dims(1, 1, 1)
    if dims.k != 1 or dims.m != 1 or dims.n != 1:
        raise InvalidArgumentError("linear-transport needs n=1, m=1, k=1")

    def phi(x, y, v):
        return v[0][0] - speed * v[0][1]

    return ConstraintSpec(dims, [phi], coeff_mode, custom_coeffs,
                          name="linear-transport")


def incompressibility_constraint(dims: Dims | None = None,
                                 coeff_mode: str = "chetaev",
                                 custom_coeffs: Callable | None = None) -> ConstraintSpec:
    """phi = det(spatial jet block) - 1 for the 3+1 continuum scenario."""
    dims = dims or Dims(3, 3, 1)
    if dims.k != 1 or dims.m != dims.n:
        raise InvalidArgumentError("incompressibility needs m = n and k = 1")

    def phi(x, y, v):
        spatial = [[v[a][i + 1] for i in range(dims.n)] for a in range(dims.m)]
        return ad.det(spatial) - 1.0

    return ConstraintSpec(dims, [phi], coeff_mode, custom_coeffs,
                          name="incompressibility")


CONSTRAINTS: dict[str, Callable] = {
    "linear-transport": linear_transport_constraint,
    "incompressibility": incompressibility_constraint,
}


def make_constraint(name: str, params=None, coeff_mode: str = "chetaev",
                    custom_coeffs: Callable | None = None) -> ConstraintSpec:
    if name not in CONSTRAINTS:
        raise InvalidArgumentError(
            f"unknown constraint {name!r}; available: {sorted(CONSTRAINTS)}"
        )
    params = dict(params or {})
    return CONSTRAINTS[name](coeff_mode=coeff_mode, custom_coeffs=custom_coeffs, **params)


def load_custom_coeffs_csv(path, dims: Dims) -> np.ndarray:
    """Constant coefficient matrix from CSV: row alpha, columns (mu, a) in
    layout order (mu-major)."""
    with open(path, newline="") as fh:
        rows = [[float(c) for c in row] for row in csv.reader(fh) if row]
    arr = np.asarray(rows)
    expected_cols = dims.nx * dims.m
    if arr.shape != (dims.k, expected_cols):
        raise InvalidArgumentError(
            f"coefficient CSV shape {arr.shape}, expected ({dims.k}, {expected_cols})"
        )
    return arr.reshape(dims.k, dims.nx, dims.m)
