"""Discrete function spaces: spectral Laplacians, norms and duality maps.

The canonical isomorphism of the discrete V onto V* is realized by a second
order finite-difference Laplacian (optionally shifted by the identity, as in
the reaction-diffusion examples where it is I - Laplacian). All fractional
powers, inverses and Yosida approximants go through one dense symmetric
eigendecomposition taken with respect to the trapezoid inner product, so the
spectral identities hold to essentially machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg

from .grids import BoundaryCondition, Field, Grid

__all__ = [
    "NormTag",
    "SpectralLaplacian",
    "SpectralSingularityError",
    "IndeterminateSelectionError",
    "inner_product",
    "norm",
    "dual_norm",
    "pairing",
    "gamma_apply",
    "yosida_apply",
    "gamma_power",
    "duality_map_F",
    "duality_map_F_inverse",
    "resolvent_eF_NK",
]


class SpectralSingularityError(ValueError):
    """Negative power requested of an operator with a zero eigenvalue."""


class IndeterminateSelectionError(ValueError):
    """Pure normal-cone inverse evaluated at zero: every ball point solves it."""


@dataclass(frozen=True)
class NormTag:
    """Role of a space: L2, H1, H1dual, Lp(p) or Hminus1.

    Lp supports p in {2, 4}; Lp(2) is canonicalized to L2. Hminus1 is the
    H^-1 norm through a Dirichlet Laplacian.
    """

    kind: str
    p: float | None = None

    _KINDS = ("L2", "H1", "H1dual", "Lp", "Hminus1")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown norm tag {self.kind!r}")
        if self.kind == "Lp":
            if self.p not in (2, 4):
                raise ValueError("Lp tags support p in {2, 4}")
            if self.p == 2:
                object.__setattr__(self, "kind", "L2")
                object.__setattr__(self, "p", None)
        elif self.p is not None:
            raise ValueError("p is only meaningful for Lp tags")

    @property
    def is_hilbert(self) -> bool:
        return self.kind != "Lp"

    @property
    def needs_spectral(self) -> bool:
        return self.kind in ("H1", "H1dual", "Hminus1")


L2 = NormTag("L2")
H1 = NormTag("H1")
H1DUAL = NormTag("H1dual")
HMINUS1 = NormTag("Hminus1")
L4 = NormTag("Lp", 4)


def _laplacian_matrix_1d(n: int, h: float, bc: BoundaryCondition) -> np.ndarray:
    """Dense 1D (-Laplacian) with the boundary condition built in by ghost
    node elimination. Self-adjoint w.r.t. the trapezoid weights."""
    m = np.zeros((n, n))
    idx = np.arange(n)
    m[idx, idx] = 2.0 / h**2
    m[idx[:-1], idx[:-1] + 1] = -1.0 / h**2
    m[idx[1:], idx[1:] - 1] = -1.0 / h**2
    if bc.kind == "neumann":
        m[0, 1] = -2.0 / h**2
        m[-1, -2] = -2.0 / h**2
    elif bc.kind == "robin":
        m[0, 1] = -2.0 / h**2
        m[-1, -2] = -2.0 / h**2
        m[0, 0] += 2.0 * bc.gamma / h
        m[-1, -1] += 2.0 * bc.gamma / h
    return m


@dataclass(frozen=True)
class _Axis:
    eigenvalues: np.ndarray   # ascending, no shift
    eigenvectors: np.ndarray  # columns, orthonormal w.r.t. the axis weights
    weights: np.ndarray
    matrix: np.ndarray


class SpectralLaplacian:
    """Eigendecomposition of (shift*I - Laplacian) on one component's nodes.

    2D grids use the tensor-product structure: per-axis decompositions,
    eigenvalues lambda_ij = lambda_i + lambda_j + shift. Eigenvectors are
    orthonormal in the discrete (trapezoid) L2 inner product.
    """

    def __init__(self, grid: Grid, bc: BoundaryCondition, shift: float = 0.0):
        self.grid = grid
        self.bc = bc
        self.shift = float(shift)
        axes = []
        hs = grid.spacing(bc)
        ws = grid.axis_weights(bc)
        for n, h, w in zip(grid.nodes, hs, ws):
            m = _laplacian_matrix_1d(n, h, bc)
            sqw = np.sqrt(w)
            sym = (sqw[:, None] * m) / sqw[None, :]
            sym = 0.5 * (sym + sym.T)
            evals, q = scipy.linalg.eigh(sym)
            evals = np.where(np.abs(evals) < 1e-12, 0.0, evals)
            vecs = q / sqw[:, None]
            axes.append(_Axis(evals, vecs, w, m))
        self._axes = tuple(axes)

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def weights(self) -> np.ndarray:
        if self.grid.dimension == 1:
            return self._axes[0].weights
        return np.outer(self._axes[0].weights, self._axes[1].weights).ravel()

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues (shift included), ascending."""
        if self.grid.dimension == 1:
            lam = self._axes[0].eigenvalues + self.shift
            return lam
        lx = self._axes[0].eigenvalues
        ly = self._axes[1].eigenvalues
        return np.sort((lx[:, None] + ly[None, :] + self.shift).ravel())

    @cached_property
    def _pair_order(self) -> np.ndarray:
        lx = self._axes[0].eigenvalues
        ly = self._axes[1].eigenvalues
        flat = (lx[:, None] + ly[None, :]).ravel()
        return np.argsort(flat, kind="stable")

    def eigenvector(self, k: int) -> np.ndarray:
        """k-th eigenvector (matching ``eigenvalues`` order), flat nodal values."""
        if self.grid.dimension == 1:
            return self._axes[0].eigenvectors[:, k].copy()
        ny = self.grid.nodes[1]
        flat_idx = self._pair_order[k]
        i, j = divmod(flat_idx, ny)
        return np.outer(
            self._axes[0].eigenvectors[:, i], self._axes[1].eigenvectors[:, j]
        ).ravel()

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense nodal matrix of (shift*I - Laplacian)."""
        if self.grid.dimension == 1:
            m = self._axes[0].matrix.copy()
        else:
            ax, ay = self._axes
            m = np.kron(ax.matrix, np.eye(self.grid.nodes[1])) + np.kron(
                np.eye(self.grid.nodes[0]), ay.matrix
            )
        return m + self.shift * np.eye(self.n)

    def apply_fn(self, values: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Apply fn(operator) spectrally to one component's nodal values."""
        v = np.asarray(values, dtype=float).ravel()
        if v.size != self.n:
            raise ValueError(f"expected {self.n} nodal values, got {v.size}")
        if self.grid.dimension == 1:
            ax = self._axes[0]
            coef = ax.eigenvectors.T @ (ax.weights * v)
            return ax.eigenvectors @ (fn(ax.eigenvalues + self.shift) * coef)
        ax, ay = self._axes
        V = v.reshape(self.grid.nodes)
        coef = ax.eigenvectors.T @ (ax.weights[:, None] * V * ay.weights[None, :]) @ ay.eigenvectors
        lam = ax.eigenvalues[:, None] + ay.eigenvalues[None, :] + self.shift
        return (ax.eigenvectors @ (fn(lam) * coef) @ ay.eigenvectors.T).ravel()

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.apply_fn(values, lambda lam: lam)

    def apply_power(self, values: np.ndarray, alpha: float) -> np.ndarray:
        if not -1.0 <= alpha <= 1.0:
            raise ValueError("power must lie in [-1, 1]")
        if alpha < 0.0 and self.min_eigenvalue <= 0.0:
            raise SpectralSingularityError(
                "negative power of an operator with a zero eigenvalue; "
                "configure an identity shift"
            )
        return self.apply_fn(values, lambda lam: np.power(lam, alpha))

    def apply_inverse(self, values: np.ndarray) -> np.ndarray:
        return self.apply_power(values, -1.0)

    def apply_yosida(self, values: np.ndarray, nu: float) -> np.ndarray:
        if not nu > 0.0:
            raise ValueError("Yosida parameter must be positive")
        return self.apply_fn(values, lambda lam: lam / (1.0 + nu * lam))


# ---------------------------------------------------------------------------
# Field-level operations


def _component_weights(field: Field) -> np.ndarray:
    if field.n_components != field.grid.n_components:
        raise ValueError("field component count does not match its grid")
    return field.grid.component_weights()


def _require_spectral(tag: NormTag, s: SpectralLaplacian | None) -> SpectralLaplacian:
    if s is None:
        raise ValueError(f"norm tag {tag.kind} needs a SpectralLaplacian")
    if tag.kind == "Hminus1":
        if s.bc.kind != "dirichlet":
            raise ValueError("Hminus1 requires a Dirichlet Laplacian")
        if s.shift != 0.0:
            raise ValueError("Hminus1 uses the unshifted Dirichlet Laplacian")
    return s


def _per_component(field: Field, s: SpectralLaplacian, op: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    out = np.empty_like(field.values)
    n = field.grid.size
    for c in range(field.n_components):
        out[c * n : (c + 1) * n] = op(field.component(c))
    return out


def pairing(zeta: Field, u: Field) -> float:
    """Duality pairing <zeta, u>: the weighted nodal product, which realizes
    every (U*, U) pairing used here (L2, Lp, H^-1 against H^1_0)."""
    w = _component_weights(u)
    return float(np.dot(w * zeta.values, u.values))


def inner_product(a: Field, b: Field, tag: NormTag = L2, s: SpectralLaplacian | None = None) -> float:
    """Inner product of two fields under a Hilbert norm tag."""
    a._check_compatible(b)
    if not tag.is_hilbert:
        raise ValueError(f"{tag.kind} is not an inner-product norm")
    w = _component_weights(a)
    if tag.kind == "L2":
        return float(np.dot(w * a.values, b.values))
    s = _require_spectral(tag, s)
    if tag.kind == "H1":
        ga = _per_component(a, s, s.apply)
    else:  # H1dual, Hminus1
        ga = _per_component(a, s, s.apply_inverse)
    return float(np.dot(w * ga, b.values))


def norm(a: Field, tag: NormTag = L2, s: SpectralLaplacian | None = None) -> float:
    if tag.kind == "Lp":
        w = _component_weights(a)
        p = tag.p
        n = a.grid.size
        comp = [
            np.dot(w[c * n : (c + 1) * n], np.abs(a.component(c)) ** p) ** (1.0 / p)
            for c in range(a.n_components)
        ]
        return float(np.sqrt(np.sum(np.square(comp))))
    val = inner_product(a, a, tag, s)
    return float(np.sqrt(max(val, 0.0)))


_DUAL_TAG = {"L2": L2, "Lp": None, "H1": H1DUAL, "H1dual": H1, "Hminus1": H1}


def dual_norm(zeta: Field, tag: NormTag, s: SpectralLaplacian | None = None) -> float:
    """Norm of a U*-element for the U described by ``tag``."""
    if tag.kind == "Lp":
        q = tag.p / (tag.p - 1.0)
        w = _component_weights(zeta)
        n = zeta.grid.size
        comp = [
            np.dot(w[c * n : (c + 1) * n], np.abs(zeta.component(c)) ** q) ** (1.0 / q)
            for c in range(zeta.n_components)
        ]
        return float(np.sqrt(np.sum(np.square(comp))))
    if tag.kind == "Hminus1":
        s = _require_spectral(tag, s)
        # dual of H^-1 is H^1_0
        return norm(zeta, H1, s)
    return norm(zeta, _DUAL_TAG[tag.kind], s)


def gamma_apply(y: Field, s: SpectralLaplacian) -> Field:
    """Canonical isomorphism: (shift*I - Laplacian) y, applied per component."""
    return Field(y.grid, _per_component(y, s, s.apply), y.n_components)


def yosida_apply(y: Field, s: SpectralLaplacian, nu: float) -> Field:
    """Yosida approximation Gamma (I + nu Gamma)^-1 y."""
    return Field(y.grid, _per_component(y, s, lambda v: s.apply_yosida(v, nu)), y.n_components)


def gamma_power(y: Field, s: SpectralLaplacian, alpha: float) -> Field:
    """Spectral fractional power Gamma^alpha y, alpha in [-1, 1]."""
    return Field(y.grid, _per_component(y, s, lambda v: s.apply_power(v, alpha)), y.n_components)


def _lp_map(values: np.ndarray, weights: np.ndarray, p: float) -> np.ndarray:
    nrm = np.dot(weights, np.abs(values) ** p) ** (1.0 / p)
    if nrm == 0.0:
        return np.zeros_like(values)
    return nrm ** (2.0 - p) * np.sign(values) * np.abs(values) ** (p - 1.0)


def duality_map_F(u: Field, tag: NormTag, s: SpectralLaplacian | None = None) -> Field:
    """Duality mapping F of U: <F(u), u> = ||u||_U^2 and ||F(u)||_U* = ||u||_U.

    Identity on L2, the power nonlinearity on Lp, and the inverse spectral
    Laplacian on H^-1 (whose dual pairing is the extended L2 pairing).
    """
    if tag.kind == "L2":
        return u.copy()
    if tag.kind == "Lp":
        w = _component_weights(u)
        n = u.grid.size
        out = np.empty_like(u.values)
        for c in range(u.n_components):
            sl = slice(c * n, (c + 1) * n)
            out[sl] = _lp_map(u.values[sl], w[sl], tag.p)
        return Field(u.grid, out, u.n_components)
    if tag.kind == "Hminus1":
        s = _require_spectral(tag, s)
        return Field(u.grid, _per_component(u, s, s.apply_inverse), u.n_components)
    if tag.kind == "H1":
        s = _require_spectral(tag, s)
        return gamma_apply(u, s)
    raise ValueError(f"no duality map for tag {tag.kind}")


def duality_map_F_inverse(zeta: Field, tag: NormTag, s: SpectralLaplacian | None = None) -> Field:
    """F^-1, which is the duality mapping of U*."""
    if tag.kind == "L2":
        return zeta.copy()
    if tag.kind == "Lp":
        q = tag.p / (tag.p - 1.0)
        w = _component_weights(zeta)
        n = zeta.grid.size
        out = np.empty_like(zeta.values)
        for c in range(zeta.n_components):
            sl = slice(c * n, (c + 1) * n)
            out[sl] = _lp_map(zeta.values[sl], w[sl], q)
        return Field(zeta.grid, out, zeta.n_components)
    if tag.kind == "Hminus1":
        s = _require_spectral(tag, s)
        return gamma_apply(zeta, s)
    if tag.kind == "H1":
        s = _require_spectral(tag, s)
        return Field(zeta.grid, _per_component(zeta, s, s.apply_inverse), zeta.n_components)
    raise ValueError(f"no duality map for tag {tag.kind}")


def resolvent_eF_NK(
    zeta: Field,
    tag: NormTag,
    eps: float,
    rho: float,
    s: SpectralLaplacian | None = None,
) -> Field:
    """Exact resolvent (eps*F + N_K)^-1 zeta on the ball K = {||u||_U <= rho}.

    Positive homogeneity of F collapses the inclusion to a radial clamp:
    u = F^-1(zeta) * min(1/eps, rho/||zeta||_U*). For eps = 0 this is the
    normal-cone inverse rho F^-1(zeta)/||zeta||, undefined at zeta = 0.
    """
    if not rho > 0.0:
        raise ValueError("ball radius must be positive")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    nz = dual_norm(zeta, tag, s)
    if eps == 0.0:
        if nz == 0.0:
            raise IndeterminateSelectionError(
                "N_K^-1(0) is the whole ball; the caller must pick a selection"
            )
        scale = rho / nz
    elif nz == 0.0:
        return Field(zeta.grid, np.zeros_like(zeta.values), zeta.n_components)
    else:
        scale = min(1.0 / eps, rho / nz)
    finv = duality_map_F_inverse(zeta, tag, s)
    return Field(zeta.grid, scale * finv.values, zeta.n_components)
