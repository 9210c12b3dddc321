"""Pointwise kernels of planar isotropic elastostatics.

All functions broadcast over leading axes: points are arrays of shape
``(..., 2)`` and matrix-valued results have shape ``(..., 2, 2)``.

Conventions
-----------
``traction_kernel(x, y, n_y)`` is the double-layer kernel: row ``k`` is
the traction, at ``y`` with normal ``n_y``, of the displacement
``Gamma(x - .) e_k``.  Applied to a trace ``f`` it gives the NP operator
``K[f](x) = p.v. int traction_kernel(x, y, n_y) f(y) ds(y)``.  The adjoint
kernel used by ``K*`` is ``traction_kernel(y, x, n_x).T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import LameParams

__all__ = [
    "KernelSplit",
    "kelvin_matrix",
    "kelvin_gradient",
    "kelvin_hessian",
    "traction_kernel",
    "adjoint_traction_kernel",
    "kernel_split",
    "k1_matrix",
    "conormal",
]

_I2 = np.eye(2)


def _diff(x, y, what="x and y"):
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = np.einsum("...i,...i->...", r, r)
    if np.any(r2 == 0.0):
        raise ValueError(f"coincident points: {what} must differ")
    return r, r2


def kelvin_matrix(params: LameParams, x, y) -> np.ndarray:
    r"""Kelvin matrix ``Gamma(x - y)``.

    .. math:: \Gamma_{ij}(r) = \frac{\alpha_1}{2\pi}\delta_{ij}\ln|r|
              - \frac{\alpha_2}{2\pi}\frac{r_i r_j}{|r|^2}
    """
    r, r2 = _diff(x, y)
    rr = r[..., :, None] * r[..., None, :] / r2[..., None, None]
    log = 0.5 * np.log(r2)
    return (params.alpha1 * log[..., None, None] * _I2 - params.alpha2 * rr) / (2.0 * np.pi)


def kelvin_gradient(params: LameParams, r) -> np.ndarray:
    """``D[..., i, j, k] = d Gamma_ij / d r_k`` at separation ``r``."""
    r = np.asarray(r, dtype=float)
    r2 = np.einsum("...i,...i->...", r, r)
    if np.any(r2 == 0.0):
        raise ValueError("coincident points")
    u = r / r2[..., None]
    a1, a2 = params.alpha1, params.alpha2
    term1 = a1 * np.einsum("ij,...k->...ijk", _I2, u)
    # d(r_i r_j / r^2)/dr_k
    term2 = (
        np.einsum("ik,...j->...ijk", _I2, u)
        + np.einsum("jk,...i->...ijk", _I2, u)
        - 2.0 * np.einsum("...i,...j,...k->...ijk", r, r, u) / r2[..., None, None, None]
    )
    return (term1 - a2 * term2) / (2.0 * np.pi)


def kelvin_hessian(params: LameParams, r) -> np.ndarray:
    """``H[..., i, j, k, l] = d^2 Gamma_ij / (d r_k d r_l)``."""
    r = np.asarray(r, dtype=float)
    r2 = np.einsum("...i,...i->...", r, r)
    if np.any(r2 == 0.0):
        raise ValueError("coincident points")
    s = 1.0 / r2[..., None, None, None, None]
    d = _I2
    # Hessian of ln|r|
    ddl = np.einsum("kl,...->...kl", d, 1.0 / r2) - 2.0 * np.einsum("...k,...l->...kl", r, r) / (r2**2)[..., None, None]
    t1 = np.einsum("ij,...kl->...ijkl", d, ddl)
    # Hessian of r_i r_j / r^2
    t2 = (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)) * s
    t2 = t2 - 2.0 * s**2 * (
        np.einsum("ik,...j,...l->...ijkl", d, r, r)
        + np.einsum("jk,...i,...l->...ijkl", d, r, r)
        + np.einsum("il,...j,...k->...ijkl", d, r, r)
        + np.einsum("jl,...i,...k->...ijkl", d, r, r)
        + np.einsum("kl,...i,...j->...ijkl", d, r, r)
    )
    t2 = t2 + 8.0 * s**3 * np.einsum("...i,...j,...k,...l->...ijkl", r, r, r, r)
    return (params.alpha1 * t1 - params.alpha2 * t2) / (2.0 * np.pi)


def conormal(params: LameParams, grad, n) -> np.ndarray:
    """Traction ``lam (div u) n + mu (grad u + grad u^T) n``.

    ``grad[..., i, k] = d u_i / d x_k``.
    """
    grad = np.asarray(grad)
    n = np.asarray(n)
    div = np.einsum("...ii->...", grad)
    sym = grad + np.swapaxes(grad, -1, -2)
    return params.lam * div[..., None] * n + params.mu * np.einsum("...ik,...k->...i", sym, n)


def k1_matrix(x, y, n_y) -> np.ndarray:
    """Unweighted antisymmetric Cauchy kernel ``(n_y r^T - r n_y^T) / (2 pi |r|^2)``, ``r = x - y``."""
    r, r2 = _diff(x, y)
    n_y = np.asarray(n_y, dtype=float)
    m = n_y[..., :, None] * r[..., None, :] - r[..., :, None] * n_y[..., None, :]
    return m / (2.0 * np.pi * r2[..., None, None])


def _k2_matrix(params: LameParams, x, y, n_y) -> np.ndarray:
    r, r2 = _diff(x, y)
    n_y = np.asarray(n_y, dtype=float)
    rn = np.einsum("...i,...i->...", r, n_y) / r2
    rr = r[..., :, None] * r[..., None, :] / r2[..., None, None]
    c = params.mu / (2.0 * params.mu + params.lam)
    d = 2.0 * (params.mu + params.lam) / (2.0 * params.mu + params.lam)
    # weakly singular part; sign fixed by the finite-difference traction check
    return -(c * rn[..., None, None] * _I2 + d * rn[..., None, None] * rr) / (2.0 * np.pi)


@dataclass(frozen=True)
class KernelSplit:
    """Cauchy-singular and weakly singular pieces of the double-layer kernel.

    ``k1_part`` already carries the factor ``-mu / (2 mu + lam)``; the
    full kernel is ``k1_part + k2_part``.
    """

    k1_part: np.ndarray
    k2_part: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.k1_part + self.k2_part


def kernel_split(params: LameParams, x, y, n_y) -> KernelSplit:
    c = params.mu / (2.0 * params.mu + params.lam)
    return KernelSplit(-c * k1_matrix(x, y, n_y), _k2_matrix(params, x, y, n_y))


def traction_kernel(params: LameParams, x, y, n_y) -> np.ndarray:
    """Double-layer kernel; see the module docstring for the index convention."""
    return kernel_split(params, x, y, n_y).total


def adjoint_traction_kernel(params: LameParams, x, y, n_x) -> np.ndarray:
    """Kernel of ``K*``: ``traction_kernel(y, x, n_x)`` transposed."""
    return np.swapaxes(traction_kernel(params, y, x, n_x), -1, -2)
