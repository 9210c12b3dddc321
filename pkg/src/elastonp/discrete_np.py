"""Nyström discretization of the elastic layer potentials on a closed curve.

Densities are nodal vectors of length ``2n`` in node-major order
``(phi_1(x_0), phi_2(x_0), phi_1(x_1), ...)``.  Operators are dense
``2n x 2n`` matrices acting on that layout.

Quadrature
----------
* ``K`` and ``K*``: the antisymmetric Cauchy piece uses the split-grid
  rule (targets of one parity see only sources of the other parity, with
  doubled weights); the weakly singular piece uses the plain trapezoid rule
  with its on-curve limit on the diagonal.
* ``S``: the logarithm is split off as ``ln(4 sin^2((t - s)/2))`` and
  integrated with the trigonometric product weights of Kress; the rest is
  smooth.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core_types import BoundaryCurve, LameParams
from .kernels import conormal, kelvin_gradient, kelvin_matrix

__all__ = [
    "AssemblyError",
    "DiscreteNP",
    "SpectrumResult",
    "JumpReport",
    "assemble",
    "build_w_basis",
    "symmetrized_spectrum",
    "match_eigenvalues",
    "plemelj_residual",
    "self_adjointness_asymmetry",
    "resolved_modes",
    "jump_relation_check",
    "rigid_motions",
    "sample_density",
    "upsample_density",
    "single_layer_at",
    "single_layer_gradient_at",
]


class AssemblyError(RuntimeError):
    """Gram matrix not positive definite, or the W-basis system is singular."""


def _to_block(M4: np.ndarray) -> np.ndarray:
    """``(n, n, 2, 2)`` node blocks -> ``(2n, 2n)`` interleaved matrix."""
    n = M4.shape[0]
    return np.ascontiguousarray(M4.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n))


def sample_density(values: np.ndarray) -> np.ndarray:
    """``(n, 2)`` nodal values -> interleaved vector."""
    return np.asarray(values).reshape(-1)


def _geometry(curve: BoundaryCurve):
    x = curve.nodes
    r = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", r, r)
    np.fill_diagonal(r2, 1.0)
    return r, r2


def _np_blocks(params: LameParams, curve: BoundaryCurve, normal_at_target: bool):
    """Kernel blocks of ``K*`` (normal at target) or ``K`` (normal at source)."""
    n = curve.n_nodes
    idx = np.arange(n)
    r, r2 = _geometry(curve)
    nor = curve.normals
    c = params.mu / (2.0 * params.mu + params.lam)
    d = 2.0 * (params.mu + params.lam) / (2.0 * params.mu + params.lam)

    if normal_at_target:
        # K*(x, y) = K(y, x; n_x)^T ; with r = x - y this is
        # -c (n_x r^T - r n_x^T)/(2 pi r^2) + [c I + d rr^T/r^2] (r.n_x)/(2 pi r^2)
        nn = nor[:, None, :]
        rn = np.einsum("ijk,ijk->ij", r, np.broadcast_to(nn, r.shape)) / r2
        k1 = nn[..., :, None] * r[..., None, :] - r[..., :, None] * nn[..., None, :]
        k2_sign = 1.0
    else:
        # K(x, y) = -c (n_y r^T - r n_y^T)/(2 pi r^2) - [c I + d rr^T/r^2] (r.n_y)/(2 pi r^2)
        nn = nor[None, :, :]
        rn = np.einsum("ijk,ijk->ij", r, np.broadcast_to(nn, r.shape)) / r2
        k1 = nn[..., :, None] * r[..., None, :] - r[..., :, None] * nn[..., None, :]
        k2_sign = -1.0
    k1 = -c * k1 / (2.0 * np.pi * r2[..., None, None])
    rr = r[..., :, None] * r[..., None, :] / r2[..., None, None]

    # on-curve limits: (x - y).n / |x - y|^2 -> -kappa/2 (target normal) or +kappa/2 (source normal),
    # with kappa = gamma''.n / |gamma'|^2; r r^T / r^2 -> t t^T
    curv = np.einsum("ij,ij->i", curve.d2, nor) / curve.speed**2
    rn[idx, idx] = -0.5 * curv if normal_at_target else 0.5 * curv
    rr[idx, idx] = curve.tangents[:, :, None] * curve.tangents[:, None, :]
    k2 = k2_sign * (c * rn[..., None, None] * np.eye(2) + d * rn[..., None, None] * rr) / (2.0 * np.pi)

    w = curve.weights
    odd = ((idx[:, None] - idx[None, :]) % 2 == 1).astype(float)
    k1 = k1 * (2.0 * odd * w[None, :])[..., None, None]
    k1[idx, idx] = 0.0
    k2 = k2 * w[None, :, None, None]
    return _to_block(k1 + k2)


def _kress_log_weights(n_nodes: int) -> np.ndarray:
    """Weights ``R[i, j]`` with ``int ln(4 sin^2((t_i - s)/2)) f(s) ds ~ sum_j R[i, j] f_j``."""
    m = n_nodes // 2
    k = np.arange(n_nodes)
    dt = 2.0 * np.pi * k / n_nodes
    modes = np.arange(1, m)
    row = -(2.0 * np.pi / m) * (np.cos(np.outer(dt, modes)) @ (1.0 / modes)) - (np.pi / m**2) * np.cos(m * dt)
    return row[(k[:, None] - k[None, :]) % n_nodes]


def _single_layer(params: LameParams, curve: BoundaryCurve) -> np.ndarray:
    n = curve.n_nodes
    idx = np.arange(n)
    h = 2.0 * np.pi / n
    r, r2 = _geometry(curve)
    t = curve.t
    dt = t[:, None] - t[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth_log = 0.5 * np.log(r2) - 0.5 * np.log(4.0 * np.sin(0.5 * dt) ** 2)
    smooth_log[idx, idx] = np.log(curve.speed)
    log_w = (0.5 * _kress_log_weights(n) + h * smooth_log) * curve.speed[None, :]
    rr = r[..., :, None] * r[..., None, :] / r2[..., None, None]
    rr[idx, idx] = curve.tangents[:, :, None] * curve.tangents[:, None, :]
    blocks = (params.alpha1 / (2.0 * np.pi)) * log_w[..., None, None] * np.eye(2)
    blocks = blocks - (params.alpha2 / (2.0 * np.pi)) * rr * curve.weights[None, :, None, None]
    return _to_block(blocks)


def rigid_motions(curve: BoundaryCurve, weights: np.ndarray | None = None) -> np.ndarray:
    """Rigid motions ``(1,0)``, ``(0,1)``, ``(y,-x)`` at the nodes, orthonormal in the weighted pairing.

    Returns a ``(2n, 3)`` array; orthonormalization is a Cholesky
    factorization of the weighted Gram of the raw triple.
    """
    x = curve.nodes
    n = curve.n_nodes
    F = np.zeros((2 * n, 3))
    F[0::2, 0] = 1.0
    F[1::2, 1] = 1.0
    F[0::2, 2] = x[:, 1]
    F[1::2, 2] = -x[:, 0]
    W = np.repeat(curve.weights, 2) if weights is None else weights
    L = np.linalg.cholesky(F.T @ (W[:, None] * F))
    return sla.solve_triangular(L, F.T, lower=True).T


def _solve_w_basis(Kstar: np.ndarray, F: np.ndarray, W: np.ndarray) -> np.ndarray:
    # bordered system: (1/2 - K*) phi~ + F lam = (K* - 1/2) F,  F^T W phi~ = 0
    m = Kstar.shape[0]
    C = (W[:, None] * F).T
    A = np.block([[0.5 * np.eye(m) - Kstar, F], [C, np.zeros((3, 3))]])
    rhs = np.vstack([(Kstar - 0.5 * np.eye(m)) @ F, np.zeros((3, 3))])
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:  # pragma: no cover - defensive
        raise AssemblyError(f"W-basis system could not be factorized: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-13 * np.max(np.abs(np.diag(lu[0]))):
        raise AssemblyError("W-basis system is numerically singular")
    sol = sla.lu_solve(lu, rhs)
    return sol[:m] + F


@dataclass(frozen=True, eq=False)
class DiscreteNP:
    """Assembled operators on one curve.

    Attributes
    ----------
    S_h, Kstar_h, K_h : (2n, 2n) ndarray
    S_tilde : (2n, 2n) ndarray
        Rigid-motion corrected single layer ``S P - F F^T W`` with
        ``P = I - Phi F^T W``.
    gram_star : (2n, 2n) ndarray
        Symmetric positive definite matrix of ``(phi, psi)_*``.
    psi_basis : (2n, 3) ndarray
        Orthonormal rigid motions ``F``.
    w_basis : (2n, 3) ndarray
        ``Phi`` with ``K* Phi = Phi / 2`` and ``F^T W Phi = I``.
    weights : (2n,) ndarray
        Quadrature weights repeated per component; the duality pairing is
        ``<phi, f> = sum(weights * phi * f)``.
    gram_raw_asymmetry : float
        Relative asymmetry of the Gram before symmetrization.
    """

    params: LameParams
    curve: BoundaryCurve
    S_h: np.ndarray
    Kstar_h: np.ndarray
    K_h: np.ndarray
    S_tilde: np.ndarray
    gram_star: np.ndarray
    psi_basis: np.ndarray
    w_basis: np.ndarray
    weights: np.ndarray
    gram_raw_asymmetry: float = field(default=0.0)

    @property
    def size(self) -> int:
        return self.S_h.shape[0]

    def pair(self, phi, f):
        """Duality pairing ``<phi, f>`` (bilinear)."""
        return np.sum(self.weights * phi * f, axis=0)

    def star_inner(self, phi, psi):
        """``(phi, psi)_*`` with complex conjugation on the first slot."""
        return np.conj(phi) @ self.gram_star @ psi


def assemble(params: LameParams, curve: BoundaryCurve) -> DiscreteNP:
    """Assemble ``S_h``, ``K_h``, ``K*_h`` and the symmetrizing Gram.

    Raises
    ------
    AssemblyError
        If the Gram is not positive definite (mesh too coarse, or the
        rigid-motion correction failed).
    """
    Kstar = _np_blocks(params, curve, normal_at_target=True)
    K = _np_blocks(params, curve, normal_at_target=False)
    S = _single_layer(params, curve)
    W = np.repeat(curve.weights, 2)
    F = rigid_motions(curve, W)
    Phi = _solve_w_basis(Kstar, F, W)
    C = (W[:, None] * F).T
    P = np.eye(W.size) - Phi @ C
    S_tilde = S @ P - F @ C
    G = -(W[:, None] * S_tilde)
    asym = float(np.abs(G - G.T).max() / np.abs(G).max())
    G = 0.5 * (G + G.T)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(
            "symmetrized Gram is not positive definite; refine the mesh "
            "(the planar single layer itself may be singular, only the corrected one is used)"
        ) from exc
    arrays = (S, Kstar, K, S_tilde, G, F, Phi, W)
    for a in arrays:
        a.setflags(write=False)
    return DiscreteNP(params, curve, S, Kstar, K, S_tilde, G, F, Phi, W, asym)


def build_w_basis(np_: DiscreteNP) -> np.ndarray:
    """Densities ``phi^(j)`` spanning the ``1/2`` eigenspace of ``K*_h``, biorthogonal to ``psi_basis``."""
    return _solve_w_basis(np_.Kstar_h, np_.psi_basis, np_.weights)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k0: float
    half_tol: float
    accumulation_report: dict

    @property
    def half_multiplicity(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues - 0.5) <= self.half_tol))


def symmetrized_spectrum(np_: DiscreteNP, *, accumulation_eps: float = 1e-3) -> SpectrumResult:
    """Generalized symmetric eigenproblem ``(G K*) v = k G v``.

    ``G K*`` is symmetrized before the Cholesky-congruence solve, so the
    returned eigenvalues are real and the eigenvectors ``G``-orthonormal.
    The tolerance for counting eigenvalues equal to ``1/2`` is ten times
    the median gap among the three largest eigenvalues, floored at ``1e-9``.
    """
    H = np_.gram_star @ np_.Kstar_h
    H = 0.5 * (H + H.T)
    try:
        vals, vecs = sla.eigh(H, np_.gram_star)
    except sla.LinAlgError as exc:
        raise RuntimeError(f"generalized eigensolver did not converge: {exc}") from exc
    top = np.sort(vals)[-3:]
    tol = max(10.0 * float(np.median(np.diff(top))), 1e-9)
    k0 = np_.params.k0
    report = {
        "eps": accumulation_eps,
        "near_plus_k0": int(np.sum(np.abs(vals - k0) < accumulation_eps)),
        "near_minus_k0": int(np.sum(np.abs(vals + k0) < accumulation_eps)),
        "outside": int(np.sum((np.abs(vals - k0) >= accumulation_eps) & (np.abs(vals + k0) >= accumulation_eps))),
    }
    return SpectrumResult(vals, vecs, k0, tol, report)


def match_eigenvalues(numeric, targets, gate: float = 1e-3):
    """Greedy nearest-value one-to-one matching.

    Returns a list of ``(target, matched_or_None, abs_err)`` in the order of
    ``targets``; a target is unmatched when no free numeric value lies
    within ``gate``.
    """
    numeric = np.asarray(numeric, dtype=float)
    targets = np.asarray(targets, dtype=float)
    dist = np.abs(targets[:, None] - numeric[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    used_t = np.zeros(targets.size, bool)
    used_n = np.zeros(numeric.size, bool)
    match = [None] * targets.size
    for flat in order:
        i, j = divmod(int(flat), numeric.size)
        if dist[i, j] > gate:
            break
        if used_t[i] or used_n[j]:
            continue
        used_t[i] = used_n[j] = True
        match[i] = j
    out = []
    for i, j in enumerate(match):
        if j is None:
            out.append((float(targets[i]), None, np.inf))
        else:
            out.append((float(targets[i]), float(numeric[j]), float(abs(numeric[j] - targets[i]))))
    return out


def resolved_modes(curve: BoundaryCurve, band: int) -> np.ndarray:
    """Columns ``e_k cos(m t)``, ``e_k sin(m t)`` for ``0 <= m <= band``, nodal layout."""
    t = curve.t
    cols = []
    for m in range(band + 1):
        fns = [np.cos(m * t)] if m == 0 else [np.cos(m * t), np.sin(m * t)]
        for f in fns:
            for k in range(2):
                v = np.zeros((t.size, 2))
                v[:, k] = f
                cols.append(v.reshape(-1))
    return np.array(cols).T


def plemelj_residual(np_: DiscreteNP, band: int | None = None) -> float:
    """``||S~ K* - K S~||_F / ||S~||_F``.

    With ``band`` the norms are taken over the trigonometric densities of
    degree ``<= band`` only (a diagnostic for the resolved part of the
    discrete space).
    """
    D = np_.S_tilde @ np_.Kstar_h - np_.K_h @ np_.S_tilde
    St = np_.S_tilde
    if band is not None:
        B = resolved_modes(np_.curve, band)
        D, St = D @ B, St @ B
    return float(np.linalg.norm(D) / np.linalg.norm(St))


def self_adjointness_asymmetry(np_: DiscreteNP, band: int | None = None) -> float:
    """Max-entry asymmetry of ``G K*`` relative to its largest entry."""
    H = np_.gram_star @ np_.Kstar_h
    if band is not None:
        B = resolved_modes(np_.curve, band)
        H = B.T @ H @ B
    return float(np.abs(H - H.T).max() / np.abs(H).max())


# --- off-surface evaluation -------------------------------------------------


def upsample_density(density: np.ndarray, n_fine: int) -> np.ndarray:
    """Trigonometric interpolation of a nodal density onto ``n_fine`` equispaced nodes."""
    vals = np.asarray(density).reshape(-1, 2)
    n = vals.shape[0]
    if n_fine == n:
        return vals.reshape(-1).copy()
    if n_fine < n:
        raise ValueError("n_fine must not be smaller than the current node count")
    c = np.fft.fft(vals, axis=0)
    h = n // 2
    cf = np.zeros((n_fine, 2), dtype=complex)
    cf[:h] = c[:h]
    cf[n_fine - h + 1 :] = c[h + 1 :]
    cf[h] = 0.5 * c[h]
    cf[n_fine - h] = 0.5 * c[h]
    out = np.fft.ifft(cf, axis=0) * (n_fine / n)
    if not np.iscomplexobj(density):
        out = out.real
    return out.reshape(-1)


def _fine(curve: BoundaryCurve, density, n_fine):
    if n_fine is None or n_fine == curve.n_nodes:
        return curve, np.asarray(density).reshape(-1, 2)
    fine = curve.refined(n_fine)
    return fine, upsample_density(density, n_fine).reshape(-1, 2)


def single_layer_at(params: LameParams, curve: BoundaryCurve, density, points, *, n_fine=None, chunk=64):
    """Trapezoid evaluation of ``S[phi]`` at points off the curve, shape ``(m, 2)``."""
    fine, phi = _fine(curve, density, n_fine)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((pts.shape[0], 2), dtype=np.result_type(phi, float))
    wphi = phi * fine.weights[:, None]
    for s in range(0, pts.shape[0], chunk):
        G = kelvin_matrix(params, pts[s : s + chunk, None, :], fine.nodes[None, :, :])
        out[s : s + chunk] = np.einsum("pqij,qj->pi", G, wphi)
    return out


def single_layer_gradient_at(params: LameParams, curve: BoundaryCurve, density, points, *, n_fine=None, chunk=64):
    """``grad S[phi]`` at off-curve points: ``out[p, i, k] = d u_i / d x_k``."""
    fine, phi = _fine(curve, density, n_fine)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((pts.shape[0], 2, 2), dtype=np.result_type(phi, float))
    wphi = phi * fine.weights[:, None]
    for s in range(0, pts.shape[0], chunk):
        D = kelvin_gradient(params, pts[s : s + chunk, None, :] - fine.nodes[None, :, :])
        out[s : s + chunk] = np.einsum("pqijk,qj->pik", D, wphi)
    return out


@dataclass(frozen=True)
class JumpReport:
    offsets: tuple
    exterior_error: float
    interior_error: float
    max_error: float
    exterior: np.ndarray
    interior: np.ndarray
    converged: bool


def jump_relation_check(np_: DiscreteNP, density, offsets=(1e-2, 5e-3, 2.5e-3), *, n_fine=None) -> JumpReport:
    """Compare one-sided tractions of ``S[phi]`` with ``(+-1/2 + K*_h) phi``.

    Tractions are evaluated at ``x_i +- t n_i`` for each offset by a
    refined trapezoid rule (density interpolated trigonometrically), then
    extrapolated to ``t = 0`` with the quadratic through the three offsets.
    Errors are max-norm, relative to ``max |phi|``.
    """
    curve = np_.curve
    phi = np.asarray(density, dtype=float).reshape(-1)
    scale = np.abs(phi).max()
    if scale == 0.0:
        z = np.zeros((curve.n_nodes, 2))
        return JumpReport(tuple(offsets), 0.0, 0.0, 0.0, z, z, True)
    offsets = tuple(float(o) for o in offsets)
    if len(offsets) < 3:
        raise ValueError("need three offsets for quadratic extrapolation")
    if n_fine is None:
        need = 6.0 * curve.perimeter / min(offsets)
        n_fine = int(2 ** np.ceil(np.log2(max(need, curve.n_nodes))))
    x, nrm = curve.nodes, curve.normals
    ext, inn = [], []
    for t in offsets:
        for side, store in ((1.0, ext), (-1.0, inn)):
            grad = single_layer_gradient_at(np_.params, curve, phi, x + side * t * nrm, n_fine=n_fine)
            store.append(conormal(np_.params, grad, nrm))
    ts = np.array(offsets)
    # Lagrange weights for evaluation at 0
    lw = np.array([np.prod([-tj / (ti - tj) for tj in ts if tj != ti]) for ti in ts])
    lin = np.array([ts[2] / (ts[2] - ts[1]), -ts[1] / (ts[2] - ts[1])])  # two smallest offsets
    ext0 = np.einsum("k,kij->ij", lw, np.array(ext))
    inn0 = np.einsum("k,kij->ij", lw, np.array(inn))
    ext_lin = lin[0] * ext[1] + lin[1] * ext[2]
    converged = bool(np.abs(ext0 - ext_lin).max() <= 1e-2 * scale)
    if not converged:
        warnings.warn("Richardson extrapolation of the jump relation did not settle", RuntimeWarning, stacklevel=2)
    Kphi = (np_.Kstar_h @ phi).reshape(-1, 2)
    p2 = phi.reshape(-1, 2)
    e_ext = float(np.abs(ext0 - (0.5 * p2 + Kphi)).max() / scale)
    e_int = float(np.abs(inn0 - (-0.5 * p2 + Kphi)).max() / scale)
    return JumpReport(offsets, e_ext, e_int, max(e_ext, e_int), ext0, inn0, converged)
