"""Lossy transmission problem, dissipated energy and CALR diagnostics.

The inclusion has Lamé pair ``(c + i delta)(lam, mu)`` inside a background
``(lam, mu)``; a dipole source ``F_z`` sits outside.  The solution is
``u = F_z + S[phi]`` with ``(k_delta I - K*) phi = d_nu F_z``.

Two solvers are provided.  The spectral one expands ``phi`` in the ellipse
eigenfunction catalog; the direct one solves the Nyström system.  Complex
arithmetic lives only in this module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analytic_spectra import (
    EllipseSpectrum,
    ellipse_single_layer_exterior,
    ellipse_single_layer_gradient,
    ellipse_spectrum,
)
from .core_types import (
    BoundaryCurve,
    EllipseGeometry,
    LameParams,
    cartesian_to_elliptic,
    elliptic_to_cartesian,
    make_disk_curve,
    make_ellipse_curve,
)
from .discrete_np import DiscreteNP, assemble, single_layer_at
from .kernels import conormal, kelvin_gradient, kelvin_hessian

__all__ = [
    "DiskGeometry",
    "DipoleSource",
    "CalrProblem",
    "CoefficientTable",
    "CalrSolution",
    "SweepResult",
    "TruncationWarning",
    "k_delta",
    "k_of_contrast",
    "calr_contrast",
    "default_n_max",
    "dipole_field",
    "dipole_gradient",
    "dipole_traction",
    "spectral_coefficients",
    "solve_spectral",
    "solve_direct",
    "energy_sweep",
    "fit_exponent",
    "cloaking_verdict",
    "boundedness_check",
    "field_map",
]


class TruncationWarning(RuntimeWarning):
    """The spectral sum was cut while its last terms were still significant."""


@dataclass(frozen=True)
class DiskGeometry:
    """Centred disk; only the direct solver handles it."""

    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True, eq=False)
class DipoleSource:
    """Source ``F_z(x) = -((A grad_x)^T Gamma(x - z))^T``; rows of ``A`` are ``a1, a2``."""

    z: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(2)
        A = np.array(self.A, dtype=float).reshape(2, 2)
        z.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "A", A)

    @classmethod
    def at_elliptic(cls, geom: EllipseGeometry, rho: float, omega: float, A) -> "DipoleSource":
        return cls(elliptic_to_cartesian(geom, rho, omega), A)

    def calr_generic(self) -> bool:
        """True when ``a1 != U(-pi/2) a2``."""
        a1, a2 = self.A
        return not np.allclose(a1, np.array([a2[1], -a2[0]]), rtol=0, atol=1e-14)


def k_delta(c: float, delta: float) -> complex:
    return (c + 1 + 1j * delta) / (2 * (c - 1 + 1j * delta))


def k_delta_minus_kc(c: float, delta: float) -> complex:
    """``k_delta(c) - k(c) = -i delta / ((c - 1)(c - 1 + i delta))``."""
    return -1j * delta / ((c - 1) * (c - 1 + 1j * delta))


def k_of_contrast(c: float) -> float:
    return (c + 1) / (2 * (c - 1))


def calr_contrast(params: LameParams, sign: int = +1) -> float:
    """Contrast with ``k(c) = +k0`` (``sign=+1``) or ``-k0`` (``sign=-1``)."""
    lam, mu = params.lam, params.mu
    if sign > 0:
        return -(lam + 3 * mu) / (lam + mu)
    return -(lam + mu) / (lam + 3 * mu)


def default_n_max(delta: float, rho0: float, margin: int = 20) -> int:
    return int(math.ceil(abs(math.log(delta)) / (2 * rho0))) + margin


@dataclass(frozen=True, eq=False)
class CalrProblem:
    """Transmission problem data.

    Parameters
    ----------
    n_max : int, optional
        Spectral truncation; defaults to :func:`default_n_max`.
    rel_tol : float
        Tail tolerance for the truncation warning.
    """

    params: LameParams
    geom: EllipseGeometry | DiskGeometry
    contrast: float
    delta: float
    source: DipoleSource
    n_max: int | None = None
    rel_tol: float = 1e-10

    def __post_init__(self):
        if not self.contrast < 0:
            raise ValueError(f"contrast must be negative, got {self.contrast}")
        if not self.delta > 0:
            raise ValueError("delta must be positive (delta = 0 puts k_delta on the real spectrum)")
        if self.delta < 1e-150:
            raise ValueError("delta below 1e-150 underflows the energy terms")
        if isinstance(self.geom, EllipseGeometry):
            rho, _ = cartesian_to_elliptic(self.geom, self.source.z)
            if rho <= self.geom.rho0:
                raise ValueError("source must lie strictly outside the inclusion")
        elif np.hypot(*self.source.z) <= self.geom.radius:
            raise ValueError("source must lie strictly outside the inclusion")

    @property
    def k_delta(self) -> complex:
        return k_delta(self.contrast, self.delta)

    @property
    def k_c(self) -> float:
        return k_of_contrast(self.contrast)

    @property
    def rho_z(self) -> float:
        return float(cartesian_to_elliptic(self.geom, self.source.z)[0])

    def with_delta(self, delta: float, n_max: int | None = None) -> "CalrProblem":
        return CalrProblem(self.params, self.geom, self.contrast, delta, self.source, n_max, self.rel_tol)

    def resolved_n_max(self) -> int:
        if self.n_max is not None:
            return int(self.n_max)
        if not isinstance(self.geom, EllipseGeometry):
            raise ValueError("spectral truncation needs an ellipse")
        return default_n_max(self.delta, self.geom.rho0)

    def curve(self, n_nodes: int) -> BoundaryCurve:
        if isinstance(self.geom, EllipseGeometry):
            return make_ellipse_curve(self.geom, n_nodes)
        return make_disk_curve(self.geom.radius, n_nodes)


# --- source -------------------------------------------------------------------


def dipole_field(params: LameParams, source: DipoleSource, x) -> np.ndarray:
    """``F_z(x)``, shape ``(..., 2)``."""
    D = kelvin_gradient(params, np.asarray(x, float) - source.z)
    return -np.einsum("ik,...ijk->...j", source.A, D)


def dipole_gradient(params: LameParams, source: DipoleSource, x) -> np.ndarray:
    """``out[..., j, l] = d F_j / d x_l``."""
    H = kelvin_hessian(params, np.asarray(x, float) - source.z)
    return -np.einsum("ik,...ijkl->...jl", source.A, H)


def dipole_traction(params: LameParams, source: DipoleSource, curve: BoundaryCurve) -> np.ndarray:
    """Conormal derivative of ``F_z`` at the nodes, interleaved ``(2n,)``."""
    g = dipole_gradient(params, source, curve.nodes)
    return conormal(params, g, curve.normals).reshape(-1)


# --- spectral solver ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """Per-mode data, arrays indexed ``[n - 1, j - 1]`` (``n`` ascending, ``j`` inner).

    ``alpha`` is ``(phi^_{j,n}, d_nu F)_*``; the ``1/2`` mode ``(2, 1)``
    carries ``alpha = 0`` and ``k = 1/2``.
    """

    spec: EllipseSpectrum
    source: DipoleSource
    k: np.ndarray
    alpha: np.ndarray
    norm: np.ndarray
    coupling: np.ndarray  # (A grad)^T S[phi_{j,n}](z), unnormalized
    offset: np.ndarray  # k - k0 for j = 1, 2 and k + k0 for j = 3, 4, without cancellation

    def gaps(self, contrast: float, delta: float, n_max: int) -> np.ndarray:
        """``k_delta(c) - k_{j,n}``, accurate even when ``k_{j,n}`` rounds to ``+-k0``."""
        k0 = self.spec.params.k0
        base = np.array([k0, k0, -k0, -k0])
        kc = k_of_contrast(contrast)
        # snap exact CALR contrasts so that k(c) - base vanishes identically
        shift = kc - base
        shift[np.abs(shift) < 1e-14] = 0.0
        return k_delta_minus_kc(contrast, delta) + shift - self.offset[:n_max]

    @property
    def n_max(self) -> int:
        return self.k.shape[0]

    @property
    def aggregate12(self) -> np.ndarray:
        return self.alpha[:, 0] ** 2 + self.alpha[:, 1] ** 2

    @property
    def aggregate34(self) -> np.ndarray:
        return self.alpha[:, 2] ** 2 + self.alpha[:, 3] ** 2


def spectral_coefficients(params: LameParams, geom: EllipseGeometry, source: DipoleSource, n_max: int) -> CoefficientTable:
    """``alpha_{j,n} = (1/2 - k_{j,n}) (A grad)^T S[phi^_{j,n}](z)`` for ``n <= n_max``."""
    spec = ellipse_spectrum(params, geom)
    rho, om = cartesian_to_elliptic(geom, source.z)
    if rho <= geom.rho0:
        raise ValueError("source must lie strictly outside the ellipse")
    k = np.zeros((n_max, 4))
    alpha = np.zeros((n_max, 4))
    norm = np.ones((n_max, 4))
    coup = np.zeros((n_max, 4))
    off = np.zeros((n_max, 4))
    for n in range(1, n_max + 1):
        for j in (1, 2, 3, 4):
            if j == 2 and n == 1:
                k[0, 1] = 0.5
                off[0, 1] = 0.5 - params.k0
                continue
            kk = float(spec.k(j, n))
            grad = ellipse_single_layer_gradient(spec, j, n, None, elliptic=(rho, om))
            g = float(np.einsum("ik,ik->", source.A, grad))
            nrm = spec.star_norm(j, n)
            k[n - 1, j - 1] = kk
            off[n - 1, j - 1] = float(spec.offset(j, n))
            coup[n - 1, j - 1] = g
            norm[n - 1, j - 1] = nrm
            alpha[n - 1, j - 1] = (0.5 - kk) * g / nrm
    return CoefficientTable(spec, source, k, alpha, norm, coup, off)


@dataclass(frozen=True, eq=False)
class CalrSolution:
    """Solver output.

    ``field(x)`` returns ``u_delta - F_z`` at exterior points (complex,
    shape ``(m, 2)``).  ``coefficients`` are ``alpha / (k_delta - k)`` for
    the spectral solver and ``None`` for the direct one.
    """

    energy: float
    field: Callable
    n_max_used: int | None = None
    coefficients: np.ndarray | None = None
    density: np.ndarray | None = None
    condition: float | None = None
    last_term_ratio: float | None = None
    info: dict = field(default_factory=dict)


def _ordered_energy(terms: np.ndarray) -> float:
    """Sum ``terms[n, j]`` ascending in ``n`` with ``j`` inner, in a fixed order."""
    total = 0.0
    for row in terms:
        for v in row:
            total += float(v)
    return total


def _energy_terms(table: CoefficientTable, problem: "CalrProblem", n_max: int) -> np.ndarray:
    k = table.k[:n_max]
    a = table.alpha[:n_max]
    return (0.5 - k) * a**2 / np.abs(table.gaps(problem.contrast, problem.delta, n_max)) ** 2


def _check_tail(terms, total, rel_tol):
    last = float(np.max(terms[-1])) if terms.size else 0.0
    ratio = last / total if total > 0 else 0.0
    if ratio > rel_tol:
        warnings.warn(
            f"spectral truncation insufficient: last block carries {ratio:.3e} of the energy",
            TruncationWarning,
            stacklevel=3,
        )
    return ratio


def _adaptive_n_max(problem: CalrProblem, table, n_start: int, n_cap: int = 4000) -> int:
    """Grow ``n_start`` until a geometric tail bound drops below ``rel_tol``.

    Past the resonant crossover the energy terms decay at least like
    ``q^n`` with ``q = exp(-2 (rho_z - rho0))``.
    """
    q = math.exp(-2.0 * (problem.rho_z - problem.geom.rho0))
    n = n_start
    while True:
        if table is None or table.n_max < n:
            table = spectral_coefficients(problem.params, problem.geom, problem.source, n)
        terms = _energy_terms(table, problem, n)
        E = float(terms.sum())
        last = float(terms[-1].sum())
        if E <= 0 or last / (1.0 - q) <= problem.rel_tol * E or n >= n_cap:
            return n, table
        extra = math.log(problem.rel_tol * E * (1.0 - q) / last) / math.log(q)
        n = min(n_cap, n + max(1, int(math.ceil(extra))))


def solve_spectral(problem: CalrProblem, table: CoefficientTable | None = None) -> CalrSolution:
    """Spectral solution on an ellipse."""
    if not isinstance(problem.geom, EllipseGeometry):
        raise ValueError("the spectral solver needs an ellipse; use solve_direct on disks")
    n_max = problem.resolved_n_max()
    if problem.n_max is None:
        n_max, table = _adaptive_n_max(problem, table, n_max)
    if table is None or table.n_max < n_max:
        table = spectral_coefficients(problem.params, problem.geom, problem.source, n_max)
    terms = _energy_terms(table, problem, n_max)
    E = _ordered_energy(terms)
    ratio = _check_tail(terms, E, problem.rel_tol)
    coeffs = table.alpha[:n_max] / table.gaps(problem.contrast, problem.delta, n_max)
    spec = table.spec

    def field(x):
        x = np.atleast_2d(np.asarray(x, float))
        rho, nu = cartesian_to_elliptic(spec.geom, x)
        if np.any(rho < spec.geom.rho0 - 1e-12):
            raise ValueError("field points must lie outside the inclusion")
        rho = np.maximum(rho, spec.geom.rho0)
        out = np.zeros(x.shape, dtype=complex)
        for n in range(1, n_max + 1):
            for j in (1, 2, 3, 4):
                c = coeffs[n - 1, j - 1]
                if c == 0:
                    continue
                s = ellipse_single_layer_exterior(spec, j, n, None, elliptic=(rho, nu))
                out += (c / table.norm[n - 1, j - 1]) * s
        return out

    return CalrSolution(E, field, n_max, coeffs, last_term_ratio=ratio, info={"table": table})


# --- direct solver ------------------------------------------------------------


def solve_direct(problem: CalrProblem, np_: DiscreteNP | None = None, *, n_nodes: int = 256,
                 cond_warn: float = 1e12) -> CalrSolution:
    """Nyström solution of ``(k_delta I - K*_h) phi = d_nu F_z``."""
    if np_ is None:
        np_ = assemble(problem.params, problem.curve(n_nodes))
    curve = np_.curve
    rhs = dipole_traction(problem.params, problem.source, curve)
    M = problem.k_delta * np.eye(np_.size) - np_.Kstar_h
    phi = np.linalg.solve(M, rhs.astype(complex))
    cond = float(np.linalg.cond(M))
    if cond > cond_warn:
        warnings.warn(f"near-singular transmission system, condition number {cond:.3e}", RuntimeWarning, stacklevel=2)
    Aphi = 0.5 * phi - np_.Kstar_h @ phi
    E = float(np.real(np.conj(Aphi) @ np_.gram_star @ phi))
    params = problem.params

    def field(x):
        x = np.atleast_2d(np.asarray(x, float))
        return single_layer_at(params, curve, phi, x, n_fine=max(4 * curve.n_nodes, 1024))

    return CalrSolution(E, field, density=phi, condition=cond)


# --- sweeps and verdicts ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepResult:
    deltas: np.ndarray
    energies: np.ndarray
    n_max_used: np.ndarray
    exponent: float
    intercept: float
    log_power: float
    residuals: np.ndarray

    @property
    def delta_energy(self) -> np.ndarray:
        return self.deltas * self.energies

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))


def fit_exponent(deltas, energies, log_power: float = 0.0):
    """Least-squares slope of ``log(E / |log delta|^p)`` against ``log delta``.

    Returns
    -------
    slope, intercept, residuals
    """
    d = np.asarray(deltas, float)
    E = np.asarray(energies, float)
    if d.size < 5:
        raise ValueError(f"need at least 5 points for a fit, got {d.size}")
    if np.any(E <= 0):
        raise ValueError("energies must be positive")
    x = np.log(d)
    y = np.log(E) - log_power * np.log(np.abs(np.log(d)))
    V = np.vstack([x, np.ones_like(x)]).T
    (s, b), *_ = np.linalg.lstsq(V, y, rcond=None)
    return float(s), float(b), y - (s * x + b)


def nominal_log_power(params: LameParams, contrast: float) -> float:
    """``1`` for ``k(c) = k0``, ``3`` for ``k(c) = -k0``, else ``0``."""
    k = k_of_contrast(contrast)
    if np.isclose(k, params.k0, rtol=0, atol=1e-12):
        return 1.0
    if np.isclose(k, -params.k0, rtol=0, atol=1e-12):
        return 3.0
    return 0.0


def energy_sweep(problem: CalrProblem, deltas, *, method: str = "spectral", log_power: float | None = None,
                 n_nodes: int = 256) -> SweepResult:
    """Energies over ``deltas`` and the fitted exponent.

    The spectral coefficients do not depend on ``delta``; they are computed
    once for the largest truncation and cut per ``delta``.
    """
    deltas = np.asarray(deltas, float)
    if deltas.size < 5:
        raise ValueError(f"need at least 5 points for a fit, got {deltas.size}")
    if log_power is None:
        log_power = nominal_log_power(problem.params, problem.contrast)
    E = np.zeros_like(deltas)
    nm = np.zeros(deltas.size, dtype=int)
    if method == "spectral":
        n_top = problem.with_delta(deltas.min(), problem.n_max).resolved_n_max()
        table = spectral_coefficients(problem.params, problem.geom, problem.source, n_top)
        for i, d in enumerate(deltas):
            sol = solve_spectral(problem.with_delta(d, problem.n_max), table)
            table = sol.info["table"]
            E[i], nm[i] = sol.energy, sol.n_max_used
    elif method == "direct":
        np_ = assemble(problem.params, problem.curve(n_nodes))
        for i, d in enumerate(deltas):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                E[i] = solve_direct(problem.with_delta(d), np_).energy
            nm[i] = -1
    else:
        raise ValueError(f"unknown method {method!r}")
    s, b, res = fit_exponent(deltas, E, log_power)
    return SweepResult(deltas, E, nm, s, b, log_power, res)


def _trend(values, rel_gate):
    """``+1`` if ``values`` increase monotonically, ``-1`` if they decrease, else ``0``."""
    v = np.asarray(values, float)
    ratios = v[1:] / v[:-1]
    if np.all(ratios > 1 + rel_gate):
        return 1
    if np.all(ratios < 1 - rel_gate):
        return -1
    return 0


def _sample_points(problem: CalrProblem, sample_rho, n_angles=64):
    om = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    if isinstance(problem.geom, EllipseGeometry):
        return np.concatenate([elliptic_to_cartesian(problem.geom, r, om) for r in np.atleast_1d(sample_rho)])
    return np.concatenate([r * np.stack([np.cos(om), np.sin(om)], -1) for r in np.atleast_1d(sample_rho)])


def _far_rho(problem: CalrProblem) -> float:
    if isinstance(problem.geom, EllipseGeometry):
        r0 = problem.geom.rho0
        return max(4.0 * r0, problem.rho_z + 1.0 * r0)
    return 2.0 * max(np.hypot(*problem.source.z), problem.geom.radius)


def cloaking_verdict(problem: CalrProblem, deltas, *, sample_rho=None, rel_gate: float = 1e-3,
                     n_nodes: int = 256) -> dict:
    """Classify the ``delta E`` trend and the normalized far field.

    ``deltas`` are ordered by the caller; trends are read as ``delta``
    decreases.  ``v_delta = u_delta / sqrt(delta E)`` (so that
    ``delta E(v_delta) = 1``) is sampled at ``sample_rho``.

    Verdicts: ``"CALR"`` (``delta E`` grows, far field of ``v_delta``
    decays), ``"resonance without localization"`` (``delta E`` grows and so
    does the far field of ``u_delta - F``), ``"no resonance"``
    (``delta E -> 0``), ``"inconclusive"``.
    """
    deltas = np.sort(np.asarray(deltas, float))[::-1]
    ellipse = isinstance(problem.geom, EllipseGeometry)
    if sample_rho is None:
        sample_rho = _far_rho(problem)
    pts = _sample_points(problem, sample_rho)
    F = dipole_field(problem.params, problem.source, pts)
    E = np.zeros(deltas.size)
    far = np.zeros(deltas.size)
    vnorm = np.zeros(deltas.size)
    np_ = None if ellipse else assemble(problem.params, problem.curve(n_nodes))
    table = None
    if ellipse:
        n_top = problem.with_delta(deltas.min(), problem.n_max).resolved_n_max()
        table = spectral_coefficients(problem.params, problem.geom, problem.source, n_top)
    for i, d in enumerate(deltas):
        pb = problem.with_delta(d, problem.n_max)
        if ellipse:
            sol = solve_spectral(pb, table)
            table = sol.info["table"]
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                sol = solve_direct(pb, np_)
        w = sol.field(pts)
        E[i] = sol.energy
        far[i] = np.abs(w).max()
        vnorm[i] = np.abs(w + F).max() / np.sqrt(d * sol.energy)
    dE = deltas * E
    dE_trend = _trend(dE, rel_gate)
    far_trend = _trend(far, 0.05)
    v_trend = _trend(vnorm, rel_gate)
    # far-field growth rate of u - F against 1/delta
    far_slope = float(np.polyfit(np.log(deltas), np.log(far), 1)[0])
    if dE_trend == -1:
        verdict = "no resonance"
    elif dE_trend == 1 and far_slope < -0.5:
        verdict = "resonance without localization"
    elif dE_trend == 1 and v_trend == -1:
        verdict = "CALR"
    else:
        verdict = "inconclusive"
    return {
        "verdict": verdict,
        "deltas": deltas,
        "energy": E,
        "delta_energy": dE,
        "delta_energy_trend": dE_trend,
        "far_field_sup": far,
        "far_field_trend": far_trend,
        "far_field_slope": far_slope,
        "normalized_sup": vnorm,
        "normalized_trend": v_trend,
        "sample_rho": np.atleast_1d(sample_rho).tolist(),
    }


def boundedness_threshold(problem: CalrProblem) -> float:
    """``4 rho0 - rho_z`` for ``k(c) = k0`` and ``6 rho0 - rho_z`` for ``-k0``."""
    r0 = problem.geom.rho0
    p = nominal_log_power(problem.params, problem.contrast)
    if p == 1.0:
        return 4 * r0 - problem.rho_z
    if p == 3.0:
        return 6 * r0 - problem.rho_z
    raise ValueError("boundedness thresholds are defined for k(c) = +-k0 only")


def boundedness_check(problem: CalrProblem, deltas, sample_rho, *, n_angles: int = 64, variation_gate: float = 0.10,
                      enforce_threshold: bool = True) -> dict:
    """Sup of ``|u_delta - F_z|`` over samples at ``rho >= sample_rho`` for each delta.

    ``sample_rho`` is the smallest sampled coordinate; rings at
    ``sample_rho * (1, 1.25, 1.5)`` are used.  With ``enforce_threshold``
    a ``sample_rho`` at or below the boundedness threshold is rejected.
    """
    if not isinstance(problem.geom, EllipseGeometry):
        raise ValueError("boundedness check needs an ellipse")
    thr = boundedness_threshold(problem)
    if enforce_threshold and not sample_rho > thr:
        raise ValueError(f"sample_rho={sample_rho:.6g} must exceed the threshold {thr:.6g}")
    deltas = np.sort(np.asarray(deltas, float))[::-1]
    rings = sample_rho * np.array([1.0, 1.25, 1.5])
    pts = _sample_points(problem, rings, n_angles)
    n_top = problem.with_delta(deltas.min(), problem.n_max).resolved_n_max()
    table = spectral_coefficients(problem.params, problem.geom, problem.source, n_top)
    sup = np.zeros(deltas.size)
    for i, d in enumerate(deltas):
        sol = solve_spectral(problem.with_delta(d, problem.n_max), table)
        table = sol.info["table"]
        sup[i] = np.abs(sol.field(pts)).max()
    variation = float(sup.max() / sup.min() - 1.0)
    return {
        "deltas": deltas,
        "sup": sup,
        "variation": variation,
        "bounded": bool(variation < variation_gate),
        "threshold": thr,
        "sample_rho": float(sample_rho),
    }


def field_map(problem: CalrProblem, xs, ys, *, method: str = "spectral", exclusion: float = 1e-2,
              n_nodes: int = 256) -> dict:
    """Row-major rasters of ``|u_delta - F_z|`` and ``|u_delta|`` on the grid ``ys x xs``.

    Points inside the inclusion or within ``exclusion`` of ``z`` are masked
    with NaN.
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], -1)
    if isinstance(problem.geom, EllipseGeometry):
        g = problem.geom
        inside = (pts[:, 0] / g.a) ** 2 + (pts[:, 1] / g.b) ** 2 <= 1.0 + 1e-9
    else:
        inside = np.hypot(pts[:, 0], pts[:, 1]) <= problem.geom.radius * (1 + 1e-9)
    near = np.hypot(*(pts - problem.source.z).T) < exclusion
    ok = ~(inside | near)
    if method == "spectral":
        sol = solve_spectral(problem)
    else:
        sol = solve_direct(problem, n_nodes=n_nodes)
    scat = np.full(pts.shape[0], np.nan)
    tot = np.full(pts.shape[0], np.nan)
    if ok.any():
        w = sol.field(pts[ok])
        F = dipole_field(problem.params, problem.source, pts[ok])
        scat[ok] = np.linalg.norm(w, axis=-1)
        tot[ok] = np.linalg.norm(w + F, axis=-1)
    return {"x": xs, "y": ys, "scattered": scat.reshape(X.shape), "total": tot.reshape(X.shape), "mask": (~ok).reshape(X.shape)}
