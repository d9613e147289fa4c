"""Eigen-structure of closed-loop matrices: stability verdicts, dominant
pole, stability margin and participation factors."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousSpectrumError, NumericalError, ValidationError

ZERO_TOL = 1e-8
RESIDUAL_TOL = 1e-8
PAIRING_TOL = 1e-6


class Verdict(str, enum.Enum):
    ASYMPTOTICALLY_STABLE = "AsymptoticallyStable"
    MARGINAL = "Marginal"
    UNSTABLE = "Unstable"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues with matched right (``phi``) and left (``psi``) vectors.

    Column ``k`` of ``right`` and ``left`` belongs to ``eigenvalues[k]``;
    left vectors satisfy ``psi.T @ A == lambda * psi.T`` (plain transpose,
    no conjugation). Both are normalised to unit 2-norm.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    structural_zero_index: int
    dominant_index: int | None

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.size else 0.0

    @property
    def dominant(self) -> complex:
        if self.dominant_index is None:
            raise ValidationError("spectrum has no non-structural eigenvalue")
        return complex(self.eigenvalues[self.dominant_index])


@dataclass(frozen=True)
class StabilityReport:
    verdict: Verdict
    zero_count: int
    max_effective_real_part: float
    all_real: bool
    margin: float
    scheme: str | None = None

    @property
    def stable(self) -> bool:
        return self.verdict is Verdict.ASYMPTOTICALLY_STABLE


def _dominant_order(eigenvalues, exclude):
    # max real part, then smaller |Im|, then the +Im member of a pair, then index
    candidates = [k for k in range(eigenvalues.size) if k != exclude]
    if not candidates:
        return None
    return min(
        candidates,
        key=lambda k: (-eigenvalues[k].real, abs(eigenvalues[k].imag), eigenvalues[k].imag < 0, k),
    )


def eigendecompose(A) -> Spectrum:
    """Full eigendecomposition with left vectors from the transposed problem.

    Left and right eigenvalues are paired by a minimum-cost assignment on
    their distance; a pairing further apart than ``1e-6`` of the spectral
    radius is treated as a defective decomposition.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"A must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("A contains non-finite entries")
    try:
        lam, V = np.linalg.eig(A)
        mu, U = np.linalg.eig(A.T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    lam = lam.astype(complex)
    mu = mu.astype(complex)
    V = V.astype(complex)
    U = U.astype(complex)

    rho = float(np.max(np.abs(lam))) if lam.size else 0.0
    scale = max(rho, float(np.linalg.norm(A, np.inf)))
    rows, cols = linear_sum_assignment(np.abs(lam[:, None] - mu[None, :]))
    order = np.empty_like(cols)
    order[rows] = cols
    if lam.size and np.max(np.abs(lam - mu[order])) > PAIRING_TOL * max(rho, 1e-300):
        raise NumericalError("left/right eigenvalues could not be paired (defective matrix?)")
    U = U[:, order]

    res_r = np.linalg.norm(A @ V - V * lam, axis=0)
    res_l = np.linalg.norm(A.T @ U - U * lam, axis=0)
    worst = max(np.max(res_r, initial=0.0), np.max(res_l, initial=0.0))
    if worst > RESIDUAL_TOL * scale:
        raise NumericalError(f"eigenpair residual {worst:.3e} exceeds tolerance")

    zero_idx = int(np.argmin(np.abs(lam))) if lam.size else -1
    return Spectrum(
        eigenvalues=lam,
        right=V,
        left=U,
        structural_zero_index=zero_idx,
        dominant_index=_dominant_order(lam, zero_idx),
    )


def stability_verdict(spec: Spectrum, scheme=None, ztol: float = ZERO_TOL) -> StabilityReport:
    """Classify a closed-loop spectrum.

    Eigenvalues with ``|lambda| < ztol * rho`` count as structural zeros.
    The system is asymptotically stable when there is exactly one of them
    and every other eigenvalue has ``Re < -ztol * rho``.

    Raises
    ------
    AmbiguousSpectrumError
        If some eigenvalue sits in the grey band ``[1, 10) * ztol * rho``,
        where zero and non-zero cannot be told apart reliably.
    """
    lam = spec.eigenvalues
    rho = spec.spectral_radius
    thr = ztol * rho
    mag = np.abs(lam)
    scheme_name = None if scheme is None else getattr(scheme, "value", str(scheme))
    if rho == 0.0:
        return StabilityReport(Verdict.MARGINAL, lam.size, 0.0, True, 0.0, scheme_name)

    grey = (mag >= thr) & (mag < 10 * thr)
    if np.any(grey):
        k = int(np.flatnonzero(grey)[0])
        raise AmbiguousSpectrumError(
            f"|lambda_{k}| = {mag[k]:.3e} is within 10x of the zero threshold {thr:.3e}; "
            "review ztol for this system"
        )
    zero_count = int(np.count_nonzero(mag < thr))
    effective = np.ones(lam.size, dtype=bool)
    if zero_count:
        effective[spec.structural_zero_index] = False
    max_eff = float(np.max(lam.real[effective])) if np.any(effective) else -math.inf
    all_real = bool(np.max(np.abs(lam.imag)) < thr)

    if max_eff > thr:
        verdict = Verdict.UNSTABLE
    elif zero_count == 1 and max_eff < -thr:
        verdict = Verdict.ASYMPTOTICALLY_STABLE
    else:
        verdict = Verdict.MARGINAL
    return StabilityReport(verdict, zero_count, max_eff, all_real, -max_eff, scheme_name)


def dominant_pole(spec: Spectrum) -> complex:
    """Non-structural eigenvalue with the largest real part (``+Im`` member
    of a complex pair)."""
    return spec.dominant


def stability_margin(spec: Spectrum, ztol: float = ZERO_TOL) -> float:
    report = stability_verdict(spec, ztol=ztol)
    if not report.stable:
        raise NumericalError(f"stability margin undefined: verdict {report.verdict.value}")
    return abs(spec.dominant.real)


def participation_factors(spec: Spectrum, index: int | None = None) -> np.ndarray:
    """Normalised participation of each state in mode ``index``.

    ``P_k = Re(psi_k * phi_k / (psi . phi))`` so that ``sum(P) == 1``.
    Defaults to the dominant mode. For a complex mode the real part is
    taken after normalisation.
    """
    if index is None:
        index = spec.dominant_index
        if index is None:
            raise ValidationError("spectrum has no dominant mode")
    lam = spec.eigenvalues
    rho = spec.spectral_radius
    others = np.delete(lam, index)
    if others.size and np.min(np.abs(others - lam[index])) <= PAIRING_TOL * max(rho, 1e-300):
        raise NumericalError(f"eigenvalue {index} is not simple")
    phi = spec.right[:, index]
    psi = spec.left[:, index]
    denom = psi @ phi
    if abs(denom) < 1e-12 * np.linalg.norm(psi) * np.linalg.norm(phi):
        raise NumericalError("left/right eigenvectors are nearly orthogonal (near-defective mode)")
    return np.real(psi * phi / denom)


def null_vector_error(spec: Spectrum, direction) -> float:
    """Sine of the angle between the structural-zero right eigenvector and
    ``direction``."""
    v = spec.right[:, spec.structural_zero_index]
    d = np.asarray(direction, dtype=complex)
    v = v / np.linalg.norm(v)
    d = d / np.linalg.norm(d)
    return float(np.linalg.norm(v - d * np.vdot(d, v)))
