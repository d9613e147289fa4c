"""First-order eigenvalue sensitivity of the dominant pole to single-element
perturbations of ``B``, ``L_W`` and ``D_p``.

Notation: ``sigma`` is the perturbed matrix slot ``(i, j)``; ``rho`` is the
perturbation magnitude, so the perturbed pole is approximately
``lambda_d + (d lambda_d / d sigma_ij) * rho``.

Two perturbation modes exist. ``"element"`` corrupts one matrix entry and
leaves the Laplacian row sums broken (the cyber-attack model). ``"weight"``
changes the weight of edge ``(i, j)`` symmetrically and repairs the
diagonal, which is the physically consistent what-if for ``B`` and ``L_W``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .control import ClosedLoopSystem, Scheme, SchemeConfig, system_matrix
from .errors import NoCriticalElementError, NumericalError, ValidationError
from .spectral import PAIRING_TOL, Spectrum


class MatrixId(str, enum.Enum):
    B = "B"
    L_W = "L_W"
    D_p = "D_p"

    @classmethod
    def parse(cls, value) -> "MatrixId":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        aliases = {"B": cls.B, "L": cls.L_W, "L_W": cls.L_W, "LW": cls.L_W,
                   "D": cls.D_p, "D_P": cls.D_p, "DP": cls.D_p}
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown matrix id {value!r}; expected B, L or D") from None


@dataclass(frozen=True)
class PerturbationTarget:
    matrix_id: MatrixId
    i: int
    j: int
    mode: str = "element"

    def __post_init__(self):
        object.__setattr__(self, "matrix_id", MatrixId.parse(self.matrix_id))
        if self.mode not in ("element", "weight"):
            raise ValidationError(f"mode must be 'element' or 'weight', got {self.mode!r}")
        if self.matrix_id is MatrixId.D_p and self.i != self.j:
            raise ValidationError("D_p targets must be diagonal (i == j)")
        if self.mode == "weight" and (self.matrix_id is MatrixId.D_p or self.i == self.j):
            raise ValidationError("weight mode needs an off-diagonal B or L_W pair")

    def check(self, n: int):
        if not (0 <= self.i < n and 0 <= self.j < n):
            raise ValidationError(f"target ({self.i}, {self.j}) out of range for N={n}")


def _factor_terms(system: ClosedLoopSystem, matrix_id: MatrixId):
    """``[(Left, Right), ...]`` with ``dA/dsigma = -h * sum(Left @ dX @ Right)``."""
    B, L, D = system.B, system.L_W, system.D_p
    I = np.eye(system.n_nodes)
    scheme = system.scheme
    if scheme is Scheme.O_NAPC:
        table = {MatrixId.B: [(I, L @ D)], MatrixId.L_W: [(B, D)], MatrixId.D_p: [(B @ L, I)]}
    elif scheme is Scheme.A_NAPC:
        table = {MatrixId.B: [(I, D @ L @ D)], MatrixId.L_W: [(B @ D, D)],
                 MatrixId.D_p: [(B, L @ D), (B @ D @ L, I)]}
    else:
        table = {MatrixId.B: [(I, L)], MatrixId.L_W: [(B, I)], MatrixId.D_p: []}
    return table[matrix_id]


def _unit(n, target: PerturbationTarget):
    dX = np.zeros((n, n))
    i, j = target.i, target.j
    if target.mode == "weight":
        # weight w_ij up by one: off-diagonals -1, diagonals +1
        dX[i, j] = dX[j, i] = -1.0
        dX[i, i] = dX[j, j] = 1.0
    else:
        dX[i, j] = 1.0
    return dX


def system_derivative(system: ClosedLoopSystem, target: PerturbationTarget) -> np.ndarray:
    """``dA/dsigma`` for the target, built explicitly."""
    n = system.n_nodes
    target.check(n)
    dX = _unit(n, target)
    h = system.config.h
    dA = np.zeros((n, n))
    for left, right in _factor_terms(system, target.matrix_id):
        dA -= h * left @ dX @ right
    if system.filtered:
        # only the controller block depends on B, L_W, D_p
        dA = np.kron(dA / -h, np.array([[0.0, -h], [0.0, 0.0]]))
    return dA


def perturbed_system(system: ClosedLoopSystem, target: PerturbationTarget, rho: float) -> ClosedLoopSystem:
    """Rebuild the closed loop with the target entry changed by ``rho``."""
    n = system.n_nodes
    target.check(n)
    dX = rho * _unit(n, target)
    B, L, D = system.B.copy(), system.L_W.copy(), system.D_p.copy()
    if target.matrix_id is MatrixId.B:
        B += dX
    elif target.matrix_id is MatrixId.L_W:
        L += dX
    else:
        D += dX
    cfg = system.config
    # B already carries any frame transform
    cfg = SchemeConfig(scheme=cfg.scheme, h=cfg.h, filter_tau=cfg.filter_tau)
    return system_matrix(B, L, D, cfg)


def _mode_vectors(system, spec, index):
    lam = spec.eigenvalues
    rho = spec.spectral_radius
    others = np.delete(lam, index)
    if others.size and np.min(np.abs(others - lam[index])) <= PAIRING_TOL * max(rho, 1e-300):
        raise NumericalError(f"eigenvalue {index} is not simple")
    phi = spec.right[:, index]
    psi = spec.left[:, index]
    denom = psi @ phi
    if abs(denom) < 1e-12 * np.linalg.norm(psi) * np.linalg.norm(phi):
        raise NumericalError("left/right eigenvectors nearly orthogonal (near-defective mode)")
    if system.filtered:
        return psi[0::2], phi[1::2], denom
    return psi, phi, denom


def eigen_sensitivity(system: ClosedLoopSystem, spec: Spectrum, target: PerturbationTarget,
                      index: int | None = None) -> complex:
    """``psi^T (dA/dsigma) phi / (psi^T phi)`` for the dominant pole (or ``index``)."""
    if index is None:
        index = spec.dominant_index
    phi = spec.right[:, index]
    psi = spec.left[:, index]
    _mode_vectors(system, spec, index)  # simplicity / defectiveness checks
    dA = system_derivative(system, target)
    return complex(psi @ dA @ phi / (psi @ phi))


@dataclass(frozen=True, eq=False)
class SensitivityMap:
    matrix_id: MatrixId
    values: np.ndarray  # complex, NaN where masked
    mask: np.ndarray  # True = not a perturbation target
    scheme: Scheme
    eigenvalue: complex

    @property
    def argmax(self) -> tuple[int, int]:
        re = np.where(self.mask, -np.inf, np.abs(self.values.real))
        return tuple(int(k) for k in np.unravel_index(np.argmax(re), re.shape))

    def cells(self):
        n = self.mask.shape[0]
        for i in range(n):
            for j in range(n):
                if self.matrix_id is MatrixId.D_p and i != j:
                    continue
                yield i, j


def sensitivity_map(system: ClosedLoopSystem, spec: Spectrum, matrix_id,
                    index: int | None = None) -> SensitivityMap:
    """Element-mode sensitivities of one eigenvalue to every cell of a matrix.

    ``B`` is masked outside existing lines (including its diagonal), ``D_p``
    outside its diagonal; ``L_W`` is fully populated.
    """
    matrix_id = MatrixId.parse(matrix_id)
    if index is None:
        index = spec.dominant_index
    psi, phi, denom = _mode_vectors(system, spec, index)
    n = system.n_nodes
    h = system.config.h
    S = np.zeros((n, n), dtype=complex)
    for left, right in _factor_terms(system, matrix_id):
        S += -h * np.outer(left.T @ psi, right @ phi)
    S /= denom
    if matrix_id is MatrixId.B:
        mask = ~((system.B != 0) & ~np.eye(n, dtype=bool))
    elif matrix_id is MatrixId.D_p:
        mask = ~np.eye(n, dtype=bool)
    else:
        mask = np.zeros((n, n), dtype=bool)
    S[mask] = np.nan
    return SensitivityMap(matrix_id, S, mask, system.scheme, complex(spec.eigenvalues[index]))


def min_destabilizing_perturbation(lambda_d: complex, sensitivity: complex) -> float | None:
    """First-order ``rho*`` moving ``Re(lambda_d)`` to zero; ``None`` when the
    pole is insensitive to first order (``Re(sensitivity) == 0``)."""
    re = complex(sensitivity).real
    if re == 0.0:
        return None
    return -complex(lambda_d).real / re


@dataclass(frozen=True)
class CriticalElement:
    i: int
    j: int
    sensitivity: complex
    rho_star: float


def critical_element(smap: SensitivityMap, rtol: float = 1e-9) -> CriticalElement:
    """Unmasked cell with the smallest ``|rho*|``; near-ties go to the first
    cell in row-major order."""
    best = None
    for i, j in smap.cells():
        if smap.mask[i, j]:
            continue
        s = smap.values[i, j]
        r = min_destabilizing_perturbation(smap.eigenvalue, s)
        if r is None:
            continue
        if best is None or abs(r) < abs(best.rho_star) * (1 - rtol):
            best = CriticalElement(i, j, complex(s), float(r))
    if best is None:
        raise NoCriticalElementError("no element moves the dominant pole to first order")
    return best


def exact_real_part(system: ClosedLoopSystem, spec: Spectrum, target: PerturbationTarget,
                    rho: float, index: int | None = None) -> float:
    """Real part of the tracked eigenvalue after an actual perturbation of size
    ``rho``; compares against the first-order prediction of zero at ``rho*``."""
    if index is None:
        index = spec.dominant_index
    lam0 = spec.eigenvalues[index]
    lam = np.linalg.eigvals(perturbed_system(system, target, rho).A)
    return float(lam[np.argmin(np.abs(lam - lam0 - eigen_sensitivity(system, spec, target, index) * rho))].real)


SENSITIVITY_COLUMNS = ["matrix_id", "i", "j", "re_sens", "im_sens", "rho_star", "masked"]


def sensitivity_csv(smap: SensitivityMap) -> str:
    """Plot-ready rows with 1-based node indices."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SENSITIVITY_COLUMNS)
    for i, j in smap.cells():
        if smap.mask[i, j]:
            writer.writerow([smap.matrix_id.value, i + 1, j + 1, "nan", "nan", "nan", 1])
            continue
        s = complex(smap.values[i, j])
        r = min_destabilizing_perturbation(smap.eigenvalue, s)
        writer.writerow([smap.matrix_id.value, i + 1, j + 1, repr(s.real), repr(s.imag),
                         "inf" if r is None else repr(r), 0])
    return buf.getvalue()
