"""Closed-loop system matrices for the droop-free control schemes.

All three schemes share the state equation ``d p_net/dt = A (p_net - p_u)``:

* ``O_NAPC``: ``A = -h B L_W D_p``
* ``A_NAPC``: ``A = -h B D_p L_W D_p`` (amplifier stage ahead of the exchange)
* ``APC``:    ``A = -h B L_W`` (absolute power consensus, ``D_p`` replaced by I)

With a first-order measurement filter the controller sees the filtered
powers and the state doubles to ``(p_c1, p_c1f, p_c2, p_c2f, ...)``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .network import frame_transform_laplacian

DEFAULT_OMEGA0 = 2 * math.pi * 60.0


class Scheme(str, enum.Enum):
    O_NAPC = "O_NAPC"
    A_NAPC = "A_NAPC"
    APC = "APC"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(
                f"unknown scheme {value!r}; expected one of O-NAPC, A-NAPC, APC"
            ) from None


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.O_NAPC
    h: float = 1.0
    filter_tau: float | None = None
    rx_angle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        h = float(self.h)
        if not (math.isfinite(h) and h > 0):
            raise ValidationError(f"control gain h must be finite and > 0, got {self.h!r}")
        object.__setattr__(self, "h", h)
        if self.filter_tau is not None:
            tau = float(self.filter_tau)
            if not (math.isfinite(tau) and tau > 0):
                raise ValidationError(f"filter_tau must be finite and > 0, got {self.filter_tau!r}")
            object.__setattr__(self, "filter_tau", tau)
        if self.rx_angle is not None and not abs(float(self.rx_angle)) < math.pi / 2:
            raise ValidationError(f"rx_angle must satisfy |phi| < pi/2, got {self.rx_angle!r}")


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """System matrix plus the ingredients it was assembled from.

    ``B`` is the effective susceptance matrix (after any R/X frame
    transform). ``A`` is ``2N x 2N`` when the config carries a filter.
    """

    A: np.ndarray
    config: SchemeConfig
    B: np.ndarray
    L_W: np.ndarray
    D_p: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.B.shape[0]

    @property
    def scheme(self) -> Scheme:
        return self.config.scheme

    @property
    def filtered(self) -> bool:
        return self.config.filter_tau is not None

    @property
    def base_matrix(self) -> np.ndarray:
        """The unfiltered ``N x N`` scheme matrix."""
        if not self.filtered:
            return self.A
        return -self.config.h * _core(self.B, self.L_W, self.D_p, self.scheme)

    @property
    def capacities(self) -> np.ndarray:
        return 1.0 / np.diag(self.D_p)

    @property
    def feedback_matrix(self) -> np.ndarray:
        """Maps the controller input power vector to the frequency deviation."""
        h = self.config.h
        if self.scheme is Scheme.O_NAPC:
            return -h * self.L_W @ self.D_p
        if self.scheme is Scheme.A_NAPC:
            return -h * self.D_p @ self.L_W @ self.D_p
        return -h * self.L_W


def _core(B, L_W, D_p, scheme):
    if scheme is Scheme.O_NAPC:
        return B @ L_W @ D_p
    if scheme is Scheme.A_NAPC:
        return B @ D_p @ L_W @ D_p
    return B @ L_W


def _check_dims(B, L_W, D_p):
    B = np.asarray(B, dtype=float)
    L_W = np.asarray(L_W, dtype=float)
    D_p = np.asarray(D_p, dtype=float)
    if D_p.ndim == 1:
        D_p = np.diag(D_p)
    shapes = {B.shape, L_W.shape, D_p.shape}
    if len(shapes) != 1 or B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(
            f"dimension mismatch: B{B.shape}, L_W{L_W.shape}, D_p{D_p.shape}"
        )
    if np.count_nonzero(D_p - np.diag(np.diag(D_p))):
        raise ValidationError("D_p must be diagonal")
    if not np.all(np.diag(D_p) > 0):
        raise ValidationError("D_p diagonal must be strictly positive")
    return B, L_W, D_p


def system_matrix(B, L_W, D_p, cfg: SchemeConfig) -> ClosedLoopSystem:
    """Assemble the closed-loop matrix for ``cfg.scheme``.

    ``D_p`` may be given as the diagonal matrix or as its diagonal. When
    ``cfg.rx_angle`` is set, ``B`` is first replaced by its frame-transformed
    counterpart; when ``cfg.filter_tau`` is set the filtered ``2N`` matrix is
    returned.
    """
    B, L_W, D_p = _check_dims(B, L_W, D_p)
    if cfg.rx_angle is not None:
        B = frame_transform_laplacian(B, cfg.rx_angle)
    if cfg.filter_tau is not None:
        A = filter_augmented_matrix(B, L_W, D_p, cfg)
    else:
        A = -cfg.h * _core(B, L_W, D_p, cfg.scheme)
    return ClosedLoopSystem(A=A, config=cfg, B=B, L_W=L_W, D_p=D_p)


def frequency_law(system: ClosedLoopSystem, p_c, omega0: float = DEFAULT_OMEGA0) -> np.ndarray:
    """Nodal angular frequencies for controller input ``p_c``.

    For A-NAPC the amplifier applies ``D_p`` on both sides of the exchange,
    ``omega = omega0 - h D_p L_W D_p p_c``; this form is inferred from the
    A-NAPC state matrix, not stated as a separate law.
    """
    p_c = np.asarray(p_c, dtype=float)
    if p_c.shape != (system.n_nodes,):
        raise ValidationError(f"p_c must have length {system.n_nodes}, got shape {p_c.shape}")
    return omega0 + system.feedback_matrix @ p_c


def filter_augmented_matrix(B, L_W, D_p, cfg: SchemeConfig) -> np.ndarray:
    """``I_N (x) A_f1 + core (x) A_f2`` on interleaved ``(p_ci, p_ci_f)`` states."""
    if cfg.filter_tau is None:
        raise ValidationError("filter_augmented_matrix needs cfg.filter_tau")
    B, L_W, D_p = _check_dims(B, L_W, D_p)
    n = B.shape[0]
    if n < 2:
        raise ValidationError("filtered system needs at least 2 nodes")
    tau = cfg.filter_tau
    A_f1 = np.array([[0.0, 0.0], [1.0 / tau, -1.0 / tau]])
    A_f2 = np.array([[0.0, -cfg.h], [0.0, 0.0]])
    core = _core(B, L_W, D_p, cfg.scheme)
    return np.kron(np.eye(n), A_f1) + np.kron(core, A_f2)


def filter_eigen_map(s, tau: float) -> tuple[complex, complex]:
    """Eigenvalue pair of the filtered system generated by base eigenvalue ``s``.

    Returns ``((-1 + r) / (2 tau), (-1 - r) / (2 tau))`` with
    ``r = sqrt(1 + 4 tau s)`` on the principal branch.
    """
    if not tau > 0:
        raise ValidationError("tau must be > 0")
    r = cmath.sqrt(1 + 4 * tau * complex(s))
    return (-1 + r) / (2 * tau), (-1 - r) / (2 * tau)
