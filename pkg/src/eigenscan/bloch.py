"""Single-qubit states on the Bloch ball and the two measurement-basis families.

The Bloch vector is the authoritative representation of a state; the 2x2
density matrix is derived from it on demand.  Every protocol quantity reduces
to an inner product ``r . d`` between the state's Bloch vector and the Bloch
direction ``d`` of a basis diameter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

STATE_TOL = 1e-12
DEGENERATE_RADIUS = 1e-9


class Family(str, enum.Enum):
    """Basis family: ``PHI`` diameters of circle xoy, ``THETA`` of circle xoz."""

    PHI = "phi"
    THETA = "theta"


@dataclass(frozen=True)
class DensityOperator:
    """Qubit density operator stored by its Bloch vector ``(x, y, z)``."""

    r: tuple

    @property
    def bloch(self) -> np.ndarray:
        return np.array(self.r, dtype=float)

    @property
    def matrix(self) -> np.ndarray:
        x, y, z = self.r
        return 0.5 * (np.eye(2, dtype=complex) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.bloch))


def from_bloch(r: Sequence[float]) -> DensityOperator:
    """Build ``rho = (I + r . sigma) / 2``.

    Raises
    ------
    ValueError
        If ``r`` is not a real 3-vector or lies outside the unit ball.
    """
    vec = np.asarray(r, dtype=float)
    if vec.shape != (3,) or not np.all(np.isfinite(vec)):
        raise ValueError(f"Bloch vector must be a finite real 3-vector, got {r!r}")
    norm = float(np.linalg.norm(vec))
    if norm > 1.0 + STATE_TOL:
        raise ValueError(f"|r| = {norm} > 1: not a density operator")
    return DensityOperator(tuple(float(v) for v in vec))


def from_matrix(matrix: np.ndarray) -> DensityOperator:
    """Inverse of :attr:`DensityOperator.matrix`, validating the state axioms."""
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if np.max(np.abs(m - m.conj().T)) > STATE_TOL:
        raise ValueError("matrix is not Hermitian")
    if abs(np.trace(m) - 1) > STATE_TOL:
        raise ValueError("matrix does not have unit trace")
    r = [float(np.real(np.trace(m @ s))) for s in PAULIS]
    return from_bloch(r)


@dataclass(frozen=True)
class MeasBasis:
    """Orthonormal qubit basis ``{e0, e1}`` from one of the two families.

    ``angle`` is always canonical, in ``[0, pi)``.
    """

    family: Family
    angle: float
    e0: np.ndarray
    e1: np.ndarray

    @property
    def direction(self) -> np.ndarray:
        """Bloch direction of ``e0``; the layer of this basis is normal to it."""
        return basis_direction(self.family, self.angle)

    @property
    def unitary(self) -> np.ndarray:
        """Matrix whose columns are ``e0`` and ``e1``."""
        return np.column_stack([self.e0, self.e1])

    def __eq__(self, other):
        if not isinstance(other, MeasBasis):
            return NotImplemented
        return self.family == other.family and self.angle == other.angle

    def __hash__(self):
        return hash((self.family, self.angle))


def canonical_angle(angle: float) -> float:
    """Reduce an angle modulo pi into ``[0, pi)``."""
    a = math.fmod(float(angle), math.pi)
    if a < 0:
        a += math.pi
    # fmod can return pi itself after the shift for tiny negative inputs
    if a >= math.pi:
        a = 0.0
    return a


def basis_direction(family: Family, angle: float) -> np.ndarray:
    family = Family(family)
    if family is Family.PHI:
        return np.array([math.cos(angle), math.sin(angle), 0.0])
    return np.array([math.sin(angle), 0.0, math.cos(angle)])


def basis(family: Family, angle: float) -> MeasBasis:
    """Measurement basis of ``family`` at ``angle``.

    The angle is first reduced modulo pi, because antipodal angles describe
    the same diameter.  Amplitudes then follow the family formulas literally,
    including their global phases::

        PHI:   e0 = (|0> + e^{i a}|1>)/sqrt2,  e1 = (|0> - e^{i a}|1>)/sqrt2
        THETA: e0 = cos(a/2)|0> + sin(a/2)|1>, e1 = sin(a/2)|0> - cos(a/2)|1>

    A literal angle ``a + pi`` would produce the same pair with ``e0`` and
    ``e1`` exchanged (up to phase), so the reduction only relabels outcomes.
    """
    family = Family(family)
    a = canonical_angle(angle)
    if family is Family.PHI:
        phase = complex(math.cos(a), math.sin(a))
        s = 1 / math.sqrt(2)
        e0 = np.array([s, s * phase], dtype=complex)
        e1 = np.array([s, -s * phase], dtype=complex)
    else:
        c, s = math.cos(a / 2), math.sin(a / 2)
        e0 = np.array([c, s], dtype=complex)
        e1 = np.array([s, -c], dtype=complex)
    e0.setflags(write=False)
    e1.setflags(write=False)
    return MeasBasis(family, a, e0, e1)


@dataclass(frozen=True)
class ProjectedDistribution:
    """Outcome distribution ``(q0, q1)`` of measuring one copy in a basis."""

    q0: float
    q1: float

    @classmethod
    def from_q0(cls, q0: float) -> "ProjectedDistribution":
        q0 = min(1.0, max(0.0, float(q0)))
        return cls(q0, 1.0 - q0)


def project(rho: DensityOperator, b: MeasBasis) -> ProjectedDistribution:
    """Diagonal weights of ``rho`` in basis ``b``; ``q0 = (1 + r . d) / 2``."""
    return ProjectedDistribution.from_q0(0.5 * (1.0 + float(rho.bloch @ b.direction)))


def layer_distance(rho: DensityOperator, b: MeasBasis) -> float:
    """Trace-norm distance between the dephased state and ``I/2``.

    Equals ``2|q0 - 1/2| = |r . d|``; the state lies in the layer of
    thickness ``eps`` around the plane normal to ``d`` iff this is ``<= eps``.
    """
    return abs(float(rho.bloch @ b.direction))


@dataclass(frozen=True)
class EigenDecomposition:
    p: float
    axis: Optional[np.ndarray]
    e0: Optional[np.ndarray]
    e1: Optional[np.ndarray]

    @property
    def degenerate(self) -> bool:
        return self.axis is None


def axis_states(axis: Sequence[float]) -> tuple:
    """Pure states with Bloch vectors ``+axis`` and ``-axis``."""
    x, y, z = (float(v) for v in axis)
    polar = math.acos(max(-1.0, min(1.0, z)))
    azimuth = math.atan2(y, x)
    c, s = math.cos(polar / 2), math.sin(polar / 2)
    phase = complex(math.cos(azimuth), math.sin(azimuth))
    up = np.array([c, phase * s], dtype=complex)
    down = np.array([s, -phase * c], dtype=complex)
    return up, down


def eigendecompose(rho: DensityOperator) -> EigenDecomposition:
    """Spectral decomposition ``rho = p|e0><e0| + (1-p)|e1><e1|`` with ``p >= 1/2``.

    For ``|r| < 1e-9`` the state is treated as ``I/2``: ``p = 1/2`` and the
    axis and eigenvectors are ``None``.
    """
    norm = rho.radius
    p = 0.5 * (1.0 + norm)
    if norm < DEGENERATE_RADIUS:
        return EigenDecomposition(0.5, None, None, None)
    axis = rho.bloch / norm
    e0, e1 = axis_states(axis)
    return EigenDecomposition(p, axis, e0, e1)


def axis_angle(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle between two unsigned axes, in ``[0, pi/2]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, c))


def random_bloch_vector(rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the Bloch ball (isotropic direction, radius ~ U^(1/3))."""
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    return v * rng.random() ** (1.0 / 3.0)
