"""Collective yes/no measurement onto the typical subspace of a rotated product basis.

``M_yes`` projects ``n`` qubits onto the span of product basis states
``|e_x1> ... |e_xn>`` whose zero count is typical for ``q = 1/2``.  Because
``rho^(x)n`` is a product state, ``tr(M_yes rho^(x)n)`` is a binomial sum and is
evaluated here without materialising any ``2^n``-dimensional operator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bloch import DensityOperator, Family, MeasBasis, basis, layer_distance, project
from .typical import (
    TypicalSetSpec,
    error_exponent,
    lemma1_check,
    typical_mass,
)

HALF = Fraction(1, 2)


class Outcome(str, enum.Enum):
    YES = "yes"
    NO = "no"


class Layer(str, enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class CollectiveMeasurement:
    """``{M_yes, M_no}`` for a basis and a typical window centred at 1/2."""

    basis: MeasBasis
    spec: TypicalSetSpec

    def __post_init__(self):
        if self.spec.q != HALF:
            raise ValueError("collective measurements are centred at q = 1/2")

    @classmethod
    def make(cls, family: Family, angle: float, n: int, eps) -> "CollectiveMeasurement":
        return cls(basis(family, angle), TypicalSetSpec(n, eps, HALF))

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def eps(self) -> Fraction:
        return self.spec.eps

BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class OutcomeStats:
    """Yes-probability, fidelity and the matching one-sided bound.

    ``exponent_bound`` is a lower bound on ``p_yes`` when ``layer`` is
    ``INSIDE`` (mass of the nested typical set) and an upper bound when it is
    ``OUTSIDE`` (``(n+1) 2^(-n min D)``).
    """

    p_yes: float
    fidelity: float
    exponent_bound: float
    layer: Layer
    distance: float

    @property
    def bound_holds(self) -> bool:
        # both sides are rounded sums, so allow a few ulps
        if self.layer is Layer.INSIDE:
            return self.p_yes >= self.exponent_bound - BOUND_SLACK
        return self.p_yes <= self.exponent_bound + BOUND_SLACK


def p_yes(rho: DensityOperator, m: CollectiveMeasurement) -> float:
    """``tr(M_yes rho^(x)n)``, the typical mass of the projected distribution."""
    return typical_mass(m.spec, project(rho, m.basis))


def entanglement_fidelity(p: float) -> float:
    """Entanglement fidelity ``p^2 + (1-p)^2`` of a two-outcome projective measurement."""
    return p * p + (1.0 - p) * (1.0 - p)


def fidelity_lower_bound(delta: float) -> float:
    """``(1 - delta)^2``, the one-branch bound; it dominates ``1 - 2 delta``."""
    return (1.0 - delta) ** 2


def prop1_classify(rho: DensityOperator, m: CollectiveMeasurement) -> OutcomeStats:
    """Place ``rho`` inside or outside the layer of ``m`` and certify ``p_yes``.

    Inside (``layer_distance <= eps``) the certificate is the mass of the
    nested set ``A(n, eps', q0)``, which can never exceed ``p_yes``.
    Outside it is the method-of-types upper bound.
    """
    dist = project(rho, m.basis)
    distance = layer_distance(rho, m.basis)
    p = typical_mass(m.spec, dist)
    if distance <= float(m.eps):
        layer = Layer.INSIDE
        qprime = Fraction(dist.q0)
        if 2 * abs(qprime - HALF) > m.eps:
            # float rounding placed q0 a hair past the edge
            qprime = HALF + (m.eps / 2 if qprime > HALF else -m.eps / 2)
        bound = lemma1_check(m.spec, qprime, 1.0).nested_mass
    else:
        layer = Layer.OUTSIDE
        bound = error_exponent(m.spec, dist).bound
    return OutcomeStats(p, entanglement_fidelity(p), bound, layer, distance)


def sample_outcome(p: float, rng: np.random.Generator) -> Outcome:
    """Born-rule draw: ``YES`` with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    return Outcome.YES if rng.random() < p else Outcome.NO
