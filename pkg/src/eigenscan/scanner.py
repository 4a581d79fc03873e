"""Radar-style scan of the Bloch sphere for the eigen-axis of a qubit state.

A phi sweep rotates the measurement layer about the z axis and locates the
plane through z and the state; a theta sweep rotates it about the y axis
and locates the plane through y and the state.  The axis is the
intersection of the two planes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import dense
from .bloch import (
    DensityOperator,
    Family,
    axis_angle,
    axis_states,
    basis_direction,
    canonical_angle,
    eigendecompose,
)
from .measurement import (
    CollectiveMeasurement,
    Outcome,
    entanglement_fidelity,
    p_yes,
    sample_outcome,
)

PARALLEL_TOL = 1e-6
SCHEMA_VERSION = 1


class Mode(str, enum.Enum):
    ANALYTIC_IID = "analytic"
    DENSE_EXACT = "dense"


class Unconstrained(str, enum.Enum):
    """Marker for a sweep whose accepting angles do not pin down a plane."""

    UNCONSTRAINED = "unconstrained"


class Degenerate(str, enum.Enum):
    DEGENERATE = "degenerate"


UNCONSTRAINED = Unconstrained.UNCONSTRAINED
DEGENERATE = Degenerate.DEGENERATE

Angle = Union[float, Unconstrained]


@dataclass(frozen=True)
class ScanConfig:
    """Scan parameters.

    ``confirm`` only matters in first-Yes mode: after the first Yes, the
    layer orthogonal to it is also measured, and a second Yes marks the
    sweep as unconstrained.  Without it a first-Yes sweep cannot tell a
    state on the rotation axis from a generic one, so ``rho = I/2`` would
    come back with a made-up axis.  Set ``confirm=False`` for the bare
    stop-at-first-Yes procedure.
    """

    eps: float
    n: int
    mode: Mode = Mode.ANALYTIC_IID
    seed: int = 0
    refine: bool = False
    max_steps: Optional[int] = None
    confirm: bool = True
    dense_cap: int = dense.DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", math.ceil(math.pi / self.eps))
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.mode is Mode.DENSE_EXACT:
            dense.check_capacity(self.n, self.dense_cap)

    def angles(self) -> List[float]:
        count = min(self.max_steps, math.ceil(math.pi / self.eps))
        return [i * self.eps for i in range(count) if i * self.eps < math.pi]


@dataclass(frozen=True)
class LedgerEntry:
    step: int
    family: Family
    angle: float
    p_yes: float
    outcome: Outcome
    step_fidelity: float
    delta_step: float
    cumulative_fidelity: float


@dataclass(frozen=True)
class SweepResult:
    family: Family
    star: Angle
    yes_set: List[float]
    transcript: List[tuple]
    ledger: List[LedgerEntry]


@dataclass
class ScanResult:
    phi_star: Angle
    theta_star: Angle
    yes_sets: dict
    axis: Union[np.ndarray, Degenerate]
    eigenstates: Optional[tuple]
    angular_error: Optional[float]
    fidelity_ledger: List[LedgerEntry]
    transcript: List[tuple]
    final_state_fidelity: Optional[float] = None
    final_state: Optional[dense.DenseState] = field(default=None, repr=False)

    @property
    def degenerate(self) -> bool:
        return isinstance(self.axis, Degenerate)

    @property
    def steps(self) -> int:
        return len(self.transcript)

    def to_dict(self) -> dict:
        def angle(a):
            return a.value if isinstance(a, Unconstrained) else float(a)

        def ket(v):
            return [[float(c.real), float(c.imag)] for c in v]

        return {
            "schema_version": SCHEMA_VERSION,
            "phi_star": angle(self.phi_star),
            "theta_star": angle(self.theta_star),
            "yes_sets": {k: [float(a) for a in v] for k, v in self.yes_sets.items()},
            "axis": self.axis.value if self.degenerate else [float(v) for v in self.axis],
            "eigenstates": None if self.eigenstates is None else [ket(v) for v in self.eigenstates],
            "angular_error": self.angular_error,
            "fidelity_ledger": [
                {
                    "step": e.step,
                    "family": e.family.value,
                    "angle": e.angle,
                    "p_yes": e.p_yes,
                    "outcome": e.outcome.value,
                    "step_fidelity": e.step_fidelity,
                    "delta_step": e.delta_step,
                    "cumulative_fidelity": e.cumulative_fidelity,
                }
                for e in self.fidelity_ledger
            ],
            "transcript": [[f.value, float(a), o.value] for f, a, o in self.transcript],
            "final_state_fidelity": self.final_state_fidelity,
        }


def arc_center(angles: List[float]) -> tuple:
    """Centre and angular span of a set of angles on the circle of period pi.

    The arc is the complement of the largest gap between neighbouring angles.
    """
    a = sorted(canonical_angle(x) for x in angles)
    if len(a) == 1:
        return a[0], 0.0
    gaps = [a[i + 1] - a[i] for i in range(len(a) - 1)] + [a[0] + math.pi - a[-1]]
    j = int(np.argmax(gaps))
    start = a[(j + 1) % len(a)]
    span = math.pi - gaps[j]
    return canonical_angle(start + span / 2), span


class _Prober:
    """Yields the yes-probability at an angle and updates any held state."""

    def __init__(self, rho: DensityOperator, cfg: ScanConfig, state=None):
        self.rho = rho
        self.cfg = cfg
        self.state = state
        if cfg.mode is Mode.DENSE_EXACT and self.state is None:
            self.state = dense.product_state(rho, cfg.n, cfg.dense_cap)

    def measurement(self, family: Family, angle: float) -> CollectiveMeasurement:
        return CollectiveMeasurement.make(family, angle, self.cfg.n, self.cfg.eps)

    def probe(self, family: Family, angle: float, rng: np.random.Generator) -> tuple:
        m = self.measurement(family, angle)
        if self.cfg.mode is Mode.ANALYTIC_IID:
            p = p_yes(self.rho, m)
            return p, sample_outcome(p, rng)
        branches = dense.measure(self.state, dense.build_projector(m, self.cfg.dense_cap))
        outcome = sample_outcome(branches.p_yes, rng)
        self.state = branches.post(outcome is Outcome.YES)
        return branches.p_yes, outcome


def _cumulative(prev: float, step_fidelity: float) -> float:
    return max(0.0, prev - (1.0 - step_fidelity))


def _sweep(family: Family, prober: _Prober, rng: np.random.Generator,
           step0: int = 0, cumulative: float = 1.0) -> SweepResult:
    cfg = prober.cfg
    grid = cfg.angles()
    yes_set, transcript, ledger = [], [], []

    def record(angle):
        nonlocal cumulative
        p, outcome = prober.probe(family, angle, rng)
        f = entanglement_fidelity(p)
        cumulative = _cumulative(cumulative, f)
        ledger.append(LedgerEntry(step0 + len(ledger), family, angle, p, outcome, f,
                                  1.0 - max(p, 1.0 - p), cumulative))
        transcript.append((family, angle, outcome))
        if outcome is Outcome.YES:
            yes_set.append(angle)
        return outcome

    for angle in grid:
        outcome = record(angle)
        if outcome is Outcome.YES and not cfg.refine:
            break

    if not yes_set:
        return SweepResult(family, UNCONSTRAINED, yes_set, transcript, ledger)

    if not cfg.refine:
        star = yes_set[0]
        if cfg.confirm:
            ortho = min(grid, key=lambda a: _circ_dist(a, star + math.pi / 2))
            if record(ortho) is Outcome.YES:
                return SweepResult(family, UNCONSTRAINED, yes_set, transcript, ledger)
        return SweepResult(family, star, yes_set, transcript, ledger)

    center, span = arc_center(yes_set)
    star = UNCONSTRAINED if span > math.pi / 2 else center
    return SweepResult(family, star, yes_set, transcript, ledger)


def _circ_dist(a: float, b: float) -> float:
    d = canonical_angle(a - b)
    return min(d, math.pi - d)


def sweep(family: Family, rho: DensityOperator, cfg: ScanConfig,
          rng: Optional[np.random.Generator] = None) -> SweepResult:
    """One sweep over angles ``0, eps, 2 eps, ... < pi`` of ``family``.

    In first-Yes mode the sweep stops at the first Yes and reports that angle.
    With ``cfg.refine`` every angle is measured and the plane angle is the
    centre of the arc of accepting angles; an arc wider than pi/2 means the
    state lies in (nearly) every layer and the sweep is unconstrained.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    return _sweep(Family(family), _Prober(rho, cfg), rng)


def plane_normal(family: Family, angle: float) -> np.ndarray:
    return basis_direction(family, angle)


def intersect_planes(phi_star: float, theta_star: float) -> Union[np.ndarray, Degenerate]:
    """Unit vector (up to sign) common to the planes normal to the phi and
    theta layer directions, or ``DEGENERATE`` when the normals are parallel.
    """
    n1 = plane_normal(Family.PHI, phi_star)
    n2 = plane_normal(Family.THETA, theta_star)
    c = np.cross(n1, n2)
    norm = float(np.linalg.norm(c))
    if norm < PARALLEL_TOL:
        return DEGENERATE
    return c / norm


_ROTATION_AXIS = {Family.PHI: np.array([0.0, 0.0, 1.0]), Family.THETA: np.array([0.0, 1.0, 0.0])}


def _fallback_axis(free: Family, other: Family, other_star: float):
    """Rotation axis of the unconstrained sweep, projected into the plane
    found by the other sweep."""
    a = _ROTATION_AXIS[free]
    normal = plane_normal(other, other_star)
    v = a - (a @ normal) * normal
    norm = float(np.linalg.norm(v))
    if norm < PARALLEL_TOL:
        return DEGENERATE
    return v / norm


def combine(phi_star: Angle, theta_star: Angle):
    phi_free = isinstance(phi_star, Unconstrained)
    theta_free = isinstance(theta_star, Unconstrained)
    if phi_free and theta_free:
        return DEGENERATE
    if phi_free:
        return _fallback_axis(Family.PHI, Family.THETA, theta_star)
    if theta_free:
        return _fallback_axis(Family.THETA, Family.PHI, phi_star)
    return intersect_planes(phi_star, theta_star)


def run_protocol(rho: DensityOperator, cfg: ScanConfig, know_truth: bool = True) -> ScanResult:
    """Phi sweep, then theta sweep, then intersection.

    In ``DENSE_EXACT`` mode both sweeps act on one evolving ``n``-qubit state,
    so back-action from every measurement carries forward.  In
    ``ANALYTIC_IID`` mode every measurement sees a fresh ``rho^(x)n``.

    The ledger's ``cumulative_fidelity`` is ``1 - sum(1 - F_step)``, a linear
    accumulation of per-step infidelities.  In ``DENSE_EXACT`` mode the
    result also carries the exact fidelity between the final state and
    ``rho^(x)n``.
    """
    rng = np.random.default_rng(cfg.seed)
    prober = _Prober(rho, cfg)
    phi = _sweep(Family.PHI, prober, rng)
    last = phi.ledger[-1].cumulative_fidelity if phi.ledger else 1.0
    theta = _sweep(Family.THETA, prober, rng, step0=len(phi.ledger), cumulative=last)

    axis = combine(phi.star, theta.star)
    ledger = phi.ledger + theta.ledger
    transcript = phi.transcript + theta.transcript
    if isinstance(axis, Degenerate):
        eigenstates = None
    else:
        eigenstates = axis_states(axis)

    error = None
    if know_truth:
        truth = eigendecompose(rho)
        if not truth.degenerate and not isinstance(axis, Degenerate):
            error = axis_angle(axis, truth.axis)

    final_fid = None
    if cfg.mode is Mode.DENSE_EXACT:
        final_fid = dense.state_fidelity(rho, prober.state)

    return ScanResult(
        phi_star=phi.star,
        theta_star=theta.star,
        yes_sets={Family.PHI.value: phi.yes_set, Family.THETA.value: theta.yes_set},
        axis=axis,
        eigenstates=eigenstates,
        angular_error=error,
        fidelity_ledger=ledger,
        transcript=transcript,
        final_state_fidelity=final_fid,
        final_state=prober.state,
    )
