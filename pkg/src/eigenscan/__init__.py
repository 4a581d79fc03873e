"""Nondestructive estimation of qubit eigenstates with collective typical-subspace measurements."""

from .bloch import (
    DensityOperator,
    Family,
    MeasBasis,
    ProjectedDistribution,
    basis,
    eigendecompose,
    from_bloch,
    layer_distance,
    project,
)
from .measurement import CollectiveMeasurement, Outcome, entanglement_fidelity, p_yes, prop1_classify
from .scanner import Mode, ScanConfig, ScanResult, run_protocol, sweep
from .typical import TailMode, TypicalSetSpec, required_n, typical_mass

__all__ = [
    "CollectiveMeasurement",
    "DensityOperator",
    "Family",
    "MeasBasis",
    "Mode",
    "Outcome",
    "ProjectedDistribution",
    "ScanConfig",
    "ScanResult",
    "TailMode",
    "TypicalSetSpec",
    "basis",
    "eigendecompose",
    "entanglement_fidelity",
    "from_bloch",
    "layer_distance",
    "p_yes",
    "project",
    "prop1_classify",
    "required_n",
    "run_protocol",
    "sweep",
    "typical_mass",
]
__version__ = "0.1.0"
