"""Random-state ensembles, training-set engineering, and neural quantum
state reconstruction."""

from . import engineer, ensembles, neuralnet, qcore, tomography, workbench
from .qcore import (
    DensityMatrix,
    PureState,
    TauVector,
    UnitaryMatrix,
    concurrence,
    fidelity,
    is_entangled_ppt,
    purity,
    tau_decode,
    tau_encode,
    tensor,
)

__version__ = "0.1.0"
