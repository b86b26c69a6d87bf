"""beamtune: desk-scale benchmark for LLM-driven transverse beam tuning.

A linear optics simulator of a five-magnet accelerator section, the
associated tuning task and objective, classical baseline optimizers, an
LLM optimizer with four prompt styles and strict response parsing, and an
evaluation harness (3 trials x 3 seeds x 50 steps) with the benchmark's
metrics and success tiers.
"""

__version__ = "0.1.0"

from .optics import BeamParameters, Lattice, LatticeGeometry, TransverseState
from .task import MagnetSettings, Sample, Trial, TuningEnvironment, make_trial

__all__ = [
    "BeamParameters",
    "Lattice",
    "LatticeGeometry",
    "MagnetSettings",
    "Sample",
    "TransverseState",
    "Trial",
    "TuningEnvironment",
    "make_trial",
    "__version__",
]
