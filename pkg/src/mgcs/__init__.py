"""Multichannel group-sparse compressive estimation of doubly selective
multicarrier MIMO channels.

Subpackages by concern: ``partition`` (index groups and delay-Doppler
tilings), ``waveform`` (multicarrier modem), ``channel`` (geometry-based
channel generation and spreading functions), ``recovery`` (group-sparse
solvers and stacking), ``estimator`` (the pilot-based estimation pipeline),
``basisopt`` (joint-group-sparsity basis optimization), ``harness``
(Monte-Carlo experiments), ``io`` (binary tensor/basis files), ``cli``.
"""

from .channel import FilterSpec, GeometryParams, PathSet, sample_geometry
from .estimator import BasisSpec, draw_pilots, estimate_mimo, estimate_siso, rmse
from .harness import ExperimentConfig, desk_experiment, emit_results, run_sweep
from .partition import Partition, make_block_tiling
from .recovery import MeasurementEnsemble, g_bpdn, g_cosamp, g_dcs_somp, g_omp
from .waveform import PulsePair, SystemConfig, cp_ofdm_pulses

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "ExperimentConfig",
    "FilterSpec",
    "GeometryParams",
    "MeasurementEnsemble",
    "Partition",
    "PathSet",
    "PulsePair",
    "SystemConfig",
    "cp_ofdm_pulses",
    "desk_experiment",
    "draw_pilots",
    "emit_results",
    "estimate_mimo",
    "estimate_siso",
    "g_bpdn",
    "g_cosamp",
    "g_dcs_somp",
    "g_omp",
    "make_block_tiling",
    "rmse",
    "run_sweep",
    "sample_geometry",
]
