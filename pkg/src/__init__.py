"""
Perfect Queue Sampler
Échantillonnage parfait (DCFTP) de l'état stationnaire des files GI/GI/c FCFS
"""

__version__ = "1.0.0"
__author__ = "Perfect Queue Sampler"
__description__ = "Tirages exacts de files GI/GI/c par couplage dominé depuis le passé"

# Imports principaux
from .dists import DistributionSpec, parse_flag
from .rwmax import WalkSpec, MaxWalkStream, cramer_root, cross_test, conditional_step
from .vacation import VacationTimeline, CouplingTrace, build_streams, w_v_at
from .kw import QueueState, TrafficTrace, kw_step, kw_run, replay
from .driver import DcftpConfig, StationarySample, sample_stationary, detect_coalescence, run_replications
from .analytics import MmcParams, erlang_c_pmf, vacation_mmc_qlen_pmf, coalescence_study, complexity_study

__all__ = [
    'DistributionSpec', 'parse_flag',
    'WalkSpec', 'MaxWalkStream', 'cramer_root', 'cross_test', 'conditional_step',
    'VacationTimeline', 'CouplingTrace', 'build_streams', 'w_v_at',
    'QueueState', 'TrafficTrace', 'kw_step', 'kw_run', 'replay',
    'DcftpConfig', 'StationarySample', 'sample_stationary', 'detect_coalescence', 'run_replications',
    'MmcParams', 'erlang_c_pmf', 'vacation_mmc_qlen_pmf', 'coalescence_study', 'complexity_study',
]
