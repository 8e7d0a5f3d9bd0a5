"""
Orchestration DCFTP : doublement d'horizon, détection de coalescence,
reconstruction de l'état stationnaire au temps 0
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import invariants
from .dists import DistributionSpec, coerce_spec
from .errors import ConfigError, ResourceCapError
from .kw import QueueState, kw_run, kw_step, replay
from .vacation import VacationTimeline, check_stability, w_v_at

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COALESCENCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DcftpConfig:
    """Paramètres d'un tirage parfait"""

    arrival: DistributionSpec
    service: DistributionSpec
    servers: int
    a: Optional[float] = None
    t0: float = 10.0
    seed: int = 0
    max_doublings: int = 30
    want_w1: bool = False
    verify: bool = False

    def __post_init__(self):
        object.__setattr__(self, "arrival", coerce_spec(self.arrival))
        object.__setattr__(self, "service", coerce_spec(self.service))
        if not self.t0 > 0:
            raise ConfigError(f"Horizon initial t0={self.t0} doit être > 0")
        if int(self.max_doublings) != self.max_doublings or self.max_doublings < 1:
            raise ConfigError(f"max_doublings invalide: {self.max_doublings}")
        check_stability(self.arrival, self.service, self.servers, self.a)

    @property
    def lam(self) -> float:
        return 1.0 / self.arrival.mean

    @property
    def mu(self) -> float:
        return 1.0 / self.service.mean

    @property
    def rho(self) -> float:
        return self.lam / (self.servers * self.mu)

    @property
    def drift_rate(self) -> float:
        return check_stability(self.arrival, self.service, self.servers, self.a)


@dataclass
class StationarySample:
    """
    Tirage Z(0) et diagnostics.

    arrival_index numérote κ depuis le temps 0 : la dernière arrivée avant 0
    porte l'indice 0, la plus ancienne de la fenêtre 1 − arrivals.
    detection_index est relatif à la fenêtre (0 = κ).
    """

    replication: int
    z0: QueueState
    coalescence_time: float
    horizon_index: int
    horizon: float
    arrival_index: int
    detection_index: int
    arrivals: int
    renewals: Dict[int, int] = field(default_factory=dict)
    proposal_increments: Dict[int, int] = field(default_factory=dict)
    w1: Optional[Tuple[float, ...]] = None
    elapsed_seconds: float = 0.0

    @property
    def number_in_system(self) -> int:
        return self.z0.number_in_system

    @property
    def total_renewals(self) -> int:
        return sum(self.renewals.values())

    @property
    def total_proposals(self) -> int:
        return sum(self.proposal_increments.values())

    def to_record(self) -> Dict:
        """Enregistrement JSON stable (format à ajout seulement)"""
        record = {
            "schema_version": SCHEMA_VERSION,
            "replication": self.replication,
            "Q0": self.z0.queue,
            "R0": list(self.z0.residuals),
            "E0": self.z0.elapsed,
            "number_in_system": self.number_in_system,
            "T_coalesce": self.coalescence_time,
            "k_horizon": self.horizon_index,
            "horizon": self.horizon,
            "arrival_index": self.arrival_index,
            "detection_index": self.detection_index,
            "arrivals": self.arrivals,
            "renewals": {str(k): v for k, v in sorted(self.renewals.items())},
            "proposal_increments": {str(k): v for k, v in sorted(self.proposal_increments.items())},
        }
        if self.w1 is not None:
            record["W1"] = list(self.w1)
        return record


def detect_coalescence(upper: np.ndarray, lower: np.ndarray, times: np.ndarray,
                       tol: float = COALESCENCE_TOLERANCE) -> Optional[int]:
    """
    Plus petit n tel que W(T_n; w⁺) = W(T_n; w⁻) et T_n + W⁺⁽¹⁾(T_n) ≤ 0
    """
    if upper.shape != lower.shape or len(upper) != len(times):
        raise ConfigError("Suites KW et instants de tailles incompatibles")
    equal = np.all(np.abs(upper - lower) <= tol * (1.0 + np.abs(upper)), axis=1)
    started = times + upper[:, 0] <= 0
    hits = np.flatnonzero(equal & started)
    return int(hits[0]) if len(hits) else None


def sample_stationary(config: DcftpConfig, replication: int = 0) -> StationarySample:
    """Un tirage exact de l'état stationnaire (Q, R, E) au temps 0"""
    started_at = time.perf_counter()
    c = config.servers
    timeline = VacationTimeline(config.arrival, config.service, c, a=config.a,
                                seed=config.seed, replication=replication)

    for k in range(1, config.max_doublings + 1):
        horizon = config.t0 * 2 ** k
        trace = timeline.extract_services(horizon)
        if len(trace) == 0:
            logger.debug(f"⏭️  Réplication {replication}: aucune arrivée sur [−{horizon:g}, 0]")
            continue

        traffic = trace.traffic()
        upper = kw_run(traffic, w_v_at(trace, 0))
        lower = kw_run(traffic, np.zeros(c))
        n = detect_coalescence(upper, lower, traffic.times)
        if n is None:
            logger.debug(f"🔁 Réplication {replication}: pas de coalescence à l'horizon {horizon:g}")
            continue

        start = float(traffic.times[0])
        z0 = replay(traffic, QueueState.empty(c), start, 0.0)

        if config.verify:
            _verify(timeline, trace, traffic, upper, lower, n, z0)

        w1 = None
        if config.want_w1:
            last = len(traffic) - 1
            w1 = tuple(kw_step(lower[last], traffic.services[last], traffic.interarrivals[last]))

        return StationarySample(
            replication=replication,
            z0=z0,
            coalescence_time=abs(float(traffic.times[n] + upper[n, 0])),
            horizon_index=k,
            horizon=horizon,
            arrival_index=1 - len(traffic),
            detection_index=n,
            arrivals=len(traffic),
            renewals=timeline.renewal_counts(),
            proposal_increments=timeline.proposal_counts(),
            w1=w1,
            elapsed_seconds=time.perf_counter() - started_at,
        )

    raise ResourceCapError(
        f"Pas de coalescence après {config.max_doublings} doublements (réplication {replication})",
        diagnostics={
            "replication": replication,
            "horizon": config.t0 * 2 ** config.max_doublings,
            "renewals": timeline.renewal_counts(),
        },
    )


def _verify(timeline: VacationTimeline, trace, traffic, upper, lower, n: int, z0: QueueState):
    for row in (upper[0], lower[0], upper[-1], lower[-1]):
        invariants.check_sorted_nonnegative(row)
    invariants.check_sandwich(lower, upper)
    invariants.check_absorbing(lower, upper, n)
    invariants.check_fcfs_order(trace)
    invariants.check_wv_recursion(trace)
    invariants.check_upper_workload(trace)
    invariants.check_replay_conservation(trace, timeline.q_v(0.0))
    invariants.check_upper_replay(traffic, trace, z0)
    invariants.check_queue_dominance(traffic, trace)
    for stream in timeline.streams:
        invariants.check_walk_consistency(stream.walk)


def _sample_one(job: Tuple[DcftpConfig, int]) -> StationarySample:
    config, replication = job
    return sample_stationary(config, replication)


def run_replications(config: DcftpConfig, reps: int, threads: int = 1, first: int = 0) -> List[StationarySample]:
    """Réplications indépendantes, triées par indice"""
    if reps < 1:
        raise ConfigError(f"Nombre de réplications invalide: {reps}")
    if threads < 1:
        raise ConfigError(f"Nombre de workers invalide: {threads}")

    jobs = [(config, r) for r in range(first, first + reps)]
    logger.info(f"🚀 {reps} réplication(s) - ρ={config.rho:.4f}, c={config.servers}, "
                f"graine {config.seed}, {threads} worker(s)")

    if threads == 1:
        samples = []
        for i, job in enumerate(jobs, start=1):
            samples.append(_sample_one(job))
            if i % max(1, reps // 10) == 0:
                logger.info(f"📊 {i}/{reps} tirages")
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(_sample_one, jobs, chunksize=max(1, reps // (4 * threads))))

    samples.sort(key=lambda s: s.replication)
    return samples
