"""
Système à vacances stationnaire construit à rebours

Le temps de simulation u ≥ 0 correspond au temps original −u. Le flux 0 porte
les arrivées, les flux 1..c les débuts d'activité (service ou vacance) des
serveurs. Chaque flux est un processus de renouvellement stationnaire dont les
époques à rebours sont pilotées par une MaxWalkStream :

    flux 0 : indice j ↔ (j + 1) − a·e_j
    flux i : indice j ↔ (a/c)·e_j − j

e_0 suit la loi d'équilibre, les écarts suivants la loi de base. Avec
X(t) = N⁰(t) − Σᵢ Nⁱ(t) et M(t) = sup_{s≥t} X(s), la file du système à
vacances au temps original −t vaut Q_v = M(t) − X(t).
"""

import bisect
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .dists import DistributionSpec
from .errors import ConfigError, EventTieError
from .kw import TrafficTrace
from .rwmax import ARRIVAL, SERVICE, MaxWalkStream, WalkSpec
from .utils import make_rng, PURPOSE_BACKWARD, PURPOSE_FORWARD

logger = logging.getLogger(__name__)

RngFactory = Callable[[int, int], np.random.Generator]


class RenewalStream:
    """Flux de renouvellement stationnaire, paresseux dans les deux sens du temps"""

    def __init__(self, stream_id: int, flavor: str, base: DistributionSpec, a: float, c: int,
                 rng: np.random.Generator, forward_rng: np.random.Generator):
        self.stream_id = stream_id
        self.flavor = flavor
        self.base = base
        self.forward_rng = forward_rng

        self.first_epoch = base.sample_equilibrium(rng)
        spec = WalkSpec(flavor, base, a, c)
        start = spec.increment(self.first_epoch) if flavor == ARRIVAL else spec.scale * self.first_epoch
        self.walk = MaxWalkStream(spec, rng, start=start)

        # époques à rebours (temps de simulation), e_j ↔ indice j de la marche
        self.epochs: List[float] = [self.first_epoch]
        # époques au-delà du temps original 0
        self.forward: List[float] = []

    def _sync(self):
        while len(self.epochs) <= self.walk.end:
            self.epochs.append(self.epochs[-1] + self.walk.bases[len(self.epochs) - 1])

    def cover(self, t: float):
        """Matérialise les époques jusqu'à la première au-delà de t"""
        self._sync()
        while self.epochs[-1] <= t:
            self.walk.materialize(self.walk.end + 1)
            self._sync()

    def count(self, t: float) -> int:
        """N(t) : nombre d'époques dans [0, t]"""
        self.cover(t)
        return bisect.bisect_right(self.epochs, t)

    def component_max(self, t: float) -> float:
        """Maximum futur exact de la composante du flux à partir de t"""
        k = self.count(t)
        peak = self.walk.max_at(k)
        if self.flavor == ARRIVAL:
            return max(k - self.walk.spec.a * t, peak)
        return max(self.walk.spec.scale * t - k, peak)

    def forward_epoch(self, m: int) -> float:
        """m-ième époque (m ≥ 1) après le temps original 0"""
        while len(self.forward) < m:
            if not self.forward:
                gap = self.base.sample_residual_given_age(self.first_epoch, self.forward_rng)
                self.forward.append(gap)
            else:
                self.forward.append(self.forward[-1] + self.base.sample(self.forward_rng))
        return self.forward[m - 1]

    def original_epochs(self, horizon: float):
        """Époques en temps original, croissantes, à partir de −horizon"""
        k = self.count(horizon)
        for j in range(k - 1, -1, -1):
            yield -self.epochs[j]
        m = 1
        while True:
            yield self.forward_epoch(m)
            m += 1

    @property
    def renewals(self) -> int:
        return self.walk.end + 1 + len(self.forward)

    @property
    def proposal_increments(self) -> int:
        return self.walk.proposal_increments


def build_streams(arrival: DistributionSpec, service: DistributionSpec, servers: int, a: float,
                  rng_factory: RngFactory) -> List[RenewalStream]:
    """
    Flux 0 (arrivées, loi G) puis flux 1..c (activités, loi F).

    Chaque flux reçoit deux générateurs indépendants : un pour la partie
    construite à rebours, un pour la complétion au-delà du temps 0.
    """
    streams = [RenewalStream(0, ARRIVAL, arrival, a, servers,
                             rng_factory(0, PURPOSE_BACKWARD), rng_factory(0, PURPOSE_FORWARD))]
    for i in range(1, servers + 1):
        streams.append(RenewalStream(i, SERVICE, service, a, servers,
                                     rng_factory(i, PURPOSE_BACKWARD), rng_factory(i, PURPOSE_FORWARD)))
    return streams


@dataclass
class CouplingTrace:
    """Services extraits du système à vacances pour les arrivées de [−τ, 0]"""

    horizon: float
    servers: int
    times: np.ndarray
    interarrivals: np.ndarray
    services: np.ndarray
    delays: np.ndarray
    initiators: np.ndarray
    residuals: np.ndarray
    backlog: Tuple[float, ...]
    head_residuals: np.ndarray
    q_start: int
    next_arrival: Optional[float]
    qv_times: np.ndarray
    qv_values: np.ndarray
    departures: int = 0
    service_starts: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self) -> int:
        return len(self.times)

    def traffic(self) -> TrafficTrace:
        return TrafficTrace(self.times, self.interarrivals, self.services)

    @property
    def qv_at_zero(self) -> int:
        return int(self.qv_values[-1])


def w_v_at(trace: CouplingTrace, index: int = 0) -> np.ndarray:
    """W_v = D·𝟏 + sort(U((T+D)−)), le serveur initiateur ayant un résidu nul"""
    return trace.delays[index] + np.sort(trace.residuals[index])


class VacationTimeline:
    """Chronologie fusionnée des c+1 flux stationnaires"""

    def __init__(self, arrival: DistributionSpec, service: DistributionSpec, servers: int,
                 a: float = None, rng_factory: RngFactory = None, seed: int = 0, replication: int = 0):
        self.logger = logging.getLogger(__name__)
        self.arrival = arrival
        self.service = service
        self.servers = int(servers)
        self.a = check_stability(arrival, service, servers, a)

        if rng_factory is None:
            def rng_factory(stream_id, purpose):
                return make_rng(seed, replication, stream_id, purpose)

        self.streams = build_streams(arrival, service, self.servers, self.a, rng_factory)

    @property
    def lam(self) -> float:
        return 1.0 / self.arrival.mean

    @property
    def mu(self) -> float:
        return 1.0 / self.service.mean

    @property
    def rho(self) -> float:
        return self.lam / (self.servers * self.mu)

    def X(self, t: float) -> int:
        return self.streams[0].count(t) - sum(s.count(t) for s in self.streams[1:])

    def _events(self, t: float, horizon: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Époques dans (t, horizon] : instants, flux et sauts de X"""
        times, ids = [], []
        for stream in self.streams:
            stream.cover(horizon)
            lo = bisect.bisect_right(stream.epochs, t)
            hi = bisect.bisect_right(stream.epochs, horizon)
            times.extend(stream.epochs[lo:hi])
            ids.extend([stream.stream_id] * (hi - lo))
        times = np.asarray(times, dtype=float)
        ids = np.asarray(ids, dtype=int)
        order = np.argsort(times, kind="stable")
        times, ids = times[order], ids[order]
        if len(times) > 1 and np.any(np.diff(times) == 0):
            raise EventTieError(f"Époques simultanées dans ({t}, {horizon}]")
        jumps = np.where(ids == 0, 1, -1)
        return times, ids, jumps

    def running_max_X(self, t: float) -> int:
        """M(t) = sup_{s≥t} X(s), exact"""
        if t < 0:
            raise ConfigError(f"Temps de simulation négatif: {t}")
        base = self.X(t)
        horizon = t + max(1.0, t)
        while True:
            _, _, jumps = self._events(t, horizon)
            interval_max = base + max(0, int(np.max(np.cumsum(jumps)))) if len(jumps) else base
            bound = sum(stream.component_max(horizon) for stream in self.streams)
            if bound <= interval_max:
                return int(interval_max)
            horizon = t + 2.0 * (horizon - t)

    def q_v(self, t: float) -> int:
        """Q_v au temps original −t"""
        return self.running_max_X(t) - self.X(t)

    def renewal_counts(self) -> Dict[int, int]:
        return {s.stream_id: s.renewals for s in self.streams}

    def proposal_counts(self) -> Dict[int, int]:
        return {s.stream_id: s.proposal_increments for s in self.streams}

    def extract_services(self, horizon: float) -> CouplingTrace:
        """
        Rejoue le système à vacances depuis −horizon en temps original.

        À chaque début d'activité avec une file non vide, le client de tête
        reçoit la durée complète de l'activité comme temps de service. Le rejeu
        continue après 0 jusqu'à ce que chaque arrivée ≤ 0 ait son service.
        """
        c = self.servers
        q_start = self.q_v(horizon)

        iterators = [stream.original_epochs(horizon) for stream in self.streams]
        pending = [next(it) for it in iterators]
        heap = [(t, i) for i, t in enumerate(pending)]
        heapq.heapify(heap)

        # clients fantômes (arrivés avant −horizon) : identifiants négatifs
        queue = deque(range(-q_start, 0))
        phantom_services: Dict[int, float] = {}
        times: List[float] = []
        interarrivals: List[float] = []
        services: Dict[int, float] = {}
        starts: Dict[int, float] = {}
        initiators: Dict[int, int] = {}
        residuals: Dict[int, np.ndarray] = {}
        backlog_ids: List[int] = []
        head_residuals = np.empty(0)
        next_arrival = None
        qv_times, qv_values = [-horizon], [q_start]
        departures = 0
        last = -math.inf

        while heap:
            t, i = heapq.heappop(heap)
            if t == last:
                raise EventTieError(f"Événements simultanés au temps {t}")
            last = t
            pending[i] = next(iterators[i])
            heapq.heappush(heap, (pending[i], i))

            if t > 0 and next_arrival is not None and len(services) == len(times):
                break

            if i == 0:
                if t <= 0:
                    n = len(times)
                    if n == 0:
                        backlog_ids = list(queue)
                        head_residuals = np.sort(np.array(pending[1:]) - t)
                    times.append(t)
                    interarrivals.append(pending[0] - t)
                    queue.append(n)
                elif next_arrival is None:
                    next_arrival = t
            elif queue:
                customer = queue.popleft()
                departures += 1
                length = pending[i] - t
                if customer < 0:
                    phantom_services[customer] = length
                else:
                    services[customer] = length
                    starts[customer] = t
                    initiators[customer] = i
                    row = np.array(pending[1:]) - t
                    row[i - 1] = 0.0
                    residuals[customer] = row

            if t <= 0:
                qv_times.append(t)
                qv_values.append(len(queue))

        n = len(times)
        ordered = range(n)
        trace = CouplingTrace(
            horizon=horizon,
            servers=c,
            times=np.array(times),
            interarrivals=np.array(interarrivals),
            services=np.array([services[k] for k in ordered]),
            delays=np.array([starts[k] - times[k] for k in ordered]),
            initiators=np.array([initiators[k] for k in ordered], dtype=int),
            residuals=np.array([residuals[k] for k in ordered]).reshape(n, c),
            backlog=tuple(phantom_services[k] for k in backlog_ids),
            head_residuals=head_residuals,
            q_start=q_start,
            next_arrival=next_arrival,
            qv_times=np.array(qv_times),
            qv_values=np.array(qv_values, dtype=int),
            departures=departures,
            service_starts=np.array([starts[k] for k in ordered]),
        )
        self.logger.debug(f"🔗 Couplage sur [−{horizon:g}, 0]: {n} arrivées, Q_v(−τ)={q_start}, "
                          f"Q_v(0)={trace.qv_at_zero}")
        return trace

    def to_frame(self, horizon: float) -> pd.DataFrame:
        """Événements de [0, horizon] en temps de simulation avec X, M et Q_v"""
        times, ids, jumps = self._events(0.0, horizon)
        x = np.cumsum(jumps) if len(jumps) else np.empty(0, dtype=int)
        m = np.empty(len(times), dtype=int)
        if len(times):
            m[-1] = self.running_max_X(float(times[-1]))
            for j in range(len(times) - 2, -1, -1):
                m[j] = max(x[j], m[j + 1])
        return pd.DataFrame({
            "time": times,
            "stream_id": ids,
            "X": x.astype(int),
            "M": m,
            "Q_v": m - x.astype(int),
        })

    def dump_csv(self, horizon: float, path: str) -> pd.DataFrame:
        frame = self.to_frame(horizon)
        frame.to_csv(path, index=False, float_format="%.10g")
        self.logger.info(f"💾 Chronologie écrite: {path} ({len(frame)} événements)")
        return frame


def check_stability(arrival: DistributionSpec, service: DistributionSpec, servers: int,
                    a: float = None) -> float:
    """Valide (G, F, c, a) et renvoie a (milieu de (λ, cμ) par défaut)"""
    if int(servers) != servers or servers < 1:
        raise ConfigError(f"Nombre de serveurs invalide: {servers}")
    if arrival.is_atomic or service.is_atomic:
        raise ConfigError("Lois à atomes refusées (événements simultanés): "
                          f"arrivées {arrival.label()}, services {service.label()}")
    lam = 1.0 / arrival.mean
    capacity = servers / service.mean
    rho = lam / capacity
    if rho >= 1:
        raise ConfigError(f"Système instable: ρ ≥ 1 (ρ = {rho:.4f})")
    if a is None:
        return 0.5 * (lam + capacity)
    if not lam < a < capacity:
        raise ConfigError(f"a={a} hors de (λ, cμ) = ({lam:.6g}, {capacity:.6g})")
    return float(a)
