"""
File GI/GI/c FCFS : récursion de Kiefer–Wolfowitz et rejeu en temps continu
"""

import math
import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EventTieError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrafficTrace:
    """Arrivées ordonnées (T_n, A_n, V_n) sur une fenêtre"""

    times: np.ndarray
    interarrivals: np.ndarray
    services: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        interarrivals = np.asarray(self.interarrivals, dtype=float)
        services = np.asarray(self.services, dtype=float)
        if not (len(times) == len(interarrivals) == len(services)):
            raise ConfigError("Trace incohérente: longueurs différentes")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ConfigError("Trace incohérente: instants d'arrivée non croissants")
        if np.any(services <= 0) or np.any(interarrivals <= 0):
            raise ConfigError("Trace incohérente: durées non strictement positives")
        if len(times) > 1 and not np.allclose(np.diff(times), interarrivals[:-1], rtol=1e-9, atol=1e-9):
            raise ConfigError("Trace incohérente: A_n différent de l'écart à l'arrivée suivante")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "interarrivals", interarrivals)
        object.__setattr__(self, "services", services)

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_arrivals(cls, times: Sequence[float], services: Sequence[float],
                      next_arrival: float = None) -> "TrafficTrace":
        """Construit la trace ; la dernière interarrivée vaut next_arrival − T_last"""
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return cls(times, np.empty(0), np.empty(0))
        last_gap = (next_arrival - times[-1]) if next_arrival is not None else math.inf
        interarrivals = np.append(np.diff(times), last_gap)
        return cls(times, interarrivals, services)


@dataclass(frozen=True)
class QueueState:
    """État (Q, R, E) : file d'attente, résidus de service triés, âge de la dernière arrivée"""

    queue: int
    residuals: Tuple[float, ...]
    elapsed: float

    def __post_init__(self):
        residuals = tuple(sorted(float(r) for r in self.residuals))
        if self.queue < 0 or any(r < 0 for r in residuals) or self.elapsed < 0:
            raise ConfigError(f"État de file invalide: {self}")
        if self.queue > 0 and any(r <= 0 for r in residuals):
            raise ConfigError("État de file invalide: client en attente avec un serveur libre")
        object.__setattr__(self, "residuals", residuals)

    @classmethod
    def empty(cls, servers: int, elapsed: float = 0.0) -> "QueueState":
        return cls(0, (0.0,) * servers, elapsed)

    @property
    def servers(self) -> int:
        return len(self.residuals)

    @property
    def busy(self) -> int:
        return sum(1 for r in self.residuals if r > 0)

    @property
    def number_in_system(self) -> int:
        return self.queue + self.busy

    def close_to(self, other: "QueueState", tol: float = 1e-9) -> bool:
        if self.queue != other.queue or self.servers != other.servers:
            return False
        pairs = list(zip(self.residuals, other.residuals)) + [(self.elapsed, other.elapsed)]
        return all(abs(x - y) <= tol * (1.0 + abs(x)) for x, y in pairs)


def kw_step(w, v: float, a: float) -> np.ndarray:
    """sort((w + v·e₁ − a·𝟏)⁺), e₁ portant sur la plus petite coordonnée"""
    out = np.array(w, dtype=float)
    out[0] += v
    out -= a
    np.maximum(out, 0.0, out=out)
    out.sort()
    return out


def kw_run(trace: TrafficTrace, w0, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """W(T_m; w0) pour start ≤ m ≤ stop, lignes successives d'un tableau"""
    if stop is None:
        stop = len(trace) - 1
    if not 0 <= start <= stop < len(trace):
        raise ConfigError(f"Indices hors trace: [{start}, {stop}] pour {len(trace)} arrivées")
    w = np.sort(np.asarray(w0, dtype=float))
    out = np.empty((stop - start + 1, len(w)))
    out[0] = w
    for row, m in enumerate(range(start, stop), start=1):
        out[row] = kw_step(out[row - 1], trace.services[m], trace.interarrivals[m])
    return out


def fold_backlog(residuals: Sequence[float], backlog: Iterable[float]) -> np.ndarray:
    """Vecteur de charge vu par un nouvel arrivant derrière une file déjà présente"""
    w = np.sort(np.asarray(residuals, dtype=float))
    for service in backlog:
        w[0] += service
        w.sort()
    return w


class FcfsQueue:
    """Rejeu événementiel d'une file FCFS à c serveurs"""

    def __init__(self, servers: int, start: float = 0.0, state: QueueState = None,
                 backlog: Sequence[float] = ()):
        if state is None:
            state = QueueState.empty(servers)
        if state.servers != servers:
            raise ConfigError(f"État à {state.servers} serveurs pour une file à {servers}")
        if len(backlog) != state.queue:
            raise ConfigError(f"{state.queue} client(s) en attente mais {len(backlog)} service(s) fournis")

        self.servers = servers
        self.now = float(start)
        # instant de libération de chaque serveur ; -inf pour un serveur libre
        self.free_at = np.array([start + r if r > 0 else -math.inf for r in state.residuals])
        self.waiting = deque((start, None, float(s)) for s in backlog)
        self.last_arrival = start - state.elapsed
        self.waits: List[float] = []
        self.arrived = 0

    def advance_to(self, t: float):
        """Démarre les services des clients en tête dont un serveur se libère avant t"""
        if t < self.now:
            raise ConfigError(f"Rejeu à rebours: {t} < {self.now}")
        while self.waiting:
            server = int(np.argmin(self.free_at))
            if self.free_at[server] > t:
                break
            arrival, index, service = self.waiting.popleft()
            begin = max(self.free_at[server], arrival)
            if index is not None:
                self.waits[index] = begin - arrival
            self.free_at[server] = begin + service
        self.now = t

    def arrive(self, t: float, service: float):
        self.advance_to(t)
        if np.any(self.free_at == t):
            raise EventTieError(f"Arrivée simultanée à une fin de service (t={t})")
        index = len(self.waits)
        self.waits.append(math.nan)
        self.arrived += 1
        self.last_arrival = t
        self.waiting.append((t, index, float(service)))
        self.advance_to(t)

    def queue_length(self) -> int:
        return len(self.waiting)

    def state(self, t: float = None) -> QueueState:
        if t is not None:
            self.advance_to(t)
        residuals = np.clip(self.free_at - self.now, 0.0, None)
        return QueueState(len(self.waiting), tuple(residuals), self.now - self.last_arrival)


def _feed(queue: FcfsQueue, trace: TrafficTrace, start: float, end: float):
    lo = int(np.searchsorted(trace.times, start, side="left"))
    hi = int(np.searchsorted(trace.times, end, side="right"))
    for n in range(lo, hi):
        queue.arrive(trace.times[n], trace.services[n])


def replay(trace: TrafficTrace, z0: QueueState, start: float, end: float,
           backlog: Sequence[float] = ()) -> QueueState:
    """
    Rejoue la file depuis l'état z0 juste avant start jusqu'à end.

    Les arrivées de la trace dans [start, end] entrent dans la file ; backlog
    donne les services des z0.queue clients déjà en attente.
    """
    if end < start:
        raise ConfigError(f"Fenêtre de rejeu vide: [{start}, {end}]")
    queue = FcfsQueue(z0.servers, start, z0, backlog)
    _feed(queue, trace, start, end)
    return queue.state(end)


def replay_waits(trace: TrafficTrace, servers: int) -> np.ndarray:
    """Attentes de toutes les arrivées de la trace depuis une file vide"""
    if len(trace) == 0:
        return np.empty(0)
    queue = FcfsQueue(servers, trace.times[0])
    _feed(queue, trace, trace.times[0], trace.times[-1])
    queue.advance_to(math.inf)
    return np.array(queue.waits)


def queue_lengths(trace: TrafficTrace, z0: QueueState, start: float, instants: Sequence[float],
                  backlog: Sequence[float] = ()) -> np.ndarray:
    """Longueur de file Q aux instants donnés (croissants, ≥ start)"""
    queue = FcfsQueue(z0.servers, start, z0, backlog)
    out = np.empty(len(instants), dtype=int)
    cursor = int(np.searchsorted(trace.times, start, side="left"))
    for i, t in enumerate(instants):
        while cursor < len(trace) and trace.times[cursor] <= t:
            queue.arrive(trace.times[cursor], trace.services[cursor])
            cursor += 1
        queue.advance_to(t)
        out[i] = queue.queue_length()
    return out
