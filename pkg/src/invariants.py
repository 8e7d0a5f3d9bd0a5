"""
Invariants vérifiables à l'exécution

Chaque contrôle lève InvariantViolation avec un diagnostic. Ils servent au
mode verify du driver, à la commande selftest et aux tests.
"""

import logging

import numpy as np

from .errors import InvariantViolation
from .kw import QueueState, TrafficTrace, fold_backlog, kw_step, queue_lengths, replay
from .rwmax import MaxWalkStream
from .vacation import CouplingTrace, w_v_at

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9


def _close(x, y, tol: float = TOLERANCE) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.abs(x - y) <= tol * (1.0 + np.abs(x))


def check_sorted_nonnegative(w, label: str = "vecteur KW"):
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(np.diff(w) < 0):
        raise InvariantViolation(f"{label} non trié ou négatif: {w}")


def check_walk_consistency(stream: MaxWalkStream):
    """M_n ≥ S_n et M_n = max(S_n, M_{n+1}) sur le préfixe déterminé"""
    m = np.asarray(stream.M)
    s = np.asarray(stream.S[:len(m)])
    if np.any(m < s):
        raise InvariantViolation("M_n < S_n sur le préfixe déterminé")
    if len(m) > 1 and not np.array_equal(m[:-1], np.maximum(s[:-1], m[1:])):
        raise InvariantViolation("M_n ≠ max(S_n, M_{n+1}) sur le préfixe déterminé")
    if len(m) and np.isfinite(stream.ceiling) and np.any(np.asarray(stream.S[len(m):]) >= stream.ceiling):
        raise InvariantViolation("Somme partielle matérialisée au-dessus du plafond")


def check_sandwich(lower: np.ndarray, upper: np.ndarray):
    """W(·;0) ≤ W(·;W_v) coordonnée par coordonnée"""
    if lower.shape != upper.shape:
        raise InvariantViolation(f"Suites KW de formes différentes: {lower.shape} / {upper.shape}")
    excess = lower - upper
    if np.any(excess > TOLERANCE * (1.0 + np.abs(upper))):
        n = int(np.argmax(excess.max(axis=1)))
        raise InvariantViolation(f"Encadrement violé à l'indice {n}: {lower[n]} > {upper[n]}")


def check_absorbing(lower: np.ndarray, upper: np.ndarray, index: int, steps: int = 5):
    """Une fois égales, les deux suites le restent"""
    stop = min(len(lower), index + steps + 1)
    for m in range(index, stop):
        if not np.all(_close(upper[m], lower[m])):
            raise InvariantViolation(f"Coalescence non absorbante: écart à l'indice {m} (détection {index})")


def check_wv_recursion(trace: CouplingTrace):
    """W_v(T_{n+1}) ≥ sort((W_v(T_n) + V_n e₁ − A_n)⁺), soit Ξ_n ≥ 0"""
    for n in range(len(trace) - 1):
        current = w_v_at(trace, n)
        following = w_v_at(trace, n + 1)
        if abs(current[0] - trace.delays[n]) > TOLERANCE * (1.0 + current[0]):
            raise InvariantViolation(f"W_v^(1)(T_{n}) ≠ D_{n}")
        xi = following - kw_step(current, trace.services[n], trace.interarrivals[n])
        if np.any(xi < -TOLERANCE * (1.0 + np.abs(following))):
            raise InvariantViolation(f"Ξ_{n} négatif: {xi}")


def check_upper_workload(trace: CouplingTrace):
    """La borne haute (résidus en tête, clients antérieurs) redonne W_v à la première arrivée"""
    if len(trace) == 0:
        return
    folded = fold_backlog(trace.head_residuals, trace.backlog)
    if not np.all(_close(folded, w_v_at(trace, 0))):
        raise InvariantViolation(f"Charge de la borne haute {folded} ≠ W_v(T_0) {w_v_at(trace, 0)}")


def check_fcfs_order(trace: CouplingTrace):
    """Débuts de service strictement croissants dans l'ordre d'arrivée"""
    starts = trace.service_starts
    if len(starts) > 1 and np.any(np.diff(starts) <= 0):
        raise InvariantViolation("Ordre FCFS violé dans l'extraction des services")
    if np.any(trace.delays < 0):
        raise InvariantViolation("Délai négatif dans l'extraction des services")


def check_replay_conservation(trace: CouplingTrace, q_v_zero: int):
    """La file rejouée à 0 coïncide avec Q_v(0) = M(0) − X(0)"""
    if trace.qv_at_zero != q_v_zero:
        raise InvariantViolation(f"Rejeu du système à vacances: Q_v(0)={trace.qv_at_zero}, attendu {q_v_zero}")
    if np.any(trace.qv_values < 0):
        raise InvariantViolation("Q_v négatif pendant le rejeu")
    steps = np.abs(np.diff(trace.qv_values))
    if np.any(steps > 1):
        raise InvariantViolation("Q_v varie de plus d'une unité en un événement")


def check_upper_replay(traffic: TrafficTrace, trace: CouplingTrace, z0: QueueState):
    """Le rejeu depuis la borne haute (Q_v, sort(U), 0) donne le même état à 0"""
    start = float(traffic.times[0])
    upper_state = QueueState(len(trace.backlog), tuple(trace.head_residuals), 0.0)
    upper = replay(traffic, upper_state, start, 0.0, backlog=trace.backlog)
    if not upper.close_to(z0):
        raise InvariantViolation(f"États différents à 0: borne basse {z0} / borne haute {upper}")


def check_queue_dominance(traffic: TrafficTrace, trace: CouplingTrace):
    """Q(basse) ≤ Q(haute) ≤ Q_v sur [T_κ, 0]"""
    start = float(traffic.times[0])
    mask = trace.qv_times >= start
    times = trace.qv_times[mask]
    values = trace.qv_values[mask]
    ends = np.append(times[1:], 0.0)
    instants = 0.5 * (times + ends)
    keep = instants > start
    instants, values = instants[keep], values[keep]
    if len(instants) == 0:
        return

    c = trace.servers
    lower = queue_lengths(traffic, QueueState.empty(c), start, instants)
    upper_state = QueueState(len(trace.backlog), tuple(trace.head_residuals), 0.0)
    upper = queue_lengths(traffic, upper_state, start, instants, backlog=trace.backlog)
    if np.any(lower > upper):
        raise InvariantViolation("Domination violée: file basse > file haute")
    if np.any(upper > values):
        raise InvariantViolation("Domination violée: file haute > Q_v")

