"""
Maxima exacts de marches aléatoires à dérive négative

Une MaxWalkStream réalise conjointement la marche (S_n) et ses maxima sur
horizon infini M_n = sup_{k≥n} S_k, de façon paresseuse : on n'engendre que
le préfixe demandé, les valeurs déjà déterminées ne changent jamais.

La méthode repose sur la racine de Cramér θ* (ψ(θ*) = 1) : sous la loi
inclinée la marche a une dérive positive, ce qui donne un test de
franchissement exact par acceptation de probabilité exp(−θ* S_τ).
"""

import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy import optimize

from .dists import DistributionSpec
from .errors import ConfigError, DomainError, UnsupportedSpecError, ResourceCapError, InvariantViolation

logger = logging.getLogger(__name__)

ARRIVAL = "arrival"
SERVICE = "service"

ROOT_TOLERANCE = 1e-10
MAX_BRACKET_STEPS = 200
DEFAULT_MAX_STEPS = 5_000_000


@dataclass(frozen=True)
class WalkSpec:
    """
    Loi d'incrément d'une marche.

    arrival : X = 1 − a·A, A ~ base
    service : X = (a/c)·V − 1, V ~ base
    """

    flavor: str
    base: DistributionSpec
    a: float
    c: int = 1

    def __post_init__(self):
        if self.flavor not in (ARRIVAL, SERVICE):
            raise ConfigError(f"Type de marche inconnu: {self.flavor}")
        if not self.a > 0:
            raise ConfigError(f"Paramètre de dérive a={self.a} doit être > 0")
        if int(self.c) != self.c or self.c < 1:
            raise ConfigError(f"Nombre de serveurs invalide: {self.c}")

    @property
    def scale(self) -> float:
        return self.a if self.flavor == ARRIVAL else self.a / self.c

    def increment(self, base_value: float) -> float:
        if self.flavor == ARRIVAL:
            return 1.0 - self.a * base_value
        return self.scale * base_value - 1.0

    @property
    def drift(self) -> float:
        return self.increment(self.base.mean)

    @property
    def max_increment(self) -> float:
        """Borne supérieure du support des incréments"""
        if self.flavor == ARRIVAL:
            return 1.0 - self.a * self.base.support_lo
        return self.scale * self.base.support_hi - 1.0

    def tilt(self, theta: float) -> float:
        """Inclinaison η de la loi de base correspondant à θ sur l'incrément"""
        return -self.a * theta if self.flavor == ARRIVAL else self.scale * theta

    @property
    def theta_sup(self) -> float:
        if self.flavor == ARRIVAL:
            return math.inf
        return self.base.theta_max / self.scale

    def log_psi(self, theta: float) -> float:
        """log E[exp(θX)]"""
        if self.flavor == ARRIVAL:
            return theta + self.base.log_mgf(-self.a * theta)
        return -theta + self.base.log_mgf(self.scale * theta)


@dataclass(frozen=True)
class CrossOutcome:
    crossed: bool
    bases: Tuple[float, ...]
    increments: Tuple[float, ...]
    drawn: int


@dataclass(frozen=True)
class StepOutcome:
    base: float
    increment: float
    drawn: int


@lru_cache(maxsize=256)
def cramer_root(spec: WalkSpec) -> float:
    """Racine θ* > 0 de ψ(θ) = 1 par bissection encadrée"""
    if spec.drift >= 0:
        raise ConfigError(f"Dérive positive ou nulle ({spec.drift:.6g}) pour la marche {spec.flavor}: "
                          f"choisir a dans (λ, cμ)")
    if spec.max_increment <= 0:
        raise UnsupportedSpecError(f"Incréments presque sûrement négatifs: pas de racine de Cramér "
                                   f"({spec.flavor}, {spec.base.label()})")

    theta_sup = spec.theta_sup
    theta_hi = None
    for j in range(1, MAX_BRACKET_STEPS):
        candidate = theta_sup * (1.0 - 2.0 ** -j) if math.isfinite(theta_sup) else 2.0 ** (j - 1)
        try:
            value = spec.log_psi(candidate)
        except (OverflowError, ValueError):
            value = math.inf
        if value > 0:
            theta_hi = candidate
            break
    if theta_hi is None:
        raise UnsupportedSpecError(f"Racine de Cramér non encadrable avant θ_max={theta_sup} "
                                   f"({spec.flavor}, {spec.base.label()})")

    theta_lo = theta_hi
    for _ in range(MAX_BRACKET_STEPS):
        theta_lo /= 2.0
        if spec.log_psi(theta_lo) < 0:
            break
    else:
        raise UnsupportedSpecError("Borne basse de la racine de Cramér introuvable")

    root = optimize.bisect(spec.log_psi, theta_lo, theta_hi, xtol=1e-15, maxiter=500)
    residual = abs(math.expm1(spec.log_psi(root)))
    if residual > ROOT_TOLERANCE:
        raise UnsupportedSpecError(f"Racine de Cramér imprécise: |ψ(θ*)−1| = {residual:.3g}")

    logger.debug(f"🔎 θ* = {root:.12f} pour {spec.flavor} {spec.base.label()} a={spec.a:g} c={spec.c}")
    return root


def cross_test(spec: WalkSpec, gap: float, rng: np.random.Generator,
               max_steps: int = DEFAULT_MAX_STEPS) -> CrossOutcome:
    """
    Bernoulli exacte de {sup_{n≥1} S_n > gap} (S_0 = 0).

    En cas de franchissement, renvoie le segment conditionné jusqu'au premier
    indice dont la somme partielle dépasse gap.
    """
    if gap < 0:
        raise DomainError(f"Écart négatif pour le test de franchissement: {gap}")
    if spec.max_increment <= 0:
        return CrossOutcome(False, (), (), 0)

    theta = cramer_root(spec)
    eta = spec.tilt(theta)
    bases: List[float] = []
    increments: List[float] = []
    total = 0.0
    while total <= gap:
        if len(increments) >= max_steps:
            raise ResourceCapError(f"Test de franchissement: plus de {max_steps} pas inclinés",
                                   diagnostics={"gap": gap, "steps": len(increments), "position": total})
        y = spec.base.sample_tilted(eta, rng)
        x = spec.increment(y)
        bases.append(y)
        increments.append(x)
        total += x

    accept = math.exp(-theta * total)
    if accept > math.exp(-theta * gap) * (1.0 + 1e-12):
        raise InvariantViolation(f"Probabilité d'acceptation {accept} > exp(−θ*·gap)")

    crossed = bool(rng.random() < accept)
    if not crossed:
        return CrossOutcome(False, (), (), len(increments))
    return CrossOutcome(True, tuple(bases), tuple(increments), len(increments))


def conditional_step(spec: WalkSpec, headroom: float, rng: np.random.Generator,
                     max_proposals: int = DEFAULT_MAX_STEPS) -> StepOutcome:
    """
    Un pas de la marche conditionnée à {sup du futur < headroom}.

    L'acceptation certifie que le futur reste sous headroom − x : des appels
    successifs avec headroom ← headroom − x composent un chemin conditionné exact.
    """
    if headroom < 0:
        raise DomainError(f"Marge négative: {headroom}")
    drawn = 0
    for _ in range(max_proposals):
        y = spec.base.sample(rng)
        x = spec.increment(y)
        drawn += 1
        if x >= headroom:
            continue
        outcome = cross_test(spec, headroom - x, rng)
        drawn += outcome.drawn
        if not outcome.crossed:
            return StepOutcome(y, x, drawn)
    raise ResourceCapError(f"Pas conditionné: {max_proposals} propositions rejetées (marge {headroom:.4g})",
                           diagnostics={"headroom": headroom, "proposals": max_proposals, "drawn": drawn})


class MaxWalkStream:
    """Marche (S_n) et maxima M_n = sup_{k≥n} S_k, étendus à la demande"""

    def __init__(self, spec: WalkSpec, rng: np.random.Generator, start: float = 0.0,
                 max_steps: int = DEFAULT_MAX_STEPS):
        self.spec = spec
        self.rng = rng
        self.max_steps = max_steps

        # bases[j-1] engendre le pas j
        self.bases: List[float] = []
        self.increments: List[float] = []
        self.S: List[float] = [float(start)]
        self.M: List[float] = []

        # tout le futur non matérialisé reste strictement sous ce plafond
        self.ceiling = math.inf
        self.drawn = 0

    @property
    def end(self) -> int:
        return len(self.S) - 1

    @property
    def determined_upto(self) -> int:
        return len(self.M) - 1

    @property
    def proposal_increments(self) -> int:
        """Incréments tirés puis rejetés (hors chemin matérialisé)"""
        return self.drawn - self.end

    def _append(self, base: float, increment: float):
        if self.end >= self.max_steps:
            raise ResourceCapError(f"Marche {self.spec.flavor}: plus de {self.max_steps} pas matérialisés",
                                   diagnostics={"flavor": self.spec.flavor, "end": self.end,
                                                "determined_upto": self.determined_upto})
        self.bases.append(base)
        self.increments.append(increment)
        self.S.append(self.S[-1] + increment)

    def _step_forward(self):
        if math.isinf(self.ceiling):
            y = self.spec.base.sample(self.rng)
            self.drawn += 1
            self._append(y, self.spec.increment(y))
            return
        step = conditional_step(self.spec, self.ceiling - self.S[-1], self.rng)
        self.drawn += step.drawn
        self._append(step.base, step.increment)

    def materialize(self, n: int):
        """Matérialise S_0..S_n sans déterminer de maximum supplémentaire"""
        while self.end < n:
            self._step_forward()

    def extend(self, n: int):
        """Garantit S_k et M_k exacts pour tout k ≤ n"""
        while self.determined_upto < n:
            self._determine()

    def max_at(self, n: int) -> float:
        self.extend(n)
        return self.M[n]

    def _determine(self):
        first = self.determined_upto + 1
        if self.end < first:
            self._step_forward()

        window = self.S[first:]
        offset = int(np.argmax(window))
        peak = window[offset]

        segment = self._record_test(peak)
        if segment is not None:
            for base, increment in zip(segment.bases, segment.increments):
                self._append(base, increment)
            return

        # le futur reste sous peak : maxima de suffixe exacts jusqu'à l'argmax
        suffix = np.maximum.accumulate(np.asarray(window)[::-1])[::-1]
        self.M.extend(float(v) for v in suffix[:offset + 1])
        self.ceiling = peak

    def _record_test(self, peak: float):
        """
        Le futur dépasse-t-il peak, sachant qu'il reste sous le plafond ?

        Rejet contre le plafond : une proposition qui le dépasse, ou dont la
        suite le dépasse, est écartée en bloc. None signifie « pas de dépassement ».
        """
        position = self.S[-1]
        while True:
            outcome = cross_test(self.spec, peak - position, self.rng)
            self.drawn += outcome.drawn
            if not outcome.crossed:
                return None
            if math.isinf(self.ceiling):
                return outcome
            top = position
            for increment in outcome.increments:
                top += increment
            if top >= self.ceiling:
                continue
            follow = cross_test(self.spec, self.ceiling - top, self.rng)
            self.drawn += follow.drawn
            if not follow.crossed:
                return outcome
