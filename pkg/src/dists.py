"""
Catalogue de lois positives continues (interarrivées et services)

Chaque loi fournit ce dont la chaîne de simulation a besoin : tirage simple,
moments, fonction génératrice, loi d'équilibre, résidu conditionné à l'âge et
tirage sous la loi exponentiellement inclinée.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Any, Tuple

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

EXPONENTIAL = "exponential"
ERLANG = "erlang"
HYPEREXPONENTIAL = "hyperexponential"
UNIFORM = "uniform"
DETERMINISTIC = "deterministic"

KINDS = (EXPONENTIAL, ERLANG, HYPEREXPONENTIAL, UNIFORM, DETERMINISTIC)

# Alias acceptés par la syntaxe des options en ligne de commande
FLAG_ALIASES = {
    "exp": EXPONENTIAL,
    "exponential": EXPONENTIAL,
    "erlang": ERLANG,
    "hyper": HYPEREXPONENTIAL,
    "hyperexponential": HYPEREXPONENTIAL,
    "unif": UNIFORM,
    "uniform": UNIFORM,
    "det": DETERMINISTIC,
    "deterministic": DETERMINISTIC,
}


@dataclass(frozen=True)
class DistributionSpec:
    """Description paramétrique d'une loi positive"""

    kind: str
    rate: float = None
    shape: int = None
    weights: Tuple[float, ...] = field(default=())
    rates: Tuple[float, ...] = field(default=())
    lo: float = None
    hi: float = None
    value: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"Type de loi inconnu: {self.kind}")

        if self.kind in (EXPONENTIAL, ERLANG):
            if self.rate is None or not self.rate > 0 or not math.isfinite(self.rate):
                raise ConfigError(f"{self.kind}: taux strictement positif requis (reçu {self.rate})")
        if self.kind == ERLANG:
            if self.shape is None or int(self.shape) != self.shape or self.shape < 1:
                raise ConfigError(f"erlang: forme entière ≥ 1 requise (reçu {self.shape})")
            object.__setattr__(self, "shape", int(self.shape))
        if self.kind == HYPEREXPONENTIAL:
            weights = tuple(float(w) for w in self.weights)
            rates = tuple(float(r) for r in self.rates)
            if not weights or len(weights) != len(rates):
                raise ConfigError("hyperexponential: poids et taux de même longueur requis")
            if any(w <= 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigError(f"hyperexponential: poids positifs de somme 1 requis (reçu {weights})")
            if any(not r > 0 for r in rates):
                raise ConfigError(f"hyperexponential: taux strictement positifs requis (reçu {rates})")
            object.__setattr__(self, "weights", weights)
            object.__setattr__(self, "rates", rates)
        if self.kind == UNIFORM:
            if self.lo is None or self.hi is None or not 0 <= self.lo < self.hi:
                raise ConfigError(f"uniform: 0 ≤ lo < hi requis (reçu lo={self.lo}, hi={self.hi})")
        if self.kind == DETERMINISTIC:
            if self.value is None or not self.value > 0:
                raise ConfigError(f"deterministic: valeur strictement positive requise (reçu {self.value})")

    # ------------------------------------------------------------------ #
    # Construction / sérialisation
    # ------------------------------------------------------------------ #

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DistributionSpec":
        """Construit une loi depuis un enregistrement {"kind": ..., ...}"""
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError(f"Loi invalide (champ 'kind' manquant): {data}")
        kind = FLAG_ALIASES.get(str(data["kind"]).lower())
        if kind is None:
            raise ConfigError(f"Type de loi inconnu: {data['kind']}")
        allowed = {"rate", "shape", "weights", "rates", "lo", "hi", "value"}
        unknown = set(data) - allowed - {"kind"}
        if unknown:
            raise ConfigError(f"Champs inconnus pour la loi {kind}: {sorted(unknown)}")
        params = {key: data[key] for key in allowed if key in data}
        for key in ("weights", "rates"):
            if key in params:
                params[key] = tuple(params[key])
        return cls(kind=kind, **params)

    def to_dict(self) -> Dict[str, Any]:
        """Enregistrement sérialisable (mêmes noms de champs que from_dict)"""
        if self.kind in (EXPONENTIAL,):
            return {"kind": self.kind, "rate": self.rate}
        if self.kind == ERLANG:
            return {"kind": self.kind, "shape": self.shape, "rate": self.rate}
        if self.kind == HYPEREXPONENTIAL:
            return {"kind": self.kind, "weights": list(self.weights), "rates": list(self.rates)}
        if self.kind == UNIFORM:
            return {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        return {"kind": self.kind, "value": self.value}

    def label(self) -> str:
        """Forme courte, au format des options (exp:3, erlang:2,4...)"""
        if self.kind == EXPONENTIAL:
            return f"exp:{self.rate:g}"
        if self.kind == ERLANG:
            return f"erlang:{self.shape},{self.rate:g}"
        if self.kind == HYPEREXPONENTIAL:
            pairs = ",".join(f"{w:g},{r:g}" for w, r in zip(self.weights, self.rates))
            return f"hyper:{pairs}"
        if self.kind == UNIFORM:
            return f"unif:{self.lo:g},{self.hi:g}"
        return f"det:{self.value:g}"

    # ------------------------------------------------------------------ #
    # Caractéristiques analytiques
    # ------------------------------------------------------------------ #

    @property
    def mean(self) -> float:
        if self.kind == EXPONENTIAL:
            return 1.0 / self.rate
        if self.kind == ERLANG:
            return self.shape / self.rate
        if self.kind == HYPEREXPONENTIAL:
            return float(sum(w / r for w, r in zip(self.weights, self.rates)))
        if self.kind == UNIFORM:
            return 0.5 * (self.lo + self.hi)
        return float(self.value)

    @property
    def variance(self) -> float:
        if self.kind == EXPONENTIAL:
            return 1.0 / self.rate ** 2
        if self.kind == ERLANG:
            return self.shape / self.rate ** 2
        if self.kind == HYPEREXPONENTIAL:
            second = sum(2.0 * w / r ** 2 for w, r in zip(self.weights, self.rates))
            return float(second - self.mean ** 2)
        if self.kind == UNIFORM:
            return (self.hi - self.lo) ** 2 / 12.0
        return 0.0

    @property
    def theta_max(self) -> float:
        """Borne supérieure du domaine de la fonction génératrice"""
        if self.kind in (EXPONENTIAL, ERLANG):
            return float(self.rate)
        if self.kind == HYPEREXPONENTIAL:
            return float(min(self.rates))
        return math.inf

    @property
    def support_lo(self) -> float:
        if self.kind == UNIFORM:
            return float(self.lo)
        if self.kind == DETERMINISTIC:
            return float(self.value)
        return 0.0

    @property
    def support_hi(self) -> float:
        if self.kind == UNIFORM:
            return float(self.hi)
        if self.kind == DETERMINISTIC:
            return float(self.value)
        return math.inf

    @property
    def is_atomic(self) -> bool:
        """Vrai si la loi a des atomes ou touche zéro (refusé par le driver)"""
        if self.kind == DETERMINISTIC:
            return True
        return self.kind == UNIFORM and self.lo == 0

    def log_mgf(self, theta: float) -> float:
        """log E[exp(θX)] pour θ < θ_max (θ négatif autorisé)"""
        if theta >= self.theta_max:
            raise DomainError(f"θ={theta} hors domaine: θ_max={self.theta_max} pour {self.label()}")
        if theta == 0:
            return 0.0
        if self.kind == EXPONENTIAL:
            return math.log(self.rate) - math.log(self.rate - theta)
        if self.kind == ERLANG:
            return self.shape * (math.log(self.rate) - math.log(self.rate - theta))
        if self.kind == HYPEREXPONENTIAL:
            terms = [math.log(r) - math.log(r - theta) for r in self.rates]
            return float(logsumexp(terms, b=self.weights))
        if self.kind == UNIFORM:
            width = self.hi - self.lo
            x = theta * width
            if x > 0:
                # E[e^{θX}] = e^{θ hi} (1 - e^{-x}) / x
                return theta * self.hi + math.log(-math.expm1(-x) / x)
            return theta * self.lo + math.log(math.expm1(x) / x)
        return theta * self.value

    def mgf(self, theta: float) -> float:
        """E[exp(θX)] pour θ < θ_max"""
        return math.exp(self.log_mgf(theta))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return stats.expon.cdf(x, scale=1.0 / self.rate)
        if self.kind == ERLANG:
            return stats.gamma.cdf(x, a=self.shape, scale=1.0 / self.rate)
        if self.kind == HYPEREXPONENTIAL:
            return sum(w * stats.expon.cdf(x, scale=1.0 / r) for w, r in zip(self.weights, self.rates))
        if self.kind == UNIFORM:
            return stats.uniform.cdf(x, loc=self.lo, scale=self.hi - self.lo)
        return (x >= self.value).astype(float)

    def survival(self, x):
        """Ḡ(x) = P(X > x), calculée directement (queue non tronquée)"""
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return stats.expon.sf(x, scale=1.0 / self.rate)
        if self.kind == ERLANG:
            return stats.gamma.sf(x, a=self.shape, scale=1.0 / self.rate)
        if self.kind == HYPEREXPONENTIAL:
            return sum(w * stats.expon.sf(x, scale=1.0 / r) for w, r in zip(self.weights, self.rates))
        if self.kind == UNIFORM:
            return stats.uniform.sf(x, loc=self.lo, scale=self.hi - self.lo)
        return (x < self.value).astype(float)

    def equilibrium_cdf(self, x):
        """x ↦ (1/moyenne) ∫₀ˣ (1 − F(u)) du, forme fermée par type"""
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return self.cdf(x)
        if self.kind == ERLANG:
            return np.mean([stats.gamma.cdf(x, a=j, scale=1.0 / self.rate)
                            for j in range(1, self.shape + 1)], axis=0)
        if self.kind == HYPEREXPONENTIAL:
            return sum(w * stats.expon.cdf(x, scale=1.0 / r)
                       for w, r in zip(self._equilibrium_weights(), self.rates))
        if self.kind == UNIFORM:
            width = self.hi - self.lo
            y = np.clip(x, 0.0, self.hi)
            excess = np.clip(y - self.lo, 0.0, None)
            return (y - excess ** 2 / (2.0 * width)) / self.mean
        return np.clip(x / self.value, 0.0, 1.0)

    def _equilibrium_weights(self) -> np.ndarray:
        raw = np.array(self.weights) / np.array(self.rates)
        return raw / raw.sum()

    # ------------------------------------------------------------------ #
    # Tirages
    # ------------------------------------------------------------------ #

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == EXPONENTIAL:
            return float(rng.exponential(1.0 / self.rate))
        if self.kind == ERLANG:
            return float(rng.gamma(self.shape, 1.0 / self.rate))
        if self.kind == HYPEREXPONENTIAL:
            phase = rng.choice(len(self.rates), p=self.weights)
            return float(rng.exponential(1.0 / self.rates[phase]))
        if self.kind == UNIFORM:
            return float(rng.uniform(self.lo, self.hi))
        return float(self.value)

    def sample_equilibrium(self, rng: np.random.Generator) -> float:
        """Tirage sous la loi d'équilibre (résidu stationnaire)"""
        if self.kind == EXPONENTIAL:
            return float(rng.exponential(1.0 / self.rate))
        if self.kind == ERLANG:
            phases = int(rng.integers(1, self.shape + 1))
            return float(rng.gamma(phases, 1.0 / self.rate))
        if self.kind == HYPEREXPONENTIAL:
            phase = rng.choice(len(self.rates), p=self._equilibrium_weights())
            return float(rng.exponential(1.0 / self.rates[phase]))
        if self.kind == UNIFORM:
            # masse lo/moyenne sur [0, lo], densité triangulaire sur [lo, hi]
            if rng.random() < self.lo / self.mean:
                return float(rng.uniform(0.0, self.lo))
            return float(rng.triangular(self.lo, self.lo, self.hi))
        return float(rng.uniform(0.0, self.value))

    def sample_residual_given_age(self, age: float, rng: np.random.Generator) -> float:
        """Résidu f de densité g(age + f) / Ḡ(age)"""
        if age < 0:
            raise DomainError(f"Âge négatif: {age}")
        if not float(self.survival(age)) > 0:
            raise DomainError(f"Ḡ({age}) = 0 pour {self.label()}: résidu indéfini")

        if self.kind == EXPONENTIAL:
            return float(rng.exponential(1.0 / self.rate))
        if self.kind == ERLANG:
            # phases déjà franchies : Poisson(βb) conditionné à N < k
            log_p = stats.poisson.logpmf(np.arange(self.shape), self.rate * age)
            done = int(rng.choice(self.shape, p=np.exp(log_p - logsumexp(log_p))))
            return float(rng.gamma(self.shape - done, 1.0 / self.rate))
        if self.kind == HYPEREXPONENTIAL:
            log_w = np.log(self.weights) - np.array(self.rates) * age
            weights = np.exp(log_w - logsumexp(log_w))
            phase = rng.choice(len(self.rates), p=weights)
            return float(rng.exponential(1.0 / self.rates[phase]))
        if self.kind == UNIFORM:
            return float(rng.uniform(max(self.lo, age), self.hi) - age)
        return float(self.value - age)

    def sample_tilted(self, eta: float, rng: np.random.Generator) -> float:
        """Tirage sous la loi de densité ∝ exp(ηx)·densité(x), η < θ_max"""
        if eta >= self.theta_max:
            raise DomainError(f"Inclinaison η={eta} hors domaine: θ_max={self.theta_max}")
        if self.kind == EXPONENTIAL:
            return float(rng.exponential(1.0 / (self.rate - eta)))
        if self.kind == ERLANG:
            return float(rng.gamma(self.shape, 1.0 / (self.rate - eta)))
        if self.kind == HYPEREXPONENTIAL:
            rates = np.array(self.rates)
            log_w = np.log(self.weights) + np.log(rates) - np.log(rates - eta)
            weights = np.exp(log_w - logsumexp(log_w))
            phase = rng.choice(len(rates), p=weights)
            return float(rng.exponential(1.0 / (rates[phase] - eta)))
        if self.kind == UNIFORM:
            return self._sample_truncated_exponential(eta, rng)
        return float(self.value)

    def _sample_truncated_exponential(self, eta: float, rng: np.random.Generator) -> float:
        width = self.hi - self.lo
        u = rng.random()
        x = eta * width
        if x == 0:
            return float(self.lo + u * width)
        if x < 0:
            return float(self.lo + math.log1p(u * math.expm1(x)) / eta)
        # inversion depuis la borne haute, stable pour η grand
        return float(self.hi + math.log(u + (1.0 - u) * math.exp(-x)) / eta)


# ---------------------------------------------------------------------- #
# Constructeurs et analyse des options
# ---------------------------------------------------------------------- #

def exponential(rate: float) -> DistributionSpec:
    return DistributionSpec(kind=EXPONENTIAL, rate=float(rate))


def erlang(shape: int, rate: float) -> DistributionSpec:
    return DistributionSpec(kind=ERLANG, shape=shape, rate=float(rate))


def hyperexponential(weights, rates) -> DistributionSpec:
    return DistributionSpec(kind=HYPEREXPONENTIAL, weights=tuple(weights), rates=tuple(rates))


def uniform(lo: float, hi: float) -> DistributionSpec:
    return DistributionSpec(kind=UNIFORM, lo=float(lo), hi=float(hi))


def deterministic(value: float) -> DistributionSpec:
    return DistributionSpec(kind=DETERMINISTIC, value=float(value))


def parse_flag(text: str) -> DistributionSpec:
    """
    Analyse la syntaxe kind:param[,param...]

    exp:3 | erlang:k,rate | hyper:p1,r1,p2,r2,... | unif:lo,hi | det:v
    """
    kind_text, _, params_text = str(text).partition(":")
    kind = FLAG_ALIASES.get(kind_text.strip().lower())
    if kind is None:
        raise ConfigError(f"Type de loi inconnu dans '{text}' (attendu: {', '.join(sorted(FLAG_ALIASES))})")
    try:
        params = [float(p) for p in params_text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"Paramètres non numériques dans '{text}'")

    expected = {EXPONENTIAL: 1, ERLANG: 2, UNIFORM: 2, DETERMINISTIC: 1}
    if kind in expected and len(params) != expected[kind]:
        raise ConfigError(f"'{text}': {expected[kind]} paramètre(s) attendu(s), {len(params)} reçu(s)")

    if kind == EXPONENTIAL:
        return exponential(params[0])
    if kind == ERLANG:
        return erlang(params[0], params[1])
    if kind == HYPEREXPONENTIAL:
        if len(params) < 2 or len(params) % 2:
            raise ConfigError(f"'{text}': paires poids,taux attendues")
        return hyperexponential(params[0::2], params[1::2])
    if kind == UNIFORM:
        return uniform(params[0], params[1])
    return deterministic(params[0])


def coerce_spec(value) -> DistributionSpec:
    """Accepte une loi déjà construite, un dict de config ou une option texte"""
    if isinstance(value, DistributionSpec):
        return value
    if isinstance(value, dict):
        return DistributionSpec.from_dict(value)
    if isinstance(value, str):
        return parse_flag(value)
    raise ConfigError(f"Loi non reconnue: {value!r}")
