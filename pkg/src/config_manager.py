"""
Gestionnaire de configuration
Charge et valide la configuration depuis un fichier JSON et l'environnement
"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, Any, Optional

from .dists import DistributionSpec
from .errors import ConfigError

# Valeurs par défaut, complétées par le fichier puis l'environnement
DEFAULTS: Dict[str, Any] = {
    "sampler": {
        "arrival": {"kind": "exponential", "rate": 3.0},
        "service": {"kind": "exponential", "rate": 2.0},
        "servers": 2,
        "a": None,
        "t0": 10.0,
        "reps": 100,
        "seed": 0,
        "threads": 1,
        "max_doublings": 30,
        "want_w1": False,
        "verify": False,
    },
    "studies": {
        "regime": "QD",
        "scales": [100],
        "lams": [5.0, 6.0, 7.0, 8.0, 9.0],
        "mu": 5.0,
        "coalescence_mu": 1.0,
        "servers": 2,
        "n_max": 15,
    },
    "output": {
        "path": "-",
        "format": "json",
    },
    "logging": {
        "level": "INFO",
        "dir": "logs",
    },
}

ENV_OVERRIDES = {
    "SAMPLER_SEED": ("sampler", "seed", int),
    "SAMPLER_THREADS": ("sampler", "threads", int),
    "SAMPLER_LOG_LEVEL": ("logging", "level", str),
}


class SamplerConfigManager:
    """Configuration fusionnée : défauts, fichier JSON, variables d'environnement"""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.logger = logging.getLogger(__name__)

        self.config = json.loads(json.dumps(DEFAULTS))

        self._load_config()
        self._inject_env_variables()
        self._validate_config()

    def _load_config(self):
        """Charge la configuration depuis le fichier JSON"""
        if not self.config_path:
            self.logger.debug("📋 Pas de fichier de configuration, valeurs par défaut")
            return

        config_file = Path(self.config_path)
        if not config_file.exists():
            raise ConfigError(f"Fichier de configuration non trouvé: {self.config_path}")

        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            self.logger.error(f"❌ Erreur format JSON: {e}")
            raise ConfigError(f"Format JSON invalide dans {self.config_path}: {e}")

        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_path}: objet JSON attendu à la racine")

        for section, values in loaded.items():
            if section.startswith("_"):
                continue
            if section not in self.config:
                raise ConfigError(f"Section inconnue: {section}")
            if not isinstance(values, dict):
                raise ConfigError(f"Section {section}: objet JSON attendu")
            unknown = set(values) - set(self.config[section])
            if unknown:
                raise ConfigError(f"Clés inconnues dans {section}: {sorted(unknown)}")
            self.config[section].update(values)

        self.logger.info(f"📋 Configuration chargée: {self.config_path}")

    def _inject_env_variables(self):
        """Injecte les variables d'environnement dans la configuration"""
        for variable, (section, key, cast) in ENV_OVERRIDES.items():
            raw = os.getenv(variable)
            if raw is None or raw == "":
                continue
            try:
                self.config[section][key] = cast(raw)
            except ValueError:
                raise ConfigError(f"Variable d'environnement {variable} invalide: {raw!r}")
            self.logger.info(f"✅ {section}.{key} injecté depuis {variable}")

    def _validate_config(self):
        """Valide les types et bornes ; la stabilité est vérifiée à la construction du run"""
        sampler = self.config["sampler"]
        try:
            DistributionSpec.from_dict(sampler["arrival"])
            DistributionSpec.from_dict(sampler["service"])
        except ConfigError as e:
            self.logger.error(f"❌ Configuration invalide: {e}")
            raise

        for key in ("servers", "reps", "threads", "max_doublings"):
            value = sampler[key]
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"sampler.{key} doit être un entier ≥ 1 (reçu {value!r})")
        if not isinstance(sampler["seed"], int) or sampler["seed"] < 0:
            raise ConfigError(f"sampler.seed doit être un entier ≥ 0 (reçu {sampler['seed']!r})")
        if not isinstance(sampler["t0"], (int, float)) or sampler["t0"] <= 0:
            raise ConfigError(f"sampler.t0 doit être > 0 (reçu {sampler['t0']!r})")

        if self.config["output"]["format"] not in ("json", "csv"):
            raise ConfigError(f"output.format doit valoir json ou csv (reçu {self.config['output']['format']!r})")
        if self.config["studies"]["regime"] not in ("QD", "QED"):
            raise ConfigError(f"studies.regime doit valoir QD ou QED")

        self.logger.debug("✅ Configuration validée")

    def get_sampler_config(self) -> Dict[str, Any]:
        """Retourne la configuration de l'échantillonneur"""
        return self.config.get("sampler", {})

    def get_studies_config(self) -> Dict[str, Any]:
        """Retourne la configuration des études"""
        return self.config.get("studies", {})

    def get_output_config(self) -> Dict[str, Any]:
        """Retourne la configuration de sortie"""
        return self.config.get("output", {})

    def get_logging_config(self) -> Dict[str, Any]:
        """Retourne la configuration du logging"""
        return self.config.get("logging", {})
