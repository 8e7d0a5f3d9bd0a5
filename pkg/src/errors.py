"""
Exceptions de l'échantillonneur et codes de sortie associés
"""

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_RESOURCE_CAP = 3
EXIT_SELFTEST = 4
# test statistique de validation rejeté (validate-mmc, coalesce-study)
EXIT_ACCEPTANCE = 5


class SamplerError(Exception):
    """Erreur de base de l'échantillonneur"""

    exit_code = EXIT_UNEXPECTED


class ConfigError(SamplerError, ValueError):
    """Configuration invalide (paramètres, stabilité, lois atomiques)"""

    exit_code = EXIT_CONFIG


class DomainError(SamplerError, ValueError):
    """Argument hors du domaine d'une opération"""

    exit_code = EXIT_CONFIG


class UnsupportedSpecError(SamplerError):
    """Racine de Cramér impossible à encadrer"""

    exit_code = EXIT_CONFIG


class ResourceCapError(SamplerError, RuntimeError):
    """Plafond de ressources atteint (doublements, pas de marche)"""

    exit_code = EXIT_RESOURCE_CAP

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EventTieError(SamplerError, RuntimeError):
    """Deux événements simultanés pendant un rejeu"""


class InvariantViolation(SamplerError, AssertionError):
    """Un invariant vérifié à l'exécution est violé"""

    exit_code = EXIT_SELFTEST


def exit_code_for(error: BaseException) -> int:
    """Code de sortie du processus pour une exception donnée"""
    if isinstance(error, SamplerError):
        return error.exit_code
    return EXIT_UNEXPECTED
