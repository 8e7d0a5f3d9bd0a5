"""
Utilitaires pour l'échantillonneur parfait
"""

import logging
import logging.handlers
import platform
from pathlib import Path
from typing import Dict, Any

import numpy as np

# Usages des sous-flux aléatoires (troisième composante du spawn_key)
PURPOSE_BACKWARD = 0
PURPOSE_FORWARD = 1
PURPOSE_STUDY = 2


# Fichiers de logs : (nom, niveau minimal, jours conservés)
LOG_FILES = (
    ('sampler.log', logging.DEBUG, 15),
    ('errors.log', logging.ERROR, 15),
)
DEBUG_LOG = ('debug.log', logging.DEBUG, 7)

# processName distingue les workers du pool de réplications
FILE_FORMAT = '%(asctime)s - %(processName)s - %(name)s - %(levelname)s - %(message)s'
DEBUG_FORMAT = '%(asctime)s - %(processName)s - %(name)s:%(lineno)d - %(funcName)s() - %(message)s'


def _rotating_handler(path: Path, level: int, backups: int, fmt: str) -> logging.Handler:
    handler = logging.handlers.TimedRotatingFileHandler(path, when='midnight', backupCount=backups,
                                                        encoding='utf-8')
    handler.setFormatter(logging.Formatter(fmt, datefmt='%Y-%m-%d %H:%M:%S'))
    handler.setLevel(level)
    return handler


def setup_logging(level: str = "INFO", log_dir: str = None):
    """
    Configure le logger racine.

    La console (stderr) reçoit INFO et plus : stdout reste aux données et
    aux résumés. Avec log_dir, les fichiers tournent chaque nuit ; debug.log
    n'existe qu'en niveau DEBUG. Un log_dir vide désactive les fichiers.
    """
    numeric_level = logging.getLevelName(level.upper())
    if not isinstance(numeric_level, int):
        raise ValueError(f"Niveau de log inconnu: {level}")

    root = logging.getLogger()
    root.setLevel(numeric_level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s', datefmt='%H:%M:%S'))
    console.setLevel(max(numeric_level, logging.INFO))
    root.addHandler(console)

    if not log_dir:
        return

    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)
    files = [(name, lvl, keep, FILE_FORMAT) for name, lvl, keep in LOG_FILES]
    if numeric_level <= logging.DEBUG:
        files.append((*DEBUG_LOG, DEBUG_FORMAT))
    for name, file_level, backups, fmt in files:
        root.addHandler(_rotating_handler(log_path / name, file_level, backups, fmt))

    logging.getLogger(__name__).debug(f"📁 Logs ({level}) dans: {log_path.absolute()}")


def make_rng(seed: int, replication: int = 0, stream: int = 0,
             purpose: int = PURPOSE_BACKWARD) -> np.random.Generator:
    """
    Sous-flux reproductible pour (réplication, flux, usage).

    La dérivation passe par SeedSequence(seed, spawn_key=...) : deux runs avec
    la même graine obtiennent les mêmes tirages, quel que soit l'ordre
    d'exécution des réplications.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(stream), int(purpose)))
    return np.random.Generator(np.random.PCG64(sequence))


def format_interval(low: float, high: float, decimals: int = 4) -> str:
    """Formate un intervalle de confiance"""
    return f"[{low:.{decimals}f}, {high:.{decimals}f}]"


def get_system_info() -> Dict[str, Any]:
    """Informations d'environnement pour la reproductibilité"""
    import scipy
    import pandas

    return {
        'python': platform.python_version(),
        'platform': platform.platform(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pandas.__version__,
    }
