#!/usr/bin/env python3
"""
Perfect Queue Sampler - point d'entrée
Tirages exacts de l'état stationnaire de files GI/GI/c FCFS
"""

import sys
import signal
import logging
import traceback
from pathlib import Path

# Configuration du path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main as cli_main
from src.errors import EXIT_UNEXPECTED


def signal_handler(signum, frame):
    """Arrêt propre sur SIGTERM"""
    logging.getLogger(__name__).info(f"🛑 Signal {signum} reçu, arrêt en cours...")
    raise KeyboardInterrupt


def main():
    signal.signal(signal.SIGTERM, signal_handler)
    try:
        sys.exit(cli_main(sys.argv[1:]))
    except KeyboardInterrupt:
        logging.getLogger(__name__).info("🛑 Interruption détectée")
        sys.exit(130)
    except Exception as e:
        logging.getLogger(__name__).error(f"❌ ERREUR CRITIQUE: {e}")
        logging.getLogger(__name__).error(traceback.format_exc())
        sys.exit(EXIT_UNEXPECTED)


if __name__ == "__main__":
    main()
