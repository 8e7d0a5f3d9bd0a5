"""
Interface en ligne de commande de l'échantillonneur parfait

Commandes : sample, validate-mmc, coalesce-study, complexity-study, selftest.
Priorité des réglages : options > environnement > fichier de config > défauts.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tabulate import tabulate

from . import __version__
from . import analytics, dists, invariants
from .config_manager import SamplerConfigManager
from .driver import DcftpConfig, SCHEMA_VERSION, run_replications, sample_stationary
from .errors import (ConfigError, InvariantViolation, ResourceCapError, SamplerError, EXIT_ACCEPTANCE, EXIT_OK,
                     EXIT_SELFTEST, exit_code_for)
from .kw import TrafficTrace, kw_run, replay_waits
from .rwmax import ARRIVAL, MaxWalkStream, WalkSpec
from .utils import setup_logging, get_system_info, make_rng, format_interval

logger = logging.getLogger(__name__)

COMMANDS = ("sample", "validate-mmc", "coalesce-study", "complexity-study", "selftest")
DEFAULT_SELFTEST_SEEDS = tuple(range(1, 11))


@dataclass
class RunConfig:
    """Configuration complète d'une exécution, validée avant toute simulation"""

    command: str
    arrival: dists.DistributionSpec
    service: dists.DistributionSpec
    servers: int
    reps: int
    seed: int
    t0: float = 10.0
    a: Optional[float] = None
    output: str = "-"
    format: str = "json"
    threads: int = 1
    max_doublings: int = 30
    want_w1: bool = False
    verify: bool = False
    regime: str = "QD"
    scales: List[int] = field(default_factory=lambda: [100])
    lams: List[float] = field(default_factory=lambda: [5.0, 6.0, 7.0, 8.0, 9.0])
    mu: float = 5.0
    n_max: int = 15
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SELFTEST_SEEDS))
    log_level: str = "INFO"
    log_dir: Optional[str] = "logs"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Commande inconnue: {self.command}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"Format de sortie inconnu: {self.format}")
        if self.reps < 1 or self.threads < 1:
            raise ConfigError("reps et threads doivent être ≥ 1")
        if self.regime not in (analytics.QD, analytics.QED):
            raise ConfigError(f"Régime inconnu: {self.regime}")
        if self.command in ("sample", "validate-mmc"):
            # la stabilité et les lois sont validées ici, avant toute simulation
            self.dcftp()
        if self.command == "validate-mmc":
            self.mmc_params()
        if self.command == "complexity-study":
            for lam in self.lams:
                analytics.MmcParams(lam, self.mu, self.servers)

    def dcftp(self) -> DcftpConfig:
        return DcftpConfig(self.arrival, self.service, self.servers, a=self.a, t0=self.t0,
                           seed=self.seed, max_doublings=self.max_doublings,
                           want_w1=self.want_w1, verify=self.verify)

    def mmc_params(self) -> analytics.MmcParams:
        if self.arrival.kind != dists.EXPONENTIAL or self.service.kind != dists.EXPONENTIAL:
            raise ConfigError("validate-mmc exige des lois exponentielles (exp:λ, exp:μ)")
        return analytics.MmcParams(1.0 / self.arrival.mean, 1.0 / self.service.mean, self.servers)

    def describe(self) -> Dict[str, Any]:
        data = asdict(self)
        data["arrival"] = self.arrival.to_dict()
        data["service"] = self.service.to_dict()
        return data


def _number_list(text: str, cast=float) -> List:
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste de nombres attendue: {text!r}")


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse les arguments de ligne de commande"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='Fichier de configuration JSON')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], default=None,
                        help='Niveau de logging')
    common.add_argument('--log-dir', type=str, default=None, help='Répertoire des logs')
    common.add_argument('--seed', type=int, default=None, help='Graine maîtresse')
    common.add_argument('--reps', type=int, default=None, help='Nombre de réplications')
    common.add_argument('--threads', type=int, default=None, help='Workers (1 = ordre stable)')
    common.add_argument('--output', type=str, default=None, help="Fichier de sortie ('-' = stdout)")
    common.add_argument('--format', choices=['json', 'csv'], default=None, help='Format de sortie')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--arrival', type=str, default=None, help='Loi des interarrivées (ex: exp:3)')
    model.add_argument('--service', type=str, default=None, help='Loi des services (ex: exp:2)')
    model.add_argument('--servers', type=int, default=None, help='Nombre de serveurs c')
    model.add_argument('--a', type=float, default=None, help='Paramètre a dans (λ, cμ)')
    model.add_argument('--t0', type=float, default=None, help="Premier horizon d'inspection")
    model.add_argument('--max-doublings', type=int, default=None, help="Plafond de doublements d'horizon")

    parser = argparse.ArgumentParser(description='Échantillonnage parfait de files GI/GI/c FCFS')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    sample = sub.add_parser('sample', parents=[common, model], help='Tirages stationnaires exacts')
    sample.add_argument('--want-w1', action='store_true', default=None, help='Ajoute W(1)')
    sample.add_argument('--verify', action='store_true', default=None, help='Contrôle des invariants')

    validate = sub.add_parser('validate-mmc', parents=[common, model], help='Khi-deux contre Erlang C')
    validate.add_argument('--n-max', type=int, default=None, help='Dernière case avant regroupement')
    validate.add_argument('--verify', action='store_true', default=None, help='Contrôle des invariants sur chaque tirage')

    coalesce = sub.add_parser('coalesce-study', parents=[common], help='Temps de coalescence QD/QED')
    coalesce.add_argument('--regime', choices=['QD', 'QED'], default=None)
    coalesce.add_argument('--scales', type=lambda s: _number_list(s, int), default=None)
    coalesce.add_argument('--mu', type=float, default=None)

    complexity = sub.add_parser('complexity-study', parents=[common], help='Renouvellements selon ρ')
    complexity.add_argument('--lams', type=_number_list, default=None)
    complexity.add_argument('--mu', type=float, default=None)
    complexity.add_argument('--servers', type=int, default=None)
    complexity.add_argument('--t0', type=float, default=None)

    selftest = sub.add_parser('selftest', parents=[common], help='Suite des invariants')
    selftest.add_argument('--seeds', type=lambda s: _number_list(s, int), default=None)

    return parser.parse_args(argv)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Fusionne défauts, fichier, environnement et options"""
    manager = SamplerConfigManager(args.config)
    sampler = manager.get_sampler_config()
    studies = manager.get_studies_config()
    output = manager.get_output_config()
    logs = manager.get_logging_config()

    def pick(name: str, fallback):
        value = getattr(args, name, None)
        return fallback if value is None else value

    command = args.command
    # les études ont leur propre nombre de serveurs et leur μ
    study_command = command in ("coalesce-study", "complexity-study")

    arrival = getattr(args, "arrival", None)
    service = getattr(args, "service", None)
    return RunConfig(
        command=command,
        arrival=dists.parse_flag(arrival) if arrival else dists.DistributionSpec.from_dict(sampler["arrival"]),
        service=dists.parse_flag(service) if service else dists.DistributionSpec.from_dict(sampler["service"]),
        servers=pick("servers", studies["servers"] if study_command else sampler["servers"]),
        reps=pick("reps", sampler["reps"]),
        seed=pick("seed", sampler["seed"]),
        t0=pick("t0", sampler["t0"]),
        a=pick("a", sampler["a"]),
        output=pick("output", output["path"]),
        format=pick("format", output["format"]),
        threads=pick("threads", sampler["threads"]),
        max_doublings=pick("max_doublings", sampler["max_doublings"]),
        want_w1=pick("want_w1", sampler["want_w1"]),
        verify=pick("verify", sampler["verify"]),
        regime=pick("regime", studies["regime"]),
        scales=pick("scales", studies["scales"]),
        lams=pick("lams", studies["lams"]),
        mu=pick("mu", studies["coalescence_mu"] if command == "coalesce-study" else studies["mu"]),
        n_max=pick("n_max", studies["n_max"]),
        seeds=pick("seeds", list(DEFAULT_SELFTEST_SEEDS)),
        log_level=pick("log_level", logs["level"]),
        log_dir=pick("log_dir", logs["dir"]) or None,
    )


# ---------------------------------------------------------------------- #
# Sorties
# ---------------------------------------------------------------------- #

def _open_output(path: str):
    if path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline=""), True


def write_records(records: List[Dict[str, Any]], path: str, fmt: str):
    """JSON lines (clés triées) ou CSV, avec schema_version"""
    handle, owned = _open_output(path)
    try:
        if fmt == "json":
            for record in records:
                record = dict(record)
                record.setdefault("schema_version", SCHEMA_VERSION)
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        else:
            frame = pd.DataFrame([_flatten(r) for r in records])
            if "schema_version" not in frame.columns:
                frame.insert(0, "schema_version", SCHEMA_VERSION)
            frame.to_csv(handle, index=False, float_format="%.10g", lineterminator="\n")
    finally:
        if owned:
            handle.close()


def _flatten(record: Dict[str, Any]) -> Dict[str, Any]:
    flat = {}
    for key, value in record.items():
        if isinstance(value, dict):
            for sub_key, sub_value in value.items():
                flat[f"{key}_{sub_key}"] = sub_value
        elif isinstance(value, (list, tuple)):
            flat[key] = ";".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in value)
        else:
            flat[key] = value
    return flat


def _frame_records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    records = []
    for row in frame.to_dict(orient="records"):
        records.append({k: (v.item() if isinstance(v, np.generic) else v) for k, v in row.items()})
    return records


def _summary_stream(config: RunConfig):
    return sys.stdout if config.output != "-" else sys.stderr


def print_summary(config: RunConfig, title: str, rows: List[List[Any]], headers: Sequence[str]):
    stream = _summary_stream(config)
    print(f"# {title} - version {__version__} - graine {config.seed}", file=stream)
    print(tabulate(rows, headers=headers, tablefmt="github", floatfmt=".4f"), file=stream)


# ---------------------------------------------------------------------- #
# Commandes
# ---------------------------------------------------------------------- #

def command_sample(config: RunConfig) -> int:
    samples = run_replications(config.dcftp(), config.reps, threads=config.threads)
    write_records([s.to_record() for s in samples], config.output, config.format)

    times = [s.coalescence_time for s in samples]
    summary = analytics.summarize_times(times)
    counts = [s.number_in_system for s in samples]
    print_summary(config, "sample", [
        ["tirages", len(samples)],
        ["E[T] coalescence", summary["mean"]],
        ["IC 95 % de E[T]", format_interval(summary["ci_low"], summary["ci_high"])],
        ["nombre moyen de clients", float(np.mean(counts))],
        ["renouvellements moyens", float(np.mean([s.total_renewals for s in samples]))],
    ], ["mesure", "valeur"])
    return EXIT_OK


def command_validate_mmc(config: RunConfig) -> int:
    params = config.mmc_params()
    result, samples = analytics.validate_mmc(params, config.reps, config.seed, n_max=config.n_max,
                                             threads=config.threads, verify=config.verify)
    write_records(_frame_records(result.table), config.output, config.format)

    summary = analytics.summarize_times([s.coalescence_time for s in samples])
    print_summary(config, f"validate-mmc M/M/{params.c} λ={params.lam:g} μ={params.mu:g}", [
        ["tirages", len(samples)],
        ["khi-deux", result.statistic],
        ["ddl", result.dof],
        ["p-value", result.p_value],
        ["E[T] coalescence", summary["mean"]],
        ["verdict", "ok" if result.passed else "REJET"],
    ], ["mesure", "valeur"])
    if not result.passed:
        logger.error(f"❌ Adéquation rejetée au seuil 0.01 (p={result.p_value:.4f})")
        return EXIT_ACCEPTANCE
    logger.info(f"✅ Adéquation à Erlang C acceptée (p={result.p_value:.4f})")
    return EXIT_OK


def command_coalesce_study(config: RunConfig) -> int:
    frame = analytics.coalescence_study(config.regime, config.scales, config.reps, config.seed,
                                        mu=config.mu)
    write_records(_frame_records(frame), config.output, config.format)
    rows = [[r.s, r.c, r.mean_T, format_interval(r.ci_low, r.ci_high),
             format_interval(r.published_ci_low, r.published_ci_high), r.relative_deviation,
             "ok" if r.passed else "REJET"] for r in frame.itertuples()]
    print_summary(config, f"coalesce-study {config.regime}", rows,
                  ["s", "c", "E[T]", "IC 95 %", "IC publié", "écart relatif", "verdict"])
    failed = frame[~frame["passed"].astype(bool)]
    if len(failed):
        for row in failed.itertuples():
            logger.error(f"❌ {config.regime} s={row.s}: E[T]={row.mean_T:.4f} hors de la référence "
                         f"(écart {row.relative_deviation:+.1%})")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def command_complexity_study(config: RunConfig) -> int:
    frame = analytics.complexity_study(config.lams, config.mu, config.servers, config.reps,
                                       config.seed, t0=config.t0, threads=config.threads)
    write_records(_frame_records(frame), config.output, config.format)
    trend = analytics.complexity_trend(frame) if len(frame) > 1 else {}

    if config.output != "-":
        meta_path = Path(config.output).with_suffix(".meta.json")
        meta = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "seed": config.seed,
            "note": analytics.INSPECTION_NOTE,
            "trend": trend,
            "run_config": config.describe(),
        }
        meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        logger.info(f"💾 Métadonnées: {meta_path}")

    rows = [[r.lam, r.rho, r.mean_renewals, r.mean_total_sampled, r.scaled_total_sampled, r.mean_T,
             r.mean_horizon_time] for r in frame.itertuples()]
    print_summary(config, "complexity-study", rows,
                  ["λ", "ρ", "retenus", "tirés", "tirés × (1−ρ)²", "E[T]", "horizon t_k"])
    if trend:
        logger.info(f"📊 Croissance brute ×{trend['raw_growth']:.1f}, bande après × (1−ρ)²: "
                    f"×{trend['scaled_band']:.1f}")
    return EXIT_OK


def run_selftest(seeds: Sequence[int]) -> pd.DataFrame:
    """Invariants de tous les modules sur de petites graines fixes"""
    rows = []

    def record(name: str, seed: int, check):
        started = time.perf_counter()
        try:
            check()
            status, detail = "ok", ""
        except InvariantViolation as e:
            status, detail = "ÉCHEC", str(e)
        rows.append({"check": name, "seed": seed, "status": status, "detail": detail,
                     "seconds": round(time.perf_counter() - started, 3)})

    catalog = [dists.exponential(2.0), dists.erlang(3, 6.0), dists.hyperexponential([0.3, 0.7], [1.0, 4.0]),
               dists.uniform(0.5, 1.5), dists.deterministic(0.7)]

    def jensen():
        for spec in catalog:
            for theta in np.linspace(0.0, min(spec.theta_max, 5.0), 20, endpoint=False):
                if spec.mgf(theta) < np.exp(theta * spec.mean) * (1 - 1e-12):
                    raise InvariantViolation(f"Jensen violé pour {spec.label()} en θ={theta}")

    for seed in seeds:
        record("dists.jensen", seed, jensen)

        def walk(seed=seed):
            spec = WalkSpec(ARRIVAL, dists.exponential(1.0), 2.0)
            stepwise = MaxWalkStream(spec, make_rng(seed))
            stepwise.extend(50)
            stepwise.extend(200)
            direct = MaxWalkStream(spec, make_rng(seed))
            direct.extend(200)
            invariants.check_walk_consistency(direct)
            if stepwise.M[:201] != direct.M[:201] or stepwise.S[:201] != direct.S[:201]:
                raise InvariantViolation("Stabilité de préfixe violée pour extend")

        record("rwmax.prefix", seed, walk)

        def kw_oracle(seed=seed):
            rng = make_rng(seed)
            for _ in range(50):
                n, c = int(rng.integers(2, 40)), int(rng.integers(1, 4))
                times = np.cumsum(rng.exponential(1.0, size=n))
                services = rng.exponential(c * 0.9, size=n)
                trace = TrafficTrace.from_arrivals(times, services, times[-1] + 1.0)
                waits = replay_waits(trace, c)
                first = kw_run(trace, np.zeros(c))[:, 0]
                if not np.allclose(waits, first, rtol=0, atol=1e-9):
                    raise InvariantViolation("Attentes du rejeu ≠ récursion KW")

        record("kw.replay_oracle", seed, kw_oracle)

        def pipeline(seed=seed):
            config = DcftpConfig(dists.exponential(3.0), dists.exponential(2.0), 2, seed=seed, verify=True)
            for r in range(5):
                sample_stationary(config, r)

        record("driver.verify", seed, pipeline)

    return pd.DataFrame(rows)


def command_selftest(config: RunConfig) -> int:
    frame = run_selftest(config.seeds)
    write_records(_frame_records(frame), config.output, config.format)
    failures = frame[frame["status"] != "ok"]
    print_summary(config, "selftest", frame[["check", "seed", "status"]].values.tolist(),
                  ["contrôle", "graine", "statut"])
    if len(failures):
        for row in failures.itertuples():
            logger.error(f"❌ {row.check} (graine {row.seed}): {row.detail}")
        return EXIT_SELFTEST
    logger.info(f"✅ Selftest: {len(frame)} contrôles réussis")
    return EXIT_OK


HANDLERS = {
    "sample": command_sample,
    "validate-mmc": command_validate_mmc,
    "coalesce-study": command_coalesce_study,
    "complexity-study": command_complexity_study,
    "selftest": command_selftest,
}


def run(config: RunConfig) -> int:
    """Exécute une commande ; renvoie le code de sortie"""
    logger.info("=" * 60)
    logger.info(f"🎲 ÉCHANTILLONNEUR PARFAIT GI/GI/c - {config.command}")
    logger.info(f"📦 Version {__version__} - graine {config.seed}")
    logger.info("=" * 60)
    logger.debug(f"🖥️  Environnement: {get_system_info()}")

    started = time.perf_counter()
    code = HANDLERS[config.command](config)
    logger.info(f"⏱️  Terminé en {time.perf_counter() - started:.2f}s (code {code})")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_arguments(argv)
    try:
        setup_logging(args.log_level or "INFO", None)
        config = build_run_config(args)
        setup_logging(config.log_level, config.log_dir)
        return run(config)
    except ResourceCapError as e:
        logger.error(f"❌ {e}")
        logger.error(f"📋 Diagnostics: {json.dumps(e.diagnostics, sort_keys=True, default=str)}")
        return exit_code_for(e)
    except SamplerError as e:
        logger.error(f"❌ {e}")
        return exit_code_for(e)
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"❌ Configuration invalide: {e}")
        return exit_code_for(ConfigError(str(e)))
