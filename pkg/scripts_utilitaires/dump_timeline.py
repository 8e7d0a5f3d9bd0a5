#!/usr/bin/env python3
"""
Perfect Queue Sampler - Exploration de la chronologie du système à vacances
Exporte les époques des c+1 flux avec X, M et Q_v, en temps de simulation
"""

import sys
import argparse
from pathlib import Path

from tabulate import tabulate

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.dists import parse_flag  # noqa: E402
from src.errors import SamplerError, exit_code_for  # noqa: E402
from src.vacation import VacationTimeline  # noqa: E402


class TimelineExplorer:
    def __init__(self, arrival: str, service: str, servers: int, seed: int, replication: int, a: float = None):
        self.timeline = VacationTimeline(parse_flag(arrival), parse_flag(service), servers, a=a,
                                         seed=seed, replication=replication)
        print(f"📊 Système à vacances: {arrival} / {service} / c={servers}, "
              f"ρ={self.timeline.rho:.4f}, a={self.timeline.a:.4f}")

    def show_events(self, horizon: float, limit: int):
        """Premières époques à rebours"""
        frame = self.timeline.to_frame(horizon)
        if frame.empty:
            print("📭 Aucune époque sur la fenêtre")
            return frame
        print(f"\n🕒 {len(frame)} époques sur [0, {horizon:g}] (temps original [−{horizon:g}, 0])")
        print(tabulate(frame.head(limit), headers="keys", tablefmt="github", floatfmt=".4f", showindex=False))
        return frame

    def show_coupling(self, horizon: float, limit: int):
        """Services extraits pour les arrivées de [−horizon, 0]"""
        trace = self.timeline.extract_services(horizon)
        print(f"\n🔗 {len(trace)} arrivées, Q_v(−τ)={trace.q_start}, Q_v(0)={trace.qv_at_zero}, "
              f"{len(trace.backlog)} client(s) antérieur(s) en attente")
        rows = [[n, trace.times[n], trace.services[n], trace.delays[n], trace.initiators[n]]
                for n in range(min(limit, len(trace)))]
        print(tabulate(rows, headers=["n", "T_n", "V_n", "D_n", "serveur"], tablefmt="github", floatfmt=".4f"))

    def show_counts(self):
        renewals = self.timeline.renewal_counts()
        proposals = self.timeline.proposal_counts()
        rows = [[k, renewals[k], proposals[k]] for k in sorted(renewals)]
        print("\n📈 Renouvellements par flux")
        print(tabulate(rows, headers=["flux", "renouvellements", "propositions rejetées"], tablefmt="github"))


def main():
    parser = argparse.ArgumentParser(description='Chronologie du système à vacances')
    parser.add_argument('--arrival', default='exp:3', help='Loi des interarrivées')
    parser.add_argument('--service', default='exp:2', help='Loi des services')
    parser.add_argument('--servers', type=int, default=2, help='Nombre de serveurs')
    parser.add_argument('--a', type=float, default=None, help='Paramètre a dans (λ, cμ)')
    parser.add_argument('--seed', type=int, default=0, help='Graine maîtresse')
    parser.add_argument('--replication', type=int, default=0, help='Indice de réplication')
    parser.add_argument('--horizon', type=float, default=20.0, help='Fenêtre [−τ, 0]')
    parser.add_argument('--limit', type=int, default=20, help='Lignes affichées')
    parser.add_argument('--csv', type=str, default=None, help='Export CSV de la chronologie')
    parser.add_argument('--coupling', action='store_true', help='Affiche aussi les services extraits')

    args = parser.parse_args()

    try:
        explorer = TimelineExplorer(args.arrival, args.service, args.servers, args.seed,
                                    args.replication, a=args.a)
        if args.csv:
            explorer.timeline.dump_csv(args.horizon, args.csv)
            print(f"💾 Export: {args.csv}")
        explorer.show_events(args.horizon, args.limit)
        if args.coupling:
            explorer.show_coupling(args.horizon, args.limit)
        explorer.show_counts()
    except SamplerError as e:
        print(f"❌ {e}")
        sys.exit(exit_code_for(e))


if __name__ == "__main__":
    main()
