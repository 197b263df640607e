#!/usr/bin/env python3
"""
Point d'entrée principal : suites de vérification des contraintes
différentielles, réductions et rapports JSON/CSV.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from engine import __version__
from engine.catalog import load_catalog
from engine.errors import EngineError
from utils.config import ConfigError, Settings, load_settings
from utils.metrics import metrics
from utils.report import FORMATS, Report, ReportWriteError, write_report
from verifiers.base_verifier import ErrorType, VerificationError
from verifiers.compat_verifier import DEFAULT_NODES, CompatVerifier
from verifiers.lde_verifier import LDEVerifier
from verifiers.reduction_runner import ReductionRunner
from verifiers.solution_verifier import SolutionVerifier

# Chargement des variables d'environnement
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Configuration complète d'une exécution, reprise dans le rapport."""

    command: str
    settings: Settings
    ids: List[str] = field(default_factory=list)
    fmt: str = "json"
    out: Optional[Path] = None
    step: Optional[float] = None
    t1: Optional[float] = None
    params: Dict[str, float] = field(default_factory=dict)
    nodes: int = DEFAULT_NODES
    trajectory: Optional[Path] = None
    metrics_out: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        """Écho de la configuration (sans les chemins de sortie)."""
        echo: Dict[str, Any] = {
            "command": self.command,
            "catalog": str(self.settings.catalog),
            "ids": list(self.ids) if self.ids else "all",
            "seed": self.settings.seed,
            "samples": self.settings.samples,
            "tolerance": self.settings.tolerance,
            "format": self.fmt,
        }
        if self.command == "reduce":
            echo.update({"step": self.step, "t1": self.t1, "params": dict(self.params)})
        if self.command == "compat":
            echo["nodes"] = self.nodes
        return echo


def _global_options() -> argparse.ArgumentParser:
    # SUPPRESS : une option absente d'un sous-parseur n'écrase pas celle du parseur principal
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--seed', type=int, default=argparse.SUPPRESS, help="Graine (entier 64 bits)")
    parent.add_argument('--samples', type=int, default=argparse.SUPPRESS, help="Nombre de points échantillonnés")
    parent.add_argument('--tol', type=float, default=argparse.SUPPRESS, help="Tolérance relative")
    parent.add_argument('--out', type=str, default=argparse.SUPPRESS, help="Fichier de rapport (défaut : sortie standard)")
    parent.add_argument('--format', choices=FORMATS, default=argparse.SUPPRESS, help="Format du rapport")
    parent.add_argument('--log-level', type=str, default=argparse.SUPPRESS, help="Niveau de log")
    parent.add_argument('--catalog', type=str, default=argparse.SUPPRESS, help="Dossier du catalogue")
    parent.add_argument('--metrics', type=str, default=argparse.SUPPRESS, help="Export JSON des métriques")
    return parent


def _selection(parser: argparse.ArgumentParser, flag: str, help_text: str) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument(flag, action='append', dest='ids', help=help_text)
    group.add_argument('--all', action='store_true', help="Tous les identifiants")


def build_parser() -> argparse.ArgumentParser:
    parent = _global_options()
    parser = argparse.ArgumentParser(
        description="Vérification des contraintes différentielles d'équations de diffusion non linéaires",
        parents=[parent],
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    catalog = commands.add_parser('catalog', parents=[parent], help="Consulter le catalogue")
    catalog.add_argument('action', choices=['list'])

    lde = commands.add_parser('verify-lde', parents=[parent], help="Équations déterminantes des contraintes")
    _selection(lde, '--entry', "Identifiant de contrainte (répétable)")

    solution = commands.add_parser('verify-solution', parents=[parent], help="Résidus des solutions exactes")
    _selection(solution, '--family', "Identifiant de famille (répétable)")

    reduce = commands.add_parser('reduce', parents=[parent], help="Réduction aux EDO des coefficients")
    reduce.add_argument('--constraint', required=True, help="Contrainte, alias, 'liouville' ou 'orthogonality'")
    reduce.add_argument('--step', type=float, required=True, help="Pas RK4")
    reduce.add_argument('--t1', type=float, default=None, help="Fin de l'intégration (défaut : fin de l'intervalle catalogué)")
    reduce.add_argument('--param', action='append', default=[], metavar='NOM=VALEUR', help="Surcharge de paramètre")
    reduce.add_argument('--trajectory', type=str, default=None, help="Export CSV de la trajectoire")

    compat = commands.add_parser('compat', parents=[parent], help="Dérive des contraintes sous évolution")
    _selection(compat, '--entry', "Identifiant de contrainte (répétable)")
    compat.add_argument('--nodes', type=int, default=DEFAULT_NODES, help="Nombre de nœuds en x")
    return parser


def parse_params(values: Sequence[str]) -> Dict[str, float]:
    """
    Lit les surcharges NOM=VALEUR.

    Raises:
        ConfigError: Surcharge mal formée
    """
    params = {}
    for item in values:
        name, sep, raw = item.partition('=')
        if not sep or not name.strip():
            raise ConfigError(f"Surcharge invalide (attendu NOM=VALEUR): {item}")
        try:
            params[name.strip()] = float(raw)
        except ValueError as e:
            raise ConfigError(f"Valeur non numérique pour {name}: {raw}") from e
    return params


def config_from_args(args: argparse.Namespace, settings: Settings) -> RunConfig:
    settings = settings.override(
        seed=getattr(args, 'seed', None),
        samples=getattr(args, 'samples', None),
        tolerance=getattr(args, 'tol', None),
        log_level=getattr(args, 'log_level', None),
        catalog=getattr(args, 'catalog', None),
    )
    out = getattr(args, 'out', None)
    metrics_out = getattr(args, 'metrics', None)
    config = RunConfig(
        command=args.command,
        settings=settings,
        ids=list(getattr(args, 'ids', None) or []),
        fmt=getattr(args, 'format', 'json'),
        out=Path(out) if out else None,
        metrics_out=Path(metrics_out) if metrics_out else None,
    )
    if args.command == 'reduce':
        config.ids = [args.constraint]
        config.step = args.step
        config.t1 = args.t1
        config.params = parse_params(args.param)
        config.trajectory = Path(args.trajectory) if args.trajectory else None
    if args.command == 'compat':
        if args.nodes < 5:
            raise ConfigError(f"Au moins 5 nœuds sont nécessaires: {args.nodes}")
        config.nodes = args.nodes
    return config


def list_catalog(config: RunConfig) -> str:
    catalog = load_catalog(config.settings.catalog)
    lines = [f"constraint\t{e.id}\t{e.provenance}" for e in catalog.constraints]
    lines += [f"solution\t{e.id}\t{e.provenance}" for e in catalog.solutions]
    lines += [f"representation\t{e.id}\t{','.join(e.aliases)}" for e in catalog.representations]
    return "\n".join(lines) + "\n"


def run(config: RunConfig) -> Tuple[Report, int]:
    """
    Exécute la commande et retourne le rapport et le code de sortie
    (0 : tous les cas passent, 1 : au moins un échec).

    Raises:
        VerificationError: Erreur de configuration (identifiant, paramètres)
    """
    settings = config.settings
    catalog = load_catalog(settings.catalog)
    report = Report(version=__version__, config=config.to_dict())
    ids = config.ids or None

    if config.command == 'verify-lde':
        cases = LDEVerifier(settings, catalog).process(entries=ids)
    elif config.command == 'verify-solution':
        cases = SolutionVerifier(settings, catalog).process(families=ids)
    elif config.command == 'reduce':
        cases = ReductionRunner(settings, catalog).process(
            constraint=config.ids[0],
            step=config.step,
            t1=config.t1,
            params=config.params,
            trajectory_out=config.trajectory,
        )
    elif config.command == 'compat':
        cases = CompatVerifier(settings, catalog).process(entries=ids, nodes=config.nodes)
    else:
        raise ConfigError(f"Commande inconnue: {config.command}")

    report.extend(cases)
    summary = report.summary
    logger.info(f"Bilan: {summary['pass']} succès, {summary['fail']} échec(s)")
    return report, EXIT_OK if report.all_passed else EXIT_FAILURES


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = config_from_args(args, load_settings())
    except ConfigError as e:
        print(f"Erreur de configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(
        level=getattr(logging, config.settings.log_level),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )

    try:
        if config.command == 'catalog':
            sys.stdout.write(list_catalog(config))
            return EXIT_OK
        report, code = run(config)
        write_report(report, config.fmt, config.out)
    except VerificationError as e:
        if e.error_type != ErrorType.INVALID_INPUT:
            raise
        print(f"Erreur de configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, EngineError, ReportWriteError) as e:
        print(f"Erreur de configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if config.metrics_out is not None:
            metrics.export(config.metrics_out)
    return code


if __name__ == "__main__":
    sys.exit(main())
