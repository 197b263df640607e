"""
Paramètres d'exécution lus dans l'environnement (fichier .env compris).
"""
import logging
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CATALOG = Path(__file__).resolve().parent.parent / "engine" / "data"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(ValueError):
    """Valeur de configuration invalide."""


@dataclass(frozen=True)
class Settings:
    """Valeurs par défaut de l'outil, surchargées ensuite par la ligne de commande."""

    catalog: Path = DEFAULT_CATALOG
    log_level: str = "INFO"
    seed: int = 0
    samples: int = 100
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"Niveau de log invalide: {self.log_level}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"La graine doit être un entier 64 bits positif: {self.seed}")
        if self.samples < 1:
            raise ConfigError(f"Le nombre d'échantillons doit être ≥ 1: {self.samples}")
        if not self.tolerance > 0:
            raise ConfigError(f"La tolérance doit être positive: {self.tolerance}")

    def override(self, **values: Any) -> "Settings":
        """Copie avec les valeurs non nulles de `values`."""
        changes = {k: v for k, v in values.items() if v is not None}
        if "catalog" in changes:
            changes["catalog"] = Path(changes["catalog"])
        if "log_level" in changes:
            changes["log_level"] = str(changes["log_level"]).upper()
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["catalog"] = str(self.catalog)
        return data


def _read(name: str, cast, default):
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as e:
        raise ConfigError(f"{name}={raw!r} invalide: {e}") from e


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Charge le fichier .env puis construit les paramètres.

    Raises:
        ConfigError: Si une variable est mal formée
    """
    load_dotenv(env_file)
    settings = Settings(
        catalog=Path(_read("DIFFCONS_CATALOG", str, str(DEFAULT_CATALOG))),
        log_level=_read("LOG_LEVEL", lambda v: v.upper(), "INFO"),
        seed=_read("DIFFCONS_SEED", int, 0),
        samples=_read("DIFFCONS_SAMPLES", int, 100),
        tolerance=_read("DIFFCONS_TOLERANCE", float, 1e-8),
    )
    logger.debug(f"Configuration chargée: {settings.to_dict()}")
    return settings
