import json
from pathlib import Path
from typing import Dict, Optional, Tuple

from config.settings import settings
from services.benchmark_service import ExperimentConfig


class ExperimentManager:
    """
    Manages benchmark protocols defined in JSON files.
    Discovers experiments from ./experiments/<name>/config.json.
    """

    def __init__(self, experiments_dir: Optional[str] = None):
        self.experiments_base_dir = Path(experiments_dir or settings.EXPERIMENTS_DIR)

        # Discover available experiments
        self.available_experiments = self._discover_experiments()

    def _discover_experiments(self) -> Dict:
        """
        Discover all experiments by scanning the experiments directory.

        Returns:
            Dictionary of experiment_id -> {"config": raw json, "path": directory}
        """
        experiments = {}

        if not self.experiments_base_dir.exists():
            return experiments

        for experiment_dir in sorted(self.experiments_base_dir.iterdir()):
            if experiment_dir.is_dir():
                config_file = experiment_dir / "config.json"

                if config_file.exists():
                    try:
                        with open(config_file, 'r') as f:
                            config = json.load(f)

                        experiments[config["experiment_id"]] = {
                            "config": config,
                            "path": experiment_dir
                        }

                        if settings.VERBOSE:
                            print(f"🧪 Discovered experiment: {config['name']}")

                    except (OSError, ValueError, KeyError) as e:
                        print(f"⚠️  Error loading experiment {experiment_dir.name}: {e}")

        return experiments

    def get_available_experiments(self) -> Dict:
        """Get id -> summary of all discovered experiments."""
        result = {}

        for experiment_id, experiment_data in self.available_experiments.items():
            config = experiment_data["config"]
            protocol = config.get("protocol", {})
            result[experiment_id] = {
                "name": config["name"],
                "description": config.get("description", ""),
                "backend": config.get("backend", settings.FEATURE_BACKEND),
                "levels": protocol.get("levels", list(settings.ROTATION_LEVELS)),
                "trials": protocol.get("trials", settings.TRIALS_PER_LEVEL),
            }

        return result

    def load_experiment(self, experiment_id: str) -> Tuple[ExperimentConfig, str]:
        """
        Load a discovered experiment.

        Args:
            experiment_id: ID of the experiment

        Returns:
            (protocol, feature backend spec)
        """
        if experiment_id not in self.available_experiments:
            raise ValueError(f"Experiment '{experiment_id}' not found")

        return parse_experiment(self.available_experiments[experiment_id]["config"])


def parse_experiment(document: Dict) -> Tuple[ExperimentConfig, str]:
    """
    Accept either a full experiment document ({"protocol": {...}, "backend": ...})
    or a bare protocol dictionary.
    """
    if "protocol" in document:
        protocol = document["protocol"]
        backend = document.get("backend", settings.FEATURE_BACKEND)
    else:
        protocol = document
        backend = settings.FEATURE_BACKEND
    return ExperimentConfig.from_dict(protocol), backend


def load_experiment_file(path: str) -> Tuple[ExperimentConfig, str]:
    try:
        with open(path, 'r') as f:
            document = json.load(f)
    except OSError as e:
        raise ValueError(f"cannot read experiment file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not valid JSON: {e}")
    if not isinstance(document, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return parse_experiment(document)
