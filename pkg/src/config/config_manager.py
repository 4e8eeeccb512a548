import json
import os
import uuid
from datetime import datetime
from typing import Dict, List, Optional

from platformdirs import user_config_dir

from ..core.errors import ConfigurationError
from ..models.experiment import Experiment
from ..models.network_spec import TopologyKind
from ..models.training import SynthConfig, TrainConfig
from ..network.stacked import toy_spec
from ..utils.logger import APP_NAME, get_logger

logger = get_logger(__name__)

DEFAULT_GENERAL_CONFIG = {
    'default_experiment': None,
    'log_level': 'INFO',
    'log_dir': None
}


def builtin_presets() -> List[Experiment]:
    """Toy-width two-stack CAB networks, one per topology kind"""
    presets = []
    for kind in TopologyKind:
        model = toy_spec(kind, n_landmarks=5, width=16, n_stacks=2, down_steps=3)
        presets.append(Experiment(
            id=f"toy-{kind.value}",
            name=f"toy-{kind.value}",
            description=f"{kind.value}^2-CAB, width 16, 5 landmarks on synthetic faces",
            model=model,
            train=TrainConfig(batch=8, total_steps=2000),
            synth=SynthConfig(n_landmarks=5, image_size=model.image_size),
        ))
    return presets


class ConfigManager:
    """Manages experiment presets and general settings - loading, saving, and CRUD operations"""

    def __init__(self, config_dir: str = None):
        if config_dir is None:
            config_dir = user_config_dir(APP_NAME)
        self.config_dir = config_dir
        self.experiments_dir = os.path.join(config_dir, "experiments")
        self.config_file = os.path.join(config_dir, "config.json")
        os.makedirs(self.experiments_dir, exist_ok=True)
        self._cache: Dict[str, Experiment] = {}
        self.load_all_experiments()

    def _save_general_config(self, config: Dict):
        with open(self.config_file, 'w') as f:
            json.dump(config, f, indent=2)

    def get_general_config(self) -> Dict:
        config = dict(DEFAULT_GENERAL_CONFIG)
        if os.path.exists(self.config_file):
            with open(self.config_file, 'r') as f:
                config.update(json.load(f))
        return config

    def set_general(self, key: str, value):
        if key not in DEFAULT_GENERAL_CONFIG:
            raise ConfigurationError([f"unknown setting {key!r} (known: {sorted(DEFAULT_GENERAL_CONFIG)})"])
        config = self.get_general_config()
        config[key] = value
        self._save_general_config(config)

    def install_presets(self, overwrite: bool = False) -> List[Experiment]:
        installed = []
        for preset in builtin_presets():
            if overwrite or self.load_experiment(preset.id) is None:
                self.save_experiment(preset)
                installed.append(preset)
        return installed

    def create_experiment(self, name: str, description: str = "", **settings) -> Experiment:
        experiment = Experiment(id=str(uuid.uuid4()), name=name, description=description, **settings)
        self.save_experiment(experiment)
        return experiment

    def save_experiment(self, experiment: Experiment) -> bool:
        ConfigurationError.raise_if(experiment.validate())
        experiment.updated_at = datetime.now()
        path = os.path.join(self.experiments_dir, f"{experiment.id}.json")
        try:
            with open(path, 'w') as f:
                json.dump(experiment.to_dict(), f, indent=2)
            self._cache[experiment.id] = experiment
            return True
        except OSError as e:
            logger.error(f"Error saving experiment: {e}")
            return False

    def load_experiment(self, experiment_id: str) -> Optional[Experiment]:
        if experiment_id in self._cache:
            return self._cache[experiment_id]
        path = os.path.join(self.experiments_dir, f"{experiment_id}.json")
        if os.path.exists(path):
            try:
                with open(path, 'r') as f:
                    experiment = Experiment.from_dict(json.load(f))
                self._cache[experiment_id] = experiment
                return experiment
            except (OSError, ValueError, TypeError, KeyError) as e:
                logger.error(f"Error loading experiment {experiment_id}: {e}")
        return None

    def load_all_experiments(self) -> List[Experiment]:
        experiments = []
        self._cache.clear()
        for filename in sorted(os.listdir(self.experiments_dir)):
            if filename.endswith('.json'):
                experiment = self.load_experiment(filename[:-5])
                if experiment:
                    experiments.append(experiment)
        return experiments

    def find(self, key: str) -> Optional[Experiment]:
        """Look an experiment up by id, then by name"""
        experiment = self.load_experiment(key)
        if experiment:
            return experiment
        for candidate in self._cache.values():
            if candidate.name == key:
                return candidate
        return None

    def resolve(self, reference: str) -> Experiment:
        """--config value: a JSON file path or a stored experiment id/name"""
        if os.path.isfile(reference):
            return read_experiment(reference)
        experiment = self.find(reference)
        if experiment is None:
            for preset in builtin_presets():
                if reference in (preset.id, preset.name):
                    return preset
            raise ConfigurationError([f"no experiment file or preset named {reference!r}"])
        return experiment

    def delete_experiment(self, experiment_id: str) -> bool:
        path = os.path.join(self.experiments_dir, f"{experiment_id}.json")
        try:
            if os.path.exists(path):
                os.remove(path)
            self._cache.pop(experiment_id, None)
            return True
        except OSError as e:
            logger.error(f"Error deleting experiment: {e}")
            return False

    def duplicate_experiment(self, experiment_id: str, new_name: str) -> Optional[Experiment]:
        original = self.load_experiment(experiment_id)
        if not original:
            return None
        data = original.to_dict()
        data.update(id=str(uuid.uuid4()), name=new_name, description=f"Copy of {original.name}",
                    created_at=datetime.now().isoformat())
        copy = Experiment.from_dict(data)
        self.save_experiment(copy)
        return copy

    def export_experiment(self, experiment_id: str, export_path: str) -> bool:
        experiment = self.load_experiment(experiment_id)
        if not experiment:
            return False
        try:
            with open(export_path, 'w') as f:
                json.dump(experiment.to_dict(), f, indent=2)
            return True
        except OSError as e:
            logger.error(f"Error exporting experiment: {e}")
            return False

    def import_experiment(self, import_path: str) -> Experiment:
        data = _read_json(import_path)
        # new id to avoid conflicts
        data['id'] = str(uuid.uuid4())
        data['created_at'] = datetime.now().isoformat()
        experiment = Experiment.from_dict(data)
        self.save_experiment(experiment)
        return experiment

    def get_default_experiment(self) -> Optional[Experiment]:
        default_id = self.get_general_config().get('default_experiment')
        if default_id:
            return self.load_experiment(default_id)
        experiments = self.load_all_experiments()
        return experiments[0] if experiments else None

    def set_default_experiment(self, experiment_id: str):
        self.set_general('default_experiment', experiment_id)


def _read_json(path: str) -> Dict:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError([f"{path} is not valid JSON: {e}"])


def read_experiment(path: str) -> Experiment:
    """Experiment file; id and name default to the file stem"""
    data = _read_json(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    data.setdefault('id', stem)
    data.setdefault('name', stem)
    try:
        experiment = Experiment.from_dict(data)
    except (TypeError, ValueError) as e:
        raise ConfigurationError([f"{path}: {e}"])
    ConfigurationError.raise_if(experiment.validate())
    return experiment
