from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List

from .network_spec import ModelSpec
from .training import SynthConfig, TrainConfig


@dataclass
class Experiment:
    """A complete training run: network, optimisation and data settings"""
    id: str
    name: str
    description: str = ""
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_landmarks=68))
    n_train: int = 200
    n_test: int = 50
    created_at: datetime = field(default_factory=datetime.now)
    updated_at: datetime = field(default_factory=datetime.now)

    def to_dict(self) -> Dict:
        return {
            'id': self.id,
            'name': self.name,
            'description': self.description,
            'model': self.model.to_dict(),
            'train': self.train.to_dict(),
            'synth': self.synth.to_dict(),
            'n_train': self.n_train,
            'n_test': self.n_test,
            'created_at': self.created_at.isoformat(),
            'updated_at': self.updated_at.isoformat()
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Experiment':
        data = data.copy()
        if data.get('model'):
            data['model'] = ModelSpec.from_dict(data['model'])
        if data.get('train'):
            data['train'] = TrainConfig.from_dict(data['train'])
        if data.get('synth'):
            data['synth'] = SynthConfig.from_dict(data['synth'])
        if data.get('created_at'):
            data['created_at'] = datetime.fromisoformat(data['created_at'])
        if data.get('updated_at'):
            data['updated_at'] = datetime.fromisoformat(data['updated_at'])
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if not self.name:
            errors.append("Experiment name is required")
        errors.extend(self.model.validate())
        errors.extend(self.train.validate())
        errors.extend(self.synth.validate())
        if self.synth.n_landmarks != self.model.n_landmarks:
            errors.append(f"synthetic data has {self.synth.n_landmarks} landmarks, "
                          f"model predicts {self.model.n_landmarks}")
        if self.synth.image_size != self.model.image_size:
            errors.append(f"synthetic images are {self.synth.image_size}px, "
                          f"model expects {self.model.image_size}px")
        if self.n_train <= 0:
            errors.append("n_train must be positive")
        if self.n_test < 0:
            errors.append("n_test cannot be negative")
        return errors
