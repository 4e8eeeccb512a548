from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional
from enum import Enum


class PgLoss(Enum):
    CE = "ce"    # sigmoid cross-entropy on logits
    MSE = "mse"  # squared error on sigmoid maps


@dataclass
class LossWeights:
    """Weights of the coherent objective"""
    lam: float = 0.001        # L_pp weight
    pg_loss: PgLoss = PgLoss.CE
    pp_loss: str = "mse"       # L_pp is always squared error

    def to_dict(self) -> Dict:
        return {
            'lambda': self.lam,
            'pg_loss': self.pg_loss.value,
            'pp_loss': self.pp_loss
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'LossWeights':
        data = data.copy()
        if 'lambda' in data:
            data['lam'] = data.pop('lambda')
        if data.get('pg_loss'):
            data['pg_loss'] = PgLoss(data['pg_loss'])
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if self.lam < 0:
            errors.append("lambda cannot be negative")
        if self.pp_loss != "mse":
            errors.append(f"pp_loss must be 'mse', got {self.pp_loss!r}")
        return errors


@dataclass
class AugmentConfig:
    """Random transform ranges; a draw combines flip, rotation and scaling"""
    max_rotation: float = 40.0   # degrees, uniform in [-max, max]
    min_scale: float = 0.8
    max_scale: float = 1.2
    flip_probability: float = 0.5

    def to_dict(self) -> Dict:
        return {
            'max_rotation': self.max_rotation,
            'min_scale': self.min_scale,
            'max_scale': self.max_scale,
            'flip_probability': self.flip_probability
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'AugmentConfig':
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if self.max_rotation < 0:
            errors.append("max_rotation cannot be negative")
        if not 0 < self.min_scale <= self.max_scale:
            errors.append("scale range must satisfy 0 < min_scale <= max_scale")
        if not 0.0 <= self.flip_probability <= 1.0:
            errors.append("flip_probability must be in [0, 1]")
        return errors


@dataclass
class TrainConfig:
    """Optimiser, schedule and objective settings of one training run"""
    lr0: float = 2.5e-4
    batch: int = 8
    total_steps: int = 2000
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule_decay: float = 0.004
    lr_drop: float = 0.2
    clip_norm: Optional[float] = 5.0   # None disables clipping
    log_every: int = 10
    checkpoint_every: int = 0          # 0 saves only at the end

    # LR drop points as fractions of total_steps
    DROP_FRACTIONS = (Fraction(16, 30), Fraction(24, 30))

    def to_dict(self) -> Dict:
        return {
            'lr0': self.lr0,
            'batch': self.batch,
            'total_steps': self.total_steps,
            'seed': self.seed,
            'loss': self.loss.to_dict(),
            'augment': self.augment.to_dict(),
            'beta1': self.beta1,
            'beta2': self.beta2,
            'epsilon': self.epsilon,
            'schedule_decay': self.schedule_decay,
            'lr_drop': self.lr_drop,
            'clip_norm': self.clip_norm,
            'log_every': self.log_every,
            'checkpoint_every': self.checkpoint_every
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'TrainConfig':
        data = data.copy()
        if data.get('loss'):
            data['loss'] = LossWeights.from_dict(data['loss'])
        if data.get('augment'):
            data['augment'] = AugmentConfig.from_dict(data['augment'])
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if self.lr0 < 0:
            errors.append("lr0 cannot be negative")
        if self.batch <= 0:
            errors.append("batch must be positive")
        if self.total_steps < 0:
            errors.append("total_steps cannot be negative")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            errors.append("beta1 and beta2 must be in [0, 1)")
        if self.epsilon <= 0:
            errors.append("epsilon must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            errors.append("clip_norm must be positive or null")
        errors.extend(self.loss.validate())
        errors.extend(self.augment.validate())
        return errors


@dataclass
class SynthConfig:
    """Procedural face generator settings"""
    n_landmarks: int = 5
    seed: int = 0
    image_size: int = 128
    shape_jitter: float = 0.1
    texture_noise: float = 0.05
    occluder_probability: float = 0.0

    def to_dict(self) -> Dict:
        return {
            'n_landmarks': self.n_landmarks,
            'seed': self.seed,
            'image_size': self.image_size,
            'shape_jitter': self.shape_jitter,
            'texture_noise': self.texture_noise,
            'occluder_probability': self.occluder_probability
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SynthConfig':
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if self.n_landmarks not in (5, 68):
            errors.append(f"n_landmarks must be 5 or 68, got {self.n_landmarks}")
        if self.image_size < 16:
            errors.append("image_size must be at least 16")
        if not 0.0 <= self.shape_jitter < 0.5:
            errors.append("shape_jitter must be in [0, 0.5)")
        if self.texture_noise < 0:
            errors.append("texture_noise cannot be negative")
        if not 0.0 <= self.occluder_probability <= 1.0:
            errors.append("occluder_probability must be in [0, 1]")
        return errors
