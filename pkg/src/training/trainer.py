"""Training loop: paired forwards, the coherent objective on every stack, Nadam."""
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigurationError, NonFiniteError, NonFiniteLossError
from ..core.tensor import Tensor
from ..data.augment import sample_transform
from ..data.dataset import LandmarkDataset
from ..landmarks.heatmap_codec import render_batch
from ..models.landmarks import LandmarkSet
from ..models.training import TrainConfig
from ..models.transform_spec import TransformSpec
from ..network.stacked import StackedModel
from ..transform.coherent_loss import coherent_loss
from ..transform.transforms import warp_images
from ..utils.logger import TrainingLogger, get_logger
from .checkpoint import save_checkpoint
from .nadam import Nadam
from .schedule import lr_at

logger = get_logger(__name__)


@dataclass
class Batch:
    images: np.ndarray                 # (B, 3, S, S) float32
    landmarks: List[LandmarkSet]
    ids: List[str]

    @property
    def size(self) -> int:
        return self.images.shape[0]


@dataclass
class StepReport:
    step: int
    lr: float
    loss: float
    L_pp: float
    L_pg1: float
    L_pg2: float
    grad_norm: float
    wall_ms: float

    def to_dict(self) -> Dict:
        return {
            'step': self.step,
            'lr': self.lr,
            'L_pp': self.L_pp,
            'L_pg1': self.L_pg1,
            'L_pg2': self.L_pg2,
            'loss': self.loss,
            'grad_norm': self.grad_norm,
            'wall_ms': self.wall_ms
        }


def make_batch(dataset: LandmarkDataset, indices: Sequence[int]) -> Batch:
    return Batch(images=dataset.images(indices), landmarks=dataset.landmarks(indices),
                 ids=[dataset[i].id for i in indices])


def sample_batch(dataset: LandmarkDataset, cfg: TrainConfig, step: int) -> Tuple[Batch, List[TransformSpec]]:
    """Batch and transforms of one step; a pure function of (seed, step)"""
    if len(dataset) == 0:
        raise ConfigurationError(["cannot train on an empty dataset"])
    rng = np.random.default_rng([cfg.seed, step])
    indices = rng.choice(len(dataset), size=cfg.batch, replace=len(dataset) < cfg.batch)
    batch = make_batch(dataset, [int(i) for i in indices])
    size = batch.images.shape[-1]
    transforms = [sample_transform(rng, cfg.augment, dataset.n_landmarks, size=size)
                  for _ in range(batch.size)]
    return batch, transforms


def global_grad_norm(model: StackedModel) -> float:
    total = 0.0
    for p in model.parameters():
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_gradients(model: StackedModel, max_norm: float) -> float:
    """Rescale all gradients so their global norm is at most max_norm; returns the norm before"""
    norm = global_grad_norm(model)
    if norm > max_norm:
        factor = max_norm / (norm + 1e-6)
        for p in model.parameters():
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(factor)
    return norm


def _snapshot(model: StackedModel, step: int, lr: float, terms: Dict, cause: str) -> Dict:
    bad = [name for name, p in model.named_parameters() if not np.all(np.isfinite(p.data))]
    largest = max(float(np.max(np.abs(p.data))) for p in model.parameters())
    return {
        'step': step,
        'lr': lr,
        'terms': terms,
        'cause': cause,
        'non_finite_parameters': bad,
        'max_abs_parameter': largest
    }


def train_step(model: StackedModel, batch: Batch, transforms: Sequence[TransformSpec],
               cfg: TrainConfig, opt: Nadam, lr: Optional[float] = None) -> StepReport:
    """One optimisation step on a batch and its transformed twin.

    The coherent objective is summed over the outputs of every stack; the
    report carries the per-term values of that sum.
    """
    step = opt.state.step
    lr = lr_at(step, cfg) if lr is None else lr
    started = time.perf_counter()
    model.train()
    model.zero_grad()

    images = Tensor(batch.images)
    twins = warp_images(list(transforms), images)
    gt = render_batch(batch.landmarks, resolution=batch.images.shape[-1] // 2)

    terms: Dict = {}
    try:
        outputs = model(images)
        twin_outputs = model(Tensor(twins.data))
        total = None
        sums = {'L_pp': 0.0, 'L_pg1': 0.0, 'L_pg2': 0.0}
        for h_orig, h_trans in zip(outputs, twin_outputs):
            parts = coherent_loss(h_orig, h_trans, gt, transforms, cfg.loss)
            total = parts.total if total is None else total + parts.total
            sums['L_pp'] += parts.pp.item()
            sums['L_pg1'] += parts.pg1.item()
            sums['L_pg2'] += parts.pg2.item()
        terms = dict(sums, loss=total.item())
        if not np.isfinite(terms['loss']):
            raise NonFiniteError('coherent_loss')
        total.backward()
    except NonFiniteError as e:
        raise NonFiniteLossError(step, _snapshot(model, step, lr, terms, str(e))) from e

    if cfg.clip_norm is not None:
        grad_norm = clip_gradients(model, cfg.clip_norm)
    else:
        grad_norm = global_grad_norm(model)
    opt.step(list(model.named_parameters()), lr)

    return StepReport(step=step, lr=lr, loss=terms['loss'], L_pp=terms['L_pp'],
                      L_pg1=terms['L_pg1'], L_pg2=terms['L_pg2'], grad_norm=grad_norm,
                      wall_ms=(time.perf_counter() - started) * 1000.0)


class Trainer:
    """Runs train_step from the optimizer's step counter up to total_steps.

    Batches and transforms depend only on (seed, step), so a run resumed
    from a checkpoint replays exactly what the uninterrupted run would do.
    """

    def __init__(self, model: StackedModel, cfg: TrainConfig, opt: Optional[Nadam] = None,
                 training_logger: Optional[TrainingLogger] = None,
                 checkpoint_path: Optional[str] = None):
        ConfigurationError.raise_if(cfg.validate())
        self.model = model
        self.cfg = cfg
        self.opt = opt or Nadam.from_config(cfg)
        self.training_logger = training_logger
        self.checkpoint_path = checkpoint_path
        self.history: List[StepReport] = []

    @property
    def step(self) -> int:
        return self.opt.state.step

    def _record(self, report: StepReport, last: bool):
        self.history.append(report)
        if self.training_logger is None:
            return
        echo = last or (self.cfg.log_every > 0 and report.step % self.cfg.log_every == 0)
        self.training_logger.log_step(report.to_dict(), echo=echo)

    def save(self, path: Optional[str] = None) -> Optional[str]:
        path = path or self.checkpoint_path
        if path is None:
            return None
        return save_checkpoint(self.model, self.opt, path, self.cfg)

    def fit(self, dataset: LandmarkDataset, until: Optional[int] = None) -> List[StepReport]:
        """Train up to step `until` (default total_steps); returns this call's reports"""
        until = self.cfg.total_steps if until is None else min(until, self.cfg.total_steps)
        start = self.step
        if self.training_logger:
            self.training_logger.log_start(f"{len(dataset)} samples, batch {self.cfg.batch}",
                                           self.cfg.total_steps, start)
        reports = []
        try:
            while self.step < until:
                batch, transforms = sample_batch(dataset, self.cfg, self.step)
                report = train_step(self.model, batch, transforms, self.cfg, self.opt)
                reports.append(report)
                self._record(report, last=self.step == until)
                every = self.cfg.checkpoint_every
                if every > 0 and self.step % every == 0 and self.step < until:
                    self.save()
        except NonFiniteLossError as e:
            if self.training_logger:
                self.training_logger.log_error(str(e))
                self.training_logger.log_complete(False, str(e))
            raise
        self.save()
        if self.training_logger:
            self.training_logger.log_complete(True)
        logger.info(f"trained steps {start}..{self.step}"
                    + (f", final loss {reports[-1].loss:.5f}" if reports else ""))
        return reports
