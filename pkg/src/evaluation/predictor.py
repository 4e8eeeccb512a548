import os
from typing import Callable, List, Optional

import numpy as np

from ..core.tensor import Tensor
from ..data.dataset import LandmarkDataset
from ..landmarks.heatmap_codec import decode_batch
from ..landmarks.pts import read_pts
from ..models.landmarks import LandmarkSet
from ..network.stacked import StackedModel
from ..utils.logger import get_logger

logger = get_logger(__name__)

# (B, 3, S, S) images -> (B, N, S/2, S/2) heatmaps in [0, 1]
Predictor = Callable[[np.ndarray], np.ndarray]


class ModelPredictor:
    """Final-stack sigmoid heatmaps of a model in inference mode"""

    def __init__(self, model: StackedModel, batch_size: int = 8):
        self.model = model
        self.batch_size = batch_size

    def __call__(self, images: np.ndarray) -> np.ndarray:
        was_training = self.model.training
        self.model.eval()
        try:
            chunks = []
            for start in range(0, len(images), self.batch_size):
                batch = Tensor(np.asarray(images[start:start + self.batch_size], dtype=np.float32))
                chunks.append(self.model.predict(batch)[-1].data)
        finally:
            self.model.train(was_training)
        return np.concatenate(chunks)


def predict_landmarks(predictor: Predictor, dataset: LandmarkDataset, batch_size: int = 8) -> List[LandmarkSet]:
    predictions = []
    for start in range(0, len(dataset), batch_size):
        indices = list(range(start, min(start + batch_size, len(dataset))))
        predictions.extend(decode_batch(predictor(dataset.images(indices))))
    return predictions


def load_predictions(directory: str, dataset: LandmarkDataset) -> List[Optional[LandmarkSet]]:
    """<sample id>.pts per dataset sample; missing files give None"""
    predictions = []
    for sample in dataset:
        path = os.path.join(directory, f"{sample.id}.pts")
        if not os.path.exists(path):
            logger.warning(f"No prediction for {sample.id} in {directory}")
            predictions.append(None)
            continue
        predictions.append(read_pts(path))
    return predictions
