from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np

from ..core.errors import ConfigurationError

DATA_DIR = Path(__file__).parent / "data"


def parse_flip_pairs(text: str, n: int) -> np.ndarray:
    """Build the mirror permutation from "i j" lines ('#' starts a comment)"""
    perm = np.arange(n)
    errors = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2 or not all(f.isdigit() for f in fields):
            errors.append(f"line {number}: expected 'i j', got {raw.strip()!r}")
            continue
        i, j = int(fields[0]), int(fields[1])
        if i >= n or j >= n:
            errors.append(f"line {number}: index out of range for {n} landmarks")
            continue
        if perm[i] != i or perm[j] != j:
            errors.append(f"line {number}: index paired twice")
            continue
        perm[i], perm[j] = j, i
    ConfigurationError.raise_if(errors)
    return perm


def load_flip_pairs_file(path: Union[str, Path], n: int) -> np.ndarray:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_flip_pairs(f.read(), n)


@lru_cache(maxsize=None)
def _shipped(n: int) -> tuple:
    path = DATA_DIR / f"flip_pairs_{n}.txt"
    if not path.exists():
        raise ConfigurationError([f"no mirror pairing shipped for {n} landmarks (have 5 and 68)"])
    return tuple(load_flip_pairs_file(path, n).tolist())


def flip_pairs_for(n: int) -> np.ndarray:
    """Shipped mirror permutation for the 5- or 68-point layout"""
    return np.array(_shipped(n), dtype=np.int64)
