"""Bilinear gather/scatter over NCHW arrays with zero fill outside the frame."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


@dataclass
class BilinearCache:
    """State kept from a gather for the matching backward pass"""
    shape: Tuple[int, int, int, int]
    indices: List[np.ndarray]   # per corner, (B, P) flat spatial index
    valid: List[np.ndarray]     # per corner, (B, P) in-frame mask
    weights: List[np.ndarray]   # per corner, (B, P) interpolation weight
    values: List[np.ndarray]    # per corner, (B, C, P) masked corner values
    ly: np.ndarray
    lx: np.ndarray


def bilinear_gather(x: np.ndarray, py: np.ndarray, px: np.ndarray) -> Tuple[np.ndarray, BilinearCache]:
    """Sample x at fractional (py, px) positions.

    x is (B, C, H, W); py and px are (B, P) row/column coordinates shared by
    every channel. Returns (B, C, P) samples. Corners outside the frame read
    as zero and receive no gradient.
    """
    batch, channels, height, width = x.shape
    y0f = np.floor(py)
    x0f = np.floor(px)
    ly = (py - y0f).astype(x.dtype)
    lx = (px - x0f).astype(x.dtype)
    y0 = y0f.astype(np.int64)
    x0 = x0f.astype(np.int64)

    corners = (
        (y0, x0, (1 - ly) * (1 - lx)),
        (y0, x0 + 1, (1 - ly) * lx),
        (y0 + 1, x0, ly * (1 - lx)),
        (y0 + 1, x0 + 1, ly * lx),
    )
    flat = x.reshape(batch, channels, height * width)
    out = np.zeros((batch, channels, py.shape[1]), dtype=x.dtype)
    cache = BilinearCache(shape=x.shape, indices=[], valid=[], weights=[], values=[], ly=ly, lx=lx)
    for yy, xx, weight in corners:
        valid = (yy >= 0) & (yy < height) & (xx >= 0) & (xx < width)
        index = np.where(valid, yy * width + xx, 0)
        values = np.take_along_axis(flat, index[:, None, :], axis=2)
        values = values * valid[:, None, :].astype(x.dtype)
        out += weight[:, None, :] * values
        cache.indices.append(index)
        cache.valid.append(valid)
        cache.weights.append(weight)
        cache.values.append(values)
    return out, cache


def bilinear_scatter(cache: BilinearCache, grad: np.ndarray) -> np.ndarray:
    """Gradient of bilinear_gather with respect to x"""
    batch, channels, height, width = cache.shape
    plane = height * width
    base = (np.arange(batch)[:, None, None] * channels + np.arange(channels)[None, :, None]) * plane
    total = np.zeros(batch * channels * plane, dtype=np.float64)
    for index, valid, weight in zip(cache.indices, cache.valid, cache.weights):
        contribution = grad * (weight * valid)[:, None, :]
        flat_index = base + index[:, None, :]
        total += np.bincount(flat_index.ravel(), weights=contribution.ravel(),
                             minlength=total.size)
    return total.reshape(cache.shape).astype(grad.dtype)


def bilinear_position_grads(cache: BilinearCache, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of bilinear_gather with respect to the (py, px) positions"""
    v00, v01, v10, v11 = cache.values
    ly = cache.ly[:, None, :]
    lx = cache.lx[:, None, :]
    d_dy = (1 - lx) * (v10 - v00) + lx * (v11 - v01)
    d_dx = (1 - ly) * (v01 - v00) + ly * (v11 - v10)
    return (grad * d_dy).sum(axis=1), (grad * d_dx).sum(axis=1)
