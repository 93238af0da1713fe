from __future__ import annotations

import sys
from pathlib import Path

import cv2
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def write_depth_png(path, depth: np.ndarray) -> None:
    cv2.imwrite(str(path), depth.astype(np.uint16))


def write_rgb_png(path, rgb: np.ndarray) -> None:
    cv2.imwrite(str(path), cv2.cvtColor(rgb.astype(np.uint8), cv2.COLOR_RGB2BGR))


def write_label_png(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if (arr < 0).any():
        raise ValueError("cannot store unlabeled pixels in a 16-bit label image")
    cv2.imwrite(str(path), arr.astype(np.uint16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
