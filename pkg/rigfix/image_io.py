"""Grayscale image I/O (8/16-bit PGM and single-channel PNG) via Pillow."""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from rigfix.correspondence import GrayImage
from rigfix.errors import ErrorType, RectificationError

logger = logging.getLogger(__name__)

_SIXTEEN_BIT_MODES = {"I;16", "I;16B", "I;16L", "I;16N", "I"}


def load_gray(path: Union[str, Path]) -> tuple[GrayImage, int]:
    """Load a single-channel image as luminance in [0, 1]; returns (image, bit depth)."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "1"):
                data = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
                depth = 8
            elif mode in _SIXTEEN_BIT_MODES:
                data = np.asarray(im, dtype=np.float64) / 65535.0
                depth = 16
            else:
                raise RectificationError(ErrorType.IO, f"{path}: expected a single-channel image, got mode {mode}")
    except (OSError, UnidentifiedImageError) as e:
        raise RectificationError(ErrorType.IO, f"cannot read {path}: {e}")
    logger.debug(f"[ImageIO] Loaded {path} ({data.shape[1]}x{data.shape[0]}, {depth}-bit)")
    return GrayImage(np.clip(data, 0.0, 1.0)), depth


def save_gray(path: Union[str, Path], img: GrayImage, bit_depth: int = 8) -> None:
    """Quantise to ``bit_depth`` and write; the format follows the file suffix."""
    if bit_depth not in (8, 16):
        raise RectificationError(ErrorType.CONFIG, f"unsupported bit depth {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    levels = np.rint(np.clip(img.data, 0.0, 1.0) * maxval)
    if bit_depth == 8:
        im = Image.fromarray(levels.astype(np.uint8))
    else:
        im = Image.fromarray(levels.astype(np.int32))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        im.save(path)
    except (OSError, ValueError, KeyError) as e:
        raise RectificationError(ErrorType.IO, f"cannot write {path}: {e}")
