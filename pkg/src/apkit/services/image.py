"""
灰度图像补全
像素缩放到 [0,1]，按缺失率随机遮挡，OR1MP 初值 + 交替投影恢复
"""
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from apkit.core.errors import ImageFormatError, ValidationError
from apkit.core.linalg import project_mask
from apkit.core.logger import get_logger
from apkit.core.models import CompletionConfig, ImageJob, ImageRecovery, InitMethod
from apkit.services.bench import random_mask
from apkit.services.completion import ap_complete, rank_one_pursuit_init

logger = get_logger(__name__)

MAXVAL = 255


def read_pgm(path: str | Path) -> np.ndarray:
    """读取 P2/P5 灰度图，返回 [0,1] 的 float64 矩阵"""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Image not found: {path}")
    try:
        with Image.open(path) as im:
            if im.format != 'PPM':
                raise ImageFormatError(f"{path} is {im.format}, expected a PGM file")
            if im.mode != 'L':
                raise ImageFormatError(
                    f"{path} has mode {im.mode}; only 8-bit grayscale PGM is supported")
            pixels = np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageFormatError(f"Cannot read PGM {path}: {e}") from e
    return pixels / MAXVAL


def quantize(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * MAXVAL).astype(np.uint8)


def write_pgm(path: str | Path, image: np.ndarray):
    """写出二进制 P5"""
    Image.fromarray(quantize(image)).save(path, format='PPM')
    logger.debug(f"Wrote {image.shape[0]}x{image.shape[1]} PGM {path}")


def synthetic_image(rows: int, cols: int, rank: int, seed: int = 0) -> np.ndarray:
    """秩为 rank、取值在 [0,1] 的合成图像"""
    if not 1 <= rank <= min(rows, cols):
        raise ValidationError(f"rank {rank} out of range for a {rows}x{cols} image")
    rng = np.random.default_rng(seed)
    image = rng.uniform(size=(rows, rank)) @ rng.uniform(size=(rank, cols))
    return image / image.max()


def parse_synthetic(text: str) -> tuple[int, int, int]:
    """'128x128:25' -> (128, 128, 25)"""
    try:
        size, _, rank = text.partition(':')
        rows, _, cols = size.lower().partition('x')
        return int(rows), int(cols), int(rank)
    except ValueError as e:
        raise ValidationError(
            f"synthetic image must look like ROWSxCOLS:RANK, got '{text}'") from e


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def image_recover(job: ImageJob) -> ImageRecovery:
    if job.synthetic is not None:
        rows, cols, rank = job.synthetic
        original = synthetic_image(rows, cols, rank, job.seed)
    else:
        original = read_pgm(job.input_path)
    rows, cols = original.shape
    if job.rank > min(rows, cols):
        raise ValidationError(f"rank {job.rank} exceeds image size {rows}x{cols}")

    mask = random_mask(np.random.default_rng(job.seed), rows, cols, job.missing_rate)
    masked = project_mask(original, mask)
    logger.info(f"Image {rows}x{cols}: {mask.m} of {rows * cols} pixels kept, rank {job.rank}")

    initial = init_rmse = None
    if job.init == InitMethod.RANK_ONE_PURSUIT:
        initial = np.clip(rank_one_pursuit_init(masked, mask, job.rank), 0.0, 1.0)
        init_rmse = rmse(initial, original)

    config = CompletionConfig(guess_rank=job.rank, tol=job.tol, max_iters=job.max_iters,
                              init=job.init, record_trace=False)
    result = ap_complete(masked, mask, config)
    recovered = np.clip(result.X_star, 0.0, 1.0)
    error = rmse(recovered, original)
    logger.info(f"Image recovered: RMSE={error:.4e}"
                + (f" (initializer alone {init_rmse:.4e})" if init_rmse is not None else ""))

    if job.masked_path:
        write_pgm(job.masked_path, masked)
    if job.recovered_path:
        write_pgm(job.recovered_path, recovered)
    if job.init_path and initial is not None:
        write_pgm(job.init_path, initial)

    return ImageRecovery(
        original=original, masked=masked, recovered=recovered, rmse=error,
        initial=initial, init_rmse=init_rmse, iters=result.iters,
        converged=result.converged, maxval=MAXVAL,
    )
