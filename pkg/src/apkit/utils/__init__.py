from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")


def fmt_seconds(seconds: float) -> str:
    if seconds >= 60:
        m, s = divmod(seconds, 60)
        return f"{int(m)}m {s:.1f}s"
    if seconds >= 1:
        return f"{seconds:.2f}s"
    return f"{seconds * 1000:.1f}ms"


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """由 (seed, keys...) 派生独立随机流，与线程数和执行顺序无关"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def run_indexed(fn: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """对 0..count-1 调用 fn，结果按下标顺序返回"""
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def derive_seed(seed: int, *keys: int) -> int:
    """派生一个 63 位整数种子，供需要整数种子的生成器使用"""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
