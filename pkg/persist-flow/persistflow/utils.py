# -*- coding: utf-8 -*-
import os
import time
import logging
import hashlib
import functools
from typing import Sequence

import numpy as np  # type: ignore
import psutil  # type: ignore


logger = logging.getLogger(__name__)


def log_time(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start = time.time()
        try:
            return func(*args, **kwargs)
        finally:
            end = time.time()
            logger.debug("{} took {:0.4f}s".format(func.__qualname__,
                                                    end - start))
    return wrapper


def rss_mb() -> float:
    """ Resident set size of the current process, in MB """
    return psutil.Process(os.getpid()).memory_info().rss / 2 ** 20


def text_hash(text: str) -> str:
    """
    SHA-256 hex digest of a text, used to tag outputs with the
    configuration they were produced from.

    >>> text_hash("")[:12]
    'e3b0c44298fc'
    """
    return hashlib.sha256(text.encode('utf8')).hexdigest()


def safe_ratio(num: float, den: float, tiny: float = 1e-300) -> float:
    """
    ``num / den`` which is 0 when both are 0.

    >>> safe_ratio(1.0, 4.0)
    0.25
    >>> safe_ratio(0.0, 0.0)
    0.0
    """
    if abs(den) <= tiny:
        return 0.0 if abs(num) <= tiny else float('inf')
    return num / den


def max_min_ratio(values: Sequence[float]) -> float:
    """
    Spread of a list of positive values, max / min. Zeros and non-finite
    values make the spread infinite unless all values are zero.

    >>> max_min_ratio([2.0, 4.0, 3.0])
    2.0
    >>> max_min_ratio([0.0, 0.0])
    1.0
    >>> max_min_ratio([0.0, 1.0])
    inf
    """
    arr = np.abs(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(arr)):
        return float('inf')
    if np.all(arr == 0):
        return 1.0
    if np.any(arr == 0):
        return float('inf')
    return float(arr.max() / arr.min())


def is_decreasing(values: Sequence[float], rtol: float = 1e-12) -> bool:
    """
    >>> is_decreasing([3.0, 2.0, 2.0, 0.5])
    True
    >>> is_decreasing([1.0, 2.0])
    False
    """
    values = list(values)
    return all(b <= a * (1 + rtol) + 1e-300
               for a, b in zip(values, values[1:]))
