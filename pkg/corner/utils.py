"""
Library utilities
"""

import os
import tempfile
from contextlib import contextmanager
from typing import List


def powers_of_two(lo: int, hi: int) -> List[int]:
    """
    :return: All powers of two r with lo <= r <= hi, increasing
    """

    r = 1
    res = []
    while r <= hi:
        if r >= lo:
            res.append(r)
        r <<= 1
    return res


def zigzag(x: int) -> int:
    """
    Map an integer onto a distinct nonnegative ordinal: 0, -1, 1, -2, 2, ... -> 0, 1, 2, 3, 4, ...
    """

    return 2 * x if x >= 0 else -2 * x - 1


@contextmanager
def atomic_write(path: str, mode: str = "w", **kwargs):
    """
    Write to a temporary file next to path and move it into place on success.
    On failure the temporary file is removed and path is left untouched.
    """

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".%s." % os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **kwargs) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
