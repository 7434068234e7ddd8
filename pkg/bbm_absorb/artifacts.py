"""CSV rendering and write-once storage of result files.

Reals are written with 17 significant digits so that a file read back gives
the same 64-bit floats; integers are written as such.
"""
import hashlib
import io
import logging
from pathlib import Path
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import numpy.typing as npt

__all__ = ["Column", "render_csv", "read_csv", "write_once", "sha256_hex"]

LOGGER = logging.getLogger(__name__)

REAL_FORMAT = "%.16e"
INT_FORMAT = "%d"

Column = Tuple[str, npt.ArrayLike]
PathLike = Union[str, Path]


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def render_csv(columns: Sequence[Column]) -> bytes:
    """
    Render equally long columns as CSV with a header row.

    Integer-typed columns keep integer formatting, everything else is
    written in scientific notation.

    :param columns: ``(name, values)`` pairs
    :return: the encoded file content
    """
    names = [name for name, _ in columns]
    arrays = [np.asarray(values) for _, values in columns]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) != 1:
        raise ValueError(f"columns differ in length: {sorted(lengths)}")
    formats = [INT_FORMAT if np.issubdtype(a.dtype, np.integer) else REAL_FORMAT for a in arrays]
    table = np.column_stack([a.astype(np.int64 if f == INT_FORMAT else np.float64) for a, f in zip(arrays, formats)])
    buffer = io.StringIO()
    np.savetxt(buffer, table, fmt=formats, delimiter=",", header=",".join(names), comments="")
    return buffer.getvalue().encode("utf-8")


def read_csv(path: PathLike) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Read a file written by :func:`render_csv`; returns header and a 2-d float array."""
    with open(path, "r", encoding="utf-8") as handle:
        header = tuple(handle.readline().strip().split(","))
        data = np.loadtxt(handle, delimiter=",", ndmin=2)
    return header, data


def write_once(path: PathLike, data: bytes) -> Path:
    """
    Store ``data`` at ``path`` without ever overwriting a different file.

    If ``path`` already holds the same bytes it is reused. If it holds other
    bytes, the content hash is inserted before the suffix.

    :return: the path actually holding ``data``
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.exists():
        if target.read_bytes() == data:
            return target
        target = target.with_name(f"{target.stem}.{sha256_hex(data)[:12]}{target.suffix}")
        if target.exists():
            return target
        LOGGER.info("artifact name taken, writing %s", target)
    with open(target, "xb") as handle:
        handle.write(data)
        handle.flush()
    return target
