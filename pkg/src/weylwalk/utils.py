import math
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .settings import resolve_threads

logger = logging.getLogger(__name__)

# Fixed chunk length for momentum sweeps. Chunking never depends on the thread
# count, so every chunk is computed identically whatever the pool size.
SWEEP_CHUNK = 4096

IDENTITY2 = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


def spin1_generators() -> NDArray[np.complex128]:
    """
    Returns the vector representation of so(3): (J_i)_{jk} = -i eps_{ijk}.

    Returns:
        NDArray[np.complex128]: Array of shape (3, 3, 3), J[i] is J_{x,y,z}.
    """
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return (-1j * eps).astype(np.complex128)


def dagger(m: NDArray) -> NDArray:
    return np.conj(np.swapaxes(m, -1, -2))


def spectral_norm(m: NDArray) -> NDArray:
    """Largest singular value over the last two axes."""
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def pad3(p: NDArray) -> NDArray:
    """Pads momentum vectors (..., d) with zeros up to three components."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] >= 3:
        return p
    pad = [(0, 0)] * (p.ndim - 1) + [(0, 3 - p.shape[-1])]
    return np.pad(p, pad)


def parse_vector(text: str, length: Optional[int] = None) -> NDArray[np.float64]:
    """
    Parses a comma separated list of plain decimals, e.g. '0.1,0,-2'.

    Raises:
        ValueError: On empty items, non finite values or a wrong length.
    """
    items = [item.strip() for item in text.split(",")]
    if any(not item for item in items):
        raise ValueError(f"Empty component in vector '{text}'.")
    values = [float(item) for item in items]
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"Vector '{text}' has non finite components.")
    if length is not None and len(values) != length:
        raise ValueError(f"Expected {length} components, got {len(values)} in '{text}'.")
    return np.array(values, dtype=float)


def sweep(fn: Callable[[NDArray], NDArray], points: NDArray, threads: Optional[int] = None) -> NDArray:
    """
    Evaluates a vectorised function over a batch of momenta, chunk by chunk.

    Chunks are concatenated in input order, so the result is independent of
    the number of worker threads.

    Args:
        fn (Callable): Maps an (n, d) momentum batch to an (n, ...) array.
        points (NDArray): Momenta of shape (N, d).
        threads (int, optional): Pool size. Defaults to ``WEYLWALK_THREADS``.

    Returns:
        NDArray: Concatenated results of shape (N, ...).
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return fn(points)
    chunks = [points[i:i + SWEEP_CHUNK] for i in range(0, len(points), SWEEP_CHUNK)]
    workers = min(resolve_threads(threads), len(chunks))
    if workers <= 1:
        results = [fn(chunk) for chunk in chunks]
    else:
        logger.debug("Sweeping %s momenta in %s chunks on %s threads", len(points), len(chunks), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, chunks))
    return np.concatenate(results, axis=0)


def format_float(value: float) -> str:
    """17 significant digits, enough to round trip any double."""
    return format(float(value), ".17g")


def lexicographic_sign(vectors: Sequence[NDArray], eps: float = 1e-14) -> List[float]:
    """
    Returns +1/-1 per vector so that its first entry above ``eps`` in magnitude is positive.
    """
    signs = []
    for v in vectors:
        nonzero = np.flatnonzero(np.abs(v) > eps)
        signs.append(-1.0 if len(nonzero) and v[nonzero[0]] < 0 else 1.0)
    return signs
