"""Pointwise correspondences: soft assignment, nearest-neighbor recovery,
alternating spectral refinement, and the multi-resolution spectral loss.

A map always goes from the query shape Y to the matched shape X: row y of
the (|V_Y|, |V_X|) matrix says where vertex y lands. Hard maps are index
arrays, soft maps are row-stochastic matrices.
"""

import struct

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, InvalidRangeError, ParseError
from .fmap import fmap_project

_NN_BLOCK_ROWS = 1024


class PointwiseMap:
    """A correspondence from Y-vertices (rows) to X-vertices.

    Use :meth:`hard` or :meth:`soft` to construct. Hard maps store one
    X-index per Y-vertex; soft maps store the full row-stochastic matrix.
    """

    def __init__(self, indices=None, matrix=None, target_size=None):
        if (indices is None) == (matrix is None):
            raise DimensionMismatchError("provide exactly one of indices/matrix")
        if indices is not None:
            indices = np.ascontiguousarray(indices, dtype=np.int64)
            if indices.ndim != 1:
                raise DimensionMismatchError("hard map indices must be a vector")
            if target_size is None:
                raise DimensionMismatchError("hard maps need target_size")
            if indices.size and (indices.min() < 0 or indices.max() >= target_size):
                raise DimensionMismatchError(
                    f"index out of range [0, {target_size})"
                )
            self.indices = indices
            self.matrix_ = None
            self._target_size = int(target_size)
        else:
            matrix = np.ascontiguousarray(matrix, dtype=np.float64)
            if matrix.ndim != 2:
                raise DimensionMismatchError("soft map must be a matrix")
            if (matrix < 0).any():
                raise DimensionMismatchError("soft map rows must be nonnegative")
            rowsum = matrix.sum(axis=1)
            if np.abs(rowsum - 1.0).max() > 1e-9:
                raise DimensionMismatchError("soft map rows must sum to 1")
            self.indices = None
            self.matrix_ = matrix
            self._target_size = matrix.shape[1]

    @classmethod
    def hard(cls, indices, target_size):
        return cls(indices=indices, target_size=target_size)

    @classmethod
    def soft(cls, matrix):
        return cls(matrix=matrix)

    @property
    def is_hard(self):
        return self.indices is not None

    @property
    def source_size(self):
        """Number of Y-vertices (rows)."""
        return len(self.indices) if self.is_hard else self.matrix_.shape[0]

    @property
    def target_size(self):
        """Number of X-vertices (columns)."""
        return self._target_size

    def pull(self, signal_on_x):
        """Transport a per-X-vertex signal onto Y (matrix product Pi @ f)."""
        signal_on_x = np.asarray(signal_on_x)
        if signal_on_x.shape[0] != self.target_size:
            raise DimensionMismatchError(
                f"signal has {signal_on_x.shape[0]} rows, map targets "
                f"{self.target_size}"
            )
        if self.is_hard:
            return signal_on_x[self.indices]
        return self.matrix_ @ signal_on_x

    def dense(self):
        """The (|V_Y|, |V_X|) matrix form (one-hot rows for hard maps)."""
        if not self.is_hard:
            return self.matrix_
        out = np.zeros((self.source_size, self.target_size))
        out[np.arange(self.source_size), self.indices] = 1.0
        return out

    def __eq__(self, other):
        if not isinstance(other, PointwiseMap):
            return NotImplemented
        if self.is_hard != other.is_hard:
            return False
        if self.is_hard:
            return (
                self.target_size == other.target_size
                and np.array_equal(self.indices, other.indices)
            )
        return np.array_equal(self.matrix_, other.matrix_)

    def __repr__(self):
        kind = "hard" if self.is_hard else "soft"
        return f"PointwiseMap({kind}, {self.source_size}->{self.target_size})"


def soft_map(f_x, f_y, alpha=0.07):
    """Row-wise softmax of the feature similarity matrix F_Y F_X^T / alpha.

    Logits are shifted by their row maximum before exponentiation so the
    softmax cannot overflow. Smaller alpha sharpens the assignment.
    """
    if f_x.d != f_y.d:
        raise DimensionMismatchError(
            f"feature dimensions differ: {f_x.d} vs {f_y.d}"
        )
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    logits = f_y.values @ f_x.values.T / alpha
    return PointwiseMap.soft(_softmax_rows(logits))


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def nn_map(emb_y, emb_x, approximate=False):
    """Euclidean nearest neighbor of each Y-row among the X-rows.

    Ties break to the lowest X index (exact blocked brute force, fully
    deterministic). ``approximate=True`` switches to a k-d tree, which is
    faster on large inputs but does not guarantee the tie rule.
    """
    emb_y = np.ascontiguousarray(emb_y, dtype=np.float64)
    emb_x = np.ascontiguousarray(emb_x, dtype=np.float64)
    if emb_y.shape[1] != emb_x.shape[1]:
        raise DimensionMismatchError(
            f"embedding widths differ: {emb_y.shape[1]} vs {emb_x.shape[1]}"
        )
    if approximate:
        _, idx = cKDTree(emb_x).query(emb_y, k=1)
        return PointwiseMap.hard(np.asarray(idx, np.int64), len(emb_x))
    indices = np.empty(len(emb_y), dtype=np.int64)
    for start in range(0, len(emb_y), _NN_BLOCK_ROWS):
        block = emb_y[start:start + _NN_BLOCK_ROWS]
        d = cdist(block, emb_x, metric="sqeuclidean")
        indices[start:start + len(block)] = np.argmin(d, axis=1)
    return PointwiseMap.hard(indices, len(emb_x))


def recover_map(c, basis_x, basis_y, approximate=False):
    """Pointwise map from a functional map: nearest-neighbor search between
    the aligned embeddings psi_Y and psi_X C^T at the map's truncation."""
    kp = c.k
    emb_y = basis_y.psi_k(kp)
    emb_x = basis_x.psi_k(kp) @ c.C.T
    return nn_map(emb_y, emb_x, approximate=approximate)


def alignment_energy(pi, c, basis_x, basis_y):
    """||psi_Y(k') - Pi psi_X(k') C^T||_F^2, the spectral alignment residual
    driving both refinement and the training loss."""
    kp = c.k
    residual = basis_y.psi_k(kp) - pi.pull(basis_x.psi_k(kp)) @ c.C.T
    return float(np.sum(residual * residual))


def _schedule(k_init, k_end, step, k_max):
    if not (1 <= k_init <= k_end <= k_max):
        raise InvalidRangeError(
            f"need 1 <= k_init <= k_end <= {k_max}, got ({k_init}, {k_end})"
        )
    if step < 1:
        raise InvalidRangeError("step must be >= 1")
    ks = list(range(k_init, k_end + 1, step))
    if ks[-1] != k_end:
        ks.append(k_end)
    return ks


def g_zoomout(pi_init, basis_x, basis_y, k_init, k_end, step=1,
              return_trace=False, approximate=False):
    """Alternating spectral refinement in the gain-scaled basis.

    Grows the truncation from k_init to k_end; at each order projects the
    current map to a functional map and recovers a hard map by
    nearest-neighbor search in the aligned embeddings. The alignment
    residual after each round is recorded; it is diagnostic only (the
    alternation does not guarantee monotone decrease).

    Returns the hard map after the k_end round, plus the energy trace when
    ``return_trace`` is set.
    """
    k_max = min(basis_x.k, basis_y.k)
    ks = _schedule(k_init, k_end, step, k_max)
    pi = pi_init
    trace = []
    for k in ks:
        c = fmap_project(pi, basis_x, basis_y, k_prime=k)
        pi = recover_map(c, basis_x, basis_y, approximate=approximate)
        trace.append(alignment_energy(pi, c, basis_x, basis_y))
    return (pi, trace) if return_trace else pi


def mrs_loss(pi, basis_x, basis_y, k_init, k_end, step=1):
    """Sum of spectral alignment residuals over a truncation schedule.

    At each order k in the schedule the functional map is the projection of
    ``pi`` and the residual ||psi_Y(k) - Pi psi_X(k) C^T||_F^2 is added.
    This is the single unsupervised training objective; it is differentiable
    with respect to the basis gains, the feature transform and the soft map.
    """
    k_max = min(basis_x.k, basis_y.k)
    total = 0.0
    for k in _schedule(k_init, k_end, step, k_max):
        c = fmap_project(pi, basis_x, basis_y, k_prime=k)
        total += alignment_energy(pi, c, basis_x, basis_y)
    return total


# -- serialization ------------------------------------------------------------


def save_hard_map(pi, path, one_based=False):
    """Newline-delimited vertex indices, one per Y-vertex (0-based unless
    ``one_based``), the de-facto correspondence exchange format."""
    if not pi.is_hard:
        raise DimensionMismatchError("only hard maps serialize to index lists")
    offset = 1 if one_based else 0
    with open(path, "w") as fh:
        for i in pi.indices:
            fh.write(f"{i + offset}\n")


def load_hard_map(path, target_size, one_based=False):
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        idx = np.asarray([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"{path}: non-integer correspondence entry") from exc
    if one_based:
        idx = idx - 1
    return PointwiseMap.hard(idx, target_size)


_PMAP_MAGIC = b"PMAP1\0"
_PMAP_HEADER = struct.Struct("<6sHQQ")


def save_soft_map(pi, path):
    """Binary PMAP1 container: magic, u16 version, u64 rows, u64 cols,
    row-major f64 entries."""
    m = pi.dense()
    with open(path, "wb") as fh:
        fh.write(_PMAP_HEADER.pack(_PMAP_MAGIC, 1, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m, "<f8").tobytes())


def load_soft_map(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PMAP_HEADER.size:
        raise ParseError(f"{path}: truncated soft-map file")
    magic, version, rows, cols = _PMAP_HEADER.unpack_from(raw)
    if magic != _PMAP_MAGIC or version != 1:
        raise ParseError(f"{path}: not a PMAP1 file")
    if len(raw) != _PMAP_HEADER.size + 8 * rows * cols:
        raise ParseError(f"{path}: wrong payload size")
    m = (
        np.frombuffer(raw, "<f8", count=rows * cols, offset=_PMAP_HEADER.size)
        .reshape(rows, cols)
        .copy()
    )
    return PointwiseMap.soft(m)
