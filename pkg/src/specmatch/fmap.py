"""Functional maps over gain-adapted bases: solver, projection, energies.

Direction convention, fixed artifact-wide: a pointwise map assigns each
vertex of shape Y a vertex of shape X (a (|V_Y|, |V_X|) row-stochastic or
one-hot matrix), and the functional map C transports X-basis coefficients
to Y-basis coefficients, so C . (coefficients of F_X) matches the
coefficients of F_Y. Under that convention the least-squares solver and
the projection pinv_Y . Pi . psi_X compute the same object on instances
where the pointwise map transports the features exactly.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ParseError, SingularSystemError

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FunctionalMap:
    """A k' x k' coefficient-transport matrix with a direction tag."""

    C: np.ndarray
    direction: str = "X->Y"

    def __post_init__(self):
        c = np.ascontiguousarray(self.C, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatchError("functional map must be square")
        if not np.isfinite(c).all():
            raise SingularSystemError("functional map has non-finite entries")
        object.__setattr__(self, "C", c)

    @property
    def k(self):
        return self.C.shape[0]


def fmap_solve(f_x, f_y, basis_x, basis_y, lam_x, lam_y, lam_reg=1e-3,
               k_prime=None, direction="X->Y"):
    """Least-squares functional map from per-vertex features.

    Minimizes ||C A - B||_F^2 + lam_reg ||C diag(lam_x) - diag(lam_y) C||_F^2
    with A the X-basis coefficients of the X features and B the Y-basis
    coefficients of the Y features. The commutativity penalty decouples by
    row: row i solves (A A^T + lam_reg D_i) c_i = A b_i with
    D_i = diag((lam_x - lam_y[i])^2).

    Parameters
    ----------
    f_x, f_y : FeatureSet
        Must have the same feature dimension.
    basis_x, basis_y : LearnableBasis
    lam_x, lam_y : ndarray
        Eigenvalues of the two shapes (length >= k_prime).
    lam_reg : float
        Commutativity weight; 0 disables the penalty.
    k_prime : int, optional
        Truncation order; defaults to the full basis order.

    Raises
    ------
    SingularSystemError
        If a row system has condition number above 1e12. With lam_reg = 0
        this requires the source coefficient matrix to have full rank
        k_prime (feature dimension >= truncation order); the penalty only
        regularizes rows whose eigenvalue differs from the source spectrum.
    """
    if f_x.d != f_y.d:
        raise DimensionMismatchError(
            f"feature dimensions differ: {f_x.d} vs {f_y.d}"
        )
    kp = min(basis_x.k, basis_y.k) if k_prime is None else int(k_prime)
    a = basis_x.pinv_k(kp) @ f_x.values  # (kp, d) source coefficients
    b = basis_y.pinv_k(kp) @ f_y.values  # (kp, d) target coefficients
    lam_x = np.asarray(lam_x, dtype=np.float64)[:kp]
    lam_y = np.asarray(lam_y, dtype=np.float64)[:kp]

    gram = a @ a.T
    rhs = a @ b.T  # column i is A b_i
    if lam_reg == 0.0:
        _check_condition(gram)
        c = np.linalg.solve(gram, rhs).T
    else:
        c = np.empty((kp, kp))
        for i in range(kp):
            system = gram + lam_reg * np.diag((lam_x - lam_y[i]) ** 2)
            _check_condition(system)
            c[i] = np.linalg.solve(system, rhs[:, i])
    return FunctionalMap(c, direction)


def _check_condition(system):
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(
            f"row system condition {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )


def fmap_project(pi, basis_x, basis_y, k_prime=None, direction="X->Y"):
    """Functional map by spectral projection of a pointwise map:
    pinv_Y(k') . Pi . psi_X(k').

    Parameters
    ----------
    pi : PointwiseMap
        Assigns X-vertices to Y-vertices ((|V_Y|, |V_X|) shaped).
    basis_x, basis_y : LearnableBasis
    k_prime : int, optional
        Truncation order; defaults to the full basis order.
    """
    kp = min(basis_x.k, basis_y.k) if k_prime is None else int(k_prime)
    if pi.target_size != basis_x.vertex_count:
        raise DimensionMismatchError(
            f"map targets {pi.target_size} vertices, X basis has "
            f"{basis_x.vertex_count}"
        )
    if pi.source_size != basis_y.vertex_count:
        raise DimensionMismatchError(
            f"map has {pi.source_size} rows, Y basis has {basis_y.vertex_count}"
        )
    c = basis_y.pinv_k(kp) @ pi.pull(basis_x.psi_k(kp))
    return FunctionalMap(c, direction)


def energy_bijectivity(c_xy, c_yx):
    """||C_xy C_yx - I||_F^2; zero when the two maps invert each other."""
    if c_xy.k != c_yx.k:
        raise DimensionMismatchError("truncation orders differ")
    r = c_xy.C @ c_yx.C - np.eye(c_xy.k)
    return float(np.sum(r * r))


def energy_orthogonality(c):
    """||C C^T - I||_F^2; zero for orthonormal maps."""
    r = c.C @ c.C.T - np.eye(c.k)
    return float(np.sum(r * r))


def energy_coupling(c, pi, basis_x, basis_y):
    """||C - pinv_Y Pi psi_X||_F^2 at the truncation of C; zero when C is
    exactly the projection of the pointwise map."""
    proj = fmap_project(pi, basis_x, basis_y, k_prime=c.k)
    r = c.C - proj.C
    return float(np.sum(r * r))


# -- serialization ------------------------------------------------------------

_FMAP_MAGIC = b"FMAP1\0"
_FMAP_HEADER = struct.Struct("<6sHQH")


def save_fmap(fm, path):
    """Little-endian FMAP1 container: magic, u16 version, u64 k', u16
    direction length, direction UTF-8, row-major f64 entries."""
    tag = fm.direction.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_FMAP_HEADER.pack(_FMAP_MAGIC, 1, fm.k, len(tag)))
        fh.write(tag)
        fh.write(np.ascontiguousarray(fm.C, "<f8").tobytes())


def load_fmap(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FMAP_HEADER.size:
        raise ParseError(f"{path}: truncated functional-map file")
    magic, version, k, taglen = _FMAP_HEADER.unpack_from(raw)
    if magic != _FMAP_MAGIC or version != 1:
        raise ParseError(f"{path}: not an FMAP1 file")
    off = _FMAP_HEADER.size
    tag = raw[off:off + taglen].decode("utf-8")
    off += taglen
    if len(raw) != off + 8 * k * k:
        raise ParseError(f"{path}: wrong payload size")
    c = np.frombuffer(raw, "<f8", count=k * k, offset=off).reshape(k, k).copy()
    return FunctionalMap(c, tag)
