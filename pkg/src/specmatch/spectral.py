"""Truncated Laplacian eigensystems and spectral filtering primitives.

The generalized eigenproblem (stiffness, mass) is solved for the k
algebraically smallest pairs. Eigenvectors are mass-orthonormal and their
signs are fixed (largest-magnitude entry positive) so repeated runs and
cache files are bit-stable. Spectral convolution, heat diffusion and
explicit diagonal gains are all the same operation with different scalar
filters; when the input signal is the basis itself the projection step is
the identity and is skipped, which makes that identity hold exactly in
floating point.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    FirstEigenvalueError,
    ParseError,
)

DEFAULT_RESIDUAL_TOL = 1e-10

# ARPACK start vector seed; fixed so eigendecompose is deterministic.
_V0_SEED = 1957


def scale_columns(matrix, gains):
    """matrix @ diag(gains), written once so every caller shares the
    exact floating-point expression."""
    return matrix * gains[np.newaxis, :]


@dataclass(frozen=True)
class Spectrum:
    """The first k generalized eigenpairs of (stiffness, mass).

    Attributes
    ----------
    phi : ndarray, shape (n, k)
        Mass-orthonormal eigenfunctions, ascending eigenvalue order.
    eigenvalues : ndarray, shape (k,)
        Nonnegative, nondecreasing; the first is ~0 on a connected mesh.
    mass : ndarray, shape (n,)
        Diagonal of the mass matrix the basis is orthonormal against.
    mesh_hash : str
        Content hash of the originating mesh (cache key component).
    residual_tol : float
        Residual tolerance the solver was run at.
    """

    phi: np.ndarray
    eigenvalues: np.ndarray
    mass: np.ndarray
    mesh_hash: str = ""
    residual_tol: float = DEFAULT_RESIDUAL_TOL

    @property
    def k(self):
        return self.phi.shape[1]

    @property
    def vertex_count(self):
        return self.phi.shape[0]

    @property
    def pinv(self):
        """phi^T M, the closed-form pseudoinverse of the basis, (k, n)."""
        return (self.phi * self.mass[:, None]).T

    def project(self, signal):
        """Coefficients of a vertex signal in this basis, (k, d)."""
        return self.pinv @ signal

    def synthesize(self, coefficients):
        """Vertex signal from basis coefficients, (n, d)."""
        return self.phi @ coefficients


def _fix_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[np.newaxis, :]


def eigendecompose(ops, k, residual_tol=DEFAULT_RESIDUAL_TOL):
    """First k generalized eigenpairs of (stiffness, mass).

    Uses shift-invert Lanczos (ARPACK) for large problems and a dense
    solver when k is close to the matrix size or the mesh is small; the
    contract (k smallest pairs, mass-orthonormal, deterministic signs) is
    identical either way.

    Parameters
    ----------
    ops : Operators
    k : int
        1 <= k <= vertex count. k equal to the vertex count yields the
        complete basis (needed for exact map recovery on tiny meshes).
    residual_tol : float
        Maximum accepted relative eigen-residual; recorded in caches.

    Raises
    ------
    FirstEigenvalueError
        If the mesh is disconnected (zero eigenvalue multiplicity > 1).
    ConvergenceError
        If the solver fails or residuals exceed tolerance.
    """
    n = ops.vertex_count
    if not 1 <= k <= n:
        raise DimensionMismatchError(f"k={k} out of range [1, {n}]")
    if ops.mesh.connected_component_count() > 1:
        raise FirstEigenvalueError(
            "mesh is disconnected: zero eigenvalue has multiplicity > 1"
        )

    S = ops.stiffness.tocsc()
    m = ops.mass
    use_dense = n <= 64 or k >= n - 1 or 2 * k + 1 >= n
    if use_dense:
        vals, vecs = scipy.linalg.eigh(
            S.toarray(), np.diag(m), subset_by_index=[0, k - 1]
        )
    else:
        rng = np.random.default_rng(_V0_SEED)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = spla.eigsh(
                S, k=k, M=sp.diags(m).tocsc(), sigma=-1e-8, which="LM", v0=v0,
                tol=0,
            )
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigensolver failed to converge: {exc}") from exc

    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    vals = np.maximum(vals, 0.0)  # clip -1e-14 style noise on the null mode
    vecs = _fix_signs(vecs)

    # residual check, relative to the operator scale
    scale = max(abs(S).max(), 1e-30)
    res = S @ vecs - (m[:, None] * vecs) * vals[np.newaxis, :]
    rel = np.linalg.norm(res, axis=0) / (scale * np.linalg.norm(vecs, axis=0))
    if rel.max() > max(residual_tol, 1e3 * np.finfo(np.float64).eps):
        raise ConvergenceError(
            f"eigen-residual {rel.max():.3e} exceeds tolerance {residual_tol:.1e}"
        )
    return Spectrum(
        phi=np.ascontiguousarray(vecs),
        eigenvalues=vals,
        mass=m,
        mesh_hash=ops.mesh.content_hash(),
        residual_tol=residual_tol,
    )


# -- scalar filters ---------------------------------------------------------


class SpectralFilter:
    """A scalar gain function of the eigenvalue."""

    def gains(self, eigenvalues):
        raise NotImplementedError


@dataclass(frozen=True)
class PolynomialFilter(SpectralFilter):
    """f(x) = sum_j coefficients[j] * x**j."""

    coefficients: tuple

    def gains(self, eigenvalues):
        out = np.zeros_like(eigenvalues)
        for c in reversed(self.coefficients):
            out = out * eigenvalues + c
        return out


@dataclass(frozen=True)
class HeatFilter(SpectralFilter):
    """f(x) = exp(-time * x); classical heat diffusion."""

    time: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("diffusion time must be nonnegative")

    def gains(self, eigenvalues):
        return np.exp(-self.time * eigenvalues)


@dataclass(frozen=True)
class DiagonalGainFilter(SpectralFilter):
    """Explicit per-index gains, independent of the eigenvalues."""

    values: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64)
        )

    def gains(self, eigenvalues):
        if self.values.shape[0] != eigenvalues.shape[0]:
            raise DimensionMismatchError(
                f"{self.values.shape[0]} gains for {eigenvalues.shape[0]} eigenvalues"
            )
        return self.values


def spectral_convolve(spec, filt, signal):
    """Filter a vertex signal through the spectral basis.

    Computes phi . diag(f(lambda)) . phi^T M . signal. If ``signal`` is
    the basis matrix itself the projection is the identity and is skipped,
    so filtering the basis returns exactly phi * gains.

    Parameters
    ----------
    spec : Spectrum
    filt : SpectralFilter
    signal : ndarray, shape (n,) or (n, d)
    """
    signal = np.asarray(signal, dtype=np.float64)
    squeeze = signal.ndim == 1
    if squeeze:
        signal = signal[:, None]
    if signal.shape[0] != spec.vertex_count:
        raise DimensionMismatchError(
            f"signal has {signal.shape[0]} rows, mesh has {spec.vertex_count}"
        )
    g = filt.gains(spec.eigenvalues)
    if signal.shape == spec.phi.shape and (
        signal is spec.phi or np.array_equal(signal, spec.phi)
    ):
        out = scale_columns(spec.phi, g)
    else:
        out = spec.phi @ (g[:, None] * (spec.pinv @ signal))
    return out[:, 0] if squeeze else out


def heat_diffuse(spec, t, signal):
    """Heat diffusion for time t >= 0; t = 0 gives the band-limited
    projection of the signal onto the basis span."""
    return spectral_convolve(spec, HeatFilter(t), signal)


# -- disk cache -------------------------------------------------------------

_CACHE_MAGIC = b"SPEC1\0"
_CACHE_VERSION = 1
_HEADER = struct.Struct("<6sH32sQQd")


def save_spectrum(spec, path):
    """Write a Spectrum to the little-endian SPEC1 container.

    Layout: magic "SPEC1\\0", u16 version, 32-byte mesh hash, u64 vertex
    count, u64 k, f64 residual tolerance, then k eigenvalues (f64) and the
    row-major (n, k) eigenfunction matrix (f64).
    """
    header = _HEADER.pack(
        _CACHE_MAGIC,
        _CACHE_VERSION,
        bytes.fromhex(spec.mesh_hash),
        spec.vertex_count,
        spec.k,
        spec.residual_tol,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.eigenvalues, "<f8").tobytes())
        fh.write(np.ascontiguousarray(spec.phi, "<f8").tobytes())


def load_spectrum(path, ops):
    """Read a SPEC1 container and bind it to the operators of its mesh.

    Raises ParseError if the file is malformed or if the stored mesh hash
    does not match ``ops.mesh``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated spectrum cache")
    magic, version, mesh_hash, n, k, tol = _HEADER.unpack_from(raw)
    if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
        raise ParseError(f"{path}: not a SPEC1 cache")
    expected = _HEADER.size + 8 * k + 8 * n * k
    if len(raw) != expected:
        raise ParseError(f"{path}: wrong payload size")
    if mesh_hash.hex() != ops.mesh.content_hash():
        raise ParseError(f"{path}: cache does not match this mesh")
    vals = np.frombuffer(raw, "<f8", count=k, offset=_HEADER.size).copy()
    phi = (
        np.frombuffer(raw, "<f8", count=n * k, offset=_HEADER.size + 8 * k)
        .reshape(n, k)
        .copy()
    )
    return Spectrum(
        phi=phi,
        eigenvalues=vals,
        mass=ops.mass,
        mesh_hash=mesh_hash.hex(),
        residual_tol=tol,
    )
