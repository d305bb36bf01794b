"""Per-vertex spectral descriptors and the learnable linear feature transform.

Heat- and wave-kernel signatures are the handcrafted features driving the
matching pipeline; raw coordinates are available for synthetic pairs whose
geometry stays spatially aligned. A d x d' weight matrix can be applied on
top and learned jointly with the basis gains.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DeadChannelError, DimensionMismatchError


class FeatureKind(Enum):
    HKS = "hks"
    WKS = "wks"
    XYZ = "xyz"
    TRANSFORMED = "transformed"


@dataclass(frozen=True)
class FeatureSet:
    """A (n, d) matrix of per-vertex descriptors."""

    values: np.ndarray
    kind: FeatureKind

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatchError("feature values must be (n, d)")
        if not np.isfinite(v).all():
            raise DeadChannelError("feature values contain NaN or Inf")
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def vertex_count(self):
        return self.values.shape[0]

    def validate(self):
        """Raise DeadChannelError if any column has zero variance."""
        var = self.values.var(axis=0)
        if (var <= 0.0).any():
            dead = int(np.flatnonzero(var <= 0.0)[0])
            raise DeadChannelError(f"feature column {dead} has zero variance")
        return self


def _m_normalize_columns(values, mass):
    """Scale each column to unit mass-weighted L2 norm (zero columns kept)."""
    norms = np.sqrt(np.einsum("ij,i,ij->j", values, mass, values))
    norms[norms == 0.0] = 1.0
    return values / norms[np.newaxis, :]


def hks(spec, times):
    """Heat kernel signature at the given diffusion times.

    Column t is sum_i exp(-t * lambda_i) * phi[:, i]^2, mass-normalized.

    Parameters
    ----------
    spec : Spectrum
    times : sequence of positive scalars, ascending
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0 or (times <= 0).any():
        raise ValueError("times must be nonempty and positive")
    if (np.diff(times) < 0).any():
        raise ValueError("times must be ascending")
    decay = np.exp(-np.outer(spec.eigenvalues, times))  # (k, d)
    values = spec.phi**2 @ decay
    return FeatureSet(_m_normalize_columns(values, spec.mass), FeatureKind.HKS)


def hks_default_times(spec, count=16):
    """Log-spaced times spanning the resolvable scales of the spectrum."""
    lam = spec.eigenvalues
    lo = 4.0 * np.log(10.0) / lam[-1]
    hi = 4.0 * np.log(10.0) / max(lam[1], 1e-12)
    return np.geomspace(lo, hi, count)


def wks(spec, energies, sigma):
    """Wave kernel signature at the given log-energy values.

    Column e is a convex combination sum_i w_i(e) * phi[:, i]^2 with
    Gaussian weights w_i(e) ~ exp(-(e - log lambda_i)^2 / (2 sigma^2))
    normalized to sum to one; the zero eigenvalue is excluded. Columns are
    mass-normalized like the heat signature.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if energies.size == 0:
        raise ValueError("energies must be nonempty")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    values = _wks_raw(spec, energies, sigma)
    return FeatureSet(_m_normalize_columns(values, spec.mass), FeatureKind.WKS)


def _wks_raw(spec, energies, sigma):
    lam = spec.eigenvalues
    keep = lam > 1e-12 * max(lam[-1], 1.0)
    log_lam = np.log(lam[keep])
    exponent = -((energies[:, None] - log_lam[None, :]) ** 2) / (2 * sigma**2)
    # shift per energy so the largest weight is 1 (energies far outside the
    # spectrum would otherwise underflow every weight to zero)
    weights = np.exp(exponent - exponent.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    return spec.phi[:, keep] ** 2 @ weights.T


def wks_default_energies(spec, count=16, overshoot=7.0):
    """Evenly spaced log energies inside the spectrum, plus the matching
    Gaussian width (the classic count-scaled spacing)."""
    lam = spec.eigenvalues
    lam1 = max(lam[1], 1e-12)
    e_min, e_max = np.log(lam1), np.log(lam[-1])
    delta = (e_max - e_min) / count
    sigma = overshoot * delta
    energies = np.linspace(e_min + 2 * sigma, e_max - 2 * sigma, count)
    return energies, sigma


def xyz_features(mesh, mass=None, standardize=True):
    """Raw vertex coordinates as a 3-channel feature set.

    With ``standardize`` each channel is centered and scaled to unit
    variance under the mass weights, so dot-product similarities are on a
    comparable scale across meshes.
    """
    values = mesh.vertices.copy()
    if standardize:
        if mass is None:
            w = np.full(mesh.vertex_count, 1.0 / mesh.vertex_count)
        else:
            w = mass / mass.sum()
        mean = w @ values
        values = values - mean
        std = np.sqrt(w @ values**2)
        std[std == 0.0] = 1.0
        values = values / std
    return FeatureSet(values, FeatureKind.XYZ)


@dataclass(frozen=True)
class FeatureTransform:
    """A learnable d x d' weight matrix applied on the right of features."""

    matrix: np.ndarray = field()

    def __post_init__(self):
        a = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionMismatchError("transform must be a matrix")
        if not np.isfinite(a).all():
            raise ValueError("transform has non-finite entries")
        if a.shape[1] > a.shape[0]:
            raise DimensionMismatchError(
                f"transform widens features: {a.shape[0]} -> {a.shape[1]}"
            )
        object.__setattr__(self, "matrix", a)

    @classmethod
    def identity(cls, d, d_out=None):
        """Identity (padded with zero rows when d_out < d)."""
        d_out = d if d_out is None else d_out
        return cls(np.eye(d, d_out))

    @property
    def shape(self):
        return self.matrix.shape


def apply_transform(features, transform):
    """features @ transform, validated against dead output channels."""
    if features.d != transform.shape[0]:
        raise DimensionMismatchError(
            f"features have d={features.d}, transform expects {transform.shape[0]}"
        )
    out = FeatureSet(features.values @ transform.matrix, FeatureKind.TRANSFORMED)
    return out.validate()
