"""Gain-adapted spectral bases.

The adaptable basis scales each eigenfunction by a per-index gain
g_i = exp(-t_i) with t_i >= 0, so every gain lies in (0, 1] and the basis
starts as the plain eigenbasis when all t_i are zero. Because the gains are
a positive diagonal, the pseudoinverse stays closed-form
(diag(1/g) . phi^T M), mutual mass-orthogonality of the columns is kept,
and each column keeps the sign pattern of the eigenfunction it scales.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, GainUnderflowError
from .spectral import scale_columns

# Gains below this would overflow the pseudoinverse.
MIN_GAIN = 1e-300


@dataclass(frozen=True)
class InhibitionFilter:
    """Per-index diffusion parameters t >= 0 with gains g = exp(-t).

    ``times`` is the learnable vector; nonnegativity is the invariant that
    keeps every gain in (0, 1].
    """

    times: np.ndarray = field()

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        if t.ndim != 1:
            raise DimensionMismatchError("diffusion parameters must be a vector")
        if not np.isfinite(t).all() or (t < 0).any():
            raise ValueError("diffusion parameters must be finite and >= 0")
        object.__setattr__(self, "times", t)

    @classmethod
    def identity(cls, k):
        """All-zero parameters: gains are identically 1."""
        return cls(np.zeros(k))

    @property
    def k(self):
        return self.times.shape[0]

    @property
    def gains(self):
        return np.exp(-self.times)

    def to_json(self, spectrum_hash=""):
        return json.dumps(
            {
                "k": self.k,
                "spectrum_hash": spectrum_hash,
                "diffusion_times": self.times.tolist(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        filt = cls(np.asarray(data["diffusion_times"], dtype=np.float64))
        if filt.k != data.get("k", filt.k):
            raise DimensionMismatchError("filter JSON is inconsistent")
        return filt, data.get("spectrum_hash", "")


class LearnableBasis:
    """An eigenbasis with per-column gains and its closed-form pseudoinverse.

    Attributes
    ----------
    psi : ndarray, shape (n, k)
        Column i is gains[i] * phi[:, i].
    pinv : ndarray, shape (k, n)
        Row i is phi[:, i]^T M / gains[i]; materialized lazily since the
        multi-resolution operations mostly use truncated slices.
    """

    def __init__(self, spectrum, filt):
        if filt.k != spectrum.k:
            raise DimensionMismatchError(
                f"filter has {filt.k} gains, spectrum has k={spectrum.k}"
            )
        gains = filt.gains
        if (gains < MIN_GAIN).any():
            raise GainUnderflowError(
                "a gain is below 1e-300; the pseudoinverse would overflow"
            )
        self.spectrum = spectrum
        self.filter = filt
        self.gains = gains
        self.psi = scale_columns(spectrum.phi, gains)
        self._pinv = None

    @property
    def k(self):
        return self.psi.shape[1]

    @property
    def vertex_count(self):
        return self.psi.shape[0]

    @property
    def mass(self):
        return self.spectrum.mass

    @property
    def eigenvalues(self):
        return self.spectrum.eigenvalues

    @property
    def pinv(self):
        if self._pinv is None:
            self._pinv = self.spectrum.pinv / self.gains[:, None]
        return self._pinv

    def psi_k(self, k):
        """Leading-k columns of the basis (rank-k truncation)."""
        self._check_truncation(k)
        return self.psi[:, :k]

    def pinv_k(self, k):
        """Leading-k rows of the pseudoinverse."""
        self._check_truncation(k)
        return self.pinv[:k, :]

    def _check_truncation(self, k):
        if not 1 <= k <= self.k:
            raise DimensionMismatchError(f"truncation {k} out of range [1, {self.k}]")


def make_basis(spec, filt):
    """Build the gain-scaled basis for one spectrum.

    With all-zero parameters this returns the plain eigenbasis; the output
    equals filtering the basis through a diagonal-gain spectral filter
    bit-for-bit (both share the same column-scaling expression).
    """
    return LearnableBasis(spec, filt)


def shared_filter_pair(spec_x, spec_y, filt):
    """Bases for two shapes driven by one shared set of gains."""
    if spec_x.k != spec_y.k:
        raise DimensionMismatchError(
            f"spectra disagree on k: {spec_x.k} vs {spec_y.k}"
        )
    return make_basis(spec_x, filt), make_basis(spec_y, filt)


def mass_norm_sq(signal, mass):
    """Squared mass-weighted norm tr(X^T M X) of a vertex signal."""
    signal = np.atleast_2d(np.asarray(signal, dtype=np.float64).T).T
    return float(np.einsum("ij,i,ij->", signal, mass, signal))


def mass_norm_decomposition(basis, signal):
    """Split the squared mass norm of a signal into in-span and residual parts.

    Returns (total, in_span, out_of_span) where:

    * total       = ||X||^2_M,
    * in_span     = ||G . pinv(X)||^2_F, the energy captured by the basis,
    * out_of_span = ||(I - psi pinv) X||^2_M, the subspace penalty.

    The three satisfy total = in_span + out_of_span because psi pinv is the
    M-orthogonal projector onto the basis span.
    """
    signal = np.atleast_2d(np.asarray(signal, dtype=np.float64).T).T
    coeff = basis.pinv @ signal
    in_span = float(np.sum((basis.gains[:, None] * coeff) ** 2))
    residual = signal - basis.psi @ coeff
    out_of_span = mass_norm_sq(residual, basis.mass)
    return mass_norm_sq(signal, basis.mass), in_span, out_of_span
