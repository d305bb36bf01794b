"""Unsupervised joint optimization of basis gains and the feature transform.

The training objective is the multi-resolution spectral loss of the soft
correspondence built from transformed features; gradients are derived by
hand (reverse mode through the column scalings, the spectral projection and
the softmax) and a central finite-difference mode is kept as a permanent
oracle. The eigensystem is a constant of the optimization; only the
diffusion parameters and the transform move.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import InhibitionFilter
from .descriptors import FeatureTransform
from .errors import (
    DimensionMismatchError,
    InvalidRangeError,
    NonFiniteLossError,
)
from .pointwise import _softmax_rows


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``gradient_mode`` is "analytic" (manual reverse mode) or "fd" (central
    finite differences with step ``fd_step``); the two agree to 1e-4
    relative and the second exists as the oracle for the first.
    """

    learning_rate: float = 1e-3
    iterations: int = 100
    alpha: float = 0.07
    k_init: int = 20
    k_end: int = 40
    k_step: int = 10
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gradient_mode: str = "analytic"  # "analytic" | "fd"
    fd_step: float = 1e-5
    bidirectional: bool = False
    shuffle: bool = False
    train_filter: bool = True
    train_transform: bool = True
    transform_dim: int | None = None
    pairs: tuple = ()  # pair names; used by the CLI, not by train()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidRangeError("learning_rate must be positive")
        if self.iterations < 0:
            raise InvalidRangeError("iterations must be >= 0")
        if self.alpha <= 0:
            raise InvalidRangeError("alpha must be positive")
        if not (1 <= self.k_init <= self.k_end) or self.k_step < 1:
            raise InvalidRangeError("invalid truncation schedule")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidRangeError(f"unknown optimizer {self.optimizer!r}")
        if self.gradient_mode not in ("analytic", "fd"):
            raise InvalidRangeError(f"unknown gradient mode {self.gradient_mode!r}")

    def schedule(self):
        ks = list(range(self.k_init, self.k_end + 1, self.k_step))
        if ks[-1] != self.k_end:
            ks.append(self.k_end)
        return ks


@dataclass
class ShapeBundle:
    """Precomputed per-shape inputs of the optimization."""

    mesh: object
    spectrum: object
    features: object  # FeatureSet, raw (before the learnable transform)
    operators: object = None
    name: str = ""


@dataclass
class TrainState:
    """Mutable optimizer state: parameters, moments, history."""

    filter: InhibitionFilter
    transform: FeatureTransform
    iteration: int = 0
    loss_history: list = field(default_factory=list)
    m_t: np.ndarray = None
    v_t: np.ndarray = None
    m_a: np.ndarray = None
    v_a: np.ndarray = None

    @classmethod
    def initial(cls, k, d, d_out=None):
        """Zero diffusion parameters, identity transform, zero moments."""
        t = np.zeros(k)
        a = FeatureTransform.identity(d, d_out)
        return cls(
            filter=InhibitionFilter(t),
            transform=a,
            m_t=np.zeros(k),
            v_t=np.zeros(k),
            m_a=np.zeros(a.shape),
            v_a=np.zeros(a.shape),
        )


def _check_pair(bundle_x, bundle_y):
    if bundle_x.spectrum.k != bundle_y.spectrum.k:
        raise DimensionMismatchError("pair spectra disagree on k")
    if bundle_x.features.d != bundle_y.features.d:
        raise DimensionMismatchError("pair features disagree on d")


def _one_direction(t, a, bundle_x, bundle_y, alpha, ks, want_grads):
    """Loss (and gradients) of the alignment residuals summed over the
    schedule, for the map sending bundle_y vertices onto bundle_x.

    Reverse mode follows the forward graph exactly:
    gains g = exp(-t); transformed features -> row softmax -> soft map P;
    per truncation k: C = diag(1/g_k) (phi_y^T M_y P phi_x)_k diag(g_k) via
    H = B_k W_k, and residual R = psi_y - W_k C^T with W_k = (P phi_x)_k g_k.
    """
    g = np.exp(-t)
    phix = bundle_x.spectrum.phi
    phiy = bundle_y.spectrum.phi
    fx_raw = bundle_x.features.values
    fy_raw = bundle_y.features.values

    fx = fx_raw @ a
    fy = fy_raw @ a
    logits = fy @ fx.T / alpha
    p = _softmax_rows(logits)

    by = (phiy * bundle_y.spectrum.mass[:, None]).T  # (kmax, ny)
    pb = p @ phix                                    # (ny, kmax)

    loss = 0.0
    k_max = phix.shape[1]
    d_pb = np.zeros_like(pb) if want_grads else None
    d_g = np.zeros_like(g) if want_grads else None
    for k in ks:
        if k > k_max:
            raise InvalidRangeError(f"schedule order {k} exceeds basis k={k_max}")
        gk = g[:k]
        psiy = phiy[:, :k] * gk
        wk = pb[:, :k] * gk
        h = by[:k] @ wk
        c = h / gk[:, None]
        r = psiy - wk @ c.T
        loss += float(np.sum(r * r))
        if not want_grads:
            continue
        d_r = 2.0 * r
        d_wk = -(d_r @ c)
        d_c = -(d_r.T @ wk)
        d_h = d_c / gk[:, None]
        d_g[:k] += -np.sum(h * d_c, axis=1) / gk**2
        d_wk += by[:k].T @ d_h
        d_pb[:, :k] += d_wk * gk
        d_g[:k] += np.sum(d_wk * pb[:, :k], axis=0)
        d_g[:k] += np.sum(phiy[:, :k] * d_r, axis=0)

    if not want_grads:
        return loss, None, None

    d_t = -g * d_g
    d_p = d_pb @ phix.T
    d_logits = p * (d_p - np.sum(p * d_p, axis=1, keepdims=True))
    d_fy = d_logits @ fx / alpha
    d_fx = d_logits.T @ fy / alpha
    d_a = fx_raw.T @ d_fx + fy_raw.T @ d_fy
    return loss, d_t, d_a


def _loss_raw(t, a, bundle_x, bundle_y, alpha, ks, bidirectional,
              want_grads=False):
    loss, d_t, d_a = _one_direction(t, a, bundle_x, bundle_y, alpha, ks,
                                    want_grads)
    if bidirectional:
        loss2, d_t2, d_a2 = _one_direction(t, a, bundle_y, bundle_x, alpha,
                                           ks, want_grads)
        loss += loss2
        if want_grads:
            d_t = d_t + d_t2
            d_a = d_a + d_a2
    return loss, d_t, d_a


def pair_loss(state, pair, config):
    """The training loss at the current parameters, without gradients."""
    bundle_x, bundle_y = pair
    _check_pair(bundle_x, bundle_y)
    loss, _, _ = _loss_raw(
        state.filter.times, state.transform.matrix, bundle_x, bundle_y,
        config.alpha, config.schedule(), config.bidirectional,
    )
    return loss


def loss_and_gradient(state, pair, config):
    """Loss plus gradients with respect to every diffusion parameter and
    every transform entry.

    In "fd" mode both gradients are central finite differences of the same
    forward pass; perturbed diffusion parameters may transiently go
    negative, which the loss itself accepts (only the optimizer projects).

    Returns
    -------
    (loss, grad_times, grad_transform)

    Raises
    ------
    NonFiniteLossError
        If the loss or any gradient entry is NaN or infinite.
    """
    bundle_x, bundle_y = pair
    _check_pair(bundle_x, bundle_y)
    t = state.filter.times
    a = state.transform.matrix
    ks = config.schedule()
    args = (bundle_x, bundle_y, config.alpha, ks, config.bidirectional)

    if config.gradient_mode == "analytic":
        loss, d_t, d_a = _loss_raw(t, a, *args[:-1], args[-1], want_grads=True)
    else:
        loss, _, _ = _loss_raw(t, a, *args)
        h = config.fd_step

        def at(t_val, a_val):
            value, _, _ = _loss_raw(t_val, a_val, *args)
            return value

        d_t = np.empty_like(t)
        for i in range(t.size):
            tp, tm = t.copy(), t.copy()
            tp[i] += h
            tm[i] -= h
            d_t[i] = (at(tp, a) - at(tm, a)) / (2 * h)
        d_a = np.empty_like(a)
        for idx in np.ndindex(a.shape):
            ap, am = a.copy(), a.copy()
            ap[idx] += h
            am[idx] -= h
            d_a[idx] = (at(t, ap) - at(t, am)) / (2 * h)

    if not (np.isfinite(loss) and np.isfinite(d_t).all() and np.isfinite(d_a).all()):
        raise NonFiniteLossError("non-finite loss or gradient")
    return loss, d_t, d_a


def _step(state, d_t, d_a, config):
    """One optimizer update followed by projection onto t >= 0."""
    lr = config.learning_rate
    if not config.train_filter:
        d_t = np.zeros_like(d_t)
    if not config.train_transform:
        d_a = np.zeros_like(d_a)
    t = state.filter.times.copy()
    a = state.transform.matrix.copy()
    if config.optimizer == "sgd":
        t -= lr * d_t
        a -= lr * d_a
    else:
        b1, b2, eps = config.beta1, config.beta2, config.eps
        n = state.iteration + 1
        state.m_t = b1 * state.m_t + (1 - b1) * d_t
        state.v_t = b2 * state.v_t + (1 - b2) * d_t**2
        state.m_a = b1 * state.m_a + (1 - b1) * d_a
        state.v_a = b2 * state.v_a + (1 - b2) * d_a**2
        mhat_t = state.m_t / (1 - b1**n)
        vhat_t = state.v_t / (1 - b2**n)
        mhat_a = state.m_a / (1 - b1**n)
        vhat_a = state.v_a / (1 - b2**n)
        t -= lr * mhat_t / (np.sqrt(vhat_t) + eps)
        a -= lr * mhat_a / (np.sqrt(vhat_a) + eps)
    t = np.maximum(t, 0.0)
    state.filter = InhibitionFilter(t)
    state.transform = FeatureTransform(a)
    state.iteration += 1


def train(pairs, config):
    """Run the optimizer over a list of (bundle_x, bundle_y) pairs.

    Pairs are visited round-robin in list order (optionally reshuffled each
    epoch under the seed). Diffusion parameters are projected to >= 0 after
    every step. The returned state carries the full loss history; the run
    is deterministic for a fixed config and seed.

    Raises
    ------
    NonFiniteLossError
        Aborts with the offending iteration index attached.
    """
    if not pairs:
        raise InvalidRangeError("need at least one training pair")
    for pair in pairs:
        _check_pair(*pair)
    k = pairs[0][0].spectrum.k
    d = pairs[0][0].features.d
    state = TrainState.initial(k, d, config.transform_dim)
    if config.k_end > k:
        raise InvalidRangeError(
            f"schedule end {config.k_end} exceeds spectrum order {k}"
        )

    rng = np.random.default_rng(config.seed)
    order = np.arange(len(pairs))
    for it in range(config.iterations):
        slot = it % len(pairs)
        if slot == 0 and config.shuffle:
            order = rng.permutation(len(pairs))
        pair = pairs[order[slot]]
        try:
            loss, d_t, d_a = loss_and_gradient(state, pair, config)
        except NonFiniteLossError as exc:
            raise NonFiniteLossError(str(exc), iteration=it) from exc
        _step(state, d_t, d_a, config)
        state.loss_history.append(loss)
    return state


def inhibition_profile(state):
    """The learned gains in index order, as (index, gain) pairs."""
    return [(i, float(gain)) for i, gain in enumerate(state.filter.gains)]


def quartile_gain_means(gains):
    """Mean gain over the bottom and top quarter of basis indices.

    Training on deformed pairs is expected to attenuate high-frequency
    components more, i.e. top-quartile mean <= bottom-quartile mean.
    """
    gains = np.asarray(gains, dtype=np.float64)
    q = max(1, len(gains) // 4)
    return float(gains[:q].mean()), float(gains[-q:].mean())
