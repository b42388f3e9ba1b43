"""Measurement-plus-estimator autoencoder with hand-written gradients.

Samples are real-stacked: a complex length-N vector ``z`` is stored as
``[z.real, z.imag]`` (length 2N), one sample per row. The encoder computes
``y = W_BB W_RF B x`` and the decoder is

    BN -> FC(8N) -> ReLU -> BN -> FC(4N) -> ReLU -> BN -> FC(2N)

acting on the real-stacked ``y`` (width 2R).

Complex gradients are carried as ``dL/dRe + 1j * dL/dIm``; with that
convention the gradient of ``y = A v`` is ``A^H g`` w.r.t. ``v`` and
``g v^H`` w.r.t. ``A``.
"""

from dataclasses import dataclass, field

import numpy as np

from ..channel import angular_basis, conjugate_recover
from ..measurement import AnalogMatrix, MeasurementConfig
from ..rng import INIT, stream

N_HIDDEN = 3
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9

ENCODER_PARAMS = ("wrf_phases", "wbb_weights")


def param_order():
    names = list(ENCODER_PARAMS)
    for i in range(1, N_HIDDEN + 1):
        names += [f"bn{i}.scale", f"bn{i}.shift", f"fc{i}.weight", f"fc{i}.bias"]
    return names


@dataclass
class AutoencoderModel:
    """Trainable measurement matrix and channel estimator.

    ``params`` holds every trainable array by name (see ``param_order``);
    ``running`` holds BN running statistics; ``b_weights`` is the frozen
    ``(N, N, 2)`` basis.
    """

    n: int
    r: int
    b_weights: np.ndarray
    params: dict
    running: dict
    bn_epsilon: float = BN_EPSILON
    bn_momentum: float = BN_MOMENTUM
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return self.params["fc1.weight"].dtype

    @property
    def wrf_phases(self):
        return self.params["wrf_phases"]

    @property
    def wbb_weights(self):
        return self.params["wbb_weights"]

    def fc_widths(self):
        return [self.params[f"fc{i}.weight"].shape[1] for i in range(1, N_HIDDEN + 1)]

    def copy(self):
        return AutoencoderModel(
            n=self.n,
            r=self.r,
            b_weights=self.b_weights.copy(),
            params={k: v.copy() for k, v in self.params.items()},
            running={k: v.copy() for k, v in self.running.items()},
            bn_epsilon=self.bn_epsilon,
            bn_momentum=self.bn_momentum,
            meta=dict(self.meta),
        )

    def astype(self, dtype):
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in m.params.items()}
        m.running = {k: v.astype(dtype) for k, v in m.running.items()}
        return m


def _complex_dtype(dtype):
    return np.complex64 if np.dtype(dtype) == np.float32 else np.complex128


def _xavier_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(N, R, seed, encoder_init, dtype=np.float64):
    """Build a model whose encoder starts at ``encoder_init``.

    Decoder weights are Xavier-uniform, biases zero, BN scale 1 / shift 0
    with running mean 0 and variance 1.
    """
    if encoder_init.N != N or encoder_init.R != R:
        raise ValueError(
            f"encoder_init is {encoder_init.R}x{encoder_init.N}, model is {R}x{N}"
        )
    B = angular_basis(N).b
    b_weights = np.stack([B.real, B.imag], axis=-1)
    w_bb = np.asarray(encoder_init.w_bb, dtype=complex)
    params = {
        "wrf_phases": np.array(encoder_init.w_rf.phases, dtype=float),
        "wbb_weights": np.stack([w_bb.real, w_bb.imag], axis=-1),
    }
    running = {}
    rng = stream(seed, INIT)
    widths = [2 * R, 8 * N, 4 * N, 2 * N]
    for i in range(1, N_HIDDEN + 1):
        fan_in, fan_out = widths[i - 1], widths[i]
        params[f"bn{i}.scale"] = np.ones(fan_in)
        params[f"bn{i}.shift"] = np.zeros(fan_in)
        params[f"fc{i}.weight"] = _xavier_uniform(rng, fan_in, fan_out)
        params[f"fc{i}.bias"] = np.zeros(fan_out)
        running[f"bn{i}.mean"] = np.zeros(fan_in)
        running[f"bn{i}.var"] = np.ones(fan_in)
    model = AutoencoderModel(
        n=N, r=R, b_weights=b_weights, params={k: params[k] for k in param_order()},
        running=running, meta={"seed": int(seed)},
    )
    return model.astype(dtype)


# --------------------------------------------------------------------------
# Encoder


def encoder_matrices(model):
    """``(B, W_RF, W_BB)`` as complex arrays in the model's precision."""
    cdt = _complex_dtype(model.dtype)
    B = (model.b_weights[..., 0] + 1j * model.b_weights[..., 1]).astype(cdt)
    w_rf = (np.exp(1j * model.wrf_phases) / np.sqrt(model.n)).astype(cdt)
    wbb = model.wbb_weights
    w_bb = (wbb[..., 0] + 1j * wbb[..., 1]).astype(cdt)
    return B, w_rf, w_bb


def measurement_matrix(model):
    B, w_rf, w_bb = encoder_matrices(model)
    return w_bb @ w_rf @ B


def _check_width(a, width, what):
    if a.ndim != 2 or a.shape[1] != width:
        raise ValueError(f"{what} must have shape (batch, {width}), got {a.shape}")


def encoder_forward(model, x_noisy, cache=None):
    """Real-stacked ``y = W_BB W_RF B x`` for a batch of angular inputs."""
    x_noisy = np.asarray(x_noisy)
    _check_width(x_noisy, 2 * model.n, "encoder input")
    n = model.n
    B, w_rf, w_bb = encoder_matrices(model)
    xc = x_noisy[:, :n] + 1j * x_noisy[:, n:]
    u = xc @ B.T
    v = u @ w_rf.T
    y = v @ w_bb.T
    if cache is not None:
        cache.update(u=u, v=v, w_rf=w_rf, w_bb=w_bb)
    return np.concatenate([y.real, y.imag], axis=1)


def _encoder_backward(model, g_y, cache):
    r = model.r
    G_y = g_y[:, :r] + 1j * g_y[:, r:]
    w_rf, w_bb = cache["w_rf"], cache["w_bb"]
    G_wbb = G_y.T @ cache["v"].conj()
    G_v = G_y @ w_bb.conj()
    G_wrf = G_v.T @ cache["u"].conj()
    # W = e^{j phi}/sqrt(N): dL/dphi = Re(conj(G_W) * j W)
    g_phase = G_wrf.imag * w_rf.real - G_wrf.real * w_rf.imag
    return {
        "wrf_phases": g_phase.astype(model.dtype),
        "wbb_weights": np.stack([G_wbb.real, G_wbb.imag], axis=-1).astype(model.dtype),
    }


# --------------------------------------------------------------------------
# Decoder


def decoder_forward(model, y, mode="infer", cache=None, update_running=True):
    """Map real-stacked observations (batch, 2R) to estimates (batch, 2N).

    In ``"train"`` mode BN normalizes with batch statistics and, unless
    ``update_running`` is false, folds them into the running averages;
    ``"infer"`` mode uses the running averages only.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    for i in range(1, N_HIDDEN + 1):
        if f"bn{i}.mean" not in model.running or f"fc{i}.weight" not in model.params:
            raise ValueError("model is not initialized")
    h = np.asarray(y, dtype=model.dtype)
    _check_width(h, 2 * model.r, "decoder input")
    p, eps = model.params, model.bn_epsilon
    for i in range(1, N_HIDDEN + 1):
        if mode == "train":
            mean = h.mean(axis=0)
            var = h.var(axis=0)
            if update_running:
                mom = model.bn_momentum
                model.running[f"bn{i}.mean"] = mom * model.running[f"bn{i}.mean"] + (1 - mom) * mean
                model.running[f"bn{i}.var"] = mom * model.running[f"bn{i}.var"] + (1 - mom) * var
        else:
            mean = model.running[f"bn{i}.mean"]
            var = model.running[f"bn{i}.var"]
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (h - mean) * inv_std
        a = xhat * p[f"bn{i}.scale"] + p[f"bn{i}.shift"]
        z = a @ p[f"fc{i}.weight"] + p[f"fc{i}.bias"]
        if cache is not None:
            cache[f"bn{i}"] = (xhat, inv_std)
            cache[f"fc{i}.in"] = a
        if i < N_HIDDEN:
            if cache is not None:
                cache[f"relu{i}"] = z > 0
            h = np.maximum(z, 0)
        else:
            h = z
    return h


def _decoder_backward(model, g_out, cache, mode):
    p = model.params
    grads = {}
    g = g_out
    for i in range(N_HIDDEN, 0, -1):
        if i < N_HIDDEN:
            g = g * cache[f"relu{i}"]
        a = cache[f"fc{i}.in"]
        grads[f"fc{i}.weight"] = a.T @ g
        grads[f"fc{i}.bias"] = g.sum(axis=0)
        g = g @ p[f"fc{i}.weight"].T
        xhat, inv_std = cache[f"bn{i}"]
        grads[f"bn{i}.scale"] = (g * xhat).sum(axis=0)
        grads[f"bn{i}.shift"] = g.sum(axis=0)
        g_xhat = g * p[f"bn{i}.scale"]
        if mode == "train":
            g = inv_std * (
                g_xhat - g_xhat.mean(axis=0) - xhat * (g_xhat * xhat).mean(axis=0)
            )
        else:
            g = g_xhat * inv_std
    return grads, g


# --------------------------------------------------------------------------
# Full model


def mse_loss(x_hat, x):
    """Mean over the batch of the squared error norm of each sample."""
    x_hat, x = np.asarray(x_hat), np.asarray(x)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    x_hat, x = np.atleast_2d(x_hat), np.atleast_2d(x)
    return float(np.sum((x_hat - x) ** 2) / x.shape[0])


def forward(model, x_noisy, mode="train", update_running=True):
    """Run encoder and decoder; returns ``(x_hat, cache)``."""
    cache = {"mode": mode}
    y = encoder_forward(model, x_noisy, cache)
    x_hat = decoder_forward(model, y, mode, cache, update_running)
    return x_hat, cache


def backward(model, cache, g_out, train_encoder=True):
    """Gradients of a scalar loss given ``g_out = dL/dx_hat``.

    Returns a dict keyed like ``model.params``. Encoder groups are absent
    when ``train_encoder`` is false; the basis never gets a gradient.
    """
    grads, g_y = _decoder_backward(model, g_out, cache, cache["mode"])
    if train_encoder:
        grads.update(_encoder_backward(model, g_y, cache))
    return {k: grads[k] for k in param_order() if k in grads}


def loss_and_grads(model, x_noisy, x, train_encoder=True, update_running=True):
    x_hat, cache = forward(model, x_noisy, "train", update_running)
    diff = x_hat - x
    loss = float(np.sum(diff * diff) / x.shape[0])
    grads = backward(model, cache, (2.0 / x.shape[0]) * diff, train_encoder)
    return loss, grads


def predict(model, x_noisy):
    """Inference-mode reconstruction of real-stacked angular channels."""
    return decoder_forward(model, encoder_forward(model, x_noisy), "infer")


# --------------------------------------------------------------------------
# Export and deployment


def export_measurement(model, sigma2=0.0):
    """The learned combiners as a ``MeasurementConfig``."""
    wbb = model.wbb_weights.astype(float)
    return MeasurementConfig(
        w_rf=AnalogMatrix(model.wrf_phases.astype(float).copy()),
        w_bb=wbb[..., 0] + 1j * wbb[..., 1],
        sigma2=sigma2,
    )


def decoder_macs(model):
    """Multiply-accumulates of the FC layers for one antenna estimate."""
    return sum(
        int(np.prod(model.params[f"fc{i}.weight"].shape)) for i in range(1, N_HIDDEN + 1)
    )


def stack(z):
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1)


def unstack(a):
    a = np.asarray(a)
    n = a.shape[-1] // 2
    return a[..., :n] + 1j * a[..., n:]


def estimate(model, y, conjugate_flag=False):
    """Estimate angular and spatial channels from raw observations.

    Parameters
    ----------
    y : complex array, shape (R,) or (batch, R)
        Decorrelated observations measured with the model's combiners, or
        with their conjugates when ``conjugate_flag`` is set.

    Returns
    -------
    x_hat, h_hat : complex arrays of shape (N,) or (batch, N)
    """
    y = np.asarray(y)
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    if y2.shape[1] != model.r:
        raise ValueError(f"observation length {y2.shape[1]} != R={model.r}")
    if conjugate_flag:
        y2 = np.conj(y2)
    x_hat = unstack(decoder_forward(model, stack(y2), "infer")).astype(complex)
    basis = angular_basis(model.n)
    if conjugate_flag:
        x_hat = conjugate_recover(x_hat, basis)
    h_hat = x_hat @ basis.b.T
    if single:
        return x_hat[0], h_hat[0]
    return x_hat, h_hat
