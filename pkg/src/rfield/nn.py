"""Fully-connected networks with hand-rolled reverse-mode gradients.

The computation graph here is static (a fixed stack of affine layers plus
elementwise activations), so instead of a general expression-graph autodiff
we record a layer-wise tape of primal intermediates on the forward pass and
replay it exactly once backward. ``Mlp`` is the generic core; ``MlpSpec``
composes four cores into the radiance network used by the field module:

    encoded position -> trunk -> density head (softplus)
                          \\-> [tap at direction_layer] + encoded direction
                                 -> color branch -> RGB (logistic)

Density is computed from position features only, so it is structurally
independent of the view direction. An Adam optimizer with bias correction
drives the parameters.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .streams import stream

__all__ = [
    "Mlp",
    "LayerTape",
    "MlpSpec",
    "ParameterBlock",
    "GradientTape",
    "AdamState",
    "softplus",
    "softplus_inv",
    "init_params",
    "forward",
    "backward",
    "adam_init",
    "adam_step",
]

_ACTIVATIONS = ("identity", "relu", "softplus", "logistic")


def softplus(x):
    """log(1 + e^x), overflow-safe."""
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of softplus for y > 0: log(e^y - 1), overflow-safe."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log1p(-np.exp(-y))


def _apply(act: str, z):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "softplus":
        return softplus(z)
    if act == "logistic":
        return expit(z)
    return z


def _apply_grad(act: str, z, gy):
    if act == "relu":
        return gy * (z > 0)
    if act == "softplus":
        return gy * expit(z)
    if act == "logistic":
        s = expit(z)
        return gy * (s * (1.0 - s))
    return gy


def _check_finite(z, layer: int):
    # Any nan/inf poisons the sum, so one reduction covers the whole batch.
    if not np.isfinite(np.sum(z)):
        raise FloatingPointError(f"non-finite activation in layer {layer}")


@dataclass
class LayerTape:
    """Per-layer primal record (layer inputs and pre-activations)."""

    xs: list
    zs: list


@dataclass(frozen=True)
class Mlp:
    """Affine/activation stack with a flat parameter layout.

    ``widths`` has one more entry than ``activations``; a single-entry
    widths tuple is the empty (identity) stack. Parameters are laid out
    per layer as the row-major weight matrix followed by the bias.
    """

    widths: tuple
    activations: tuple

    def __post_init__(self):
        if len(self.widths) != len(self.activations) + 1:
            raise ValueError("need exactly one activation per layer")
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be at least 1")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def n_layers(self) -> int:
        return len(self.activations)

    @property
    def n_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.widths, self.widths[1:]))

    def layer_params(self, theta: np.ndarray, layer: int):
        """Views of (W, b) for one layer inside the flat vector."""
        ofs = sum((i + 1) * o for i, o in zip(self.widths[:layer], self.widths[1:layer + 1]))
        n_in, n_out = self.widths[layer], self.widths[layer + 1]
        w = theta[ofs:ofs + n_in * n_out].reshape(n_in, n_out)
        b = theta[ofs + n_in * n_out:ofs + (n_in + 1) * n_out]
        return w, b

    def init(self, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        theta = np.zeros(self.n_params, dtype=dtype)
        for layer in range(self.n_layers):
            w, _ = self.layer_params(theta, layer)
            n_in, n_out = w.shape
            bound = np.sqrt(6.0 / (n_in + n_out))
            w[...] = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)
        return theta

    def forward(self, theta: np.ndarray, x: np.ndarray, record: bool = False):
        """Run the stack on a (batch, widths[0]) input.

        Returns (y, tape); tape is None unless ``record``.
        """
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ValueError(f"expected input width {self.widths[0]}, got {x.shape}")
        tape = LayerTape([], []) if record else None
        for layer in range(self.n_layers):
            w, b = self.layer_params(theta, layer)
            z = x @ w + b
            _check_finite(z, layer)
            if record:
                tape.xs.append(x)
                tape.zs.append(z)
            x = _apply(self.activations[layer], z)
        return x, tape

    def backward(self, theta: np.ndarray, tape: LayerTape, gy: np.ndarray,
                 inject: dict | None = None):
        """Reverse sweep: cotangent of the output -> (parameter grads, input cotangent).

        ``inject`` optionally adds extra cotangents to intermediate layer
        OUTPUTS, keyed by layer index (an entry at key L is added to the
        activation output of layer L-1, i.e. the input of layer L).
        """
        grads = np.zeros(self.n_params, dtype=theta.dtype)
        gx = gy
        for layer in reversed(range(self.n_layers)):
            w, _ = self.layer_params(theta, layer)
            gw, gb = self.layer_params(grads, layer)
            gz = _apply_grad(self.activations[layer], tape.zs[layer], gx)
            gw += tape.xs[layer].T @ gz
            gb += gz.sum(axis=0)
            gx = gz @ w.T
            if inject and layer in inject:
                gx = gx + inject[layer]
        return grads, gx


@dataclass(frozen=True)
class MlpSpec:
    """Radiance-network architecture: trunk plus density and color heads.

    position_dim / direction_dim are the widths of the encoded inputs.
    ``direction_layer`` (1-based, default depth) picks which trunk
    activation feeds the color branch; the density head always reads the
    final trunk layer, so no choice of tap lets direction reach density.
    """

    position_dim: int
    direction_dim: int
    width: int = 64
    depth: int = 4
    color_width: int = 32
    direction_layer: int | None = None

    def __post_init__(self):
        if min(self.position_dim, self.width, self.color_width) < 1 or self.direction_dim < 0:
            raise ValueError("invalid layer widths")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.direction_layer is None:
            object.__setattr__(self, "direction_layer", self.depth)
        if not (1 <= self.direction_layer <= self.depth):
            raise ValueError("direction_layer must be in [1, depth]")

    @property
    def segments(self) -> dict:
        tap = self.direction_layer
        return {
            "trunk_a": Mlp((self.position_dim,) + (self.width,) * tap, ("relu",) * tap),
            "trunk_b": Mlp((self.width,) * (self.depth - tap + 1), ("relu",) * (self.depth - tap)),
            "density": Mlp((self.width, 1), ("softplus",)),
            "color": Mlp((self.width + self.direction_dim, self.color_width, 3),
                         ("relu", "logistic")),
        }

    @property
    def n_params(self) -> int:
        return sum(m.n_params for m in self.segments.values())

    def slices(self) -> dict:
        """Index mapping: segment name -> slice into the flat parameter vector."""
        out, ofs = {}, 0
        for name, m in self.segments.items():
            out[name] = slice(ofs, ofs + m.n_params)
            ofs += m.n_params
        return out


@dataclass
class ParameterBlock:
    """Flat array of all weights and biases of one MlpSpec."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError("parameter block must be flat")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters must be finite")

    @property
    def dtype(self):
        return self.values.dtype

    def astype(self, dtype) -> "ParameterBlock":
        return ParameterBlock(self.values.astype(dtype))


@dataclass
class GradientTape:
    """Primal record of one radiance-network forward batch; single use."""

    trunk_a: LayerTape
    trunk_b: LayerTape
    density: LayerTape
    color: LayerTape
    consumed: bool = False


def init_params(spec: MlpSpec, seed: int, dtype=np.float32) -> ParameterBlock:
    """Glorot-uniform weights, zero biases, warm-started density bias.

    The density bias is set so the initial activated density is about 0.1,
    which keeps a fresh field from starting fully transparent.
    """
    rng = stream(seed)
    theta = np.empty(spec.n_params, dtype=dtype)
    slices = spec.slices()
    for name, m in spec.segments.items():
        theta[slices[name]] = m.init(rng, dtype=dtype)
    density = spec.segments["density"]
    dtheta = theta[slices["density"]]
    _, db = density.layer_params(dtheta, 0)
    db[...] = softplus_inv(0.1).astype(dtype)
    return ParameterBlock(theta)


def forward(params: ParameterBlock, spec: MlpSpec, pos_features: np.ndarray,
            dir_features: np.ndarray | None, record: bool = False):
    """Evaluate the radiance network on a batch of encoded coordinates.

    Returns (sigma, rgb, tape): sigma of shape (batch,), rgb of shape
    (batch, 3), tape None unless ``record``.
    """
    seg, sl = spec.segments, spec.slices()
    theta = params.values
    h_a, t_a = seg["trunk_a"].forward(theta[sl["trunk_a"]], pos_features, record)
    h_b, t_b = seg["trunk_b"].forward(theta[sl["trunk_b"]], h_a, record)
    sigma, t_d = seg["density"].forward(theta[sl["density"]], h_b, record)
    if spec.direction_dim:
        if dir_features is None or dir_features.shape[1] != spec.direction_dim:
            raise ValueError("direction feature width does not match spec")
        color_in = np.concatenate([h_a, dir_features], axis=1)
    else:
        color_in = h_a
    rgb, t_c = seg["color"].forward(theta[sl["color"]], color_in, record)
    tape = GradientTape(t_a, t_b, t_d, t_c) if record else None
    return sigma[:, 0], rgb, tape


def backward(params: ParameterBlock, spec: MlpSpec, tape: GradientTape,
             d_sigma: np.ndarray, d_rgb: np.ndarray):
    """Exact reverse-mode gradient of the recorded forward batch.

    Returns (grads, d_pos_features, d_dir_features); grads is a flat array
    matching the parameter layout.
    """
    if tape.consumed:
        raise RuntimeError("gradient tape already consumed")
    tape.consumed = True
    seg, sl = spec.segments, spec.slices()
    theta = params.values
    grads = np.empty_like(theta)

    g_d, g_hb = seg["density"].backward(theta[sl["density"]], tape.density, d_sigma[:, None])
    g_c, g_color_in = seg["color"].backward(theta[sl["color"]], tape.color, d_rgb)
    if spec.direction_dim:
        g_ha_color = g_color_in[:, :spec.width]
        d_dir = g_color_in[:, spec.width:]
    else:
        g_ha_color, d_dir = g_color_in, None
    g_b, g_ha = seg["trunk_b"].backward(theta[sl["trunk_b"]], tape.trunk_b, g_hb)
    g_a, d_pos = seg["trunk_a"].backward(theta[sl["trunk_a"]], tape.trunk_a,
                                         g_ha + g_ha_color)
    grads[sl["trunk_a"]] = g_a
    grads[sl["trunk_b"]] = g_b
    grads[sl["density"]] = g_d
    grads[sl["color"]] = g_c
    return grads, d_pos, d_dir


@dataclass
class AdamState:
    """First/second moment estimates plus step count and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params: int, lr: float = 5e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, dtype=np.float32) -> AdamState:
    return AdamState(np.zeros(n_params, dtype=dtype), np.zeros(n_params, dtype=dtype),
                     0, lr, beta1, beta2, eps)


def adam_step(params: ParameterBlock, grads: np.ndarray, state: AdamState,
              lr: float | None = None):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if grads.shape != params.values.shape:
        raise ValueError("gradient shape does not match parameters")
    if not np.isfinite(np.sum(grads)):
        raise FloatingPointError("non-finite gradient")
    lr = state.lr if lr is None else lr
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    values = params.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return ParameterBlock(values), replace(state, m=m, v=v, step=t)
