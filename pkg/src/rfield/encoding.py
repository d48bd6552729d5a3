"""Sinusoidal feature lifting for scalar and vector inputs.

A scalar p maps to the 2L features (sin(2^0 pi p), cos(2^0 pi p), ...,
sin(2^(L-1) pi p), cos(2^(L-1) pi p)); vectors are lifted per component,
component-major. Because every frequency is an integer multiple of pi, the
encoding is 2-periodic, so inputs are expected to be pre-normalized to
[-1, 1] (the field module handles that with its scene bounds).
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["EncodingConfig", "encode_scalar", "encode_vector", "encode_batch"]


@dataclass(frozen=True)
class EncodingConfig:
    """Number of frequency octaves plus whether to prepend the raw input."""

    octaves: int = 10
    include_raw: bool = True

    def __post_init__(self):
        if self.octaves < 0:
            raise ValueError("octave count must be non-negative")

    @property
    def features_per_component(self) -> int:
        return 2 * self.octaves + (1 if self.include_raw else 0)

    def output_dim(self, n_components: int) -> int:
        return n_components * self.features_per_component


def encode_scalar(p: float, cfg: EncodingConfig) -> np.ndarray:
    """Lift one finite scalar to its sinusoidal feature vector."""
    if not np.isfinite(p):
        raise ValueError("encoding input must be finite")
    return encode_batch(np.array([[p]], dtype=np.float64), cfg)[0]


def encode_vector(v, cfg: EncodingConfig) -> np.ndarray:
    """Lift a vector componentwise; features are concatenated per component."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("encode_vector expects a 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("encoding input must be finite")
    return encode_batch(v[None, :], cfg)[0]


def encode_batch(x: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    """Encode a (batch, n) array to (batch, n * features_per_component).

    Component-major layout, identical to stacking encode_vector per row:
    for each component, the raw value (when included) followed by
    (sin, cos) pairs of ascending octave.
    """
    x = np.asarray(x)
    b, n = x.shape
    per = cfg.features_per_component
    out = np.empty((b, n, per), dtype=x.dtype)
    ofs = 0
    if cfg.include_raw:
        out[:, :, 0] = x
        ofs = 1
    if cfg.octaves > 0:
        freqs = (2.0 ** np.arange(cfg.octaves)) * np.pi
        ang = x[:, :, None] * freqs.astype(x.dtype)
        out[:, :, ofs::2] = np.sin(ang)
        out[:, :, ofs + 1::2] = np.cos(ang)
    return out.reshape(b, n * per)
