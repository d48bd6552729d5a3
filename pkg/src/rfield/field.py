"""Radiance fields: query a position and view direction, get (density, color).

Two trainable backends share one query/backward interface:

* ``MlpField`` — positions are normalized into the scene bounds, lifted by
  the sinusoidal encoding, and fed to the trunk of the radiance network;
  directions are encoded and join only the color branch.
* ``VoxelGrid`` — a uniform grid storing pre-activation density and color
  coefficients at voxel centers. Values are activated per voxel (softplus
  for density, logistic for color) and then trilinearly interpolated, so a
  query at a voxel center returns exactly the activated stored value and
  interpolation is linear in the activated node values. Color is either
  view-independent (degree 0) or linear in the view direction through a
  {1, dx, dy, dz} basis (degree 1).

In both backends density depends on position only; the view direction
cannot reach it structurally. Queries outside the scene bounds return
vacuum (zero density, black) rather than raising: the model is only
defined on a bounded scene. An alternative formulation pre-multiplies
density into the color; it is not used here because it entangles
occupancy with emission and weakens that structural guarantee.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import nn
from .encoding import EncodingConfig, encode_batch

__all__ = [
    "FieldSample",
    "SceneBounds",
    "normalize_position",
    "MlpField",
    "VoxelGrid",
]


@dataclass(frozen=True)
class FieldSample:
    """One field evaluation: non-negative density and RGB in [0, 1]."""

    sigma: float
    color: np.ndarray

    def __post_init__(self):
        color = np.asarray(self.color, dtype=np.float64)
        if not (np.isfinite(self.sigma) and np.all(np.isfinite(color))):
            raise ValueError("field sample must be finite")
        if self.sigma < 0:
            raise ValueError("density must be non-negative")
        if np.any(color < 0) or np.any(color > 1):
            raise ValueError("color channels must lie in [0, 1]")
        object.__setattr__(self, "color", color)


@dataclass(frozen=True)
class SceneBounds:
    """Axis-aligned box enclosing the scene."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).copy()
        hi = np.asarray(self.hi, dtype=np.float64).copy()
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bounds corners must be 3-vectors")
        if not np.all(lo < hi):
            raise ValueError("bounds min must be strictly below max")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=-1)


def normalize_position(x: np.ndarray, bounds: SceneBounds) -> np.ndarray:
    """Affine map sending the box center to 0 and its corners to +-1."""
    x = np.asarray(x)
    return (x - bounds.center) * (2.0 / bounds.size)


@dataclass
class _MlpFieldTape:
    inside: np.ndarray
    net: nn.GradientTape


class MlpField:
    """Neural radiance field backend."""

    def __init__(self, spec: nn.MlpSpec, params: nn.ParameterBlock,
                 bounds: SceneBounds,
                 pos_encoding: EncodingConfig = EncodingConfig(octaves=10),
                 dir_encoding: EncodingConfig = EncodingConfig(octaves=4)):
        if spec.position_dim != pos_encoding.output_dim(3):
            raise ValueError("spec position width does not match the position encoding")
        if spec.direction_dim != dir_encoding.output_dim(3):
            raise ValueError("spec direction width does not match the direction encoding")
        self.spec = spec
        self.params = params
        self.bounds = bounds
        self.pos_encoding = pos_encoding
        self.dir_encoding = dir_encoding

    @classmethod
    def create(cls, bounds: SceneBounds, width: int = 64, depth: int = 4,
               color_width: int = 32, pos_octaves: int = 10, dir_octaves: int = 4,
               seed: int = 0, dtype=np.float32) -> "MlpField":
        pos_enc = EncodingConfig(octaves=pos_octaves)
        dir_enc = EncodingConfig(octaves=dir_octaves)
        spec = nn.MlpSpec(position_dim=pos_enc.output_dim(3),
                          direction_dim=dir_enc.output_dim(3),
                          width=width, depth=depth, color_width=color_width)
        return cls(spec, nn.init_params(spec, seed, dtype=dtype), bounds,
                   pos_enc, dir_enc)

    @property
    def dtype(self):
        return self.params.dtype

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def get_params(self) -> np.ndarray:
        return self.params.values.copy()

    def set_params(self, values: np.ndarray):
        if values.shape != (self.spec.n_params,):
            raise ValueError("parameter vector has wrong length")
        self.params = nn.ParameterBlock(values.astype(self.dtype))

    def query(self, x: np.ndarray, d: np.ndarray) -> FieldSample:
        """Single-point field evaluation. ``d`` must be unit length."""
        d = np.asarray(d, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("view direction must be unit length")
        sigma, color, _ = self.query_batch(np.asarray(x, dtype=np.float64)[None],
                                           d[None])
        return FieldSample(float(sigma[0]), color[0])

    def query_batch(self, positions: np.ndarray, directions: np.ndarray,
                    record: bool = False):
        """Vectorized query; returns (sigma, color, tape).

        Out-of-bounds positions yield vacuum and receive no gradient.
        """
        b = positions.shape[0]
        inside = self.bounds.contains(positions)
        pos_in = normalize_position(positions[inside], self.bounds).astype(self.dtype)
        dir_in = np.asarray(directions)[inside].astype(self.dtype)
        pos_feat = encode_batch(pos_in, self.pos_encoding)
        dir_feat = encode_batch(dir_in, self.dir_encoding)
        sigma_in, rgb_in, net_tape = nn.forward(self.params, self.spec,
                                                pos_feat, dir_feat, record)
        sigma = np.zeros(b, dtype=self.dtype)
        color = np.zeros((b, 3), dtype=self.dtype)
        sigma[inside] = sigma_in
        color[inside] = rgb_in
        tape = _MlpFieldTape(inside, net_tape) if record else None
        return sigma, color, tape

    def backward(self, tape: _MlpFieldTape, d_sigma: np.ndarray,
                 d_color: np.ndarray) -> np.ndarray:
        """Cotangents of (sigma, color) -> flat parameter gradient."""
        grads, _, _ = nn.backward(self.params, self.spec, tape.net,
                                  d_sigma[tape.inside].astype(self.dtype),
                                  d_color[tape.inside].astype(self.dtype))
        return grads


@dataclass
class _VoxelTape:
    inside: np.ndarray
    corner_idx: np.ndarray  # (b, 8) flat cell indices
    weights: np.ndarray  # (b, 8) trilinear weights
    sigma_slope: np.ndarray  # (b, 8) softplus'(raw sigma) at corners
    color_act: np.ndarray  # (b, 8, 3) activated corner colors
    basis: np.ndarray  # (b, n_coef) direction basis
    consumed: bool = False


class VoxelGrid:
    """Explicit (non-neural) radiance field on a uniform trilinear grid."""

    def __init__(self, resolution, bounds: SceneBounds, color_degree: int = 0,
                 dtype=np.float32):
        nx, ny, nz = (int(r) for r in resolution)
        if min(nx, ny, nz) < 2:
            raise ValueError("grid resolution must be at least 2 per axis")
        if color_degree not in (0, 1):
            raise ValueError("color degree must be 0 or 1")
        self.resolution = (nx, ny, nz)
        self.bounds = bounds
        self.color_degree = color_degree
        self.n_coef = 1 if color_degree == 0 else 4
        self.raw_sigma = np.full((nx, ny, nz), nn.softplus_inv(0.1), dtype=dtype)
        self.raw_color = np.zeros((nx, ny, nz, 3, self.n_coef), dtype=dtype)

    @property
    def dtype(self):
        return self.raw_sigma.dtype

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    @property
    def n_params(self) -> int:
        return self.n_cells * (1 + 3 * self.n_coef)

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.raw_sigma.ravel(), self.raw_color.ravel()])

    def set_params(self, values: np.ndarray):
        if values.shape != (self.n_params,):
            raise ValueError("parameter vector has wrong length")
        n = self.n_cells
        self.raw_sigma = values[:n].reshape(self.resolution).astype(self.dtype)
        self.raw_color = values[n:].reshape(self.resolution + (3, self.n_coef)).astype(self.dtype)

    def _corners(self, positions: np.ndarray):
        """Trilinear支持 indices and weights for in-bounds positions."""
        nx, ny, nz = self.resolution
        res = np.array([nx, ny, nz])
        cell = self.bounds.size / res
        g = (positions - self.bounds.lo) / cell - 0.5
        i0 = np.clip(np.floor(g).astype(np.int64), 0, res - 2)
        f = np.clip(g - i0, 0.0, 1.0).astype(self.dtype)
        # corner order: binary (bx, by, bz), z fastest
        offs = np.array([[bx, by, bz] for bx in (0, 1) for by in (0, 1) for bz in (0, 1)])
        idx3 = i0[:, None, :] + offs[None, :, :]  # (b, 8, 3)
        flat = (idx3[..., 0] * ny + idx3[..., 1]) * nz + idx3[..., 2]
        wx = np.stack([1.0 - f[:, 0], f[:, 0]], axis=1)
        wy = np.stack([1.0 - f[:, 1], f[:, 1]], axis=1)
        wz = np.stack([1.0 - f[:, 2], f[:, 2]], axis=1)
        w = (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(-1, 8)
        return flat, w

    def _basis(self, directions: np.ndarray) -> np.ndarray:
        if self.color_degree == 0:
            return np.ones((directions.shape[0], 1), dtype=self.dtype)
        return np.concatenate([np.ones((directions.shape[0], 1), dtype=self.dtype),
                               directions.astype(self.dtype)], axis=1)

    def query(self, x: np.ndarray, d: np.ndarray) -> FieldSample:
        d = np.asarray(d, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("view direction must be unit length")
        sigma, color, _ = self.query_batch(np.asarray(x, dtype=np.float64)[None],
                                           d[None])
        return FieldSample(float(sigma[0]), color[0])

    def query_batch(self, positions: np.ndarray, directions: np.ndarray,
                    record: bool = False):
        """Activate per voxel, then interpolate; vacuum outside the bounds."""
        b = positions.shape[0]
        inside = self.bounds.contains(positions)
        pos_in = np.asarray(positions)[inside]
        dir_in = np.asarray(directions)[inside]
        idx, w = self._corners(pos_in)
        raw_sig = self.raw_sigma.reshape(-1)[idx]  # (b, 8)
        sig_act = nn.softplus(raw_sig)
        sigma_in = np.einsum("bc,bc->b", w, sig_act)

        basis = self._basis(dir_in)  # (b, n_coef)
        raw_col = self.raw_color.reshape(-1, 3, self.n_coef)[idx]  # (b, 8, 3, n_coef)
        pre = np.einsum("bckm,bm->bck", raw_col, basis)  # (b, 8, 3)
        col_act = expit(pre)
        color_in = np.einsum("bc,bck->bk", w, col_act)

        sigma = np.zeros(b, dtype=self.dtype)
        color = np.zeros((b, 3), dtype=self.dtype)
        sigma[inside] = sigma_in
        color[inside] = color_in
        tape = None
        if record:
            tape = _VoxelTape(inside, idx, w, expit(raw_sig), col_act, basis)
        return sigma, color, tape

    def backward(self, tape: _VoxelTape, d_sigma: np.ndarray,
                 d_color: np.ndarray) -> np.ndarray:
        """Scatter cotangents back to the raw grid coefficients."""
        if tape.consumed:
            raise RuntimeError("gradient tape already consumed")
        tape.consumed = True
        gs = d_sigma[tape.inside].astype(self.dtype)
        gc = d_color[tape.inside].astype(self.dtype)
        g_sigma = np.zeros(self.n_cells, dtype=self.dtype)
        # d sigma / d raw = trilinear weight * softplus'(raw)
        np.add.at(g_sigma, tape.corner_idx, tape.weights * tape.sigma_slope * gs[:, None])
        g_color = np.zeros((self.n_cells, 3, self.n_coef), dtype=self.dtype)
        slope = tape.color_act * (1.0 - tape.color_act)  # logistic'
        contrib = (tape.weights[:, :, None, None] * slope[:, :, :, None]
                   * tape.basis[:, None, None, :] * gc[:, None, :, None])
        np.add.at(g_color, tape.corner_idx, contrib)
        return np.concatenate([g_sigma, g_color.ravel()])
