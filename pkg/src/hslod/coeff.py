"""Elementwise-constant scalar diffusion coefficients."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .mesh import ConfigurationError

CHANNEL_BASE_EXPONENT = 5


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Coefficient constant on the cells of the ``2**-base_exponent`` mesh.

    ``values`` has shape ``(n,) * dim`` with axes in reversed coordinate order,
    so ``values.ravel()`` is lexicographic (x fastest).
    """

    dim: int
    base_exponent: int
    values: np.ndarray
    alpha: float
    beta: float
    seed: int | None = None
    distribution: str = "log-uniform"
    _fine_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        n = 2**self.base_exponent
        if vals.shape != (n,) * self.dim:
            raise ConfigurationError(f"coefficient values must have shape {(n,) * self.dim}, got {vals.shape}")
        if not np.all(np.isfinite(vals)) or vals.min() <= 0:
            raise ConfigurationError("coefficient values must be finite and positive")
        if not 0 < self.alpha <= self.beta:
            raise ConfigurationError("need 0 < alpha <= beta")
        tol = 1e-12 * self.beta
        if vals.min() < self.alpha - tol or vals.max() > self.beta + tol:
            raise ConfigurationError("coefficient values leave [alpha, beta]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def actual_contrast(self) -> float:
        return self.max_value / self.min_value

    def fine_values(self, fine_exponent: int) -> np.ndarray:
        """Values on every cell of the ``2**-fine_exponent`` mesh."""
        if fine_exponent < self.base_exponent:
            raise ConfigurationError(
                f"fine mesh 2^-{fine_exponent} does not resolve the coefficient mesh 2^-{self.base_exponent}"
            )
        cached = self._fine_cache.get(fine_exponent)
        if cached is None:
            r = 2 ** (fine_exponent - self.base_exponent)
            cached = self.values
            for axis in range(self.dim):
                cached = np.repeat(cached, r, axis=axis)
            cached.setflags(write=False)
            self._fine_cache[fine_exponent] = cached
        return cached

    def evaluate(self, x) -> np.ndarray:
        """Pointwise lookup for points of shape (..., dim) in the closed unit cube."""
        x = np.asarray(x, dtype=np.float64)
        n = 2**self.base_exponent
        idx = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
        return self.values[tuple(idx[..., k] for k in reversed(range(self.dim)))]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.header(), sort_keys=True).encode())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def header(self) -> dict:
        return {
            "d": self.dim,
            "base_exponent": self.base_exponent,
            "alpha": self.alpha,
            "beta": self.beta,
            "seed": self.seed,
            "distribution": self.distribution,
        }


def random_piecewise_constant(base_exponent, alpha, beta, seed, dim=2, distribution="log-uniform") -> CoefficientField:
    """I.i.d. cell values in ``[alpha, beta]`` from a seeded PCG64 generator."""
    if alpha <= 0 or beta < alpha:
        raise ConfigurationError("need 0 < alpha <= beta")
    rng = np.random.default_rng(seed)
    shape = (2**base_exponent,) * dim
    if distribution == "log-uniform":
        vals = np.exp(rng.uniform(np.log(alpha), np.log(beta), size=shape))
    elif distribution == "uniform":
        vals = rng.uniform(alpha, beta, size=shape)
    else:
        raise ConfigurationError(f"unknown distribution {distribution!r}")
    vals = np.clip(vals, alpha, beta)
    return CoefficientField(dim, base_exponent, vals, float(alpha), float(beta), seed, distribution)


def constant_coefficient(value=1.0, dim=2, base_exponent=0) -> CoefficientField:
    vals = np.full((2**base_exponent,) * dim, float(value))
    return CoefficientField(dim, base_exponent, vals, float(value), float(value), None, "constant")


def _channel_half(x1, x2, beta):
    in_x1 = ((x1 >= 8 / 32) & (x1 <= 9 / 32)) | ((x1 >= 10 / 32) & (x1 <= 11 / 32))
    in_x2 = (x2 >= 1 / 32) & (x2 <= 31 / 32)
    return np.where(in_x1 & in_x2, beta / 2, 0.5)


def channel_function(x, beta):
    """Pointwise channel coefficient for points of shape (..., 2)."""
    x = np.asarray(x, dtype=np.float64)
    return _channel_half(x[..., 0], x[..., 1], beta) + _channel_half(x[..., 1], x[..., 0], beta)


def channel_coefficient(beta, dim=2) -> CoefficientField:
    """Two thin high-conductivity strips in each direction, resolved on the 2^-5 mesh."""
    if dim != 2:
        raise ConfigurationError("the channel coefficient is defined for d = 2 only")
    if beta < 1:
        raise ConfigurationError("channel contrast must be >= 1")
    n = 2**CHANNEL_BASE_EXPONENT
    c = (np.arange(n) + 0.5) / n
    x2, x1 = np.meshgrid(c, c, indexing="ij")
    vals = channel_function(np.stack([x1, x2], axis=-1), beta)
    return CoefficientField(2, CHANNEL_BASE_EXPONENT, vals, 1.0, float(beta), None, "channel")


def save_coefficient(coeff: CoefficientField, path) -> None:
    """Write ``<path>`` (CSV of base-mesh values, lexicographic) and ``<path>.json`` header."""
    from .io import atomic_write_text

    body = "\n".join(repr(float(v)) for v in coeff.values.ravel()) + "\n"
    atomic_write_text(path, body)
    atomic_write_text(os.fspath(path) + ".json", json.dumps(coeff.header(), sort_keys=True, indent=2) + "\n")


def load_coefficient(path) -> CoefficientField:
    with open(os.fspath(path) + ".json") as fh:
        hdr = json.load(fh)
    vals = np.loadtxt(path, dtype=np.float64, ndmin=1)
    d = hdr["d"]
    n = 2 ** hdr["base_exponent"]
    return CoefficientField(
        d, hdr["base_exponent"], vals.reshape((n,) * d), hdr["alpha"], hdr["beta"], hdr.get("seed"),
        hdr.get("distribution", "log-uniform"),
    )
