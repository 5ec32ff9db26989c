"""Algebra on C^{N x n}: the sesquilinear pairing and the hat/check realifications.

Values are stored split-real (separate real and imaginary planes).  Batched
variants accept complex numpy arrays whose trailing two axes are ``(N, n)``;
those are what the assembly code uses internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class CMat:
    """A single value in C^{N x n}."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.array(self.re, dtype=float, ndmin=2)
        im = np.array(self.im, dtype=float, ndmin=2)
        if re.shape != im.shape or re.ndim != 2:
            raise DimensionError(f"re/im shapes differ or are not 2-D: {re.shape} vs {im.shape}")
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise ValueError("CMat entries must be finite")
        re.flags.writeable = False
        im.flags.writeable = False
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z) -> "CMat":
        z = np.asarray(z, dtype=complex)
        return cls(z.real, z.imag)

    @classmethod
    def zeros(cls, N: int = 1, n: int = 2) -> "CMat":
        return cls(np.zeros((N, n)), np.zeros((N, n)))

    @property
    def N(self) -> int:
        return self.re.shape[0]

    @property
    def n(self) -> int:
        return self.re.shape[1]

    @property
    def shape(self):
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def __add__(self, other):
        return CMat.from_complex(self.to_complex() + _arr(other))

    def __sub__(self, other):
        return CMat.from_complex(self.to_complex() - _arr(other))

    def __neg__(self):
        return CMat(-self.re, -self.im)

    def __mul__(self, alpha):
        return CMat.from_complex(complex(alpha) * self.to_complex())

    __rmul__ = __mul__


@dataclass(frozen=True)
class RealMat2N:
    """Realified image of a CMat, shape (2N, n)."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float, ndmin=2)
        if e.ndim != 2 or e.shape[0] % 2:
            raise DimensionError(f"expected shape (2N, n), got {e.shape}")
        object.__setattr__(self, "entries", e)

    def dot(self, other: "RealMat2N") -> float:
        return float(np.sum(self.entries * other.entries))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.entries**2)))


def _arr(F) -> np.ndarray:
    if isinstance(F, CMat):
        return F.to_complex()
    return np.asarray(F, dtype=complex)


def _same_shape(F, G):
    if F.shape != G.shape:
        raise DimensionError(f"shape mismatch: {F.shape} vs {G.shape}")


# Batched kernels over trailing (N, n) axes.

def inner_batch(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """<F, G> = sum F * conj(G) over the trailing two axes."""
    return np.sum(F * np.conj(G), axis=(-2, -1))


def sqnorm_batch(F: np.ndarray) -> np.ndarray:
    return np.sum(F.real**2 + F.imag**2, axis=(-2, -1))


def hat_batch(F: np.ndarray) -> np.ndarray:
    return np.concatenate([F.real, F.imag], axis=-2)


def check_batch(F: np.ndarray) -> np.ndarray:
    return np.concatenate([-F.imag, F.real], axis=-2)


# Single-value API.

def cinner(F: CMat, G: CMat) -> complex:
    _same_shape(F, G)
    re = np.sum(F.re * G.re + F.im * G.im)
    im = np.sum(-F.re * G.im + F.im * G.re)
    return complex(re, im)


def hat(F: CMat) -> RealMat2N:
    return RealMat2N(np.vstack([F.re, F.im]))


def check(F: CMat) -> RealMat2N:
    return RealMat2N(np.vstack([-F.im, F.re]))


def cnorm(F: CMat) -> float:
    return float(np.sqrt(np.sum(F.re**2) + np.sum(F.im**2)))
