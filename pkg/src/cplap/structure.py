"""The regularized p-Laplace flux and its structure inequalities.

All functions accept either a :class:`CMat` or a complex array whose trailing
axes are ``(N, n)`` (a batch).  The return type follows the input.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .complex_fields import CMat, DimensionError, hat_batch, check_batch, inner_batch, sqnorm_batch


@dataclass(frozen=True)
class FluxParams:
    p: float
    eps: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 <= self.eps <= 1:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")


@dataclass(frozen=True)
class StructureConstants:
    c1: float
    c2: float
    c3: float


@dataclass(frozen=True)
class C3Report:
    p: float
    eps: float
    samples: int
    ratio_min: float
    ratio_max: float
    c3: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _unwrap(x):
    if isinstance(x, CMat):
        return x.to_complex(), True
    return np.asarray(x, dtype=complex), False


def _wrap(z, as_cmat):
    return CMat.from_complex(z) if as_cmat else z


def power_weight(s: np.ndarray, exponent: float) -> np.ndarray:
    """s**exponent for s >= 0, evaluated through exp/log; 0**negative -> 0."""
    s = np.asarray(s, dtype=float)
    if exponent == 0:
        return np.ones_like(s)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(exponent * np.log(s[pos]))
    # For exponent < 0 the value at s == 0 only ever multiplies a vanishing vector.
    return out


def flux_weight(params: FluxParams, sq: np.ndarray) -> np.ndarray:
    """(eps^2 + |xi|^2)^((p-2)/2) given |xi|^2."""
    return power_weight(params.eps**2 + sq, (params.p - 2) / 2)


def flux(params: FluxParams, xi):
    z, as_cmat = _unwrap(xi)
    w = flux_weight(params, sqnorm_batch(z))
    return _wrap(w[..., None, None] * z, as_cmat)


def v_map(params: FluxParams, xi):
    z, as_cmat = _unwrap(xi)
    w = power_weight(params.eps**2 + sqnorm_batch(z), (params.p - 2) / 4)
    return _wrap(w[..., None, None] * z, as_cmat)


def _pair(F, G):
    f, as_cmat = _unwrap(F)
    g, _ = _unwrap(G)
    if f.shape != g.shape:
        raise DimensionError(f"shape mismatch: {f.shape} vs {g.shape}")
    return f, g, as_cmat


def _scalar(x, as_cmat):
    return x.item() if as_cmat else x


def monotonicity_pair(params: FluxParams, F, G):
    """<A(F) - A(G), F - G> as a complex number (or array for batches)."""
    f, g, as_cmat = _pair(F, G)
    val = inner_batch(flux(params, f) - flux(params, g), f - g)
    return _scalar(val, as_cmat)


def monotonicity_pair_realified(params: FluxParams, F, G):
    """The same pairing assembled from the hat/check realifications."""
    f, g, as_cmat = _pair(F, G)
    dA = hat_batch(flux(params, f)) - hat_batch(flux(params, g))
    re = np.sum(dA * (hat_batch(f) - hat_batch(g)), axis=(-2, -1))
    im = np.sum(dA * (check_batch(f) - check_batch(g)), axis=(-2, -1))
    return _scalar(re + 1j * im, as_cmat)


def _gap_weight(params, f, g):
    return power_weight(params.eps**2 + sqnorm_batch(f) + sqnorm_batch(g), (params.p - 2) / 2)


def lower_gap(params: FluxParams, F, G):
    """c1 (eps^2+|F|^2+|G|^2)^((p-2)/2) |F-G|^2."""
    f, g, as_cmat = _pair(F, G)
    val = c1_of(params.p) * _gap_weight(params, f, g) * sqnorm_batch(f - g)
    return _scalar(val, as_cmat)


def lipschitz_gap(params: FluxParams, F, G):
    """c2 (eps^2+|F|^2+|G|^2)^((p-2)/2) |F-G|, an upper bound for |A(F)-A(G)|."""
    f, g, as_cmat = _pair(F, G)
    val = c2_of(params.p) * _gap_weight(params, f, g) * np.sqrt(sqnorm_batch(f - g))
    return _scalar(val, as_cmat)


def v_ratio(params: FluxParams, F, G):
    """|V(F)-V(G)|^2 / [(eps^2+|F|^2+|G|^2)^((p-2)/2) |F-G|^2]."""
    f, g, as_cmat = _pair(F, G)
    num = sqnorm_batch(v_map(params, f) - v_map(params, g))
    den = _gap_weight(params, f, g) * sqnorm_batch(f - g)
    return _scalar(num / den, as_cmat)


def c1_of(p: float) -> float:
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if p == 2:
        return 1.0
    if p > 2:
        return (1 / 3) * (1 / (3 * math.sqrt(2))) ** (p - 2)
    return p - 1


def c2_of(p: float) -> float:
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if p == 2:
        return 1.0
    return p - 1 if p > 2 else 8.0


ADVERSARIAL_SCALES = (1e-8, 1e-4, 1.0, 1e4)


def sample_pairs(rng: np.random.Generator, count: int, N: int = 1, n: int = 2):
    """Random and adversarial (F, G) pairs, shape (count, N, n) each.

    Half the batch is generic with log-uniform magnitudes; the rest is split
    between prescribed relative gaps |F-G|/|F|, near-parallel pairs and pairs
    close to the origin.
    """
    shape = (N, n)

    def gauss(k):
        return rng.standard_normal((k, *shape)) + 1j * rng.standard_normal((k, *shape))

    def unit(k):
        z = gauss(k)
        return z / np.sqrt(sqnorm_batch(z))[:, None, None]

    def mags(k, lo=-3, hi=3):
        return 10.0 ** rng.uniform(lo, hi, size=k)[:, None, None]

    n_generic = count // 2
    n_gap = count // 4
    n_par = count // 8
    n_zero = count - n_generic - n_gap - n_par

    F = [unit(n_generic) * mags(n_generic)]
    G = [unit(n_generic) * mags(n_generic)]

    f = unit(n_gap) * mags(n_gap)
    scale = np.array(ADVERSARIAL_SCALES)[rng.integers(0, len(ADVERSARIAL_SCALES), n_gap)]
    d = unit(n_gap) * (scale[:, None, None] * np.sqrt(sqnorm_batch(f))[:, None, None])
    F.append(f)
    G.append(f + d)

    # Collinear pairs, including antiparallel ones through the origin.
    u = unit(n_par)
    F.append(u * mags(n_par))
    G.append(u * rng.choice([-1.0, 1.0], n_par)[:, None, None] * mags(n_par))

    F.append(unit(n_zero) * mags(n_zero, -9, -5))
    G.append(unit(n_zero) * mags(n_zero, -9, 0))
    return np.concatenate(F), np.concatenate(G)


def c3_search(params: FluxParams, samples: int, seed: int = 0, N: int = 1, n: int = 2) -> C3Report:
    """Empirical two-sided constant for the V-map comparison.

    ``c3`` is twice the larger of ``ratio_max`` and ``1/ratio_min`` so that every
    observed ratio lies in ``[1/c3, c3]`` with room to spare.
    """
    if samples < 1000:
        raise ValueError("c3_search needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    F, G = sample_pairs(rng, samples, N, n)
    r = v_ratio(params, F, G)
    r = r[np.isfinite(r)]
    rmin, rmax = float(np.min(r)), float(np.max(r))
    return C3Report(params.p, params.eps, samples, rmin, rmax, 2.0 * max(rmax, 1.0 / rmin))


def structure_constants(params: FluxParams, samples: int = 10_000, seed: int = 0) -> StructureConstants:
    rep = c3_search(params, samples, seed)
    return StructureConstants(c1_of(params.p), c2_of(params.p), rep.c3)


def check_structure_inequalities(params: FluxParams, F: np.ndarray, G: np.ndarray, c3: float | None = None,
                           slack: float = 1e-12) -> dict:
    """Count violations of the structure inequalities on a batch of pairs.

    The identity error is measured relative to |A(F) - A(G)| |F - G|.  The two
    one-sided bounds get a relative slack of ``slack`` on the bound.  Indices of
    violating samples are returned under ``*_index``.
    """
    dA = flux(params, F) - flux(params, G)
    scale = np.sqrt(sqnorm_batch(dA) * sqnorm_batch(F - G))
    direct = monotonicity_pair(params, F, G)
    realified = monotonicity_pair_realified(params, F, G)
    ok = scale > 0
    ident = np.zeros(len(F))
    ident[ok] = np.abs(direct[ok] - realified[ok]) / scale[ok]

    low = lower_gap(params, F, G)
    v1 = np.flatnonzero(direct.real < low * (1 - slack))
    up = lipschitz_gap(params, F, G)
    v2 = np.flatnonzero(np.sqrt(sqnorm_batch(dA)) > up * (1 + slack))
    out = {
        "identity_max_rel": float(ident.max()),
        "str1_violations": int(v1.size),
        "str2_violations": int(v2.size),
        "str1_index": v1.tolist()[:10],
        "str2_index": v2.tolist()[:10],
    }
    if c3 is not None:
        r = v_ratio(params, F, G)
        r = np.where(np.isfinite(r), r, 1.0)
        v3 = np.flatnonzero((r > c3) | (r < 1 / c3))
        out.update(str3_out_of_band=int(v3.size), str3_index=v3.tolist()[:10],
                   ratio_min=float(r.min()), ratio_max=float(r.max()))
    return out
