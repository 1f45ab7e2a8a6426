"""Pre-steering, DAS, higher-order DMAS and coherence-factor weighting.

DMAS of order ``n`` is the ``n``-th elementary symmetric polynomial of the
signed ``n``-th roots of the steered channel values.  It is evaluated from
the power sums ``P_1..P_n`` (Newton-Girard), which costs O(N) per pixel
instead of O(N**n).

The slice-level functions operate on the last axis and broadcast over any
leading axes.  ``beamform_images`` is the image kernel: every (direction,
time) pixel is computed independently, so the result does not depend on how
the pixel domain is split across threads.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import os

import numba
import numpy as np

from airbeam.array import DelayTable, DirectionGrid, SOUND_SPEED
from airbeam.signals import MultichannelRecording

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # avoids probing an outdated TBB runtime on import
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

CF_EPSILON = 1e-30
BRUTE_FORCE_LIMIT = 10 ** 7
SINC_TAPS = 16


@dataclass(frozen=True)
class BeamformerSpec:
    """``order == 1`` selects DAS, ``order >= 2`` selects DMAS of that order."""

    order: int = 1
    apply_cf: bool = False
    cf_epsilon: float = CF_EPSILON

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"beamformer order must be >= 1, got {self.order}")
        if self.cf_epsilon < 0:
            raise ValueError("cf_epsilon must be non-negative")

    @property
    def kind(self) -> str:
        return "DAS" if self.order == 1 else "DMAS"

    @property
    def label(self) -> str:
        base = "DAS" if self.order == 1 else f"DMAS{self.order}"
        return base + ("-CF" if self.apply_cf else "")

    @classmethod
    def parse(cls, text: str) -> "BeamformerSpec":
        """Parse labels such as ``das``, ``DMAS3``, ``dmas5-cf`` or ``dmas4+cf``."""
        m = re.fullmatch(r"\s*(das|dmas(\d+))\s*(?:[-+_]\s*(cf))?\s*", text.lower())
        if m is None:
            raise ValueError(f"unknown beamformer {text!r}")
        order = 1 if m.group(1) == "das" else int(m.group(2))
        if m.group(1) != "das" and order < 2:
            raise ValueError("DMAS order must be >= 2")
        return cls(order, m.group(3) is not None)


@dataclass(frozen=True)
class AcousticImage:
    """Pixels ``(M, T)``: one row per grid direction, one column per time sample."""

    pixels: np.ndarray
    grid: DirectionGrid
    sample_rate: float
    start_time: float = 0.0
    sound_speed: float = SOUND_SPEED
    label: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.shape[0] != len(self.grid):
            raise ValueError(f"pixels {self.pixels.shape} do not match {len(self.grid)} directions")

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.pixels.shape[1]) / self.sample_rate

    @property
    def ranges(self) -> np.ndarray:
        """Pulse-echo range of each column, ``r = c t / 2``."""
        return self.sound_speed * self.times / 2

    def time_index(self, t: float) -> int:
        return int(round((t - self.start_time) * self.sample_rate))

    def range_index(self, r: float) -> int:
        return self.time_index(2 * r / self.sound_speed)

    def with_pixels(self, pixels: np.ndarray, label: Optional[str] = None) -> "AcousticImage":
        return AcousticImage(pixels, self.grid, self.sample_rate, self.start_time,
                             self.sound_speed, self.label if label is None else label)


# ---------------------------------------------------------------- slice math

def das(x: np.ndarray) -> np.ndarray:
    return np.sum(x, axis=-1)


def signed_root(x, n: int):
    """``sgn(x) |x|**(1/n)`` with ``sgn(0) = 0``."""
    if n < 1:
        raise ValueError("root order must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.abs(x) ** (1.0 / n)


def power_sums(x: np.ndarray, n: int) -> np.ndarray:
    """``P_k = sum_i s_i**k`` for ``k = 1..n`` on the signed ``n``-th roots ``s``.

    Returns shape ``(..., n)`` with ``P_k`` at index ``k - 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = signed_root(x, n)
    out = np.empty(s.shape[:-1] + (n,))
    p = np.ones_like(s)
    for k in range(n):
        p = p * s
        out[..., k] = p.sum(axis=-1)
    return out


def _check_order(x: np.ndarray, n: int) -> None:
    if n < 1:
        raise ValueError("order must be >= 1")
    if x.shape[-1] < n:
        raise ValueError(f"order {n} needs at least {n} channels, got {x.shape[-1]}")


def dmas_fast(x: np.ndarray, n: int) -> np.ndarray:
    """DMAS of order 2..5 from the pre-expanded Newton-Girard formulas."""
    x = np.asarray(x, dtype=np.float64)
    if n not in (2, 3, 4, 5):
        raise ValueError(f"explicit expansion exists for orders 2..5, got {n}")
    _check_order(x, n)
    P = power_sums(x, n)
    p1, p2 = P[..., 0], P[..., 1]
    if n == 2:
        return 0.5 * (p1 ** 2 - p2)
    p3 = P[..., 2]
    if n == 3:
        return (p1 ** 3 + 2 * p3 - 3 * p1 * p2) / 6
    p4 = P[..., 3]
    if n == 4:
        return (p1 ** 4 - 6 * p4 + 3 * p2 ** 2 - 6 * p2 * p1 ** 2 + 8 * p3 * p1) / 24
    p5 = P[..., 4]
    return (p1 ** 5 - 10 * p2 * p1 ** 3 + 15 * p2 ** 2 * p1 + 20 * p3 * p1 ** 2
            - 20 * p3 * p2 - 30 * p1 * p4 + 24 * p5) / 120


def _partitions(n: int, largest: Optional[int] = None):
    if largest is None:
        largest = n
    if n == 0:
        yield ()
        return
    for part in range(min(n, largest), 0, -1):
        for rest in _partitions(n - part, part):
            yield (part,) + rest


@lru_cache(maxsize=None)
def newton_girard_terms(n: int) -> Tuple[Tuple[Fraction, Tuple[int, ...]], ...]:
    """Terms ``(coefficient, (k_1..k_n))`` with ``E_n = sum coef * prod P_i**k_i``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    terms = []
    for part in _partitions(n):
        k = [0] * n
        for p in part:
            k[p - 1] += 1
        denom = 1
        for i, ki in enumerate(k, start=1):
            denom *= math.factorial(ki) * i ** ki
        sign = -1 if (n - sum(k)) % 2 else 1
        terms.append((Fraction(sign, denom), tuple(k)))
    return tuple(terms)


def dmas_general(x: np.ndarray, n: int) -> np.ndarray:
    """DMAS of any order ``n >= 1`` via the partition form of Newton-Girard."""
    x = np.asarray(x, dtype=np.float64)
    _check_order(x, n)
    P = power_sums(x, n)
    out = np.zeros(P.shape[:-1])
    for coef, k in newton_girard_terms(n):
        term = np.full(P.shape[:-1], float(coef))
        for i, ki in enumerate(k):
            if ki:
                term = term * P[..., i] ** ki
        out = out + term
    return out


def dmas_brute_force(x: np.ndarray, n: int) -> float:
    """Sum over all ``n``-subsets of the product of signed roots (test oracle)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    _check_order(x, n)
    if math.comb(x.size, n) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"C({x.size}, {n}) subsets exceed the enumeration limit")
    s = signed_root(x, n).tolist()
    return math.fsum(math.prod(s[i] for i in idx) for idx in itertools.combinations(range(x.size), n))


def dmas_pairwise(x: np.ndarray) -> float:
    """Order-2 DMAS as the explicit double sum over microphone pairs."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    total = 0.0
    for i in range(x.size - 1):
        for j in range(i + 1, x.size):
            p = x[i] * x[j]
            total += math.copysign(math.sqrt(abs(p)), p) if p != 0 else 0.0
    return total


def coherence_factor(x: np.ndarray, epsilon: float = CF_EPSILON) -> np.ndarray:
    """``(sum x)**2 / (N sum x**2 + epsilon)``; all-zero slices give 0."""
    x = np.asarray(x, dtype=np.float64)
    coherent = np.sum(x, axis=-1) ** 2
    incoherent = x.shape[-1] * np.sum(x * x, axis=-1)
    return _cf_ratio(coherent, incoherent, epsilon)


def _cf_ratio(coherent, incoherent, epsilon):
    incoherent = np.asarray(incoherent, dtype=np.float64)
    safe = np.where(incoherent > 0, incoherent + epsilon, 1.0)
    # Cauchy-Schwarz bounds the exact ratio by 1; clip the last-ulp rounding excess
    return np.where(incoherent > 0, np.minimum(np.asarray(coherent) / safe, 1.0), 0.0)


# ------------------------------------------------------------ pre-steering

def steering_taps(delays: DelayTable, sample_rate: float,
                  interpolation: str = "linear") -> Tuple[np.ndarray, np.ndarray]:
    """Integer read offsets ``(N, M)`` and interpolation weights ``(N, M, K)``.

    Steered value: ``x_i(t) = sum_k w[i, m, k] * m_i[t + off[i, m] + k]``.
    """
    d = delays.delays * sample_rate
    base = np.floor(d)
    frac = d - base
    if interpolation == "linear":
        weights = np.stack([1.0 - frac, frac], axis=-1)
        offsets = base
    elif interpolation == "sinc":
        half = SINC_TAPS // 2
        k = np.arange(SINC_TAPS) - (half - 1)
        m = k[None, None, :] - frac[..., None]
        beta = 6.0
        win = np.i0(beta * np.sqrt(np.clip(1 - (2 * m / SINC_TAPS) ** 2, 0, None))) / np.i0(beta)
        weights = np.sinc(m) * win
        weights /= weights.sum(axis=-1, keepdims=True)
        offsets = base - (half - 1)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return np.ascontiguousarray(offsets, dtype=np.int64), np.ascontiguousarray(weights)


def pre_steer(rec: MultichannelRecording, delays: DelayTable, direction_index: int, t_index: int,
              interpolation: str = "linear") -> np.ndarray:
    """Steered slice ``x_i = m_i(t + tau_i)``; reads outside the recording are 0."""
    if not 0 <= direction_index < delays.n_directions:
        raise IndexError("direction index out of range")
    if delays.n_mics != rec.n_channels:
        raise ValueError("delay table and recording disagree on channel count")
    sub = DelayTable(delays.delays[:, direction_index:direction_index + 1], delays.sound_speed,
                     delays.reference)
    offsets, weights = steering_taps(sub, rec.sample_rate, interpolation)
    out = np.zeros(rec.n_channels)
    T = rec.n_samples
    for i in range(rec.n_channels):
        for k in range(weights.shape[-1]):
            idx = t_index + offsets[i, 0] + k
            if 0 <= idx < T:
                out[i] += weights[i, 0, k] * rec.samples[i, idx]
    return out


# ------------------------------------------------------------ image kernel

def _term_tables(orders: Sequence[int]):
    max_order = max(orders)
    coefs, exps, starts, counts = [], [], [], []
    for n in orders:
        terms = newton_girard_terms(n) if n >= 2 else ()
        starts.append(len(coefs))
        counts.append(len(terms))
        for coef, k in terms:
            coefs.append(float(coef))
            exps.append(list(k) + [0] * (max_order - n))
    if not coefs:
        coefs, exps = [0.0], [[0] * max_order]
    return (np.array(coefs), np.array(exps, dtype=np.int64).reshape(len(coefs), max_order),
            np.array(starts, dtype=np.int64), np.array(counts, dtype=np.int64))


@numba.njit(parallel=True, cache=True)
def _kernel(samples, offsets, weights, t0, nt, orders, coefs, exps, starts, counts,
            out, sum1, sumsq):
    # one direction per task; the time axis is innermost so loops vectorise
    n_ch, n_rec = samples.shape
    n_dir = offsets.shape[1]
    n_taps = weights.shape[2]
    n_orders = orders.shape[0]
    max_order = exps.shape[1]
    for m in numba.prange(n_dir):
        X = np.zeros((n_ch, nt))
        for i in range(n_ch):
            for k in range(n_taps):
                w = weights[i, m, k]
                start = t0 + offsets[i, m] + k
                lo = max(0, -start)
                hi = min(nt, n_rec - start)
                for tt in range(lo, hi):
                    X[i, tt] += w * samples[i, start + tt]
        s1 = np.zeros(nt)
        s2 = np.zeros(nt)
        for i in range(n_ch):
            for tt in range(nt):
                v = X[i, tt]
                s1[tt] += v
                s2[tt] += v * v
        sum1[m] = s1
        sumsq[m] = s2

        P = np.empty((max_order, nt))
        r = np.empty(nt)
        p = np.empty(nt)
        for oi in range(n_orders):
            n = orders[oi]
            if n == 1:
                out[oi, m] = s1
                continue
            P[:n] = 0.0
            inv = 1.0 / n
            for i in range(n_ch):
                xi = X[i]
                if n == 2:
                    for tt in range(nt):
                        r[tt] = math.sqrt(abs(xi[tt]))
                elif n == 3:
                    for tt in range(nt):
                        r[tt] = np.cbrt(abs(xi[tt]))
                elif n == 4:
                    for tt in range(nt):
                        r[tt] = math.sqrt(math.sqrt(abs(xi[tt])))
                else:
                    for tt in range(nt):
                        r[tt] = abs(xi[tt]) ** inv
                for tt in range(nt):
                    if xi[tt] < 0.0:
                        r[tt] = -r[tt]
                    p[tt] = r[tt]
                for k in range(n):
                    for tt in range(nt):
                        P[k, tt] += p[tt]
                        p[tt] *= r[tt]
            for tt in range(nt):
                val = 0.0
                for j in range(starts[oi], starts[oi] + counts[oi]):
                    term = coefs[j]
                    for q in range(n):
                        for _ in range(exps[j, q]):
                            term *= P[q, tt]
                    val += term
                out[oi, m, tt] = val


def set_threads(n: Optional[int]) -> None:
    """Worker threads for the image kernel (``None`` keeps numba's default)."""
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def beamform_images(rec: MultichannelRecording, delays: DelayTable,
                    specs: Sequence[BeamformerSpec], t_start: int = 0, n_t: Optional[int] = None,
                    interpolation: str = "linear") -> List[AcousticImage]:
    """Beamform several variants from one shared pre-steering pass.

    Columns cover recording samples ``t_start .. t_start + n_t - 1``.
    """
    if delays.n_mics != rec.n_channels:
        raise ValueError(f"delay table has {delays.n_mics} channels, recording {rec.n_channels}")
    grid = delays.grid
    if grid is None or delays.n_directions != len(grid):
        raise ValueError("delay table must carry its direction grid")
    if not specs:
        raise ValueError("no beamformers requested")
    for spec in specs:
        if spec.order > rec.n_channels:
            raise ValueError(f"{spec.label} needs at least {spec.order} channels")
    if n_t is None:
        n_t = rec.n_samples - t_start
    if n_t < 1:
        raise ValueError("empty time window")

    orders = sorted({s.order for s in specs})
    coefs, exps, starts, counts = _term_tables(orders)
    offsets, weights = steering_taps(delays, rec.sample_rate, interpolation)
    samples = np.ascontiguousarray(rec.samples, dtype=np.float64)
    M = delays.n_directions
    out = np.empty((len(orders), M, n_t))
    sum1 = np.empty((M, n_t))
    sumsq = np.empty((M, n_t))
    _kernel(samples, offsets, weights, int(t_start), int(n_t), np.array(orders, dtype=np.int64),
            coefs, exps, starts, counts, out, sum1, sumsq)

    if not np.all(np.isfinite(out)):
        raise FloatingPointError("beamformer produced non-finite pixels")
    images = []
    t0 = t_start / rec.sample_rate
    for spec in specs:
        pix = out[orders.index(spec.order)]
        if spec.apply_cf:
            pix = pix * _cf_ratio(sum1 * sum1, rec.n_channels * sumsq, spec.cf_epsilon)
        else:
            pix = pix.copy()
        images.append(AcousticImage(pix, grid, rec.sample_rate, t0, delays.sound_speed, spec.label))
    return images


def beamform_image(rec: MultichannelRecording, delays: DelayTable, spec: BeamformerSpec, t_start: int = 0, n_t: Optional[int] = None,
                   interpolation: str = "linear") -> AcousticImage:
    return beamform_images(rec, delays, [spec], t_start, n_t, interpolation)[0]
