"""Record-time decomposition of the potential and valley geometry.

The potential splits at its weak descending record times (``e_0 = 0``,
``e_{p+1} = min{x > e_p : V(x) <= V(e_p)}``) into i.i.d. blocks. High blocks
(height above a critical level) are the deep valleys that dominate hitting
times; the helpers here locate them, check their separation, and compute the
per-block functionals feeding the exact hitting-time formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import env as env_mod
from .errors import EstimationError


@dataclass(frozen=True)
class ValleyDecomposition:
    """Record times of the potential from a start site.

    ``epochs`` are the record sites e_0 < e_1 < ... found inside the window.
    ``heights[p]`` is max V over [e_p, e_{p+1}) minus V(e_p); the trailing
    partial block past the last epoch is not represented.
    """

    epochs: np.ndarray
    heights: np.ndarray
    v_at_epochs: np.ndarray

    @property
    def count(self):
        return self.heights.size


def ladder_epochs(env, start=0):
    """Decompose the potential right of ``start`` into record blocks."""
    i0 = env.index(start)
    v = env.v[i0:]
    record = np.minimum.accumulate(v)
    is_epoch = np.empty(v.size, dtype=bool)
    is_epoch[0] = True
    is_epoch[1:] = v[1:] <= record[:-1]
    idx = np.flatnonzero(is_epoch)
    epochs = idx + start
    if idx.size > 1:
        hi = np.maximum.reduceat(v, idx)[:-1]
        heights = hi - v[idx[:-1]]
    else:
        heights = np.zeros(0, dtype=np.float64)
    return ValleyDecomposition(
        epochs=epochs.astype(np.int64),
        heights=heights,
        v_at_epochs=v[idx].copy(),
    )


def n_of_x(decomp, x):
    """Number of complete blocks before x: max{p : e_p <= x}."""
    x = np.asarray(x)
    if np.any(x < decomp.epochs[0]):
        raise ValueError("x lies before the first record site")
    p = np.searchsorted(decomp.epochs, x, side="right") - 1
    return p if p.ndim else int(p)


def critical_height(n, kappa):
    """Height threshold (1/kappa) log n - log log n separating high blocks at space scale n."""
    n = float(n)
    if n <= math.e:
        raise ValueError("need n > e for a positive double logarithm")
    return math.log(n) / kappa - math.log(math.log(n))


def hitting_scale_height(t):
    """Height threshold log t - log log t at time scale t."""
    t = float(t)
    if t < math.exp(math.e):
        raise ValueError("need t >= e^e")
    return math.log(t) - math.log(math.log(t))


def spacing_blocks(n, kappa, mean_drop, gamma=0.5):
    """Number of blocks D = ceil((1+gamma) log n / (A kappa)) kept as a buffer
    left of each high block; ``mean_drop`` is A = E[-V(e_1)] (any positive
    stand-in is admissible when that mean is unknown)."""
    if mean_drop <= 0.0:
        raise ValueError("mean_drop must be positive")
    return int(math.ceil((1.0 + gamma) * math.log(n) / (mean_drop * kappa)))


def mean_block_drop(spec, rng, samples=100_000):
    """Monte Carlo estimate of A = E[-V(e_1)]."""
    batch = env_mod.sample_excursion_batch(spec, samples, rng)
    return float(-batch.v_end.mean())


@dataclass(frozen=True)
class DeepValleys:
    """High blocks: sigma indexes the blocks with height >= threshold;
    b = e_sigma, d = e_{sigma+1}, a = e_{sigma - spacing} (clamped at e_0,
    with ``clamped`` flagging where the buffer ran out of window)."""

    threshold: float
    spacing: int
    sigma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    clamped: np.ndarray


def deep_valleys(decomp, threshold, spacing):
    sigma = np.flatnonzero(decomp.heights >= threshold)
    back = sigma - spacing
    clamped = back < 0
    return DeepValleys(
        threshold=float(threshold),
        spacing=int(spacing),
        sigma=sigma.astype(np.int64),
        a=decomp.epochs[np.maximum(back, 0)],
        b=decomp.epochs[sigma],
        d=decomp.epochs[sigma + 1],
        clamped=clamped,
    )


def no_overlap(deep):
    """True when the buffered valleys stay disjoint and right of the origin:
    0 < a_1 and d_i < a_{i+1} for consecutive high blocks."""
    if deep.sigma.size == 0:
        return True
    if bool(deep.clamped.any()) or int(deep.a[0]) <= 0:
        return False
    return bool(np.all(deep.d[:-1] < deep.a[1:]))


# ---------------------------------------------------------------------------
# per-block functionals


@dataclass(frozen=True)
class ExcursionFunctionals:
    """Scalars of one block in local coordinates (V(0) = 0):

    ``height`` H and its first argmax ``t_height``; ``m1`` sums e^{-V} left of
    t_height, ``m2`` sums e^{V - H} over the block, ``m1_prime`` sums e^{-V}
    over the block, and ``z = m1 * m2 * e^H`` is half the expected block
    crossing time of a walk dropped at the block start.
    """

    height: float
    t_height: int
    m1: float
    m2: float
    m1_prime: float

    @property
    def z(self):
        return self.m1 * self.m2 * math.exp(self.height)


def functionals(excursion):
    """Functionals of a single excursion."""
    inc = np.log1p(-excursion.omegas) - np.log(excursion.omegas)
    v = np.concatenate([[0.0], np.cumsum(inc)])[:-1]  # V at local sites 0..length-1
    t_h = int(np.argmax(v))
    h = float(v[t_h])
    return ExcursionFunctionals(
        height=h,
        t_height=t_h,
        m1=float(np.exp(-v[:t_h]).sum()),
        m2=float(np.exp(v - h).sum()),
        m1_prime=float(np.exp(-v).sum()),
    )


def block_functionals(env, decomp):
    """Vectorized :func:`functionals` for every complete block of ``decomp``.

    Returns arrays (height, t_height, m1, m2, m1_prime, z) indexed by block.
    ``t_height`` is in window site coordinates.
    """
    if decomp.count == 0:
        z = np.zeros(0)
        return z, np.zeros(0, dtype=np.int64), z, z, z, z
    idx = decomp.epochs - env.offset
    lo = int(idx[0])
    starts = idx[:-1] - lo
    lens = np.diff(idx)
    rel = env.v[lo : int(idx[-1])] - np.repeat(decomp.v_at_epochs[:-1], lens)
    seg = np.repeat(np.arange(starts.size), lens)

    heights = np.maximum.reduceat(rel, starts)
    # first argmax per block: smallest index attaining the block max
    pos = np.arange(rel.size)
    at_max = rel == heights[seg]
    t_idx = np.minimum.reduceat(np.where(at_max, pos, rel.size), starts)

    exp_neg = np.exp(-rel)
    exp_rel = np.exp(rel - heights[seg])
    m2 = np.add.reduceat(exp_rel, starts)
    m1_prime = np.add.reduceat(exp_neg, starts)
    cum_neg = np.concatenate([[0.0], np.cumsum(exp_neg)])
    m1 = cum_neg[t_idx] - cum_neg[starts]
    z = m1 * m2 * np.exp(heights)
    return heights, (t_idx + lo + env.offset).astype(np.int64), m1, m2, m1_prime, z


# ---------------------------------------------------------------------------
# good environments at time scale t


def max_rise(v):
    """max over u <= v of V(v) - V(u) within the given potential slice."""
    if v.size < 2:
        return 0.0
    return float(np.max(v - np.minimum.accumulate(v)))


def max_drop(v):
    """max over u <= v of V(u) - V(v) (depth of the worst descent)."""
    if v.size < 2:
        return 0.0
    return float(np.max(np.maximum.accumulate(v) - v))


def r_minus(env):
    """Resistance-like functional of the left half of the window:

    sum over x <= 0 of (1 + 2 sum_{x<y<=0} e^{V(y)-V(x)}) *
    (e^{-V(x)} + 2 sum_{w<x} e^{-V(w)}), the left tail truncated at the
    window edge.
    """
    if env.offset > 0:
        raise ValueError("window does not reach the origin")
    v = env.v[: env.index(0) + 1]
    ev = np.exp(v)
    emv = np.exp(-v)
    # suffix[i] = sum_{y > x_i, y <= 0} e^{V(y)}
    suffix = np.cumsum(ev[::-1])[::-1] - ev
    # prefix[i] = sum_{w < x_i} e^{-V(w)}, window-truncated
    prefix = np.cumsum(emv) - emv
    return float(np.sum((1.0 + 2.0 * emv * suffix) * (emv + 2.0 * prefix)))


@dataclass(frozen=True)
class GoodEnvReport:
    ok: bool
    ok_width: bool
    ok_smooth: bool
    ok_left_tail: bool
    e1: int
    rough: float
    r_minus: float


def default_alpha(kappa):
    """Midpoint of the admissible band max{0,1-kappa} < alpha < min{1,2-kappa}."""
    lo = max(0.0, 1.0 - kappa)
    hi = min(1.0, 2.0 - kappa)
    return 0.5 * (lo + hi)


def good_env_check(env, t, kappa, alpha=None, width_const=20.0):
    """Check the three geometry conditions of a typical valley at time scale t:

    the first block is narrow (e_1 <= C log t), its potential is smooth
    (no drop before the peak and no rise after it exceeding alpha log t),
    and the left half of the window is light (r_minus <= (log t)^4 t^alpha).
    """
    if alpha is None:
        alpha = default_alpha(kappa)
    lo, hi = max(0.0, 1.0 - kappa), min(1.0, 2.0 - kappa)
    if not (lo < alpha < hi):
        raise ValueError("alpha=%g outside the admissible band (%g, %g)" % (alpha, lo, hi))
    log_t = math.log(t)
    decomp = ladder_epochs(env, start=0)
    if decomp.count < 1:
        raise EstimationError("window ends before e_1; cannot assess the first block")
    e1 = int(decomp.epochs[1])
    i0 = env.index(0)
    fn_h, fn_t, _, _, _, _ = block_functionals(env, decomp)
    t_h = int(fn_t[0])
    drop = max_drop(env.v[i0 : env.index(t_h) + 1])
    rise = max_rise(env.v[env.index(t_h) : env.index(e1) + 1])
    rough = max(drop, rise)
    rm = r_minus(env)
    ok_width = e1 <= width_const * log_t
    ok_smooth = rough <= alpha * log_t
    ok_left = rm <= log_t**4 * t**alpha
    return GoodEnvReport(
        ok=bool(ok_width and ok_smooth and ok_left),
        ok_width=bool(ok_width),
        ok_smooth=bool(ok_smooth),
        ok_left_tail=bool(ok_left),
        e1=e1,
        rough=float(rough),
        r_minus=float(rm),
    )


# ---------------------------------------------------------------------------
# surgery on windows


def find_d_minus(env, threshold):
    """Right end d_- of the nearest block left of the origin with height >= threshold.

    Needs the left block metadata recorded by the glued construction; the
    blocks are scanned from the origin outward.
    """
    if env.left_heights is None or env.left_epochs is None:
        raise ValueError("environment carries no left block metadata")
    hits = np.flatnonzero(env.left_heights >= threshold)
    if hits.size == 0:
        raise EstimationError(
            "no left block reaches height %g inside the window" % threshold
        )
    k = int(hits[0])  # blocks are stored inner-first
    return 0 if k == 0 else int(env.left_epochs[k - 1])


def substitute_high_excursions(environment, spec, threshold, rng, budget=10**7):
    """Replace every right-side block of height >= threshold with a fresh
    excursion conditioned to stay below it.

    Returns ``(modified_env, replaced)`` where ``replaced`` lists the block
    indices (in the original decomposition) that were swapped out. The left
    half of the window and all low blocks are untouched; the modified window
    keeps the same number of right blocks, so replaced indices address the
    same blocks in both windows.
    """
    decomp = ladder_epochs(environment, start=0)
    replaced = np.flatnonzero(decomp.heights >= threshold)
    i0 = environment.index(0)
    pieces = [environment.omegas[: i0 + 1]]  # left half including omega_0
    idx = decomp.epochs - environment.offset
    for p in range(decomp.count):
        if decomp.heights[p] >= threshold:
            exc = env_mod.sample_excursion_conditioned(
                spec, threshold, rng, side="lt", budget=budget
            )
            pieces.append(exc.omegas)
        else:
            pieces.append(environment.omegas[idx[p] + 1 : idx[p + 1] + 1])
    modified = env_mod.Environment(
        environment.offset,
        np.concatenate(pieces),
        regime="modified",
        modified_threshold=float(threshold),
        left_epochs=environment.left_epochs,
        left_heights=environment.left_heights,
    )
    return modified, replaced.astype(np.int64)
