"""Environment laws, potentials, and window samplers.

An environment is a vector of site probabilities ``omega[x] = P(step right at x)``
on an integer window. The potential is ``V(x) = sum_{y<=x} log rho_y`` with
``rho_y = (1 - omega_y) / omega_y`` and ``V`` anchored to 0 at the origin.

Three laws are supported: a Beta law (continuous, closed-form moments) and two
discrete laws (two-point and tabulated). Discrete laws load all moments exactly
from their atoms; the Beta law uses Gamma-function identities. Every law is
validated at construction: omegas must live strictly inside (0, 1), the walk
must drift right (``E[log rho] < 0``), and the tilt equation ``E[rho^s] = 1``
must have a root strictly inside (0, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import specialfn
from .errors import (
    BudgetExhaustedError,
    EnvSpecError,
    DivergentMomentError,
    RunawayExcursionError,
)

KAPPA_UPPER = 2.0
_KAPPA_RESIDUAL_TOL = 1e-12


# ---------------------------------------------------------------------------
# environment laws


@dataclass(frozen=True)
class BetaEnv:
    """omega ~ Beta(alpha, beta); kappa = alpha - beta in closed form."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise EnvSpecError("Beta parameters must be positive")
        if self.alpha <= self.beta:
            raise EnvSpecError(
                "Beta law with alpha <= beta is not transient to the right "
                "(E[log rho] = digamma(beta) - digamma(alpha) >= 0)"
            )
        if self.alpha - self.beta >= KAPPA_UPPER:
            raise EnvSpecError(
                "Beta law has tail exponent alpha - beta = %g outside (0, 2)"
                % (self.alpha - self.beta)
            )


@dataclass(frozen=True)
class TwoPointEnv:
    """omega equals omega_hi with probability p_hi, else omega_lo."""

    omega_hi: float
    omega_lo: float
    p_hi: float

    def __post_init__(self):
        if not (0.0 < self.omega_lo < self.omega_hi < 1.0):
            raise EnvSpecError("two-point law needs 0 < omega_lo < omega_hi < 1")
        if not (0.0 < self.p_hi < 1.0):
            raise EnvSpecError("two-point weight must lie in (0, 1)")
        _validate_discrete(*self.atoms())

    def atoms(self):
        omegas = np.array([self.omega_hi, self.omega_lo])
        weights = np.array([self.p_hi, 1.0 - self.p_hi])
        return omegas, weights


@dataclass(frozen=True)
class TabulatedEnv:
    """omega drawn from a finite table of atoms with the given weights."""

    omegas: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        o = np.asarray(self.omegas, dtype=float)
        if o.size == 0 or o.size != w.size:
            raise EnvSpecError("tabulated law needs matching, non-empty atom and weight lists")
        if np.any(o <= 0.0) or np.any(o >= 1.0):
            raise EnvSpecError("tabulated omegas must lie strictly inside (0, 1)")
        if np.any(w <= 0.0):
            raise EnvSpecError("tabulated weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise EnvSpecError("tabulated weights must sum to 1 (got %r)" % w.sum())
        _validate_discrete(*self.atoms())

    def atoms(self):
        o = np.asarray(self.omegas, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        return o, w / w.sum()


def _validate_discrete(omegas, weights):
    rho = (1.0 - omegas) / omegas
    if float(weights @ np.log(rho)) >= 0.0:
        raise EnvSpecError("law is not transient to the right: E[log rho] >= 0")
    if float(weights @ rho**2) <= 1.0:
        raise EnvSpecError(
            "E[rho^s] stays below 1 on (0, 2]: tail exponent does not lie in (0, 2)"
        )


def is_discrete(spec):
    return isinstance(spec, (TwoPointEnv, TabulatedEnv))


# ---------------------------------------------------------------------------
# moments and calibration


def moment_rho(spec, s):
    """E[rho^s] for real s (s < alpha required under the Beta law)."""
    if isinstance(spec, BetaEnv):
        if s >= spec.alpha:
            raise DivergentMomentError(
                "E[rho^s] diverges for s >= alpha = %g" % spec.alpha
            )
        return math.exp(
            specialfn.log_gamma(spec.alpha - s)
            + specialfn.log_gamma(spec.beta + s)
            - specialfn.log_gamma(spec.alpha)
            - specialfn.log_gamma(spec.beta)
        )
    omegas, weights = spec.atoms()
    rho = (1.0 - omegas) / omegas
    return float(weights @ rho**s)


def moment_rho_log(spec, s):
    """E[rho^s log rho]; s = 0 gives the drift E[log rho]."""
    if isinstance(spec, BetaEnv):
        if s >= spec.alpha:
            raise DivergentMomentError(
                "E[rho^s log rho] diverges for s >= alpha = %g" % spec.alpha
            )
        return moment_rho(spec, s) * (
            specialfn.digamma(spec.beta + s) - specialfn.digamma(spec.alpha - s)
        )
    omegas, weights = spec.atoms()
    rho = (1.0 - omegas) / omegas
    return float(weights @ (rho**s * np.log(rho)))


def calibrate_kappa(spec, tol=_KAPPA_RESIDUAL_TOL):
    """Root of E[rho^s] = 1 in (0, 2).

    The root exists and is unique under the construction-time checks: the
    moment function equals 1 at s = 0, has negative slope there, and is
    convex, so it crosses 1 exactly once on the positive axis.
    """
    if isinstance(spec, BetaEnv):
        hi = min(KAPPA_UPPER, spec.alpha * (1.0 - 1e-12))
    else:
        hi = KAPPA_UPPER

    def f(s):
        return moment_rho(spec, s) - 1.0

    if f(hi) <= 0.0:
        raise EnvSpecError("tail exponent does not lie in (0, 2) for this law")
    kappa = optimize.brentq(f, 1e-10, hi, xtol=1e-15, rtol=8.9e-16)
    residual = abs(moment_rho(spec, kappa) - 1.0)
    if residual > tol:
        raise EnvSpecError(
            "tilt-equation root residual %.3e exceeds tolerance %.1e" % (residual, tol)
        )
    return kappa


def sample_omegas(spec, rng, size):
    """Draw i.i.d. site probabilities."""
    if isinstance(spec, BetaEnv):
        return rng.beta(spec.alpha, spec.beta, size)
    omegas, weights = spec.atoms()
    return omegas[rng.choice(omegas.size, size=size, p=weights)]


# ---------------------------------------------------------------------------
# environment windows


class Environment:
    """Site probabilities on the window [offset, offset + len - 1] plus the potential.

    ``regime`` records how the window was produced: "plain" for i.i.d. draws,
    "conditioned_nonneg_left" for the two-sided construction whose left half is
    glued from ascending excursion blocks (so V >= 0 left of the origin), and
    "modified" for windows whose high excursions were replaced.

    ``left_epochs``/``right_epochs``/``left_heights`` carry the block structure
    when the window was built from excursions; they match what the record-time
    scan recovers from the potential itself.
    """

    __slots__ = (
        "offset",
        "omegas",
        "regime",
        "modified_threshold",
        "left_epochs",
        "left_heights",
        "right_epochs",
        "v",
    )

    def __init__(
        self,
        offset,
        omegas,
        regime="plain",
        modified_threshold=None,
        left_epochs=None,
        left_heights=None,
        right_epochs=None,
    ):
        omegas = np.ascontiguousarray(omegas, dtype=np.float64)
        if omegas.ndim != 1 or omegas.size == 0:
            raise EnvSpecError("environment needs a non-empty 1-d omega vector")
        if np.any(omegas <= 0.0) or np.any(omegas >= 1.0):
            raise EnvSpecError("site probabilities must lie strictly inside (0, 1)")
        if regime not in ("plain", "conditioned_nonneg_left", "modified"):
            raise EnvSpecError("unknown regime %r" % (regime,))
        self.offset = int(offset)
        self.omegas = omegas
        self.regime = regime
        self.modified_threshold = modified_threshold
        self.left_epochs = None if left_epochs is None else np.asarray(left_epochs, dtype=np.int64)
        self.left_heights = (
            None if left_heights is None else np.asarray(left_heights, dtype=np.float64)
        )
        self.right_epochs = (
            None if right_epochs is None else np.asarray(right_epochs, dtype=np.int64)
        )
        self.v = _potential(self.offset, omegas)
        if regime == "conditioned_nonneg_left" and self.offset <= 0:
            head = self.v[: 1 - self.offset]
            if head.size and head.min() < -1e-9:
                raise EnvSpecError(
                    "conditioned_nonneg_left window has V(x) < 0 at some x <= 0"
                )

    def index(self, x):
        """Array index of site x."""
        i = x - self.offset
        if np.any(i < 0) or np.any(i >= self.omegas.size):
            raise IndexError("site %r outside window [%d, %d]" % (x, self.offset, self.right_edge))
        return i

    @property
    def right_edge(self):
        return self.offset + self.omegas.size - 1

    @property
    def n_sites(self):
        return self.omegas.size

    def v_at(self, x):
        return self.v[self.index(x)]

    def __repr__(self):
        return "Environment([%d, %d], regime=%r)" % (self.offset, self.right_edge, self.regime)

    def __reduce__(self):
        return (
            Environment,
            (
                self.offset,
                self.omegas,
                self.regime,
                self.modified_threshold,
                self.left_epochs,
                self.left_heights,
                self.right_epochs,
            ),
        )


def _potential(offset, omegas):
    """V over the window, anchored at site 0 when present (left edge otherwise).

    The running sum is carried in extended precision so that windows of 1e5+
    sites keep the exact-formula tests at 1e-12 relative error.
    """
    log_rho = np.log1p(-omegas) - np.log(omegas)
    cum = np.cumsum(log_rho, dtype=np.longdouble)
    anchor_idx = -offset if offset <= 0 <= offset + omegas.size - 1 else 0
    return np.asarray(cum - cum[anchor_idx], dtype=np.float64)


# ---------------------------------------------------------------------------
# excursions

# The potential splits at its weak descending record times into i.i.d. blocks.
# An excursion is one block, described by the omegas on its sites 1..length
# (local coordinates), so V_local(0) = 0, V_local(t) > 0 for 0 < t < length,
# and V_local(length) = v_end <= 0.


@dataclass(frozen=True)
class Excursion:
    omegas: np.ndarray
    height: float
    v_end: float
    length: int

    @classmethod
    def from_omegas(cls, omegas):
        omegas = np.ascontiguousarray(omegas, dtype=np.float64)
        inc = np.log1p(-omegas) - np.log(omegas)
        v = np.cumsum(inc)
        if v.size > 1 and np.any(v[:-1] <= 0.0):
            raise EnvSpecError("interior potential of an excursion must stay positive")
        if v[-1] > 0.0:
            raise EnvSpecError("excursion potential must end at or below 0")
        height = float(max(0.0, v[:-1].max())) if v.size > 1 else 0.0
        return cls(omegas=omegas, height=height, v_end=float(v[-1]), length=omegas.size)


@dataclass(frozen=True)
class ExcursionBatch:
    """Column-major summaries of `count` i.i.d. excursions.

    ``sum_exp_v`` and ``sum_exp_neg_v`` are sums of e^{+-V_local(t)} over the
    local sites t = 0 .. length-1 (the terminal site is excluded, matching the
    half-open blocks of the record-time decomposition). When sampled with
    ``keep_paths`` the flat omega vector is sliced by ``starts``.
    """

    lengths: np.ndarray
    heights: np.ndarray
    v_end: np.ndarray
    sum_exp_v: np.ndarray
    sum_exp_neg_v: np.ndarray
    omegas: np.ndarray | None = None
    starts: np.ndarray | None = None

    @property
    def count(self):
        return self.lengths.size

    def row(self, i):
        if self.omegas is None:
            raise ValueError("batch was sampled without keep_paths")
        w = self.omegas[self.starts[i] : self.starts[i + 1]]
        return Excursion(
            omegas=w.copy(),
            height=float(self.heights[i]),
            v_end=float(self.v_end[i]),
            length=int(self.lengths[i]),
        )


def sample_excursion_batch(spec, count, rng, keep_paths=False, max_len=10**7):
    """Draw ``count`` excursions at once, streaming column by column.

    Each loop pass draws one more site for every unfinished row, so the
    worst row controls the pass count; typical laws finish in a handful of
    columns because excursion lengths have geometric-like tails.
    """
    count = int(count)
    lengths = np.zeros(count, dtype=np.int64)
    heights = np.zeros(count, dtype=np.float64)
    v_end = np.zeros(count, dtype=np.float64)
    s_pos = np.ones(count, dtype=np.float64)
    s_neg = np.ones(count, dtype=np.float64)
    v = np.zeros(count, dtype=np.float64)
    active = np.arange(count, dtype=np.int64)
    cols = [] if keep_paths else None
    x = 0
    while active.size:
        x += 1
        if x > max_len:
            raise RunawayExcursionError(
                "an excursion exceeded %d sites (%d rows unfinished)" % (max_len, active.size)
            )
        w = sample_omegas(spec, rng, active.size)
        if keep_paths:
            cols.append((active, w))
        cur = v[active] + (np.log1p(-w) - np.log(w))
        done = cur <= 0.0
        ids_done = active[done]
        v_end[ids_done] = cur[done]
        lengths[ids_done] = x
        active = active[~done]
        cur = cur[~done]
        v[active] = cur
        heights[active] = np.maximum(heights[active], cur)
        s_pos[active] += np.exp(cur)
        s_neg[active] += np.exp(-cur)

    omegas = starts = None
    if keep_paths:
        starts = np.zeros(count + 1, dtype=np.int64)
        np.cumsum(lengths, out=starts[1:])
        omegas = np.empty(int(starts[-1]), dtype=np.float64)
        for c, (ids, w) in enumerate(cols):
            omegas[starts[ids] + c] = w
    return ExcursionBatch(
        lengths=lengths,
        heights=heights,
        v_end=v_end,
        sum_exp_v=s_pos,
        sum_exp_neg_v=s_neg,
        omegas=omegas,
        starts=starts,
    )


def sample_excursion(spec, rng, max_len=10**7):
    """Draw one excursion site by site."""
    omegas = []
    v = 0.0
    h = 0.0
    while True:
        w = float(sample_omegas(spec, rng, 1)[0])
        omegas.append(w)
        v += float(np.log1p(-w) - np.log(w))
        if v <= 0.0:
            return Excursion(
                omegas=np.array(omegas), height=h, v_end=v, length=len(omegas)
            )
        if v > h:
            h = v
        if len(omegas) >= max_len:
            raise RunawayExcursionError("an excursion exceeded %d sites" % max_len)


def sample_excursion_conditioned(spec, h, rng, side="ge", budget=10**7, chunk=8192):
    """First excursion whose height compares to ``h`` as ``side`` requires.

    ``side="ge"`` keeps heights >= h (the deep-valley event), ``side="lt"``
    keeps the complement. Plain rejection in chunks; raises
    ``BudgetExhaustedError`` once ``budget`` candidate excursions failed.
    """
    if side not in ("ge", "lt"):
        raise ValueError("side must be 'ge' or 'lt'")
    drawn = 0
    while drawn < budget:
        take = int(min(chunk, budget - drawn))
        batch = sample_excursion_batch(spec, take, rng, keep_paths=True)
        ok = batch.heights >= h if side == "ge" else batch.heights < h
        hits = np.flatnonzero(ok)
        if hits.size:
            return batch.row(int(hits[0]))
        drawn += take
    raise BudgetExhaustedError(
        "no excursion with height %s %g in %d draws" % (side, h, budget),
        draws=drawn,
        accepted=0,
    )


# ---------------------------------------------------------------------------
# window samplers


def sample_env(spec, lo, hi, rng):
    """Plain i.i.d. window on the sites lo..hi inclusive."""
    lo, hi = int(lo), int(hi)
    if lo > hi:
        raise ValueError("empty window [%d, %d]" % (lo, hi))
    return Environment(lo, sample_omegas(spec, rng, hi - lo + 1), regime="plain")


def assemble_env(right_excursions, left_excursions=(), regime="conditioned_nonneg_left"):
    """Glue excursions into a window.

    ``right_excursions[p]`` covers the sites e_p+1 .. e_{p+1} for p = 0, 1, ...
    ``left_excursions[k]`` covers e_{-k-1}+1 .. e_{-k} (inner blocks first), so
    the first left excursion ends at the origin and supplies omega_0. Block
    boundaries and left block heights are recorded on the environment.
    """
    right_excursions = list(right_excursions)
    left_excursions = list(left_excursions)
    if not right_excursions and not left_excursions:
        raise ValueError("need at least one excursion")
    r_len = np.array([e.length for e in right_excursions], dtype=np.int64)
    l_len = np.array([e.length for e in left_excursions], dtype=np.int64)
    right_epochs = np.cumsum(r_len) if r_len.size else np.zeros(0, dtype=np.int64)
    left_epochs = -np.cumsum(l_len) if l_len.size else np.zeros(0, dtype=np.int64)
    pieces = [e.omegas for e in reversed(left_excursions)] + [
        e.omegas for e in right_excursions
    ]
    omegas = np.concatenate(pieces)
    offset = int(left_epochs[-1]) + 1 if l_len.size else 1
    return Environment(
        offset,
        omegas,
        regime=regime,
        left_epochs=left_epochs,
        left_heights=np.array([e.height for e in left_excursions], dtype=np.float64),
        right_epochs=right_epochs,
    )


def sample_env_conditioned(
    spec,
    n_right,
    rng,
    *,
    rel_tol=1e-12,
    n_left_min=1,
    min_left_potential=None,
    require_left_height=None,
    max_left_excursions=10**6,
    first_right=None,
    left_chunk=64,
):
    """Two-sided window under the law conditioned to keep V >= 0 left of 0.

    The right half carries ``n_right`` plain excursions (sites 1 .. e_{n_right}).
    The left half glues plain excursions leftward, which realises the
    conditioned law because V only accrues non-negative block minima. Gluing
    stops once every requested guarantee holds:

    * the undrawn remainder of sum_{x<=0} e^{-V(x)} is below ``rel_tol`` of the
      accumulated sum (every remaining term is at most e^{-V(left block edge)},
      and V at the block edges is non-decreasing going left);
    * at least ``n_left_min`` blocks are present;
    * V at the left edge reached ``min_left_potential`` (if given);
    * some left block has height >= ``require_left_height`` (if given), which
      callers use to locate the nearest high block left of the origin.

    ``first_right`` replaces the first right excursion, e.g. with a draw
    conditioned on its height.
    """
    n_right = int(n_right)
    if n_right < 1:
        raise ValueError("n_right must be >= 1")
    if first_right is not None:
        right_pieces = [first_right.omegas]
        right_lengths = [first_right.length]
    else:
        right_pieces = []
        right_lengths = []
    if n_right - len(right_pieces) > 0:
        batch = sample_excursion_batch(spec, n_right - len(right_pieces), rng, keep_paths=True)
        right_pieces.append(batch.omegas)
        right_lengths.extend(batch.lengths.tolist())

    left_pieces = []
    left_lengths = []
    left_heights = []
    base = 0.0
    s_neg = 0.0  # sum over x <= 0 of e^{-V(x)}; piece sums supply the x = 0 term
    found_high = require_left_height is None
    pool = None
    cursor = 0
    while True:
        converged = math.exp(-base) < rel_tol * s_neg
        deep_enough = min_left_potential is None or base >= min_left_potential
        if len(left_pieces) >= n_left_min and converged and deep_enough and found_high:
            break
        if len(left_pieces) >= max_left_excursions:
            raise BudgetExhaustedError(
                "left construction still unconverged after %d excursions" % len(left_pieces),
                draws=len(left_pieces),
                accepted=len(left_pieces),
            )
        if pool is None or cursor >= pool.count:
            pool = sample_excursion_batch(spec, left_chunk, rng, keep_paths=True)
            starts = pool.starts
            cursor = 0
        v_end = float(pool.v_end[cursor])
        height = float(pool.heights[cursor])
        base -= v_end
        # sites e_{-k-1}+1 .. e_{-k} contribute e^{-base} * sum over local
        # t = 1..length of e^{-V_local(t)}; the batch sums cover t = 0..length-1.
        s_neg += math.exp(-base) * (
            float(pool.sum_exp_neg_v[cursor]) - 1.0 + math.exp(-v_end)
        )
        if require_left_height is not None and height >= require_left_height:
            found_high = True
        left_pieces.append(pool.omegas[starts[cursor] : starts[cursor + 1]])
        left_lengths.append(int(pool.lengths[cursor]))
        left_heights.append(height)
        cursor += 1

    left_epochs = -np.cumsum(np.array(left_lengths, dtype=np.int64))
    return Environment(
        int(left_epochs[-1]) + 1,
        np.concatenate(list(reversed(left_pieces)) + right_pieces),
        regime="conditioned_nonneg_left",
        left_epochs=left_epochs,
        left_heights=np.array(left_heights, dtype=np.float64),
        right_epochs=np.cumsum(np.array(right_lengths, dtype=np.int64)),
    )


def sample_env_window(
    spec,
    rng,
    n_right=1,
    left_clearance=40.0,
    block=128,
    max_sites=10**7,
):
    """Plain two-sided window: ``n_right`` excursions to the right, and a left
    half wide enough that a walk started at 0 exits it with probability at most
    about e^{-left_clearance} before reaching e_{n_right}.

    The stopping rule compares V just outside the left edge with the maximum
    of V over [0, e_n): the exit chance from 0 is bounded by
    sum_{y in [0, e_n)} e^{V(y)} / e^{V(edge - 1)}.
    """
    batch = sample_excursion_batch(spec, int(n_right), rng, keep_paths=True)
    right_epochs = np.cumsum(batch.lengths)
    right_omegas = batch.omegas
    inc = np.log1p(-right_omegas) - np.log(right_omegas)
    v_right = np.cumsum(inc)
    v_max = max(0.0, float(v_right.max()))

    left_blocks = []
    v_succ = 0.0  # V at (current leftmost drawn site) - 1
    n_left = 0
    while not left_blocks or v_succ < v_max + left_clearance:
        if n_left >= max_sites:
            raise BudgetExhaustedError(
                "left window grew past %d sites without clearing the barrier" % max_sites,
                draws=n_left,
                accepted=n_left,
            )
        w = sample_omegas(spec, rng, block)
        left_blocks.append(w)
        n_left += block
        steps = np.log1p(-w) - np.log(w)
        v_succ = v_succ - float(np.sum(steps))

    omegas = np.concatenate([b[::-1] for b in reversed(left_blocks)] + [right_omegas])
    return Environment(
        1 - n_left,
        omegas,
        regime="plain",
        right_epochs=right_epochs,
    )
