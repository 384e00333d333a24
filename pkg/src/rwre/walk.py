"""Walk simulation on a fixed environment window.

The stepping kernel is compiled (``rwre._stepper``) when the extension built;
otherwise the pure-Python twin is used. Both consume one uniform variate per
step from caller-supplied blocks and stop identically, so trajectories are
bit-for-bit reproducible across backends and across worker layouts. Set
``RWRE_PURE_PYTHON=1`` before import to force the fallback.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .errors import WindowExitError

if os.environ.get("RWRE_PURE_PYTHON"):
    from . import _stepper_py as _kernel
else:
    try:
        from . import _stepper as _kernel
    except ImportError:
        from . import _stepper_py as _kernel


def active_backend():
    """Name of the stepping backend in use: "cython" or "python"."""
    return _kernel.BACKEND


_BLOCKS = (256, 1024, 4096, 16384, 65536)


@dataclass(frozen=True)
class WalkPlan:
    """What to observe in one walk: stopping goals, occupation markers,
    the step budget, and whether to record the return-excursion split."""

    start: int = 0
    goals: tuple = ()
    markers: tuple = ()
    horizon: int = 10**12
    record_failures: bool = False
    inter_arrivals: tuple = ()


@dataclass
class WalkRecord:
    """Outcome of one walk.

    ``goal_times[g]`` is the first hitting step of g (None if not reached
    before the stop). ``returns`` counts visits to the start site after step
    0. ``failures``/``success`` split the time to the first-listed goal into
    return-excursion durations and the final stretch; they are populated only
    when the plan asked for them. ``time_left_of[z]`` counts steps that landed
    at sites <= z.
    """

    goal_times: dict
    steps: int
    truncated: bool
    returns: int
    inter_arrivals: dict = field(default_factory=dict)
    time_left_of: dict = field(default_factory=dict)
    failures: np.ndarray | None = None
    success: int | None = None
    visit_times: np.ndarray | None = None
    error: str | None = None

    def tau(self, goal):
        t = self.goal_times.get(goal)
        if t is None:
            raise KeyError("goal %r was not reached (truncated=%s)" % (goal, self.truncated))
        return t


def simulate(env, plan, rng):
    """Run one walk according to ``plan``; raises WindowExitError if the walk
    leaves the window (the window was then too narrow for the experiment)."""
    if not plan.goals:
        raise ValueError("plan needs at least one goal site")
    goals = [int(g) for g in plan.goals]
    if len(set(goals)) != len(goals):
        raise ValueError("goal sites must be distinct")
    if plan.start in goals:
        raise ValueError("the start site cannot be a goal")
    start_idx = int(env.index(plan.start))
    goal_idx = np.array([env.index(g) for g in goals], dtype=np.int64)
    for z in plan.markers:
        env.index(z)
    for x, y in plan.inter_arrivals:
        if x not in goals or y not in goals:
            raise ValueError("inter-arrival endpoints must be goal sites")

    goal_mask = np.zeros(env.n_sites, dtype=np.uint8)
    goal_mask[goal_idx] = 1
    goal_time = np.full(goal_idx.size, -1, dtype=np.int64)
    occupation = (
        np.zeros(env.n_sites, dtype=np.int64) if plan.markers else None
    )
    visits = np.empty(1024, dtype=np.int64) if plan.record_failures else None

    state = _kernel.prepare(
        env.omegas,
        start_idx,
        goal_idx,
        goal_mask,
        goal_time,
        int(plan.horizon),
        occupation,
        visits,
    )
    bi = 0
    while state.status == 0:
        size = _BLOCKS[min(bi, len(_BLOCKS) - 1)]
        bi += 1
        if plan.record_failures and visits.size < state.visit_count + size:
            grown = np.empty(max(2 * visits.size, state.visit_count + size), dtype=np.int64)
            grown[: state.visit_count] = visits[: state.visit_count]
            visits = grown
            state.swap_visits(visits)
        _kernel.step_block(state, rng.random(size))

    if state.status == 3:
        pos = int(state.pos) + env.offset
        raise WindowExitError(
            "walk left the window at site %d after %d steps" % (pos, state.t),
            position=pos,
            step=int(state.t),
        )

    goal_times = {
        g: (int(goal_time[i]) if goal_time[i] >= 0 else None)
        for i, g in enumerate(goals)
    }
    record = WalkRecord(
        goal_times=goal_times,
        steps=int(state.t),
        truncated=state.status == 2,
        returns=int(state.n_visits),
    )
    for x, y in plan.inter_arrivals:
        tx, ty = goal_times[x], goal_times[y]
        record.inter_arrivals[(x, y)] = None if tx is None or ty is None else ty - tx
    if occupation is not None:
        cum = np.cumsum(occupation)
        record.time_left_of = {int(z): int(cum[env.index(z)]) for z in plan.markers}
    if plan.record_failures:
        vt = visits[: state.visit_count].copy()
        record.visit_times = vt
        target = goal_times[goals[0]]
        if target is not None:
            vt_before = vt[vt < target]
            record.failures = np.diff(np.concatenate([[0], vt_before]))
            last = int(vt_before[-1]) if vt_before.size else 0
            record.success = target - last
        else:
            record.failures = np.diff(np.concatenate([[0], vt]))
            record.success = None
    return record


def couple_exponential_N(p, exponential):
    """Map a standard exponential variate to a geometric failure count:
    N = floor(exponential / (-log p)) has P(N = k) = p^k (1 - p).

    ``p`` is the per-attempt failure probability. The coupling keeps N and
    the exponential on the same probability space, and their laws stay close
    when p is near 1 (deep valleys).
    """
    if not (0.0 <= p < 1.0):
        raise ValueError("need 0 <= p < 1")
    if exponential < 0.0:
        raise ValueError("exponential variate must be non-negative")
    if p == 0.0:
        return 0
    return int(math.floor(exponential / (-math.log(p))))


# ---------------------------------------------------------------------------
# batches


def _run_one(env, plan, master_seed, env_index, replicas):
    out = []
    for r in range(replicas):
        rng = seeding.stream(master_seed, "walk", env_index, r)
        try:
            out.append(simulate(env, plan, rng))
        except WindowExitError as err:
            out.append(
                WalkRecord(
                    goal_times={g: None for g in plan.goals},
                    steps=err.step or 0,
                    truncated=False,
                    returns=0,
                    error=str(err),
                )
            )
    return out


def _run_chunk(args):
    envs, plans, master_seed, first_index, replicas = args
    return [
        _run_one(e, p, master_seed, first_index + j, replicas)
        for j, (e, p) in enumerate(zip(envs, plans))
    ]


def run_batch(envs, plans, master_seed, replicas=1, workers=1):
    """Simulate ``replicas`` walks per environment.

    Returns ``records[env_index][replica]``. The RNG stream of each replica
    is addressed by (master_seed, env_index, replica), so results do not
    depend on ``workers``; window exits are recorded on the replica's record
    (``error`` field) instead of aborting the batch.
    """
    if len(envs) != len(plans):
        raise ValueError("need one plan per environment")
    if workers <= 1 or len(envs) <= 1:
        return [
            _run_one(e, p, master_seed, i, replicas)
            for i, (e, p) in enumerate(zip(envs, plans))
        ]
    chunk = max(1, math.ceil(len(envs) / (4 * workers)))
    jobs = [
        (list(envs[i : i + chunk]), list(plans[i : i + chunk]), master_seed, i, replicas)
        for i in range(0, len(envs), chunk)
    ]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, jobs):
            out.extend(part)
    return out