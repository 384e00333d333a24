"""Walk kernel: laws on homogeneous chains, couplings, batching, backends."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from rwre import env as env_mod
from rwre import quenched
from rwre.errors import WindowExitError
from rwre.seeding import stream
from rwre.walk import (
    WalkPlan,
    active_backend,
    couple_exponential_N,
    run_batch,
    simulate,
)

from conftest import make_env


def _homogeneous(q=0.7, left=64, right=8):
    return make_env([q] * (left + right + 1), offset=-left)


def test_backend_is_compiled():
    assert active_backend() == "cython"


def test_homogeneous_moments_monte_carlo():
    e = _homogeneous(0.7)
    plan = WalkPlan(start=0, goals=(1,))
    records = run_batch([e], [plan], 2001, replicas=100_000)[0]
    taus = np.array([r.tau(1) for r in records], dtype=np.float64)
    # E tau = 2.5, Var tau = 13.125; the run is seeded, so these margins
    # (about 3 sigma at this replica count) are stable
    assert abs(taus.mean() - 2.5) <= 0.035
    assert abs(taus.var() - 13.125) <= 0.66


def test_success_prob_matches_return_frequency(beta32):
    e = env_mod.sample_env_conditioned(beta32, 2, stream(51, "succ"))
    goal = int(e.right_epochs[0])
    plan = WalkPlan(start=0, goals=(goal,))
    records = run_batch([e], [plan], 2002, replicas=40_000)[0]
    freq = np.mean([r.returns == 0 for r in records])
    want = quenched.success_prob(e, goal)
    sigma = math.sqrt(want * (1.0 - want) / 40_000)
    assert abs(freq - want) <= 4.0 * sigma


def test_returns_are_geometric(beta32):
    e = env_mod.sample_env_conditioned(beta32, 2, stream(52, "geom"))
    goal = int(e.right_epochs[0])
    plan = WalkPlan(start=0, goals=(goal,))
    records = run_batch([e], [plan], 2003, replicas=20_000)[0]
    returns = np.array([r.returns for r in records])
    s = quenched.success_prob(e, goal)
    p = 1.0 - s  # per-attempt failure probability
    kmax = 8
    observed = np.bincount(np.minimum(returns, kmax), minlength=kmax + 1)
    probs = np.array([p**k * s for k in range(kmax)] + [p**kmax])
    result = stats.chisquare(observed, 20_000 * probs)
    assert result.pvalue > 1e-3


def test_couple_exponential_boundaries():
    log2 = math.log(2.0)
    assert couple_exponential_N(0.5, 0.0) == 0
    assert couple_exponential_N(0.5, 0.999 * log2) == 0
    assert couple_exponential_N(0.5, 1.001 * log2) == 1
    assert couple_exponential_N(0.5, 3.5 * log2) == 3
    assert couple_exponential_N(0.0, 7.0) == 0
    with pytest.raises(ValueError):
        couple_exponential_N(1.0, 1.0)
    with pytest.raises(ValueError):
        couple_exponential_N(-0.1, 1.0)
    with pytest.raises(ValueError):
        couple_exponential_N(0.5, -1.0)


def test_couple_exponential_law():
    rng = stream(53, "couple")
    p = 0.73
    draws = rng.exponential(size=50_000)
    ns = np.array([couple_exponential_N(p, e) for e in draws])
    want_mean = p / (1.0 - p)
    sd = math.sqrt(p) / (1.0 - p)
    assert abs(ns.mean() - want_mean) <= 4.0 * sd / math.sqrt(50_000)


def test_time_left_of(beta32):
    e = env_mod.sample_env_conditioned(beta32, 3, stream(54, "marker"))
    goal = int(e.right_epochs[-1])
    mid = goal // 2
    plan = WalkPlan(start=0, goals=(goal,), markers=(e.offset, mid, goal))
    rec = simulate(e, plan, stream(55, "marker-walk"))
    # every step lands at a site <= goal, so the goal marker counts them all
    assert rec.time_left_of[goal] == rec.steps
    assert rec.time_left_of[e.offset] <= rec.time_left_of[mid] <= rec.steps
    assert rec.time_left_of[mid] >= mid  # the walk must cross [0, mid] at least once


def test_inter_arrivals(beta32):
    e = env_mod.sample_env_conditioned(beta32, 4, stream(56, "inter"))
    g1, g2 = int(e.right_epochs[1]), int(e.right_epochs[3])
    plan = WalkPlan(start=0, goals=(g1, g2), inter_arrivals=((g1, g2),))
    rec = simulate(e, plan, stream(57, "inter-walk"))
    assert rec.inter_arrivals[(g1, g2)] == rec.tau(g2) - rec.tau(g1)
    assert rec.inter_arrivals[(g1, g2)] >= g2 - g1


def test_failure_split(beta32):
    e = env_mod.sample_env_conditioned(beta32, 2, stream(58, "split"))
    goal = int(e.right_epochs[0])
    plan = WalkPlan(start=0, goals=(goal,), record_failures=True)
    for r in range(20):
        rec = simulate(e, plan, stream(59, "split-walk", r))
        assert rec.failures.size == rec.returns
        assert rec.success is not None
        assert int(rec.failures.sum()) + rec.success == rec.tau(goal)
        if rec.returns:
            assert np.all(rec.failures > 0)


def test_truncation_and_tau_keyerror():
    e = _homogeneous(0.55, left=30, right=40)
    plan = WalkPlan(start=0, goals=(35,), horizon=10)
    rec = simulate(e, plan, stream(60, "trunc"))
    assert rec.truncated
    assert rec.steps == 10
    assert rec.goal_times[35] is None
    with pytest.raises(KeyError):
        rec.tau(35)


def test_window_exit():
    e = make_env([0.2] * 4, offset=0)
    plan = WalkPlan(start=0, goals=(3,))
    with pytest.raises(WindowExitError) as info:
        simulate(e, plan, stream(61, "exit"))
    assert info.value.position == -1
    assert info.value.step >= 1


def test_plan_validation(beta32):
    e = env_mod.sample_env_conditioned(beta32, 2, stream(62, "plan"))
    rng = stream(63, "plan-walk")
    with pytest.raises(ValueError):
        simulate(e, WalkPlan(start=0, goals=()), rng)
    with pytest.raises(ValueError):
        simulate(e, WalkPlan(start=0, goals=(2, 2)), rng)
    with pytest.raises(ValueError):
        simulate(e, WalkPlan(start=0, goals=(0,)), rng)
    with pytest.raises(ValueError):
        simulate(e, WalkPlan(start=0, goals=(2,), inter_arrivals=((2, 3),)), rng)
    with pytest.raises(IndexError):
        simulate(e, WalkPlan(start=0, goals=(2,), markers=(10**9,)), rng)


def test_run_batch_shape_and_replica_streams(beta32):
    rng = stream(64, "batch")
    envs = [env_mod.sample_env_conditioned(beta32, 2, rng) for _ in range(3)]
    plans = [WalkPlan(start=0, goals=(int(e.right_epochs[0]),)) for e in envs]
    records = run_batch(envs, plans, 2004, replicas=4)
    assert len(records) == 3 and all(len(row) == 4 for row in records)
    # replica streams are addressed, not sequential: a shorter batch agrees
    again = run_batch(envs, plans, 2004, replicas=2)
    for i in range(3):
        for r in range(2):
            assert records[i][r].goal_times == again[i][r].goal_times
            assert records[i][r].steps == again[i][r].steps
    with pytest.raises(ValueError):
        run_batch(envs, plans[:2], 2004)


def test_run_batch_worker_invariance(beta32):
    rng = stream(65, "workers")
    envs = [env_mod.sample_env_conditioned(beta32, 2, rng) for _ in range(4)]
    plans = [WalkPlan(start=0, goals=(int(e.right_epochs[0]),)) for e in envs]
    one = run_batch(envs, plans, 2005, replicas=3, workers=1)
    two = run_batch(envs, plans, 2005, replicas=3, workers=2)
    for i in range(4):
        for r in range(3):
            assert one[i][r].goal_times == two[i][r].goal_times
            assert one[i][r].steps == two[i][r].steps
            assert one[i][r].returns == two[i][r].returns


def test_run_batch_records_window_exit():
    envs = [make_env([0.2] * 4, offset=0)]
    plans = [WalkPlan(start=0, goals=(3,))]
    records = run_batch(envs, plans, 2006, replicas=5)[0]
    exited = [r for r in records if r.error is not None]
    assert exited, "expected at least one window exit at this seed"
    for r in exited:
        assert r.goal_times[3] is None


_DIGEST_SCRIPT = """
import json, sys
import numpy as np
from rwre import env as env_mod
from rwre.seeding import stream
from rwre.walk import WalkPlan, active_backend, run_batch

spec = env_mod.BetaEnv(3.0, 2.0)
rng = stream(66, "digest")
envs = [env_mod.sample_env_conditioned(spec, 2, rng) for _ in range(3)]
plans = [WalkPlan(start=0, goals=(int(e.right_epochs[0]),)) for e in envs]
records = run_batch(envs, plans, 2007, replicas=5)
digest = [
    [r.steps, r.returns, r.goal_times[plans[i].goals[0]]]
    for i, row in enumerate(records)
    for r in row
]
print(json.dumps({"backend": active_backend(), "digest": digest}))
"""


@pytest.mark.skipif(active_backend() != "cython", reason="compiled kernel not built")
def test_backends_bit_identical():
    outs = {}
    for pure in (False, True):
        env = dict(os.environ)
        if pure:
            env["RWRE_PURE_PYTHON"] = "1"
        else:
            env.pop("RWRE_PURE_PYTHON", None)
        proc = subprocess.run(
            [sys.executable, "-c", _DIGEST_SCRIPT],
            capture_output=True,
            text=True,
            env=env,
            check=True,
        )
        outs[pure] = json.loads(proc.stdout)
    assert outs[False]["backend"] == "cython"
    assert outs[True]["backend"] == "python"
    assert outs[False]["digest"] == outs[True]["digest"]
