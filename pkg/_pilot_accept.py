import json
import time

from rwre.env import BetaEnv
from rwre.experiments import EXPERIMENTS, ExperimentConfig


def run(name, **kwargs):
    t0 = time.perf_counter()
    try:
        result = EXPERIMENTS[name](ExperimentConfig(**kwargs))
    except Exception as exc:
        print("== %s CRASHED after %.1fs: %r" % (name, time.perf_counter() - t0, exc))
        return
    dt = time.perf_counter() - t0
    print("== %s: %s (%.1fs)" % (name, result.verdict, dt))
    for c in result.checks:
        print("   %s %-28s %s observed %.6g needs %s"
              % ("PASS" if c.passed else "FAIL", c.name, c.kind, c.observed, c.bound))
    print("   stats: %s" % json.dumps(result.stats, default=str)[:1500])
    print("   censored %d of %d" % (result.censored, result.total_walks), flush=True)


beta32 = BetaEnv(3, 2)
beta427 = BetaEnv(4, 2.7)

run("interarrival", spec=beta32, seed=20260815)
run("interarrival", spec=beta427, seed=20260815)
run("tails", spec=beta32, seed=20260815,
    excursion_samples=1_000_000, reference_samples=100_000)
run("backtracking", spec=beta32, seed=20260815)
