"""Compare the compiled stepping kernel against the pure-Python fallback.

Runs the same seeded walk batch through both backends in subprocesses (the
backend is chosen at import time), asserts the trajectories are bit-identical,
and reports steps per second for each.

Usage: python3 benchmarks/bench_stepper.py [--envs N] [--replicas N] [--n N]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
from rwre import env as env_mod
from rwre import walk as walk_mod
from rwre.seeding import stream

params = json.loads(sys.argv[1])
spec = env_mod.BetaEnv(3.0, 2.0)
envs, plans = [], []
for i in range(params["envs"]):
    rng = stream(7, "bench", i)
    environment = env_mod.sample_env_conditioned(spec, params["n"], rng)
    goal = int(environment.right_epochs[params["n"] - 1])
    plans.append(walk_mod.WalkPlan(start=0, goals=(goal,), horizon=10**8))
    envs.append(environment)

t0 = time.perf_counter()
records = walk_mod.run_batch(envs, plans, "7/bench", replicas=params["replicas"])
elapsed = time.perf_counter() - t0

steps = 0
digest = []
for recs in records:
    for rec in recs:
        steps += rec.steps
        digest.append([rec.steps, rec.returns,
                       [rec.goal_times[g] for g in sorted(rec.goal_times)]])
print(json.dumps({
    "backend": walk_mod.active_backend(),
    "elapsed": elapsed,
    "steps": steps,
    "digest": digest,
}))
"""


def run_backend(pure, params):
    env = dict(os.environ)
    if pure:
        env["RWRE_PURE_PYTHON"] = "1"
    else:
        env.pop("RWRE_PURE_PYTHON", None)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, json.dumps(params)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(out.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--envs", type=int, default=8)
    parser.add_argument("--replicas", type=int, default=4)
    parser.add_argument("--n", type=int, default=256, help="blocks per environment")
    args = parser.parse_args()
    params = {"envs": args.envs, "replicas": args.replicas, "n": args.n}

    compiled = run_backend(False, params)
    fallback = run_backend(True, params)

    if compiled["backend"] == fallback["backend"]:
        print("warning: compiled kernel unavailable; compared python to python")
    if compiled["digest"] != fallback["digest"]:
        raise SystemExit("FAIL: backends produced different trajectories")
    print("trajectories identical across backends "
          "(%d walks, %d total steps)" % (len(compiled["digest"]), compiled["steps"]))
    for run in (compiled, fallback):
        print("%-8s %12.0f steps/s  (%.2f s)"
              % (run["backend"], run["steps"] / run["elapsed"], run["elapsed"]))
    if compiled["backend"] != fallback["backend"]:
        print("speedup: %.1fx" % (
            (compiled["steps"] / compiled["elapsed"])
            / (fallback["steps"] / fallback["elapsed"])))


if __name__ == "__main__":
    main()
