"""Pure-Python fallback for the walk stepping kernel.

Mirrors ``_stepper.pyx`` statement for statement: one uniform consumed per
step, identical stop conditions, identical comparison order, so the two
backends produce bit-identical trajectories from the same variate stream.
"""

import numpy as np


class WalkState:
    __slots__ = (
        "omegas",
        "goal_mask",
        "goal_pos",
        "goal_time",
        "occupation",
        "visits",
        "occ_on",
        "rec_on",
        "pos",
        "t",
        "horizon",
        "start",
        "remaining",
        "n_visits",
        "visit_count",
        "status",
    )

    def __init__(self, omegas, start_idx, goal_pos, goal_mask, goal_time,
                 horizon, occupation=None, visits=None):
        self.omegas = omegas.tolist()
        self.goal_pos = goal_pos
        self.goal_mask = goal_mask
        self.goal_time = goal_time
        self.occ_on = occupation is not None
        self.occupation = occupation
        self.rec_on = visits is not None
        self.visits = visits
        self.pos = int(start_idx)
        self.t = 0
        self.horizon = int(horizon)
        self.start = int(start_idx)
        self.remaining = int(np.sum(np.asarray(goal_mask)))
        self.n_visits = 0
        self.visit_count = 0
        self.status = 0

    def swap_visits(self, buf):
        self.visits = buf


def step_block(st, u):
    omegas = st.omegas
    goal_mask = st.goal_mask
    n = len(omegas)
    pos = st.pos
    t = st.t
    horizon = st.horizon
    start = st.start
    remaining = st.remaining
    n_visits = st.n_visits
    visit_count = st.visit_count
    occ_on = st.occ_on
    rec_on = st.rec_on
    status = 0

    for ui in u.tolist():
        if ui < omegas[pos]:
            pos += 1
        else:
            pos -= 1
        t += 1
        if pos < 0 or pos >= n:
            status = 3
            break
        if occ_on:
            st.occupation[pos] += 1
        if goal_mask[pos]:
            goal_mask[pos] = 0
            for g in range(len(st.goal_pos)):
                if st.goal_pos[g] == pos:
                    st.goal_time[g] = t
            remaining -= 1
            if remaining == 0:
                status = 1
                break
        if pos == start:
            n_visits += 1
            if rec_on:
                st.visits[visit_count] = t
                visit_count += 1
        if t >= horizon:
            status = 2
            break

    st.pos = pos
    st.t = t
    st.remaining = remaining
    st.n_visits = n_visits
    st.visit_count = visit_count
    st.status = status
    return status


def prepare(omegas, start_idx, goal_pos, goal_mask, goal_time, horizon,
            occupation=None, visits=None):
    return WalkState(omegas, start_idx, goal_pos, goal_mask, goal_time,
                     horizon, occupation, visits)


BACKEND = "python"
