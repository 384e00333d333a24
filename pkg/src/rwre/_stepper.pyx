# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-walk stepping kernel.

The caller hands blocks of uniform variates to ``step_block``; the kernel
consumes exactly one variate per step and stops early (discarding the rest
of the block) when it reaches a terminal condition. The pure-Python module
``_stepper_py`` implements the same contract instruction for instruction, so
both backends consume the random stream identically and produce identical
trajectories.

Status codes: 0 running, 1 all goals hit, 2 horizon reached, 3 stepped
outside the window.
"""

import numpy as np


cdef class WalkState:
    cdef double[::1] omegas
    cdef unsigned char[::1] goal_mask
    cdef long long[::1] goal_pos
    cdef long long[::1] goal_time
    cdef long long[::1] occupation
    cdef long long[::1] visits
    cdef bint occ_on
    cdef bint rec_on
    cdef public long long pos
    cdef public long long t
    cdef public long long horizon
    cdef public long long start
    cdef public long long remaining
    cdef public long long n_visits
    cdef public long long visit_count
    cdef public long long status

    def __init__(self, omegas, start_idx, goal_pos, goal_mask, goal_time,
                 horizon, occupation=None, visits=None):
        self.omegas = omegas
        self.goal_pos = goal_pos
        self.goal_mask = goal_mask
        self.goal_time = goal_time
        self.occ_on = occupation is not None
        self.occupation = occupation if occupation is not None else np.zeros(0, dtype=np.int64)
        self.rec_on = visits is not None
        self.visits = visits if visits is not None else np.zeros(0, dtype=np.int64)
        self.pos = start_idx
        self.t = 0
        self.horizon = horizon
        self.start = start_idx
        self.remaining = int(np.sum(np.asarray(goal_mask)))
        self.n_visits = 0
        self.visit_count = 0
        self.status = 0

    def swap_visits(self, buf):
        self.visits = buf


def step_block(WalkState st, double[::1] u):
    """Advance the walk by at most len(u) steps; returns the status code."""
    cdef Py_ssize_t i, g
    cdef Py_ssize_t n = st.omegas.shape[0]
    cdef Py_ssize_t n_goals = st.goal_pos.shape[0]
    cdef long long pos = st.pos
    cdef long long t = st.t
    cdef long long horizon = st.horizon
    cdef long long start = st.start
    cdef long long remaining = st.remaining
    cdef long long n_visits = st.n_visits
    cdef long long visit_count = st.visit_count
    cdef long long status = 0
    cdef bint occ_on = st.occ_on
    cdef bint rec_on = st.rec_on

    for i in range(u.shape[0]):
        if u[i] < st.omegas[pos]:
            pos += 1
        else:
            pos -= 1
        t += 1
        if pos < 0 or pos >= n:
            status = 3
            break
        if occ_on:
            st.occupation[pos] += 1
        if st.goal_mask[pos]:
            st.goal_mask[pos] = 0
            for g in range(n_goals):
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


BACKEND = "cython"
