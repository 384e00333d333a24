"""Environment laws, potentials, excursions, and the window builders."""

import math
import pickle

import numpy as np
import pytest

from rwre import env as env_mod
from rwre import quenched, valleys
from rwre.errors import EnvSpecError
from rwre.seeding import stream
from rwre.specialfn import beta_fn

from conftest import make_env


# ---------------------------------------------------------------------------
# spec validation and closed moments

def test_beta_spec_rejections():
    with pytest.raises(EnvSpecError):
        env_mod.BetaEnv(2.0, 2.0)  # E[log rho] = 0: not transient
    with pytest.raises(EnvSpecError):
        env_mod.BetaEnv(2.0, 3.0)  # transient the wrong way
    with pytest.raises(EnvSpecError):
        env_mod.BetaEnv(5.0, 2.0)  # kappa = 3 outside (0, 2)
    with pytest.raises(EnvSpecError):
        env_mod.BetaEnv(-1.0, 2.0)


def test_two_point_spec_rejections():
    with pytest.raises(EnvSpecError):
        env_mod.TwoPointEnv(0.25, 0.75, 0.5)  # hi < lo
    with pytest.raises(EnvSpecError):
        env_mod.TwoPointEnv(0.75, 0.25, 1.5)
    with pytest.raises(EnvSpecError):
        env_mod.TwoPointEnv(0.75, 0.25, 0.5)  # symmetric: E[log rho] = 0


def test_tabulated_spec_rejections():
    with pytest.raises(EnvSpecError):
        env_mod.TabulatedEnv((), ())
    with pytest.raises(EnvSpecError):
        env_mod.TabulatedEnv((0.5, 1.2), (0.5, 0.5))
    with pytest.raises(EnvSpecError):
        env_mod.TabulatedEnv((0.6, 0.7), (0.6, 0.6))  # weights don't sum to 1
    with pytest.raises(EnvSpecError):
        env_mod.TabulatedEnv((0.4,), (1.0,))  # recurrent-to-left atom law


def test_calibrate_kappa_closed_forms(beta32, beta427, two_point):
    assert abs(env_mod.calibrate_kappa(beta32) - 1.0) <= 1e-9
    assert abs(env_mod.calibrate_kappa(beta427) - 1.3) <= 1e-9
    assert abs(env_mod.calibrate_kappa(two_point) - 0.3690702464285426) <= 1e-9


def test_kappa_root_residual(beta32):
    kappa = env_mod.calibrate_kappa(beta32)
    assert abs(env_mod.moment_rho(beta32, kappa) - 1.0) <= 1e-12


def test_moment_rho_beta_closed(beta32):
    # E[rho^s] = B(alpha - s, beta + s) / B(alpha, beta)
    for s in (0.25, 0.5, 1.0, 1.7):
        want = beta_fn(3.0 - s, 2.0 + s) / beta_fn(3.0, 2.0)
        assert abs(env_mod.moment_rho(beta32, s) - want) <= 1e-12 * want


def test_moment_rho_two_point(two_point):
    rho_hi = 0.25 / 0.75
    rho_lo = 0.75 / 0.25
    for s in (0.2, 1.0):
        want = 0.6 * rho_hi**s + 0.4 * rho_lo**s
        assert abs(env_mod.moment_rho(two_point, s) - want) <= 1e-12 * want


def test_moment_rho_log_frozen(beta32, beta427, two_point):
    assert abs(env_mod.moment_rho_log(beta32, 1.0) - 0.5) <= 1e-12
    assert abs(
        env_mod.moment_rho_log(beta427, 1.3) - 0.45933449944065946
    ) <= 1e-12
    kappa = env_mod.calibrate_kappa(two_point)
    assert abs(
        env_mod.moment_rho_log(two_point, kappa) - 0.21972245773362195
    ) <= 1e-9


def test_is_discrete(beta32, two_point):
    assert not env_mod.is_discrete(beta32)
    assert env_mod.is_discrete(two_point)
    assert env_mod.is_discrete(env_mod.TabulatedEnv((0.75, 0.25), (0.6, 0.4)))


def test_sample_omegas(beta32, two_point):
    draws = env_mod.sample_omegas(beta32, stream(5, "omega"), 4096)
    assert draws.shape == (4096,)
    assert np.all((draws > 0.0) & (draws < 1.0))
    again = env_mod.sample_omegas(beta32, stream(5, "omega"), 4096)
    assert np.array_equal(draws, again)
    atoms = env_mod.sample_omegas(two_point, stream(5, "omega"), 512)
    assert set(np.unique(atoms)) <= {0.25, 0.75}


# ---------------------------------------------------------------------------
# windows and potentials

def test_potential_convention():
    omegas = [0.6, 0.7, 0.55, 0.62, 0.66]
    e = make_env(omegas, offset=-2)
    log_rho = np.log1p(-np.array(omegas)) - np.log(omegas)
    cum = np.cumsum(log_rho)
    want = cum - cum[2]  # V includes log rho through the site; V(0) = 0
    assert np.allclose(e.v, want, rtol=0, atol=1e-14)
    assert e.v_at(0) == 0.0


def test_potential_anchor_without_origin():
    e = make_env([0.6, 0.7, 0.8], offset=5)
    assert e.v[0] == 0.0  # anchored at the left edge when 0 is outside


def test_environment_validation():
    with pytest.raises(EnvSpecError):
        make_env([])
    with pytest.raises(EnvSpecError):
        make_env([0.5, 1.0])
    with pytest.raises(EnvSpecError):
        make_env([0.0, 0.5])
    with pytest.raises(EnvSpecError):
        make_env([0.5, 0.5], regime="weird")
    with pytest.raises(EnvSpecError):
        # V(-1) = -log rho(0) < 0 breaks the conditioned regime
        make_env([0.6, 0.4], offset=-1, regime="conditioned_nonneg_left")


def test_window_accessors():
    e = make_env([0.5, 0.6, 0.7], offset=-1)
    assert e.right_edge == 1
    assert e.n_sites == 3
    assert e.index(-1) == 0
    with pytest.raises(IndexError):
        e.index(2)
    with pytest.raises(IndexError):
        e.index(-2)


def test_environment_pickle_roundtrip(beta32):
    rng = stream(11, "pickle")
    e = env_mod.sample_env_conditioned(beta32, 4, rng)
    clone = pickle.loads(pickle.dumps(e))
    assert clone.offset == e.offset
    assert clone.regime == e.regime
    assert np.array_equal(clone.omegas, e.omegas)
    assert np.array_equal(clone.right_epochs, e.right_epochs)


# ---------------------------------------------------------------------------
# excursions

def test_excursion_from_omegas_manual():
    exc = env_mod.Excursion.from_omegas(np.array([0.4, 0.4, 0.8]))
    assert exc.length == 3
    assert abs(exc.height - 2.0 * math.log(1.5)) <= 1e-12
    want_end = 2.0 * math.log(1.5) + math.log(0.25)
    assert abs(exc.v_end - want_end) <= 1e-12


def test_excursion_from_omegas_rejections():
    with pytest.raises(EnvSpecError):
        env_mod.Excursion.from_omegas(np.array([0.4, 0.8, 0.4, 0.8]))  # dips mid-way
    with pytest.raises(EnvSpecError):
        env_mod.Excursion.from_omegas(np.array([0.4, 0.4]))  # ends above 0


def test_excursion_batch_matches_scalar_rows(beta32):
    batch = env_mod.sample_excursion_batch(beta32, 256, stream(21, "batch"), keep_paths=True)
    for i in (0, 3, 17, 255):
        row = batch.row(i)
        rebuilt = env_mod.Excursion.from_omegas(row.omegas)
        assert rebuilt.length == batch.lengths[i]
        assert abs(rebuilt.height - batch.heights[i]) <= 1e-12
        assert abs(rebuilt.v_end - batch.v_end[i]) <= 1e-12


def test_excursion_batch_sums_manual(beta32):
    batch = env_mod.sample_excursion_batch(beta32, 64, stream(22, "batch"), keep_paths=True)
    for i in (0, 5, 63):
        om = batch.omegas[batch.starts[i]:batch.starts[i + 1]]
        v_local = np.concatenate([[0.0], np.cumsum(np.log1p(-om) - np.log(om))])[:-1]
        assert abs(np.exp(v_local).sum() - batch.sum_exp_v[i]) <= 1e-10
        assert abs(np.exp(-v_local).sum() - batch.sum_exp_neg_v[i]) <= 1e-10


def test_conditioned_excursions(beta32):
    rng = stream(23, "cond")
    high = env_mod.sample_excursion_conditioned(beta32, 3.0, rng, side="ge")
    assert high.height >= 3.0
    low = env_mod.sample_excursion_conditioned(beta32, 3.0, rng, side="lt")
    assert low.height < 3.0
    with pytest.raises(ValueError):
        env_mod.sample_excursion_conditioned(beta32, 3.0, rng, side="above")


# ---------------------------------------------------------------------------
# two-sided conditioned windows

def test_assemble_env_glue_identity(beta32):
    rng = stream(24, "glue")
    rights = [env_mod.sample_excursion(beta32, rng) for _ in range(3)]
    lefts = [env_mod.sample_excursion(beta32, rng) for _ in range(2)]
    e = env_mod.assemble_env(rights, lefts)
    # right side: excursion potentials accumulate through v_end
    base = 0.0
    site = 0
    for exc in rights:
        v_local = np.cumsum(np.log1p(-exc.omegas) - np.log(exc.omegas))
        for t in range(exc.length):
            got = e.v_at(site + t + 1)
            assert abs(got - (base + v_local[t])) <= 1e-9
        site += exc.length
        base += exc.v_end
    # left side: V >= 0 at every site left of the origin
    head = e.v[: e.index(0) + 1]
    assert head.min() >= -1e-9
    assert np.array_equal(
        e.right_epochs, np.cumsum([exc.length for exc in rights])
    )


def test_sample_env_conditioned_structure(beta32):
    for seed in range(4):
        rng = stream(25, "cond-env", seed)
        e = env_mod.sample_env_conditioned(beta32, 6, rng)
        assert e.regime == "conditioned_nonneg_left"
        assert e.right_epochs.size == 6
        head = e.v[: e.index(0) + 1]
        assert head.min() >= -1e-9
        decomp = valleys.ladder_epochs(e, 0)
        assert np.array_equal(
            decomp.epochs[: 7], np.concatenate([[0], e.right_epochs])
        )


def test_sample_env_conditioned_first_right(beta32):
    rng = stream(26, "first-right")
    first = env_mod.sample_excursion_conditioned(beta32, 4.0, rng, side="ge")
    e = env_mod.sample_env_conditioned(
        beta32, 2, rng, first_right=first, min_left_potential=6.0
    )
    decomp = valleys.ladder_epochs(e, 0)
    assert abs(decomp.heights[0] - first.height) <= 1e-9
    assert e.v[: e.index(0)].max() >= 6.0


def test_sample_env_conditioned_strict_guard(beta32):
    # windows built with the default tolerance must satisfy the strict
    # left-tail contract of the exact formulas without raising
    for seed in range(5):
        rng = stream(27, "guard", seed)
        e = env_mod.sample_env_conditioned(beta32, 5, rng)
        goal = int(e.right_epochs[-1])
        value = quenched.expected_hitting(e, 0, goal)  # left_tail="strict"
        assert np.isfinite(value) and value > 0.0


def test_sample_env_window_shape(beta32):
    rng = stream(28, "window")
    e = env_mod.sample_env_window(beta32, rng, n_right=3)
    assert e.regime == "plain"
    assert e.offset < 0 <= e.right_edge
    assert e.right_epochs.size == 3
    assert np.all(np.isfinite(e.v))
