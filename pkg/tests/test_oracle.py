"""Exact finite-chain reference computations and minorized variance bounds.

Single-state chains have closed-form rates (the increments are i.i.d.),
so they pin the recursion machinery exactly; seeded random doubly
stochastic chains then exercise the dual-rate and martingale identities
at float accuracy, and the map-built specs tie this module back to the
Ulam discretization.
"""

import numpy as np
import pytest

from residiff import maps, oracle, transfer
from residiff.errors import (BoundViolation, ConfigError, InvalidMinorizer,
                             InvalidStoppingSchedule, NotMixing)


def _coin_spec(**kw):
    # one state, jump +-1 with probability 1/2: var rate exactly 1
    return oracle.PeriodicChainSpec(
        d=1, jumps=[[-1], [1]], blocks=[[[0.5]], [[0.5]]], **kw)


def test_single_state_coin_rate_is_one():
    rep = oracle.exact_variance_rate_dual(_coin_spec(), [1.0])
    assert rep.rate_A == 1.0
    assert rep.diff <= 1e-12


def test_single_state_sure_jump_rate_is_zero():
    spec = oracle.PeriodicChainSpec(d=1, jumps=[[1]], blocks=[[[1.0]]])
    rep = oracle.exact_variance_rate_dual(spec, [1.0])
    assert abs(rep.rate_A) <= 1e-12 and abs(rep.rate_B) <= 1e-12


def test_minorization_equality_case():
    # beta = 1 with w equal to the true jump law: bound == rate exactly
    spec = _coin_spec(beta=1.0, w_jumps=[[-1], [1]], w=[[0.5, 0.5]])
    rep = oracle.minorization_bound_check(spec, [1.0])
    assert abs(rep.rate - rep.bound) <= 1e-12
    assert rep.passed and rep.bound == 1.0


def test_minorization_stopped_schedule_doubles():
    spec = _coin_spec(beta=1.0, w_jumps=[[-1], [1]], w=[[0.5, 0.5]])
    rep = oracle.minorization_bound_check(
        spec, [1.0], stopping=oracle.StoppingSchedule(2.0, lambda n: 2 * n))
    assert rep.gamma == 2.0
    assert abs(rep.rate - 2.0) <= 1e-9
    assert abs(rep.bound - 2.0) <= 1e-12


def test_minorization_bound_violation():
    # two-state seesaw: +1 only on A->B, -1 only on B->A, so the walk is
    # bounded (rate 0); the declared minorizer is entrywise dominated yet
    # claims average covariance 1/4, so the asserted bound must fail
    spec = oracle.PeriodicChainSpec(
        d=1, jumps=[[-1], [0], [1]],
        blocks=[[[0.0, 0.0], [0.5, 0.0]],
                [[0.5, 0.0], [0.0, 0.5]],
                [[0.0, 0.5], [0.0, 0.0]]],
        beta=1.0, w_jumps=[[-1], [0], [1]],
        w=[[0.0, 0.5, 0.5], [0.5, 0.5, 0.0]])
    with pytest.raises(BoundViolation):
        oracle.minorization_bound_check(spec, [1.0])


def test_stopping_schedule_validation():
    spec = _coin_spec(beta=1.0, w_jumps=[[-1], [1]], w=[[0.5, 0.5]])
    with pytest.raises(InvalidStoppingSchedule):
        oracle.minorization_bound_check(spec, [1.0], stopping=(2.0, lambda n: n))
    with pytest.raises(InvalidStoppingSchedule):
        oracle.minorization_bound_check(spec, [1.0],
                                        stopping=(0.5, lambda n: n * 1.5))
    with pytest.raises(InvalidStoppingSchedule):
        oracle.minorization_bound_check(spec, [1.0],
                                        stopping=(0.0, lambda n: n))
    with pytest.raises(InvalidStoppingSchedule):
        oracle.minorization_bound_check(
            spec, [1.0], stopping=(1e-9, lambda n: 10 - n if n < 10 else 1))


def test_minorizer_validation():
    with pytest.raises(InvalidMinorizer):
        _coin_spec(beta=0.5)  # partial triple
    with pytest.raises(InvalidMinorizer):
        _coin_spec(beta=1.5, w_jumps=[[-1], [1]], w=[[0.5, 0.5]])
    with pytest.raises(InvalidMinorizer):
        _coin_spec(beta=0.5, w_jumps=[[-1], [1]], w=[[0.7, 0.4]])
    with pytest.raises(InvalidMinorizer):
        # mass on a displacement the kernel never makes
        _coin_spec(beta=0.5, w_jumps=[[3]], w=[[1.0]])
    with pytest.raises(InvalidMinorizer):
        # dominance fails: kernel has only 1/2 on +1
        _coin_spec(beta=1.0, w_jumps=[[1]], w=[[1.0]])
    with pytest.raises(InvalidMinorizer):
        oracle.minorization_bound_check(_coin_spec(), [1.0])


def test_spec_construction_validation():
    with pytest.raises(ConfigError):
        oracle.PeriodicChainSpec(d=1, jumps=[[0]], blocks=[[[0.9]]])
    with pytest.raises(ConfigError):
        oracle.PeriodicChainSpec(d=1, jumps=[[0], [0]],
                                 blocks=[[[0.5]], [[0.5]]])
    with pytest.raises(ConfigError):
        oracle.PeriodicChainSpec(d=1, jumps=[[0]], blocks=[[[1.5], [-0.5]]])
    with pytest.raises(ConfigError):
        oracle.PeriodicChainSpec(d=1, jumps=np.zeros((0, 1), dtype=int),
                                 blocks=np.zeros((0, 2, 2)))
    with pytest.raises(ConfigError):
        # rows stochastic but columns are not (within the default 1e-12)
        oracle.PeriodicChainSpec(
            d=1, jumps=[[0]], blocks=[[[0.7, 0.3], [0.6, 0.4]]])
    # the same kernel passes with a declared column tolerance
    oracle.PeriodicChainSpec(d=1, jumps=[[0]],
                             blocks=[[[0.7, 0.3], [0.6, 0.4]]],
                             column_tol=0.5)


def test_not_mixing_three_cycle():
    perm = np.zeros((3, 3))
    perm[[0, 1, 2], [1, 2, 0]] = 1.0
    spec = oracle.PeriodicChainSpec(d=1, jumps=[[1]], blocks=perm[None])
    with pytest.raises(NotMixing):
        oracle.stationary_distribution(spec)


def test_random_spec_invariants():
    for seed in range(5):
        spec = oracle.random_spec(seed)
        assert spec.S == 5 and spec.torus_matrix().shape == (5, 5)
        pi = oracle.stationary_distribution(spec)
        assert np.abs(pi - 0.2).max() <= 1e-12  # doubly stochastic
        rep = oracle.exact_variance_rate_dual(spec, [1.0])
        assert rep.diff <= 1e-6 * max(1.0, rep.rate_A)
        for n in (1, 7, 50):
            kv = oracle.kv_identity_check(spec, [1.0], n)
            assert kv.diff <= 1e-10
        lhs1, rhs1 = oracle.cov_decay_check(spec, 0, 1, [1.0])
        lhs6, rhs6 = oracle.cov_decay_check(spec, 0, 6, [1.0])
        assert lhs1 <= rhs1 + 1e-14 and lhs6 <= rhs6 + 1e-14
        assert lhs6 <= lhs1 + 1e-14


def test_direction_and_pair_validation():
    spec = oracle.random_spec(1)
    with pytest.raises(ConfigError):
        oracle.exact_variance_rate_dual(spec, [0.0])
    with pytest.raises(ConfigError):
        oracle.exact_variance_rate_dual(spec, [1.0, 1.0])
    with pytest.raises(ConfigError):
        oracle.exact_variance_rate_dual(spec, [1.0], n_pair=(10, 10))


def test_spec_json_roundtrip(tmp_path):
    spec = oracle.build_stopped_spec_from_map(maps.doubling_map(), 0.1, G=16)
    path = tmp_path / "spec.json"
    oracle.save_spec(spec, path)
    back = oracle.load_spec(path)
    assert back.d == spec.d and back.name == spec.name
    assert np.array_equal(back.jumps, spec.jumps)
    assert np.array_equal(back.blocks, spec.blocks)
    assert back.beta == spec.beta
    assert np.array_equal(back.w, spec.w)
    assert np.array_equal(back.w_jumps, spec.w_jumps)
    # plain chains omit the minorizer keys entirely
    plain = oracle.random_spec(3)
    assert "beta" not in plain.to_json()
    again = oracle.PeriodicChainSpec.from_json(plain.to_json())
    assert again.beta is None
    assert np.array_equal(again.blocks, plain.blocks)


def test_map_built_spec_matches_transfer_kernel():
    m = maps.doubling_map()
    spec = oracle.build_spec_from_map(m, 0.1, 128)
    kern = transfer.build_displacement_kernel(m, 0.1, transfer.UlamGrid(1, 128))
    assert np.array_equal(spec.torus_matrix(), kern.torus_matrix)
    assert np.array_equal(spec.jumps, kern.jumps)
    rep = oracle.exact_variance_rate_dual(spec, [1.0])
    corr = transfer.corrector_solve(kern)
    assert abs(rep.rate_A - transfer.kv_rate(kern, corr, [1.0])) <= 1e-9


def test_stopped_spec_from_map():
    spec = oracle.build_stopped_spec_from_map(maps.doubling_map(), 0.1, G=64)
    assert spec.beta == pytest.approx(0.27358, abs=2e-3)
    assert spec.beta > 0.2
    # every state's minorizer is a translated Binomial(5, 1/2):
    # covariance exactly 5/4 regardless of the translation
    assert np.array_equal(spec.w_covariance_average(), [[1.25]])
    rep = oracle.minorization_bound_check(spec, [1.0])
    assert rep.rate == pytest.approx(2.319, abs=2e-2)
    assert rep.rate >= rep.bound
    stopped = oracle.minorization_bound_check(
        spec, [1.0], stopping=(2.0, lambda n: 2 * n))
    assert stopped.rate == pytest.approx(2.0 * rep.rate, rel=1e-6)
    with pytest.raises(ConfigError):
        oracle.build_stopped_spec_from_map(maps.quadrant_map(), 0.1)
