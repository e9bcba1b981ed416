import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from seqreg import (
    Affine,
    AffineStack,
    Grid,
    Image,
    ImageSequence,
    LevelRun,
    OptimOptions,
    RunConfig,
    SingularSystemError,
    StoppingPolicy,
    TridiagSystem,
    build_pyramid,
    build_temporal_levels,
    check_stop,
    default_time_interval,
    dissim_all_frames,
    linear_predict,
    ls_predict,
    penalty_value,
    quad_weights,
    correlation_state,
    dissimilarity,
    spml_run,
    stml_run,
    synth_generate,
    SynthSpec,
    thomas_solve,
)
from seqreg.optimizer import OptimResult


# --- temporal schedules -------------------------------------------------


def test_schedule_n17():
    s = build_temporal_levels(17, 3)
    assert [list(lvl) for lvl in s.levels] == [
        [1, 9, 17],
        [1, 5, 9, 13, 17],
        [1, 3, 5, 7, 9, 11, 13, 15, 17],
        list(range(1, 18)),
    ]


def test_schedule_n129_sizes():
    s = build_temporal_levels(129, 17)
    assert [len(lvl) for lvl in s.levels] == [17, 33, 65, 129]


def test_schedule_n6_endpoint_forced():
    s = build_temporal_levels(6, 3)
    assert [list(lvl) for lvl in s.levels] == [[1, 3, 5, 6], [1, 2, 3, 4, 5, 6]]


def test_schedule_small_n_single_level():
    s = build_temporal_levels(3, 3)
    assert s.levels == ((1, 2, 3),)
    with pytest.raises(ValueError):
        build_temporal_levels(2, 3)


def test_schedule_nesting_and_endpoints_property():
    for n in range(3, 301):
        s = build_temporal_levels(n, 3)
        assert s.levels[-1] == tuple(range(1, n + 1))
        for q, level in enumerate(s.levels):
            assert level[0] == 1 and level[-1] == n
            assert list(level) == sorted(set(level))
            if q + 1 < len(s.levels):
                assert set(level) <= set(s.levels[q + 1])


# --- linear prediction --------------------------------------------------


def _stack_from_scalars(values, indices, n):
    # encode a scalar trajectory in the first translation component
    items = {
        k: Affine(np.eye(2), [float(v), 0.0]) for k, v in zip(indices, values)
    }
    return AffineStack(items, n)


def test_linear_predict_equal_endpoints():
    s = build_temporal_levels(5, 3)
    stack = _stack_from_scalars([2.0, 2.0, 2.0], s.levels[0], 5)
    z = linear_predict(stack, s, 0, [0, 1, 2, 3, 4])
    assert all(z.items[k].translation[0] == pytest.approx(2.0) for k in s.levels[1])


def test_linear_predict_midpoint_mean():
    s = build_temporal_levels(5, 3)
    stack = _stack_from_scalars([2.0, 3.0, 4.0], s.levels[0], 5)
    z = linear_predict(stack, s, 0, [0, 1, 2, 3, 4])
    assert z.items[2].translation[0] == pytest.approx(2.5)  # midpoint of 2 and 3
    assert z.items[4].translation[0] == pytest.approx(3.5)


def test_linear_predict_nonuniform_times():
    s = build_temporal_levels(5, 3)
    stack = _stack_from_scalars([0.0, 1.0, 1.0], s.levels[0], 5)
    times = [0.0, 0.25, 1.0, 2.0, 3.0]  # frame 2 sits a quarter of the way to frame 3
    z = linear_predict(stack, s, 0, times)
    assert z.items[2].translation[0] == pytest.approx(0.25)


# --- Thomas solver ------------------------------------------------------


def test_thomas_identity():
    rhs = np.array([1.0, -2.0, 3.0])
    sys = TridiagSystem(np.zeros(2), np.ones(3), np.zeros(2), rhs)
    assert np.allclose(thomas_solve(sys), rhs)


def test_thomas_small_example():
    sys = TridiagSystem([-1.0, -1.0], [2.0, 2.0, 2.0], [-1.0, -1.0], [1.0, 0.0, 1.0])
    assert np.allclose(thomas_solve(sys), [1.0, 1.0, 1.0])


def test_thomas_vs_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        sub = rng.uniform(-1, 1, n - 1)
        sup = rng.uniform(-1, 1, n - 1)
        diag = 3.0 + rng.uniform(0, 1, n)  # diagonally dominant
        rhs = rng.standard_normal(n)
        x = thomas_solve(TridiagSystem(sub, diag, sup, rhs))
        dense = np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)
        assert np.abs(x - np.linalg.solve(dense, rhs)).max() < 1e-10


def test_thomas_singular():
    sys = TridiagSystem(np.zeros(1), np.array([0.0, 1.0]), np.zeros(1), np.ones(2))
    with pytest.raises(SingularSystemError):
        thomas_solve(sys)


# --- least-squares prediction -------------------------------------------


def _dense_ls_oracle(active_mask, eta_full, ref, beta):
    n = len(ref)
    m = np.diag(active_mask.astype(float))
    lap = np.diag(np.r_[1.0, np.full(n - 2, 2.0), 1.0]) + np.diag(-np.ones(n - 1), 1) + np.diag(
        -np.ones(n - 1), -1
    )
    lhs = m + beta * lap
    rhs = m @ eta_full + beta * lap @ ref
    return np.linalg.solve(lhs, rhs)


def _scalar_ls(eta_values, active, ref_values, beta, n):
    eta = _stack_from_scalars(eta_values, active, n)
    ref = _stack_from_scalars(ref_values, range(1, n + 1), n)
    z = ls_predict(eta, ref, beta, list(range(n)))
    return np.array([z.items[k].translation[0] for k in range(1, n + 1)])


def test_ls_predict_constant_inputs():
    got = _scalar_ls([3.0, 3.0, 3.0], (1, 3, 5), [7.0] * 5, 1e-5, 5)
    assert np.allclose(got, 3.0, atol=1e-12)


def test_ls_predict_full_subset_small_beta_recovers_data():
    rng = np.random.default_rng(1)
    eta = rng.standard_normal(6)
    got = _scalar_ls(eta, range(1, 7), rng.standard_normal(6), 1e-12, 6)
    assert np.abs(got - eta).max() < 1e-8


def test_ls_predict_spec_instance_vs_oracle():
    eta = [0.0, 1.0, 0.0]
    ref = [0.0, 0.4, 0.6, 0.8, 1.0]
    got = _scalar_ls(eta, (1, 3, 5), ref, 1e-5, 5)
    mask = np.array([1, 0, 1, 0, 1])
    eta_full = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    want = _dense_ls_oracle(mask, eta_full, np.array(ref), 1e-5)
    assert np.abs(got - want).max() < 1e-10


def test_ls_predict_random_vs_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(3, 51))
        k = sorted(rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n + 1)), replace=False))
        beta = 10.0 ** rng.uniform(-6, -2)
        eta_vals = rng.standard_normal(len(k))
        ref_vals = rng.standard_normal(n)
        got = _scalar_ls(eta_vals, k, ref_vals, beta, n)
        mask = np.zeros(n)
        eta_full = np.zeros(n)
        for idx, val in zip(k, eta_vals):
            mask[idx - 1] = 1.0
            eta_full[idx - 1] = val
        want = _dense_ls_oracle(mask, eta_full, ref_vals, beta)
        assert np.abs(got - want).max() < 1e-10


def test_ls_predict_requires_positive_beta():
    with pytest.raises(ValueError):
        _scalar_ls([0.0, 1.0, 0.0], (1, 3, 5), [0.0] * 5, 0.0, 5)


# --- stopping rule ------------------------------------------------------


def _run_record(d_all):
    result = OptimResult(np.zeros(1), 0.0, 0.0, 1, 2, "grad_tol")
    return LevelRun(0, 0, (1,), result, d_all, 0.0)


def test_check_stop_dissim_mode():
    policy = StoppingPolicy("dissim", 1e-3)
    history = [_run_record(10.0), _run_record(10.0)]
    assert check_stop(policy, history)
    history = [_run_record(10.0), _run_record(9.0)]
    assert not check_stop(policy, history)
    with pytest.raises(ValueError):
        check_stop(policy, [_run_record(1.0)])


def test_check_stop_param_mode():
    policy = StoppingPolicy("param", 1e-3)
    a = AffineStack.identity(5, 2, indices=[1, 3, 5])
    b = AffineStack.identity(5, 2)
    history = [_run_record(1.0), _run_record(1.0)]
    assert check_stop(policy, history, a, b, reference_norm=10.0)
    items = dict(b.items)
    items[3] = Affine(np.eye(2), [1.0, 0.0])
    b2 = AffineStack(items, 5)
    assert not check_stop(policy, history, a, b2, reference_norm=10.0)
    with pytest.raises(ValueError):
        check_stop(policy, history, a, b, reference_norm=None)


def test_check_stop_eps_zero_rejected():
    with pytest.raises(ValueError):
        StoppingPolicy("dissim", 0.0)


# --- drivers ------------------------------------------------------------


def _tiny_benchmark(seed=11, frames=5, dims=(16, 16)):
    seq, truth = synth_generate(
        SynthSpec(dims=dims, frames=frames, seed=seed, trans_amp_cells=1.0, rot_amp_deg=1.0)
    )
    return seq, truth


def test_drivers_coincide_for_single_temporal_level():
    seq, _ = _tiny_benchmark()
    pyr = build_pyramid(seq, 2)
    cfg = RunConfig(spatial_levels=2, temporal_coarsest_size=5, optim=OptimOptions(max_iters=12))
    schedule = build_temporal_levels(seq.frame_count, seq.frame_count)
    assert schedule.depth == 1

    y_sp, runs_sp = spml_run(pyr, cfg)
    y_st, runs_st = stml_run(pyr, schedule, cfg)
    assert y_sp == y_st
    assert len(runs_sp) == len(runs_st)
    for a, b in zip(runs_sp, runs_st):
        assert a.result.objective_evaluations == b.result.objective_evaluations
        assert a.result.f_final == b.result.f_final


def test_stml_visits_every_level_and_logs():
    seq, _ = _tiny_benchmark()
    pyr = build_pyramid(seq, 2)
    schedule = build_temporal_levels(seq.frame_count, 3)
    cfg = RunConfig(spatial_levels=2, eps=1e-12, optim=OptimOptions(max_iters=10))
    y, runs = stml_run(pyr, schedule, cfg)
    # eps ~ 0: no early stopping, all (spatial, temporal) pairs visited
    visited = [(r.spatial_level, r.temporal_level) for r in runs]
    assert visited == [(l, q) for l in range(2) for q in range(schedule.depth)]
    assert y.indices == tuple(range(1, seq.frame_count + 1))


def test_correction_starts_from_predictor_output():
    # the first objective evaluation of each correction equals the
    # objective at the predicted stack
    seq, _ = _tiny_benchmark(seed=5, frames=5)
    pyr = build_pyramid(seq, 2)
    schedule = build_temporal_levels(5, 3)
    cfg = RunConfig(spatial_levels=2, eps=1e-12, optim=OptimOptions(max_iters=8))
    from seqreg.temporal import resolve_lambda

    lam = resolve_lambda(pyr, cfg)
    y, runs = stml_run(pyr, schedule, cfg)

    # reconstruct the predictions by replaying the driver's data flow
    interval = default_time_interval(seq.times)
    by_level = {}
    for r in runs:
        by_level.setdefault(r.spatial_level, []).append(r)

    # at the coarsest level, q=0 starts from the identity: J(identity)
    first = by_level[0][0]
    level_seq = pyr.levels[0]
    subset = first.active
    w = quad_weights([level_seq.times[k - 1] for k in subset], *interval)
    init = AffineStack.identity(5, 2, indices=subset)
    state = correlation_state(level_seq, init, subset, w, level_seq.grid.cell_volume)
    expected0 = dissimilarity(state) + penalty_value(init, lam)
    assert first.result.f_initial == pytest.approx(expected0, rel=1e-12)


def test_stml_stops_on_linear_motion():
    # exactly time-linear motion: the coarse prediction is already optimal up
    # to the noise floor, so the rule fires before the finest temporal level
    # at spatial level 0; curved motion at the same tolerance must not fire
    schedule = build_temporal_levels(9, 3)  # 3 temporal levels: 3, 5, 9

    def coarse_runs(motion):
        seq, _ = synth_generate(
            SynthSpec(dims=(32, 32), frames=9, seed=3, motion=motion, trans_amp_cells=1.2)
        )
        pyr = build_pyramid(seq, 2)
        cfg = RunConfig(spatial_levels=2, eps=5e-2)
        _, runs = stml_run(pyr, schedule, cfg)
        return [r for r in runs if r.spatial_level == 0]

    assert len(coarse_runs("linear")) < schedule.depth
    assert len(coarse_runs("sinusoid")) == schedule.depth


def test_spml_identical_frames_near_zero_dissimilarity():
    rng = np.random.default_rng(4)
    grid = Grid((16, 16), (1.0, 1.0), (-8.0, -8.0))
    v = gaussian_filter(rng.standard_normal((16, 16)), 2.0, mode="reflect")
    frames = [Image(grid, v.ravel(order="F"))] * 4
    seq = ImageSequence(frames, [0, 1, 2, 3])
    pyr = build_pyramid(seq, 1)
    cfg = RunConfig(spatial_levels=1)
    y, runs = spml_run(pyr, cfg)
    interval = default_time_interval(seq.times)
    assert dissim_all_frames(seq, y, interval, 1) < 1e-10
    for k in y.indices:
        assert np.allclose(y.items[k].matrix, np.eye(2), atol=1e-3)
        assert np.allclose(y.items[k].translation, 0.0, atol=1e-3)
