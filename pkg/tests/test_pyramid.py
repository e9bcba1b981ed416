import numpy as np
import pytest

from seqreg import Grid, Image, ImageSequence, build_pyramid, restrict, smooth


def _image_1d(values):
    return Image(Grid((len(values),), (1.0,), (0.0,)), values)


def test_smooth_constant_unchanged():
    g = Grid((6, 6), (1.0, 1.0), (0.0, 0.0))
    img = Image(g, np.full(36, 4.5))
    assert np.allclose(smooth(img).values, 4.5)


def test_smooth_impulse():
    out = smooth(_image_1d([0.0, 0.0, 1.0, 0.0, 0.0]))
    assert np.allclose(out.values, [0.0, 0.25, 0.5, 0.25, 0.0])


def test_smooth_ramp_interior_unchanged():
    # [1,2,1]/4 against a linear ramp: 0.25(a-b) + 0.5a + 0.25(a+b) = a
    ramp = np.arange(10, dtype=float) * 0.7 + 3.0
    out = smooth(_image_1d(ramp))
    assert np.allclose(out.values[1:-1], ramp[1:-1])


def test_restrict_pairwise_means():
    out = restrict(_image_1d([1.0, 3.0, 5.0, 7.0]))
    assert np.allclose(out.values, [2.0, 6.0])
    assert out.grid.dims == (2,)
    assert out.grid.spacing == (2.0,)
    assert out.grid.origin == (0.0,)


def test_restrict_odd_trailing_block():
    out = restrict(_image_1d([1.0, 3.0, 5.0]))
    assert np.allclose(out.values, [2.0, 5.0])
    assert out.grid.dims == (2,)


def test_restrict_constant():
    g = Grid((6, 4), (1.0, 1.0), (0.0, 0.0))
    out = restrict(Image(g, np.full(24, 2.5)))
    assert out.grid.dims == (3, 2)
    assert np.allclose(out.values, 2.5)


def test_restrict_preserves_mean_even_dims():
    g = Grid((8, 4), (1.0, 1.0), (0.0, 0.0))
    rng = np.random.default_rng(3)
    img = Image(g, rng.standard_normal(32))
    out = restrict(img)
    assert out.values.mean() == pytest.approx(img.values.mean())


def _sequence(dims, n, rng):
    g = Grid(dims, tuple(1.0 for _ in dims), tuple(0.0 for _ in dims))
    frames = [Image(g, rng.standard_normal(g.cell_count)) for _ in range(n)]
    return ImageSequence(frames, list(range(n)))


def test_build_pyramid_shapes_and_times():
    rng = np.random.default_rng(0)
    seq = _sequence((64, 64), 5, rng)
    pyr = build_pyramid(seq, 3)
    assert [lvl.grid.dims for lvl in pyr.levels] == [(16, 16), (32, 32), (64, 64)]
    assert all(lvl.times == seq.times for lvl in pyr.levels)
    assert all(lvl.frame_count == 5 for lvl in pyr.levels)
    assert pyr.levels[-1] is seq


def test_build_pyramid_frame_count_preserved():
    rng = np.random.default_rng(1)
    seq = _sequence((16, 16), 17, rng)
    pyr = build_pyramid(seq, 2)
    assert [lvl.frame_count for lvl in pyr.levels] == [17, 17]


def test_build_pyramid_single_level_is_input():
    rng = np.random.default_rng(2)
    seq = _sequence((8, 8), 3, rng)
    pyr = build_pyramid(seq, 1)
    assert pyr.level_count == 1
    assert pyr.levels[0] is seq


def test_build_pyramid_too_deep():
    rng = np.random.default_rng(4)
    seq = _sequence((8, 8), 2, rng)
    with pytest.raises(ValueError):
        build_pyramid(seq, 3)  # 8 -> 4 -> 2 < 4
