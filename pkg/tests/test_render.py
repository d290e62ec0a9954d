import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptcast.errors import InputError
from promptcast.render import polyline_points, render_batch, render_series, write_pgm


def test_constant_series_is_one_centered_row():
    img = render_series([5, 5, 5, 5], 32, 32).pixels
    rows = np.nonzero(img.any(axis=1))[0]
    assert list(rows) == [16]
    assert img[16, 2:30].all()


def test_thick_constant_series_band():
    img = render_series([1, 1, 1], 32, 32, line_thickness=3).pixels
    rows = np.nonzero(img.any(axis=1))[0]
    assert list(rows) == [15, 16, 17]


def test_ramp_walks_monotonically_up():
    img = render_series([0, 1], 32, 32).pixels
    ys, xs = np.nonzero(img)
    assert (xs.min(), ys.max()) == (2, 29)  # bottom-left inside the margin
    assert (xs.max(), ys.min()) == (29, 2)  # top-right
    top_per_col = [ys[xs == x].min() for x in sorted(set(xs))]
    assert all(a >= b for a, b in zip(top_per_col, top_per_col[1:]))


def test_pixels_binary_and_nonempty(rng):
    for _ in range(20):
        img = render_series(rng.normal(size=rng.integers(2, 60)), 40, 24).pixels
        assert set(np.unique(img)) <= {0.0, 1.0} and img.sum() > 0


def test_deterministic_bytes(rng):
    x = rng.normal(size=32)
    assert render_series(x).to_pgm() == render_series(x).to_pgm()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_affine_invariance(seed, a, b):
    x = np.random.default_rng(seed).normal(size=32)
    np.testing.assert_array_equal(render_series(a * x + b).pixels, render_series(x).pixels)


def test_points_respect_margin(rng):
    xs, ys = polyline_points(rng.normal(size=50), 64, 48, margin=2)
    assert xs.min() == 2 and xs.max() == 61
    assert ys.min() == 2 and ys.max() == 45


@pytest.mark.parametrize(
    "values,kw",
    [([1.0], {}), ([1.0, np.nan], {}), ([1.0, 2.0], {"width": 8}), ([1.0, 2.0], {"line_thickness": 0})],
)
def test_render_errors(values, kw):
    with pytest.raises(InputError):
        render_series(values, **kw)


def test_batch_and_pgm(tmp_path, rng):
    batch = render_batch(rng.normal(size=(3, 10)), 16, 16)
    assert batch.shape == (3, 16, 16)
    path = tmp_path / "x.pgm"
    write_pgm(render_series([0, 1, 0], 16, 16), path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n16 16\n255\n") and len(data) == len(b"P5\n16 16\n255\n") + 256
