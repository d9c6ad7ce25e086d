import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from intentraj import raster
from intentraj.raster import (DegenerateHeatmapError, HeatmapSequence, LocalFrame, build_map,
                              decode_heatmap, decode_separable, density_channel, encode_heatmap,
                              encode_marginals, rasterize_frame, world_to_local)
from intentraj.scenegen import Scenario


@pytest.mark.parametrize("count, expected", [(0, 0.0), (63, 1.0), (7, 0.5)])
def test_density_examples(count, expected):
    assert density_channel(count) == pytest.approx(expected, abs=1e-12)


def test_density_saturates():
    assert density_channel(1000) == 1.0
    with pytest.raises(ValueError):
        density_channel(-1)


@given(st.integers(0, 500), st.integers(0, 500))
def test_density_monotone(a, b):
    lo, hi = sorted((a, b))
    assert density_channel(lo) <= density_channel(hi)


def test_rasterize_examples():
    assert not rasterize_frame([], shape=(8, 8)).any()
    g = rasterize_frame([(0.1, 0.1, 1.0, 0.2), (0.2, 0.3, 2.0, 0.4)], shape=(8, 8))
    assert g[0, 0, 0] == pytest.approx(2 / 3)
    assert g[0, 0, 1] == pytest.approx(0.4)
    assert g[0, 0, 2] == pytest.approx(math.log(3) / math.log(64))
    one = rasterize_frame([(0.0, 0.0, 1.0, 1.0)], shape=(8, 8))
    assert np.count_nonzero(one.any(axis=-1)) == 1


def test_rasterize_drops_outside():
    g = rasterize_frame([(-1.0, 0.0, 1.0, 1.0), (100.0, 1.0, 1.0, 1.0)], shape=(8, 8))
    assert not g.any()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (30, 4), elements=st.floats(-20, 20)))
def test_channel_range(points):
    g = rasterize_frame(points, origin=(-5.0, -5.0), res=0.5, shape=(20, 20))
    assert g.min() >= 0.0 and g.max() <= 1.0


def test_local_frame_examples():
    fr = LocalFrame(3.0, -2.0, 0.7, (40.0, 40.0))
    np.testing.assert_allclose(fr.to_local([3.0, -2.0]), [40.0, 40.0], atol=1e-12)
    ahead = np.array([3.0 + 5 * math.cos(0.7), -2.0 + 5 * math.sin(0.7)])
    np.testing.assert_allclose(fr.to_local(ahead), [45.0, 40.0], atol=1e-9)
    pts = np.random.default_rng(0).uniform(-50, 50, (100, 2))
    np.testing.assert_allclose(fr.to_local(fr.to_world(pts)), pts, atol=1e-9)


def test_world_to_local_rotates_heading():
    fr = LocalFrame(0.0, 0.0, math.pi / 2, (0.0, 0.0))
    st_ = np.array([[0, 0.0, 1.0, math.pi / 2, 5.0]])
    out = world_to_local(st_, fr)
    np.testing.assert_allclose(out[0, 1:4], [1.0, 0.0, 0.0], atol=1e-12)


def test_local_frame_missing_ego(scenario):
    with pytest.raises(IndexError):
        raster.local_frame(scenario, 10_000)


def test_build_map_ignores_agents(scenario):
    a = build_map(scenario, 19, 20, (80, 80), 1.0)
    ego_only = Scenario(scenario.layout, [scenario.ego], scenario.ego_id, scenario.seed)
    b = build_map(ego_only, 19, 20, (80, 80), 1.0)
    assert a.shape == (80, 80, 1)
    np.testing.assert_array_equal(a, b)


def test_scene_raster_shapes(scenario):
    sr = raster.build_scene_raster(scenario, 19, 20, (80, 80), 1.0)
    assert sr.frames.shape == (20, 80, 80, 3)
    assert sr.map.shape == (80, 80, 1)
    assert 0.0 <= sr.frames.min() and sr.frames.max() <= 1.0
    ax, ay = raster.default_anchor((80, 80), 1.0)
    np.testing.assert_allclose(sr.frame.to_local(scenario.ego.xy[0]), [ax, ay], atol=1e-9)


def test_encode_examples():
    g = encode_heatmap((5.25, 10.25), sigma=1.0, shape=(40, 40))
    assert g.sum() == pytest.approx(1.0, abs=1e-6)
    assert decode_heatmap(g) == pytest.approx((5.25, 10.25))
    r, c = raster.cell_of((5.25, 10.25))
    # sigma = 1 cell at 0.5 m
    g = encode_heatmap((5.25, 10.25), sigma=0.5, shape=(40, 40))
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert g[r, c] / g[r + dr, c + dc] == pytest.approx(math.exp(0.5), rel=1e-12)
    with pytest.raises(IndexError):
        encode_heatmap((-1.0, 3.0), 1.0, (40, 40))


def test_marginals_match_grid():
    g = encode_heatmap((7.3, 3.9), 1.0, (20, 30))
    r, c = encode_marginals((7.3, 3.9), 1.0, (20, 30))
    np.testing.assert_allclose(np.outer(r, c), g, atol=1e-15)


def test_decode_examples():
    g = np.zeros((20, 30))
    g[10, 20] = 1.0
    assert decode_heatmap(g) == raster.cell_center(10, 20)
    g = np.zeros((20, 20))
    g[3, 3] = g[7, 7] = 0.5
    assert decode_heatmap(g) == raster.cell_center(3, 3)
    with pytest.raises(DegenerateHeatmapError):
        decode_heatmap(np.zeros((4, 4)))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(0, 1)), arrays(np.float64, 7, elements=st.floats(0, 1)))
def test_separable_decode_matches_full(rows, cols):
    rows = rows + 1e-3
    cols = cols + 1e-3
    full = decode_heatmap(np.outer(rows, cols), res=0.5)
    sep = decode_separable(rows[None], cols[None], res=0.5)[0]
    assert tuple(sep) == full


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 79.5), st.floats(0.5, 79.5))
def test_codec_bound(x, y):
    g = encode_heatmap((x, y), 1.0, (160, 160))
    dx, dy = np.subtract(decode_heatmap(g), (x, y))
    assert max(abs(dx), abs(dy)) <= 0.5


def test_heatmap_sequence_validation():
    good = np.stack([encode_heatmap((2.0, 2.0), 1.0, (10, 10))] * 3)
    seq = HeatmapSequence(good, agent_id=4)
    assert seq.delta == 3 and seq.decode().shape == (3, 2)
    with pytest.raises(DegenerateHeatmapError):
        HeatmapSequence(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        HeatmapSequence(good * 2)


def test_tensor_file_roundtrip(tmp_path):
    data = np.random.default_rng(1).random((4, 6, 5, 3)).astype(np.float32)
    raster.save_tensor(tmp_path / "t.bin", data, origin=(1.5, -2.0), res=0.5, tau=4)
    back, meta = raster.load_tensor(tmp_path / "t.bin")
    np.testing.assert_array_equal(back, data)
    assert meta == {"H": 6, "W": 5, "C": 3, "tau": 4, "origin": (1.5, -2.0), "res": 0.5}
    head = (tmp_path / "t.bin").read_bytes().split(b"\n", 1)[0].decode()
    assert head.split()[:5] == ["RASTER1", "6", "5", "3", "4"]


def test_plot_grid(tmp_path):
    mask = np.zeros((10, 10), np.uint8)
    mask[:, :3] = 1
    raster.plot_grid(np.random.default_rng(0).random((10, 10)), tmp_path / "g.png", mask=mask,
                     points=[(np.array([[1.0, 1.0], [3.0, 2.0]]), "red")], res=0.5)
    assert (tmp_path / "g.png").read_bytes()[:4] == b"\x89PNG"
