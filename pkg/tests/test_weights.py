from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclv import (ModalitySet, PointCloud, assign_weights, build_knn,
                  color_weight, combine_linear, compute_fpfh, distance_weight,
                  estimate_normals, fpfh_weight, normal_weight)
from pclv.weights import MODALITY_PRESETS

unit_interval = st.floats(min_value=0.0, max_value=1.0)
rgb = st.tuples(unit_interval, unit_interval, unit_interval)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestColorWeight:
    def test_identical_zero(self):
        assert color_weight((0.2, 0.4, 0.9), (0.2, 0.4, 0.9)) == 0.0

    def test_black_white_one(self):
        assert color_weight((0, 0, 0), (1, 1, 1)) == 1.0

    def test_red_green(self):
        assert abs(color_weight((1, 0, 0), (0, 1, 0)) - np.sqrt(2.0 / 3.0)) < 1e-12

    @given(a=rgb, b=rgb)
    @settings(max_examples=200, deadline=None)
    def test_range_and_symmetry(self, a, b):
        w = color_weight(a, b)
        assert 0.0 <= w <= 1.0
        assert w == color_weight(b, a)


class TestDistanceWeight:
    def test_shortest_zero(self):
        assert distance_weight(0.5, 0.5, 2.0) == 0.0

    def test_longest_one(self):
        assert distance_weight(2.0, 0.5, 2.0) == 1.0

    def test_all_equal_degenerate(self):
        assert distance_weight(1.0, 1.0, 1.0) == 0.0

    def test_out_of_range_signals_bug(self):
        with pytest.raises(ValueError):
            distance_weight(2.5, 0.5, 2.0)
        with pytest.raises(ValueError):
            distance_weight(0.4, 0.5, 2.0)


class TestNormalWeight:
    def test_parallel_zero(self):
        n = _unit((1, 2, 3))
        assert abs(normal_weight(n, n)) < 1e-12

    def test_orthogonal_one(self):
        assert abs(normal_weight((1, 0, 0), (0, 1, 0)) - 1.0) < 1e-12

    def test_antiparallel_signed_two_unsigned_zero(self):
        n = _unit((0.3, -0.4, 0.5))
        assert abs(normal_weight(n, -n) - 2.0) < 1e-12
        assert abs(normal_weight(n, -n, unsigned=True)) < 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_ranges(self, seed):
        rng = np.random.default_rng(seed)
        a = _unit(rng.normal(size=3))
        b = _unit(rng.normal(size=3))
        assert 0.0 <= normal_weight(a, b) <= 2.0 + 1e-12
        assert 0.0 <= normal_weight(a, b, unsigned=True) <= 1.0 + 1e-12
        assert normal_weight(a, b) == normal_weight(b, a)


class TestFpfhWeight:
    def test_identical_zero(self, rng):
        h = rng.random(33)
        h /= h.sum()
        assert abs(fpfh_weight(h, h)) < 1e-12

    def test_disjoint_one(self):
        a = np.zeros(33)
        b = np.zeros(33)
        a[:16] = 1 / 16
        b[16:] = 1 / 17
        assert abs(fpfh_weight(a, b) - 1.0) < 1e-12

    def test_uniform_vs_point_mass(self):
        a = np.full(33, 1 / 33)
        b = np.zeros(33)
        b[7] = 1.0
        assert abs(fpfh_weight(a, b) - (1 - 1 / 33)) < 1e-12

    def test_symmetry(self, rng):
        a = rng.random(33)
        a /= a.sum()
        b = rng.random(33)
        b /= b.sum()
        assert fpfh_weight(a, b) == fpfh_weight(b, a)


class TestCombineLinear:
    def test_projection(self):
        assert combine_linear((0.7, 0.2, 0.9), 1, 0, 0) == 0.7

    def test_zero_tuple(self):
        assert combine_linear((0.0, 0.0, 0.0), 0.2, 0.3, 0.5) == 0.0

    def test_equal_thirds(self):
        got = combine_linear((0.3, 0.5, 1.0), 1 / 3, 1 / 3, 1 / 3)
        assert abs(got - 0.6) < 1e-12

    def test_all_zero_coefficients_rejected(self):
        with pytest.raises(ValueError):
            combine_linear((0.1, 0.2, 0.3), 0, 0, 0)
        with pytest.raises(ValueError):
            combine_linear((0.1, 0.2, 0.3), -1, 1, 1)

    def test_matrix_form(self, rng):
        w = rng.random((10, 3))
        got = combine_linear(w, 0.5, 0.25, 0.25)
        expect = 0.5 * w[:, 0] + 0.25 * w[:, 1] + 0.25 * w[:, 2]
        assert np.array_equal(got, expect)


class TestModalitySet:
    def test_presets_cover_the_six_combinations(self):
        assert set(MODALITY_PRESETS) == {"lv", "lv_d", "lv_n", "dn", "lv_fpfh",
                                         "pclv"}
        assert MODALITY_PRESETS["pclv"] == ("color", "distance", "normal")

    def test_canonical_order(self):
        ms = ModalitySet.of("normal", "color")
        assert ms.names == ("color", "normal")

    def test_rejects_bad_sets(self):
        with pytest.raises(ValueError):
            ModalitySet.of()
        with pytest.raises(ValueError):
            ModalitySet(("color", "color"))
        with pytest.raises(ValueError):
            ModalitySet.of("chroma")


class TestAssignWeights:
    def _full_cloud(self, rng, n=50):
        pts = rng.normal(size=(n, 3))
        cloud = PointCloud(positions=pts, colors=rng.random((n, 3)))
        normals = estimate_normals(cloud, k=8)
        cloud = cloud.with_descriptors(normals=normals.directions)
        fpfh = compute_fpfh(cloud, normals, k=8)
        return cloud.with_descriptors(fpfh=fpfh)

    def test_color_only_matches_scalar(self, rng):
        cloud = self._full_cloud(rng, 30)
        g = build_knn(cloud, k=3)
        wg = assign_weights(g, cloud, ModalitySet.of("color"))
        assert wg.weights.shape == (g.n_edges, 1)
        for e, (i, j) in enumerate(g.edges):
            assert wg.weights[e, 0] == color_weight(cloud.colors[i], cloud.colors[j])

    def test_single_edge_distance_degenerate(self):
        cloud = PointCloud(positions=[[0, 0, 0], [1, 0, 0]])
        g = build_knn(cloud, k=1)
        wg = assign_weights(g, cloud, ModalitySet.of("color", "distance"))
        assert wg.column("distance")[0] == 0.0
        assert wg.d_min == wg.d_max == 1.0

    def test_all_modalities_match_per_edge_oracle(self, rng):
        cloud = self._full_cloud(rng, 50)
        g = build_knn(cloud, k=4)
        for unsigned in (False, True):
            wg = assign_weights(
                g, cloud, ModalitySet.of("color", "distance", "normal", "fpfh"),
                unsigned_normals=unsigned,
            )
            for e, (i, j) in enumerate(g.edges):
                assert wg.weights[e, 0] == color_weight(cloud.colors[i],
                                                        cloud.colors[j])
                assert wg.weights[e, 1] == distance_weight(wg.lengths[e],
                                                           wg.d_min, wg.d_max)
                assert wg.weights[e, 2] == normal_weight(cloud.normals[i],
                                                         cloud.normals[j],
                                                         unsigned=unsigned)
                assert wg.weights[e, 3] == fpfh_weight(cloud.fpfh[i], cloud.fpfh[j])

    def test_ranges_on_constructed_graph(self, rng):
        cloud = self._full_cloud(rng, 60)
        g = build_knn(cloud, k=5)
        wg = assign_weights(g, cloud,
                            ModalitySet.of("color", "distance", "normal", "fpfh"))
        assert wg.column("color").min() >= 0 and wg.column("color").max() <= 1
        assert wg.column("distance").min() >= 0 and wg.column("distance").max() <= 1
        assert wg.column("fpfh").min() >= 0 and wg.column("fpfh").max() <= 1
        w_n = wg.column("normal")
        assert w_n.min() >= 0 and w_n.max() <= 2 + 1e-12
        wg_u = assign_weights(g, cloud, ModalitySet.of("normal"),
                              unsigned_normals=True)
        assert wg_u.column("normal").max() <= 1 + 1e-12

    def test_missing_descriptor_rejected(self, rng):
        cloud = PointCloud(positions=rng.normal(size=(10, 3)))
        g = build_knn(cloud, k=2)
        with pytest.raises(ValueError, match="normal"):
            assign_weights(g, cloud, ModalitySet.of("color", "normal"))
        with pytest.raises(ValueError, match="fpfh"):
            assign_weights(g, cloud, ModalitySet.of("fpfh"))

    def test_distance_weight_rigid_motion_and_scale_invariant(self, rng):
        pts = rng.normal(size=(40, 3))
        cloud = PointCloud(positions=pts)
        g = build_knn(cloud, k=4)
        ms = ModalitySet.of("distance")
        base = assign_weights(g, cloud, ms).column("distance")
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        moved = PointCloud(positions=pts @ q.T + np.array([3.0, -2.0, 1.0]))
        scaled = PointCloud(positions=pts * 17.0)
        assert np.abs(assign_weights(g, moved, ms).column("distance")
                      - base).max() < 1e-9
        assert np.abs(assign_weights(g, scaled, ms).column("distance")
                      - base).max() < 1e-9

    def test_unsigned_invariant_to_sign_flips(self, rng):
        cloud = self._full_cloud(rng, 40)
        g = build_knn(cloud, k=4)
        ms = ModalitySet.of("normal")
        base = assign_weights(g, cloud, ms, unsigned_normals=True).column("normal")
        flips = rng.choice([-1.0, 1.0], size=(40, 1))
        flipped = PointCloud(positions=cloud.positions, colors=cloud.colors,
                             normals=cloud.normals * flips)
        got = assign_weights(g, flipped, ms, unsigned_normals=True).column("normal")
        assert np.abs(got - base).max() < 1e-12

    def test_weighted_csv_dump(self, tmp_path, rng):
        cloud = self._full_cloud(rng, 10)
        g = build_knn(cloud, k=2)
        wg = assign_weights(g, cloud, ModalitySet.of("color", "normal"))
        path = tmp_path / "w.csv"
        wg.dump_weighted_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "i,j,len,w_c,w_d,w_n,w_fpfh"
        first = lines[1].split(",")
        assert first[3] != "" and first[4] == "" and first[5] != "" and first[6] == ""
