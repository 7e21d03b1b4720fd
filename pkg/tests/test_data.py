import json

import numpy as np
import pytest

from camocount import data as dio
from camocount.data import (AnnotationDoc, AnnotationError, PointAnnotation,
                            SplitManifest, augment, invert_points,
                            merge_tile_predictions, pad_image, plan_tiles,
                            read_annotations, read_manifest, resize_image,
                            sample_augment_params, transform_points,
                            write_annotations, write_manifest)
from camocount.imageio import read_ppm, write_ppm


def make_doc(points=None):
    return AnnotationDoc(image="a.ppm", width=64, height=48,
                         points=points if points is not None else [
                             PointAnnotation(1.5, 2.5),
                             PointAnnotation(10.0, 20.0, difficult=True),
                             PointAnnotation(63.0, 47.0)])


class TestAnnotations:
    def test_write_read_identity(self, tmp_path):
        doc = make_doc()
        path = tmp_path / "a.json"
        write_annotations(doc, path)
        assert read_annotations(path) == doc

    def test_x_equal_width_rejected(self):
        doc = make_doc([PointAnnotation(64.0, 1.0)])
        with pytest.raises(AnnotationError, match=r"points\[0\].x"):
            doc.validate()

    def test_y_negative_rejected(self):
        doc = make_doc([PointAnnotation(1.0, -0.5)])
        with pytest.raises(AnnotationError, match=r"points\[0\].y"):
            doc.validate()

    def test_empty_points_valid(self, tmp_path):
        doc = make_doc([])
        path = tmp_path / "empty.json"
        write_annotations(doc, path)
        assert read_annotations(path).count == 0

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"image": "a.ppm",\n  "width": }')
        with pytest.raises(AnnotationError, match="line 2"):
            read_annotations(path)

    def test_missing_field_path(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"image": "a.ppm", "width": 4,
                                    "height": 4,
                                    "points": [{"x": 1.0}]}))
        with pytest.raises(AnnotationError, match=r"points\[0\].y"):
            read_annotations(path)

    def test_wrong_type_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"image": "a.ppm", "width": "wide",
                                    "height": 4, "points": []}))
        with pytest.raises(AnnotationError, match="width"):
            read_annotations(path)

    def test_invalid_write_leaves_previous_file(self, tmp_path):
        path = tmp_path / "a.json"
        write_annotations(make_doc(), path)
        before = path.read_bytes()
        with pytest.raises(AnnotationError):
            write_annotations(make_doc([PointAnnotation(999.0, 1.0)]), path)
        assert path.read_bytes() == before

    def test_canonical_bytes_stable(self, tmp_path):
        p1, p2 = tmp_path / "1.json", tmp_path / "2.json"
        write_annotations(make_doc(), p1)
        write_annotations(make_doc(), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_float_coordinates_bit_exact(self, tmp_path):
        x = 1.0 / 3.0
        doc = make_doc([PointAnnotation(x, 0.1 + 0.2)])
        path = tmp_path / "a.json"
        write_annotations(doc, path)
        back = read_annotations(path)
        assert back.points[0].x == x and back.points[0].y == 0.1 + 0.2


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = SplitManifest(train=["a.ppm"], val=["b.ppm"], test=["c.ppm"])
        path = tmp_path / "manifest.json"
        write_manifest(m, path)
        assert read_manifest(path) == m

    def test_overlap_rejected(self):
        with pytest.raises(AnnotationError, match="both"):
            SplitManifest(train=["a.ppm"], val=["a.ppm"]).validate()

    def test_unknown_split_name(self):
        with pytest.raises(ValueError, match="unknown split"):
            SplitManifest().split("holdout")


class TestPpm:
    def test_round_trip_quantized(self, tmp_path, rng):
        img = rng.random((10, 12, 3))
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert back.shape == (10, 12, 3)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-9

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 2\n255\n" + bytes(12))
        assert read_ppm(path).shape == (2, 2, 3)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(ValueError, match="P3"):
            read_ppm(path)


class TestTiling:
    def test_exact_division(self):
        plan = plan_tiles(512, 512, 256)
        assert plan.padded_width == plan.padded_height == 512
        assert plan.origins == [(0, 0), (256, 0), (0, 256), (256, 256)]

    def test_padding_to_multiple(self):
        plan = plan_tiles(300, 300, 256)
        assert (plan.padded_width, plan.padded_height) == (512, 512)
        assert len(plan.origins) == 4

    def test_single_tile_no_padding(self):
        plan = plan_tiles(256, 256, 256)
        assert plan.origins == [(0, 0)]
        assert plan.padded_width == 256

    def test_partition_covers_padded_image(self):
        plan = plan_tiles(300, 200, 128)
        cover = np.zeros((plan.padded_height, plan.padded_width), dtype=int)
        for ox, oy in plan.origins:
            cover[oy:oy + plan.crop, ox:ox + plan.crop] += 1
        assert (cover == 1).all()

    def test_pad_image_symmetric(self, rng):
        img = rng.random((5, 4, 3))
        plan = plan_tiles(4, 5, 8)
        padded = pad_image(img, plan)
        assert padded.shape == (8, 8, 3)
        np.testing.assert_array_equal(padded[:5, :4], img)
        np.testing.assert_array_equal(padded[:, 4], padded[:, 3])


class TestMergePredictions:
    def test_global_offset(self):
        plan = plan_tiles(512, 512, 256)
        local = np.array([[10.0 / 256.0, 10.0 / 256.0]])
        merged = merge_tile_predictions(
            [((256, 0), np.array([0.9]), local)], plan, threshold=0.35)
        np.testing.assert_allclose(merged.points, [[266.0, 10.0]])
        assert merged.count == 1 and merged.dropped_padding == 0

    def test_padding_point_dropped(self):
        plan = plan_tiles(300, 300, 256)
        # tile at (256, 0): local x=0.5 -> global 384 >= 300 -> padding
        merged = merge_tile_predictions(
            [((256, 0), np.array([0.9]), np.array([[0.5, 0.1]]))],
            plan, threshold=0.35)
        assert merged.count == 0 and merged.dropped_padding == 1

    def test_threshold_strictness(self):
        plan = plan_tiles(256, 256, 256)
        merged = merge_tile_predictions(
            [((0, 0), np.array([0.35, 0.36]),
              np.array([[0.1, 0.1], [0.2, 0.2]]))], plan, threshold=0.35)
        assert merged.count == 1

    def test_count_additivity(self, rng):
        plan = plan_tiles(300, 300, 256)
        outputs = []
        above = 0
        for origin in plan.origins:
            scores = rng.random(40)
            points = rng.random((40, 2))
            outputs.append((origin, scores, points))
            above += int((scores > 0.35).sum())
        merged = merge_tile_predictions(outputs, plan, threshold=0.35)
        assert merged.count == above - merged.dropped_padding

    def test_unknown_origin(self):
        plan = plan_tiles(256, 256, 256)
        with pytest.raises(ValueError, match="origin"):
            merge_tile_predictions(
                [((128, 0), np.zeros(1), np.zeros((1, 2)))], plan, 0.35)


class TestAugment:
    def test_flip_is_involution(self, rng):
        img = rng.random((80, 70, 3))
        pts = rng.random((6, 2)) * [70, 80]
        params = sample_augment_params(np.random.default_rng(0), 70, 80,
                                       crop=64, scale_range=(1.0, 1.0),
                                       flip_prob=1.0)
        once, kept = transform_points(pts, params)
        # apply the same flip again at the crop frame: restores pre-crop x
        twice = once.copy()
        twice[:, 0] += params.crop_x
        twice[:, 0] = (params.resized_w - 1) - twice[:, 0]
        np.testing.assert_allclose(twice[:, 0], pts[kept][:, 0], atol=1e-9)

    def test_crop_keeps_exactly_inside_points(self, rng):
        img = rng.random((100, 100, 3))
        pts = rng.random((50, 2)) * 100
        params = sample_augment_params(np.random.default_rng(3), 100, 100,
                                       crop=64, scale_range=(1.0, 1.0),
                                       flip_prob=0.0)
        out, kept = transform_points(pts, params)
        inside = ((pts[:, 0] >= params.crop_x)
                  & (pts[:, 0] < params.crop_x + 64)
                  & (pts[:, 1] >= params.crop_y)
                  & (pts[:, 1] < params.crop_y + 64))
        np.testing.assert_array_equal(kept, inside)

    def test_resize_doubles_coordinates(self, rng):
        img = rng.random((32, 32, 3))
        resized = resize_image(img, 64, 64)
        assert resized.shape == (64, 64, 3)
        pts = np.array([[4.0, 6.0], [10.0, 3.0]])
        params = dio.AugmentParams(scale_x=2.0, scale_y=2.0, flipped=False,
                                   crop_x=0, crop_y=0, crop=64,
                                   resized_w=64, resized_h=64)
        out, _ = transform_points(pts, params)
        np.testing.assert_allclose(out, pts * 2.0)

    def test_inverse_recovers_original(self, rng):
        pts = rng.random((20, 2)) * [90, 110]
        for seed in range(10):
            params = sample_augment_params(np.random.default_rng(seed),
                                           90, 110, crop=64,
                                           scale_range=(0.75, 1.25),
                                           flip_prob=0.5)
            moved, kept = transform_points(pts, params)
            back = invert_points(moved, params)
            assert np.abs(back - pts[kept]).max() <= 0.5

    def test_augment_deterministic(self, rng):
        img = rng.random((80, 80, 3))
        pts = rng.random((10, 2)) * 80
        a_img, a_pts = augment(img, pts, seed=11, crop=64)
        b_img, b_pts = augment(img, pts, seed=11, crop=64)
        np.testing.assert_array_equal(a_img, b_img)
        np.testing.assert_array_equal(a_pts, b_pts)

    def test_augmented_image_shape(self, rng):
        img = rng.random((70, 90, 3))
        out, _ = augment(img, np.zeros((0, 2)), seed=2, crop=64)
        assert out.shape == (64, 64, 3)


class TestStats:
    def test_two_docs(self):
        docs = [make_doc([PointAnnotation(1, 1), PointAnnotation(2, 2)]),
                make_doc([PointAnnotation(1, 1), PointAnnotation(2, 2),
                          PointAnnotation(3, 3), PointAnnotation(4, 4)])]
        stats = dio.dataset_stats(docs)
        assert stats.total_points == 6
        assert stats.avg_count == 3.0
        assert (stats.min_count, stats.max_count) == (2, 4)

    def test_single_empty_doc(self):
        stats = dio.dataset_stats([make_doc([])])
        assert stats.total_points == 0
        assert stats.min_count == stats.max_count == 0

    def test_text_output(self):
        text = dio.dataset_stats([make_doc()]).to_text()
        assert "images=1" in text and "total_points=3" in text
