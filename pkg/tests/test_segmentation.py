import numpy as np
import pytest
from PIL import Image

from cornercase.segmentation import (
    CLASS_NAMES,
    ClassTable,
    MaskDir,
    class_name,
    load_mask,
    relevance_mask,
    save_mask,
)


def write_raw(path, arr):
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


class TestClassTable:
    def test_nineteen_classes(self):
        assert len(CLASS_NAMES) == 19
        assert CLASS_NAMES[0] == "Road"
        assert CLASS_NAMES[13] == "Car"
        assert CLASS_NAMES[18] == "Bicycle"

    def test_default_relevant_set_is_people_and_vehicles(self):
        table = ClassTable()
        assert table.relevant == frozenset(range(12, 20))
        assert {class_name(c) for c in table.relevant} == {
            "Person", "Rider", "Car", "Truck", "Bus", "Train", "Motorcycle", "Bicycle",
        }

    def test_void_is_named(self):
        assert class_name(0) == "void"

    def test_relevant_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ClassTable(relevant=frozenset({0, 12}))
        with pytest.raises(ValueError):
            ClassTable(relevant=frozenset({20}))


class TestLoadMask:
    def test_trainid_shifts_up(self, tmp_path):
        write_raw(tmp_path / "m.png", np.array([[11, 0, 18]]))
        out = load_mask(tmp_path / "m.png", id_convention="trainid")
        assert out.tolist() == [[12, 1, 19]]

    def test_trainid_255_is_void(self, tmp_path):
        write_raw(tmp_path / "m.png", np.array([[255, 3]]))
        out = load_mask(tmp_path / "m.png", id_convention="trainid")
        assert out.tolist() == [[0, 4]]

    def test_trainid_rejects_out_of_range(self, tmp_path):
        write_raw(tmp_path / "m.png", np.array([[19]]))
        with pytest.raises(ValueError, match="out of range"):
            load_mask(tmp_path / "m.png", id_convention="trainid")

    def test_paper_ids_pass_through(self, tmp_path):
        write_raw(tmp_path / "m.png", np.array([[0, 1, 14, 19]]))
        out = load_mask(tmp_path / "m.png", id_convention="paper")
        assert out.tolist() == [[0, 1, 14, 19]]

    def test_paper_rejects_out_of_range(self, tmp_path):
        write_raw(tmp_path / "m.png", np.array([[20]]))
        with pytest.raises(ValueError, match="out of range"):
            load_mask(tmp_path / "m.png", id_convention="paper")

    def test_rejects_rgb_mask(self, tmp_path):
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(tmp_path / "m.png")
        with pytest.raises(ValueError, match="single-channel"):
            load_mask(tmp_path / "m.png")

    def test_unknown_convention(self, tmp_path):
        write_raw(tmp_path / "m.png", np.zeros((2, 2)))
        with pytest.raises(ValueError, match="convention"):
            load_mask(tmp_path / "m.png", id_convention="labelid")


class TestSaveMask:
    def test_trainid_roundtrip_is_identity(self, tmp_path):
        gen = np.random.default_rng(0)
        raw = gen.integers(0, 19, (10, 12)).astype(np.uint8)
        raw[gen.random((10, 12)) < 0.2] = 255
        write_raw(tmp_path / "in.png", raw)
        mask = load_mask(tmp_path / "in.png", id_convention="trainid")
        save_mask(mask, tmp_path / "out.png", id_convention="trainid")
        assert np.array_equal(np.asarray(Image.open(tmp_path / "out.png")), raw)

    def test_paper_roundtrip(self, tmp_path):
        mask = np.random.default_rng(1).integers(0, 20, (6, 6)).astype(np.uint8)
        save_mask(mask, tmp_path / "m.png", id_convention="paper")
        assert np.array_equal(load_mask(tmp_path / "m.png", id_convention="paper"), mask)

    def test_rejects_labels_above_19(self, tmp_path):
        with pytest.raises(ValueError):
            save_mask(np.array([[21]]), tmp_path / "m.png")


class TestRelevance:
    def test_road_frame_is_all_irrelevant(self):
        assert (relevance_mask(np.full((5, 5), 1, dtype=np.uint8)) == 0).all()

    def test_person_frame_is_all_relevant(self):
        assert (relevance_mask(np.full((5, 5), 12, dtype=np.uint8)) == 1).all()

    def test_checkerboard(self):
        mask = np.array([[14, 11], [11, 14]], dtype=np.uint8)  # car vs sky
        assert relevance_mask(mask).tolist() == [[1, 0], [0, 1]]

    def test_void_never_relevant(self):
        assert (relevance_mask(np.zeros((3, 3), dtype=np.uint8)) == 0).all()

    def test_pointwise(self):
        gen = np.random.default_rng(2)
        mask = gen.integers(0, 20, (30, 30)).astype(np.uint8)
        table = ClassTable()
        rel = relevance_mask(mask, table)
        for r in range(30):
            for c in range(30):
                assert rel[r, c] == (1 if mask[r, c] in table.relevant else 0)

    def test_count_matches_membership(self):
        gen = np.random.default_rng(3)
        mask = gen.integers(0, 20, (40, 25)).astype(np.uint8)
        rel = relevance_mask(mask)
        assert rel.sum() == np.isin(mask, list(range(12, 20))).sum()

    def test_custom_relevant_set(self):
        mask = np.array([[1, 11]], dtype=np.uint8)
        rel = relevance_mask(mask, ClassTable(relevant=frozenset({1})))
        assert rel.tolist() == [[1, 0]]

    def test_labels_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            relevance_mask(np.array([[33]]))


class TestMaskDir:
    def test_loads_with_convention(self, tmp_path):
        write_raw(tmp_path / "000001.png", np.array([[13, 255]]))
        md = MaskDir(tmp_path, id_convention="trainid")
        assert md.frame_indices == [1]
        assert md.load_at(0).tolist() == [[14, 0]]

    def test_unknown_convention_rejected(self, tmp_path):
        write_raw(tmp_path / "000001.png", np.zeros((2, 2)))
        with pytest.raises(ValueError):
            MaskDir(tmp_path, id_convention="bogus")
