from collections import Counter, defaultdict

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import GenerationError
from src.handlers.toy_generator import (
    Transition,
    apply,
    describe,
    gen_toy,
    generate,
    render,
    shape_mask,
)
from src.schemas.common import ColorName, RedundancyMode, ShapeName
from src.schemas.toy_config import ToyConfig


@pytest.fixture
def config():
    return ToyConfig(image_size=16, triplets=40, corpus=60, seed=11)


@pytest.fixture
def dataset(config):
    return generate(config)


def tree_bytes(root) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in root.rglob("*") if p.is_file()
    }


class TestGenerate:
    def test_same_seed_same_dataset(self, config, dataset):
        again = generate(config)
        assert again.triplets == dataset.triplets
        assert again.manifest == dataset.manifest
        for image_id, pixels in dataset.pixels.items():
            assert np.array_equal(again.pixels[image_id], pixels)

    def test_written_trees_are_identical(self, config, tmp_path):
        gen_toy(config, tmp_path / "a")
        gen_toy(config, tmp_path / "b")
        first = tree_bytes(tmp_path / "a")
        assert first == tree_bytes(tmp_path / "b")
        assert "triplets.jsonl" in first and "manifest.json" in first

    def test_other_seed_differs(self, config, dataset):
        other = generate(config.model_copy(update={"seed": 12}))
        assert other.triplets != dataset.triplets

    def test_texts_are_shared_by_groups(self, dataset):
        """Each text goes with exactly G queries whose targets are pairwise distinct"""
        targets = defaultdict(list)
        for t in dataset.triplets:
            targets[t.query_text].append(dataset.scenes[t.target_image])
        assert len(dataset.triplets) == 40
        for scenes in targets.values():
            assert len(scenes) == 4
            assert len(set(scenes)) == 4

    def test_every_text_has_whole_groups(self, config):
        """More groups than distinct texts: texts repeat, always in whole groups"""
        dataset = generate(config.model_copy(update={"triplets": 200}))
        counts = Counter(t.query_text for t in dataset.triplets)
        assert sum(counts.values()) == 200
        assert all(n % 4 == 0 for n in counts.values())
        assert max(counts.values()) > 4

    def test_partial_group_is_rejected(self):
        with pytest.raises(ValidationError):
            ToyConfig(image_size=16, triplets=42, group_size=4)
        config = ToyConfig(
            image_size=16, triplets=42, group_size=4, mode=RedundancyMode.REDUNDANT
        )
        assert len(generate(config).triplets) == 42

    def test_query_and_target_pixels_differ(self, dataset):
        for t in dataset.triplets:
            query = dataset.pixels[t.query_image]
            target = dataset.pixels[t.target_image]
            assert not np.array_equal(query, target)

    def test_triplets_stay_within_one_split(self, dataset):
        splits = {i.id: i.split for i in dataset.manifest.images}
        for t in dataset.triplets:
            assert splits[t.query_image] == splits[t.target_image]

    def test_distractors_fill_the_corpus(self, dataset):
        assert len(dataset.manifest.images) >= 60
        assert len(dataset.pixels) == len(dataset.manifest.images)

    def test_redundant_texts_describe_the_target(self, config):
        config = config.model_copy(update={"mode": RedundancyMode.REDUNDANT})
        redundant = generate(config)
        for t in redundant.triplets:
            assert t.query_text == describe(redundant.scenes[t.target_image])

    def test_infeasible_group_size(self):
        config = ToyConfig(
            image_size=16,
            shapes=[ShapeName.SQUARE, ShapeName.DISC],
            colors=[ColorName.RED, ColorName.GREEN],
            group_size=300,
            triplets=300,
        )
        with pytest.raises(GenerationError):
            generate(config)


class TestTransitions:
    def test_remove_clears_exactly_the_shape(self, config):
        # one group per transition, so every remove shows up
        dataset = generate(config.model_copy(update={"triplets": 176}))
        cell = config.cell_size
        removals = [t for t in dataset.triplets if t.category == "remove"]
        assert removals
        for t in removals:
            query = dataset.scenes[t.query_image]
            target = dataset.scenes[t.target_image]
            (index,) = [i for i, (a, b) in enumerate(zip(query, target)) if a != b]
            assert target[index] is None
            expected = np.zeros((16, 16), dtype=bool)
            row, col = divmod(index, config.grid)
            block = np.s_[row * cell : (row + 1) * cell, col * cell : (col + 1) * cell]
            expected[block] = shape_mask(query[index][0], cell)
            diff = np.any(
                dataset.pixels[t.query_image] != dataset.pixels[t.target_image], axis=-1
            )
            assert np.array_equal(diff, expected)

    def test_color_change(self, config):
        scene = ((ShapeName.DISC, ColorName.RED), None, None, None)
        changed = apply(Transition("color", ShapeName.DISC, "blue"), scene, config)
        assert changed[0] == (ShapeName.DISC, ColorName.BLUE)
        assert render(changed, config)[4, 4].tolist() == [0, 0, 255]

    def test_color_change_to_same_color(self, config):
        scene = ((ShapeName.DISC, ColorName.RED), None, None, None)
        with pytest.raises(GenerationError):
            apply(Transition("color", ShapeName.DISC, "red"), scene, config)

    def test_add_needs_one_empty_cell(self, config):
        scene = ((ShapeName.DISC, ColorName.RED), None, None, None)
        with pytest.raises(GenerationError):
            apply(Transition("add", ShapeName.SQUARE), scene, config)

    def test_text(self):
        assert Transition("replace", ShapeName.DISC, "cross").text == (
            "replace the disc with a cross"
        )
        assert Transition("remove", ShapeName.FRAME).text == "remove the frame"

    def test_describe(self):
        scene = (
            (ShapeName.DISC, ColorName.RED),
            None,
            None,
            (ShapeName.CROSS, ColorName.CYAN),
        )
        assert describe(scene) == (
            "a red disc at top left, nothing at top right, nothing at bottom left"
            " and a cyan cross at bottom right"
        )

    @pytest.mark.parametrize("shape", list(ShapeName))
    def test_masks_fit_inside_the_cell(self, shape):
        mask = shape_mask(shape, 16)
        assert mask.shape == (16, 16) and mask.any()
        assert not mask[0].any() and not mask[:, 0].any()
