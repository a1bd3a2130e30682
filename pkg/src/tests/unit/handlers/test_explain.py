import numpy as np
import pytest

from src.adapters.storage.images import load_image
from src.errors import ContractError
from src.handlers.case_model import CaseModel
from src.handlers.explain import (
    grid_size,
    heat_per_pixel,
    mask_heatmap,
    overlay,
    token_saliency,
    write_overlay,
)
from src.schemas.common import ImageFormat, QueryMode
from src.schemas.explain import Heatmap

TEXT = "remove the square"


@pytest.fixture
def target(tiny_model, random_image):
    return tiny_model.encode_target(random_image[::-1].copy()).data


@pytest.fixture
def double_model(tiny_model):
    return CaseModel(
        tiny_model.config, tiny_model.tokenizer, tiny_model.params.astype(np.float64)
    )


def cosine(model, image, text, target) -> float:
    query = model.forward_query(image, text, QueryMode.STANDARD).data
    return float(np.dot(query.astype(np.float64), target))


class TestGridSize:
    @pytest.mark.parametrize(
        "size, window, stride, cells", [(32, 8, 8, 4), (16, 8, 4, 3), (16, 16, 1, 1)]
    )
    def test_cells(self, size, window, stride, cells):
        assert grid_size(size, window, stride) == cells

    @pytest.mark.parametrize("window, stride", [(33, 8), (0, 8), (8, 0)])
    def test_invalid(self, window, stride):
        with pytest.raises(ContractError):
            grid_size(32, window, stride)


class TestMaskHeatmap:
    def test_black_region_has_no_heat(self, tiny_model, random_image, target):
        """Blacking out pixels that are already black changes nothing"""
        image = random_image.copy()
        image[:8, :8] = 0.0
        heatmap = mask_heatmap(tiny_model, image, TEXT, target, window=8, stride=4)
        assert len(heatmap.grid) == 3 and len(heatmap.grid[0]) == 3
        assert heatmap.grid[0][0] == 0.0
        assert any(v != 0.0 for row in heatmap.grid for v in row)

    def test_base_similarity(self, tiny_model, random_image, target):
        heatmap = mask_heatmap(tiny_model, random_image, TEXT, target)
        unit = target / np.linalg.norm(target)
        expected = cosine(tiny_model, random_image, TEXT, unit)
        assert heatmap.base_similarity == pytest.approx(expected, abs=1e-6)

    def test_zero_target(self, tiny_model, random_image):
        heatmap = mask_heatmap(tiny_model, random_image, TEXT, np.zeros(8))
        assert heatmap.base_similarity == 0.0
        assert all(v == 0.0 for row in heatmap.grid for v in row)

    def test_deterministic_across_threads(self, tiny_model, random_image, target):
        single = mask_heatmap(tiny_model, random_image, TEXT, target)
        assert mask_heatmap(tiny_model, random_image, TEXT, target) == single
        assert mask_heatmap(tiny_model, random_image, TEXT, target, threads=3) == single

    def test_window_larger_than_image(self, tiny_model, random_image, target):
        with pytest.raises(ContractError):
            mask_heatmap(tiny_model, random_image, TEXT, target, window=17)


class TestTokenSaliency:
    def test_matches_finite_differences(self, double_model, random_image, target):
        scores = token_saliency(double_model, random_image, TEXT, target)
        unit = target.astype(np.float32) / np.linalg.norm(target.astype(np.float32))
        unit = unit.astype(np.float64)
        table = double_model.params["text.tok_embed"].data
        eps = 1e-6
        for score in scores:
            fd = np.zeros(table.shape[1])
            for c in range(table.shape[1]):
                original = table[score.token_id, c]
                table[score.token_id, c] = original + eps
                up = cosine(double_model, random_image, TEXT, unit)
                table[score.token_id, c] = original - eps
                down = cosine(double_model, random_image, TEXT, unit)
                table[score.token_id, c] = original
                fd[c] = (up - down) / (2 * eps)
            assert score.score == pytest.approx(np.linalg.norm(fd), rel=1e-5, abs=1e-9)

    def test_tokens_and_specials(self, tiny_model, random_image, target):
        scores = token_saliency(tiny_model, random_image, TEXT, target)
        tokens = ["[CLS]", "remove", "the", "square", "[SEP]"]
        assert [s.token for s in scores] == tokens
        assert [s.special for s in scores] == [True, False, False, False, True]
        assert all(s.score >= 0.0 for s in scores)

    def test_repeated_word_scored_per_position(self, tiny_model, random_image, target):
        scores = token_saliency(tiny_model, random_image, "the the square", target)
        assert [s.token for s in scores[1:3]] == ["the", "the"]
        assert scores[1].token_id == scores[2].token_id
        assert scores[1].score != scores[2].score

    def test_reproducible(self, tiny_model, random_image, target):
        first = token_saliency(tiny_model, random_image, TEXT, target)
        assert token_saliency(tiny_model, random_image, TEXT, target) == first

    def test_zero_target(self, tiny_model, random_image):
        scores = token_saliency(tiny_model, random_image, TEXT, np.zeros(8))
        assert all(s.score == 0.0 for s in scores)

    def test_gradients_are_cleared(self, tiny_model, random_image, target):
        token_saliency(tiny_model, random_image, TEXT, target)
        assert all(t.grad is None for t in tiny_model.params)

    def test_empty_text(self, tiny_model, random_image, target):
        with pytest.raises(ContractError):
            token_saliency(tiny_model, random_image, "  ", target)


class TestOverlay:
    def test_heat_per_pixel(self):
        grid = [[1, 3], [5, 7]]
        heatmap = Heatmap(window=2, stride=2, base_similarity=0.0, grid=grid)
        heat = heat_per_pixel(heatmap, 5)
        assert heat[0, 0] == 1.0 and heat[1, 3] == 3.0 and heat[3, 2] == 7.0
        assert heat[4].sum() == 0.0 and heat[:, 4].sum() == 0.0

    def test_overlapping_windows_average(self):
        grid = [[2, 4]]
        heatmap = Heatmap(window=2, stride=1, base_similarity=0.0, grid=grid)
        heat = heat_per_pixel(heatmap, 3)
        assert heat[0].tolist() == [2.0, 3.0, 4.0]

    def test_cold_black_image(self):
        grid = [[0, 0], [0, 0]]
        heatmap = Heatmap(window=8, stride=8, base_similarity=0.0, grid=grid)
        pixels = overlay(np.zeros((16, 16, 3), dtype=np.float32), heatmap)
        assert pixels.dtype == np.uint8 and pixels.shape == (16, 16, 3)
        assert np.all(pixels == [0, 0, 64])

    def test_hottest_window_is_red(self):
        grid = [[0, 0], [0, 2]]
        heatmap = Heatmap(window=8, stride=8, base_similarity=0.0, grid=grid)
        pixels = overlay(np.zeros((16, 16, 3), dtype=np.float32), heatmap)
        assert pixels[12, 12].tolist() == [128, 0, 0]

    def test_write_overlay(self, tmp_path):
        grid = [[0, 0], [0, 0]]
        heatmap = Heatmap(window=8, stride=8, base_similarity=0.0, grid=grid)
        image = np.ones((16, 16, 3), dtype=np.float32)
        write_overlay(tmp_path / "heat.ppm", image, heatmap)
        loaded = load_image(tmp_path / "heat.ppm", ImageFormat.PPM)
        assert loaded.shape == (16, 16, 3)
        assert np.allclose(loaded[0, 0] * 255.0, [128, 128, 192], atol=1e-4)
