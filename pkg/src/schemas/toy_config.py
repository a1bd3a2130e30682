from typing import List

from pydantic import Field, model_validator

from src.schemas.common import ColorName, RedundancyMode, ShapeName
from src.schemas.schema_base import ConfigBase


class ToyConfig(ConfigBase):
    """Desk-scale stand-in for LaSCo/CIRR: 2x2 grids of coloured shapes."""

    image_size: int = 32
    grid: int = 2
    shapes: List[ShapeName] = Field(default_factory=lambda: list(ShapeName))
    colors: List[ColorName] = Field(default_factory=lambda: list(ColorName))
    group_size: int = Field(default=4, ge=2)
    mode: RedundancyMode = RedundancyMode.COMPOSITIONAL
    triplets: int = Field(default=2000, gt=0)
    corpus: int = Field(default=1, gt=0)
    val_fraction: float = Field(default=0.08, ge=0.0, lt=1.0)
    seed: int = Field(default=7, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_layout(self):
        if self.grid != 2:
            raise ValueError("only a 2x2 grid is supported")
        if self.image_size % self.grid or self.image_size // self.grid < 8:
            raise ValueError(f"image_size {self.image_size} too small for the grid")
        if len(self.shapes) < 2 or len(self.colors) < 2:
            raise ValueError("need at least two shapes and two colors")
        compositional = self.mode == RedundancyMode.COMPOSITIONAL
        if compositional and self.triplets % self.group_size:
            raise ValueError(
                f"triplets {self.triplets} must be a multiple of "
                f"group_size {self.group_size} in compositional mode"
            )
        return self

    @property
    def cell_size(self) -> int:
        return self.image_size // self.grid
