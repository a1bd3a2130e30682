from pydantic import Field, model_validator

from src.schemas.schema_base import ConfigBase


class ModelConfig(ConfigBase):
    """Shape hyperparameters of the toy CASE model.

    Full-size analogues: `d` is the BLIP width, `d_e` is 256.
    """

    image_size: int = Field(default=32, gt=0)
    patch_size: int = Field(default=8, gt=0)
    channels: int = Field(default=3, gt=0)
    d: int = Field(default=32, gt=0)
    n_heads: int = Field(default=4, gt=0)
    vit_layers: int = Field(default=2, ge=0)
    shift_layers: int = Field(default=2, ge=0)
    d_e: int = Field(default=32, gt=0)
    vocab_size: int = Field(default=64, gt=5)
    max_text_len: int = Field(default=32, ge=3)
    ffn_mult: int = Field(default=4, gt=0)

    @model_validator(mode="after")
    def check_divisibility(self):
        if self.image_size % self.patch_size:
            raise ValueError(
                f"image_size {self.image_size} not divisible by "
                f"patch_size {self.patch_size}"
            )
        if self.d % self.n_heads:
            raise ValueError(f"d {self.d} not divisible by n_heads {self.n_heads}")
        return self

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def n_v(self) -> int:
        return self.n_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.image_size, self.image_size, self.channels


class InitConfig(ConfigBase):
    seed: int = Field(default=0, ge=0)
    scale: float = Field(default=1.0, gt=0)
