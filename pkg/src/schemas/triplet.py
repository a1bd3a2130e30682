from typing import List, Optional

from pydantic import field_validator, model_validator

from src.constants import SUBSET_SIZE
from src.schemas.common import ImageFormat, Split
from src.schemas.schema_base import SchemaBase


class Triplet(SchemaBase):
    qid: str
    query_image: str
    query_text: str
    target_image: str
    subset: Optional[List[str]] = None
    category: Optional[str] = None
    caption: Optional[str] = None

    @model_validator(mode="after")
    def check_images(self):
        if self.query_image == self.target_image:
            raise ValueError(
                f"query_image and target_image are the same ({self.query_image})"
            )
        if self.subset is not None:
            if len(self.subset) != SUBSET_SIZE:
                raise ValueError(
                    f"subset must hold exactly {SUBSET_SIZE} ids, got {len(self.subset)}"
                )
            if len(set(self.subset)) != SUBSET_SIZE:
                raise ValueError("subset ids must be unique")
            if self.target_image not in self.subset:
                raise ValueError("subset must contain target_image")
        return self

    def to_json_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)


class ManifestImage(SchemaBase):
    id: str
    path: str
    format: ImageFormat
    split: Split
    caption: Optional[str] = None


class CorpusManifest(SchemaBase):
    images: List[ManifestImage]

    @field_validator("images")
    @classmethod
    def check_unique(cls, images: List[ManifestImage]) -> List[ManifestImage]:
        seen = set()
        for image in images:
            if image.id in seen:
                raise ValueError(f"duplicate image id {image.id}")
            seen.add(image.id)
        return images

    def ids(self, split: Split | None = None) -> List[str]:
        return [i.id for i in self.images if split is None or i.split == split]

    def by_id(self) -> dict[str, ManifestImage]:
        return {i.id: i for i in self.images}
