import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, List, Sequence

import numpy as np
from pydantic import ValidationError

from src.adapters.storage.images import load_image
from src.errors import ContractError, IngestionError, UnknownIdError
from src.helpers.prng import SplitMix64
from src.schemas.common import Split
from src.schemas.triplet import CorpusManifest, Triplet


def _first_error(e: ValidationError) -> tuple[str | None, str]:
    error = e.errors()[0]
    location = ".".join(str(part) for part in error.get("loc", ())) or None
    return location, error.get("msg", str(e))


def parse_triplets(lines: Sequence[str]) -> List[Triplet]:
    triplets, seen = [], set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestionError(f"invalid JSON: {e.msg}", line=number) from e
        try:
            triplet = Triplet(**record)
        except ValidationError as e:
            location, reason = _first_error(e)
            raise IngestionError(reason, line=number, field=location) from e
        except TypeError as e:
            raise IngestionError("record must be a JSON object", line=number) from e
        if triplet.qid in seen:
            raise IngestionError(f"duplicate qid {triplet.qid}", line=number, field="qid")
        seen.add(triplet.qid)
        triplets.append(triplet)
    return triplets


def load_triplets(path: str | Path) -> List[Triplet]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise IngestionError(f"cannot read triplets {path}: {e.strerror or e}") from e
    return parse_triplets(lines)


class ImageStore(Mapping):
    """Lazily loaded, cached corpus images keyed by id (float32 H x W x C)."""

    def __init__(self, manifest: CorpusManifest, root: Path):
        self.manifest = manifest
        self.root = root
        self._entries = manifest.by_id()
        self._cache: dict[str, np.ndarray] = {}

    def __getitem__(self, image_id: str) -> np.ndarray:
        if image_id not in self._cache:
            entry = self._entries.get(image_id)
            if entry is None:
                raise UnknownIdError(f"image {image_id} not in manifest")
            self._cache[image_id] = load_image(self.root / entry.path, entry.format)
        return self._cache[image_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)


@dataclass
class Corpus:
    manifest: CorpusManifest
    images: Mapping

    def ids(self, split: Split | None = None) -> List[str]:
        return self.manifest.ids(split)


def load_corpus(manifest_path: str | Path) -> Corpus:
    manifest_path = Path(manifest_path)
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest = CorpusManifest(**raw)
    except OSError as e:
        raise IngestionError(
            f"cannot read manifest {manifest_path}: {e.strerror or e}"
        ) from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"invalid manifest JSON: {e.msg}", line=e.lineno) from e
    except ValidationError as e:
        location, reason = _first_error(e)
        raise IngestionError(reason, field=location) from e
    except TypeError as e:
        raise IngestionError("manifest must hold a JSON object") from e
    root = manifest_path.parent
    for position, image in enumerate(manifest.images):
        if not (root / image.path).is_file():
            raise IngestionError(
                f"image file {image.path} for {image.id} does not exist",
                line=position + 1,
                field="path",
            )
    return Corpus(manifest, ImageStore(manifest, root))


def check_images_present(triplets: Sequence[Triplet], images: Mapping) -> None:
    missing = sorted(
        {
            image_id
            for t in triplets
            for image_id in (t.query_image, t.target_image)
            if image_id not in images
        }
    )
    if missing:
        raise IngestionError(f"images missing from corpus: {', '.join(missing[:20])}")


@dataclass
class SplitResult:
    train_images: List[str]
    val_images: List[str]
    train: List[Triplet] = field(default_factory=list)
    val: List[Triplet] = field(default_factory=list)
    dropped: List[Triplet] = field(default_factory=list)


def split(
    triplets: Sequence[Triplet],
    image_ids: Sequence[str],
    val_fraction: float = 0.08,
    seed: int = 0,
) -> SplitResult:
    """Split by image id.

    Triplets whose two images land in different splits are dropped.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ContractError(f"val_fraction must be in (0, 1), got {val_fraction}")
    order = list(image_ids)
    SplitMix64(seed).shuffle(order)
    n_val = round(len(order) * val_fraction)
    val_set = set(order[:n_val])
    result = SplitResult(
        train_images=[i for i in image_ids if i not in val_set],
        val_images=[i for i in image_ids if i in val_set],
    )
    for t in triplets:
        query_val, target_val = t.query_image in val_set, t.target_image in val_set
        if query_val and target_val:
            result.val.append(t)
        elif not query_val and not target_val:
            result.train.append(t)
        else:
            result.dropped.append(t)
    return result


def _convert(records, build: Callable[[int, dict], Triplet]) -> List[Triplet]:
    """Apply `build` per record; failures name the 1-based record number."""
    if not isinstance(records, list):
        raise IngestionError("annotation file must hold a JSON array of records")
    triplets = []
    for number, record in enumerate(records, start=1):
        if not isinstance(record, dict):
            raise IngestionError("record must be a JSON object", line=number)
        try:
            triplets.append(build(number - 1, record))
        except KeyError as e:
            raise IngestionError("missing field", line=number, field=e.args[0]) from e
        except ValidationError as e:
            location, reason = _first_error(e)
            raise IngestionError(reason, line=number, field=location) from e
        except (TypeError, AttributeError) as e:
            raise IngestionError(f"malformed record: {e}", line=number) from e
    return triplets


def convert_cirr(records: Sequence[dict]) -> List[Triplet]:
    """CIRR captions layout: pairid, reference, target_hard, caption, img_set.members."""

    def build(_: int, record: dict) -> Triplet:
        members = (record.get("img_set") or {}).get("members")
        subset = None
        if members and len(members) == 6 and record["target_hard"] in members:
            subset = list(members)
        return Triplet(
            qid=str(record["pairid"]),
            query_image=record["reference"],
            query_text=record["caption"],
            target_image=record["target_hard"],
            subset=subset,
        )

    return _convert(records, build)


def convert_fashioniq(records: Sequence[dict], category: str) -> List[Triplet]:
    """FashionIQ layout: candidate, target, captions (joined with ' and ')."""

    def build(i: int, record: dict) -> Triplet:
        return Triplet(
            qid=f"{category}-{i}",
            query_image=record["candidate"],
            query_text=" and ".join(c.strip() for c in record["captions"]),
            target_image=record["target"],
            category=category,
        )

    return _convert(records, build)
