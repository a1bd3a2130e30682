"""Deterministic synthetic CoIR data: 2x2 grids of coloured shapes.

A query scene is rendered, a templated transition is applied, and the result
is the target scene. In compositional mode every text is shared by groups of
G queries with pairwise distinct targets, so the text alone cannot identify
the target. In redundant mode the text spells out the whole target scene.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.adapters.storage.images import save_image
from src.errors import GenerationError
from src.helpers.common import write_json, write_jsonl
from src.helpers.prng import SplitMix64
from src.schemas.common import ColorName, ImageFormat, RedundancyMode, ShapeName, Split
from src.schemas.toy_config import ToyConfig
from src.schemas.triplet import CorpusManifest, ManifestImage, Triplet

Cell = Optional[Tuple[ShapeName, ColorName]]
Scene = Tuple[Cell, ...]

RGB = {
    ColorName.RED: (255, 0, 0),
    ColorName.GREEN: (0, 255, 0),
    ColorName.BLUE: (0, 0, 255),
    ColorName.YELLOW: (255, 255, 0),
    ColorName.MAGENTA: (255, 0, 255),
    ColorName.CYAN: (0, 255, 255),
}

CELL_NAMES = ["top left", "top right", "bottom left", "bottom right"]

MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class Transition:
    kind: str  # color | replace | remove | add
    shape: ShapeName
    arg: Optional[str] = None  # new color or new shape

    @property
    def text(self) -> str:
        match self.kind:
            case "color":
                return f"change the color of the {self.shape} to {self.arg}"
            case "replace":
                return f"replace the {self.shape} with a {self.arg}"
            case "remove":
                return f"remove the {self.shape}"
            case "add":
                return f"add a {self.shape} in the empty cell"
        raise GenerationError(f"unknown transition kind {self.kind}")


def shape_mask(shape: ShapeName, cell: int) -> np.ndarray:
    """Boolean cell x cell mask, integer geometry only."""
    margin = max(cell // 8, 1)
    y, x = np.mgrid[0:cell, 0:cell]
    inside = (y >= margin) & (y < cell - margin) & (x >= margin) & (x < cell - margin)
    # doubled coordinates keep the centre on the integer grid
    dy, dx = 2 * y - (cell - 1), 2 * x - (cell - 1)
    match shape:
        case ShapeName.SQUARE:
            return inside
        case ShapeName.DISC:
            return dy * dy + dx * dx <= (cell - 2 * margin) ** 2
        case ShapeName.CROSS:
            bar = cell // 4
            return inside & ((np.abs(dy) <= bar) | (np.abs(dx) <= bar))
        case ShapeName.FRAME:
            t = max(cell // 8, 1)
            inner = (
                (y >= margin + t)
                & (y < cell - margin - t)
                & (x >= margin + t)
                & (x < cell - margin - t)
            )
            return inside & ~inner
    raise GenerationError(f"unknown shape {shape}")


def render(scene: Scene, config: ToyConfig) -> np.ndarray:
    cell = config.cell_size
    pixels = np.zeros((config.image_size, config.image_size, 3), dtype=np.uint8)
    for index, content in enumerate(scene):
        if content is None:
            continue
        shape, color = content
        row, col = divmod(index, config.grid)
        block = pixels[row * cell : (row + 1) * cell, col * cell : (col + 1) * cell]
        block[shape_mask(shape, cell)] = RGB[color]
    return pixels


def describe(scene: Scene) -> str:
    parts = []
    for name, content in zip(CELL_NAMES, scene):
        if content is None:
            parts.append(f"nothing at {name}")
        else:
            parts.append(f"a {content[1]} {content[0]} at {name}")
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def apply(transition: Transition, scene: Scene, config: ToyConfig) -> Scene:
    cells = list(scene)
    if transition.kind == "add":
        empty = [i for i, c in enumerate(cells) if c is None]
        if len(empty) != 1:
            raise GenerationError("add needs exactly one empty cell")
        cells[empty[0]] = (transition.shape, config.colors[0])
        return tuple(cells)
    holders = [
        i for i, c in enumerate(cells) if c is not None and c[0] == transition.shape
    ]
    if len(holders) != 1:
        raise GenerationError(f"{transition.text!r} needs exactly one {transition.shape}")
    i = holders[0]
    shape, color = cells[i]
    match transition.kind:
        case "color":
            if color == transition.arg:
                raise GenerationError("color change to the same color")
            cells[i] = (shape, ColorName(transition.arg))
        case "replace":
            cells[i] = (ShapeName(transition.arg), color)
        case "remove":
            cells[i] = None
    return tuple(cells)


def all_transitions(config: ToyConfig) -> List[Transition]:
    result = []
    for shape in config.shapes:
        result += [Transition("color", shape, str(c)) for c in config.colors]
        others = [s for s in config.shapes if s != shape]
        result += [Transition("replace", shape, str(s)) for s in others]
        result.append(Transition("remove", shape))
        result.append(Transition("add", shape))
    return result


def _random_cell(rng: SplitMix64, config: ToyConfig, exclude: ShapeName | None) -> Cell:
    shapes = [s for s in config.shapes if s != exclude]
    return (rng.choice(shapes), rng.choice(config.colors))


def sample_query(rng: SplitMix64, transition: Transition, config: ToyConfig) -> Scene:
    """A random scene the transition applies to."""
    n = config.grid * config.grid
    anchor = rng.below(n)
    cells: List[Cell] = [None] * n
    if transition.kind == "add":
        for i in range(n):
            if i != anchor:
                cells[i] = _random_cell(rng, config, None)
        return tuple(cells)
    colors = list(config.colors)
    if transition.kind == "color":
        colors = [c for c in colors if c != transition.arg]
    cells[anchor] = (transition.shape, rng.choice(colors))
    for i in range(n):
        if i != anchor and rng.below(4):
            cells[i] = _random_cell(rng, config, transition.shape)
    return tuple(cells)


def sample_scene(rng: SplitMix64, config: ToyConfig) -> Scene:
    n = config.grid * config.grid
    return tuple(
        _random_cell(rng, config, None) if rng.below(5) else None for _ in range(n)
    )


@dataclass
class ToyDataset:
    config: ToyConfig
    triplets: List[Triplet] = field(default_factory=list)
    manifest: CorpusManifest = field(default_factory=lambda: CorpusManifest(images=[]))
    pixels: Dict[str, np.ndarray] = field(default_factory=dict)  # uint8 H x W x 3
    scenes: Dict[str, Scene] = field(default_factory=dict)

    def images(self) -> Dict[str, np.ndarray]:
        return {k: v.astype(np.float32) / 255.0 for k, v in self.pixels.items()}

    def split_triplets(self, split: Split) -> List[Triplet]:
        splits = {i.id: i.split for i in self.manifest.images}
        return [t for t in self.triplets if splits[t.query_image] == split]


class _Builder:
    def __init__(self, config: ToyConfig):
        self.config = config
        self.dataset = ToyDataset(config)
        self.ids: Dict[Tuple[Split, Scene], str] = {}
        self.entries: List[ManifestImage] = []

    def image_id(self, scene: Scene, split: Split) -> str:
        key = (split, scene)
        if key not in self.ids:
            image_id = f"img{len(self.ids):06d}"
            self.ids[key] = image_id
            self.dataset.pixels[image_id] = render(scene, self.config)
            self.dataset.scenes[image_id] = scene
            self.entries.append(
                ManifestImage(
                    id=image_id,
                    path=f"images/{image_id}.ppm",
                    format=ImageFormat.PPM,
                    split=split,
                    caption=describe(scene),
                )
            )
        return self.ids[key]

    def add_triplet(
        self, query: Scene, target: Scene, text: str, kind: str, split: Split
    ):
        qid = f"q{len(self.dataset.triplets):06d}"
        self.dataset.triplets.append(
            Triplet(
                qid=qid,
                query_image=self.image_id(query, split),
                query_text=text,
                target_image=self.image_id(target, split),
                category=kind,
            )
        )

    def split_for_group(self, rng: SplitMix64) -> Split:
        return Split.VAL if rng.uniform() < self.config.val_fraction else Split.TRAIN


def _compositional(builder: _Builder, rng: SplitMix64):
    config = builder.config
    transitions = all_transitions(config)
    targets_by_text: Dict[str, set] = {}
    pool: List[Transition] = []
    remaining = config.triplets
    while remaining > 0:
        if not pool:
            pool = list(transitions)
            rng.shuffle(pool)
        transition = pool.pop()
        split = builder.split_for_group(rng)
        seen_targets = targets_by_text.setdefault(transition.text, set())
        group = []
        for _ in range(MAX_ATTEMPTS):
            query = sample_query(rng, transition, config)
            target = apply(transition, query, config)
            if target in seen_targets or any(query == q for q, _ in group):
                continue
            group.append((query, target))
            seen_targets.add(target)
            if len(group) == config.group_size:
                break
        if len(group) < config.group_size:
            raise GenerationError(
                f"could not find {config.group_size} distinct scenes "
                f"for {transition.text!r}"
            )
        for query, target in group:
            builder.add_triplet(query, target, transition.text, transition.kind, split)
        remaining -= len(group)


def _redundant(builder: _Builder, rng: SplitMix64):
    config = builder.config
    transitions = all_transitions(config)
    for _ in range(config.triplets):
        transition = rng.choice(transitions)
        query = sample_query(rng, transition, config)
        target = apply(transition, query, config)
        split = builder.split_for_group(rng)
        builder.add_triplet(query, target, describe(target), transition.kind, split)


def _distractors(builder: _Builder, rng: SplitMix64):
    config = builder.config
    want_val = round(config.corpus * config.val_fraction)
    want = {Split.VAL: want_val, Split.TRAIN: config.corpus - want_val}
    for split in (Split.TRAIN, Split.VAL):
        have = sum(1 for s, _ in builder.ids if s == split)
        attempts = 0
        while have < want[split]:
            attempts += 1
            if attempts > MAX_ATTEMPTS * max(want[split], 1):
                raise GenerationError("cannot draw enough distinct distractor scenes")
            scene = sample_scene(rng, config)
            if (split, scene) in builder.ids:
                continue
            builder.image_id(scene, split)
            have += 1


def generate(config: ToyConfig) -> ToyDataset:
    rng = SplitMix64(config.seed)
    builder = _Builder(config)
    if config.mode == RedundancyMode.COMPOSITIONAL:
        _compositional(builder, rng)
    else:
        _redundant(builder, rng)
    _distractors(builder, rng)
    builder.dataset.manifest = CorpusManifest(images=builder.entries)
    return builder.dataset


def write_dataset(dataset: ToyDataset, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    write_jsonl(out_dir / "triplets.jsonl", (t.to_json_dict() for t in dataset.triplets))
    write_json(out_dir / "manifest.json", dataset.manifest.model_dump(mode="json"))
    for entry in dataset.manifest.images:
        save_image(out_dir / entry.path, dataset.pixels[entry.id], entry.format)


def gen_toy(config: ToyConfig, out_dir: str | Path) -> ToyDataset:
    dataset = generate(config)
    write_dataset(dataset, out_dir)
    return dataset
