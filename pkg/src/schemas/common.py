from enum import StrEnum


class EnvType(StrEnum):
    PROD = "prod"
    STAGE = "stage"
    DEV = "dev"
    TEST = "test"
    LOCAL = "local"


class QueryMode(StrEnum):
    STANDARD = "standard"
    REVERSE = "reverse"  # image is the target, [REV] after [CLS]
    TEXT_ONLY = "text_only"  # image zeroed
    IMAGE_ONLY = "image_only"  # text replaced by [CLS][SEP]


class LossVariant(StrEnum):
    SURROGATE = "surrogate"
    CONTRASTIVE = "contrastive"


class Provenance(StrEnum):
    FORWARD = "forward"
    REVERSE = "reverse"


class Split(StrEnum):
    TRAIN = "train"
    VAL = "val"


class ImageFormat(StrEnum):
    PPM = "ppm"
    F32T = "f32t"


class Modality(StrEnum):
    TEXT_ONLY = "text-only"
    IMAGE_ONLY = "image-only"
    REFERENCE = "reference"


class RedundancyMode(StrEnum):
    COMPOSITIONAL = "compositional"
    REDUNDANT = "redundant"


class ShapeName(StrEnum):
    SQUARE = "square"
    DISC = "disc"
    CROSS = "cross"
    FRAME = "frame"


class ColorName(StrEnum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    YELLOW = "yellow"
    MAGENTA = "magenta"
    CYAN = "cyan"


class FilterRule(StrEnum):
    TOO_SHORT = "too_short"
    TOO_LONG = "too_long"
    FORBIDDEN_SUBSTRING = "forbidden_substring"
    SAME_IMAGE = "same_image"
