from src.schemas.roaming import ComplementaryPair, VqaPair
from src.schemas.triplet import Triplet


def make_triplet(
    i: int = 0,
    target: str = "img000001",
    category: str | None = None,
    subset: list[str] | None = None,
    **fields,
) -> Triplet:
    data = {
        "qid": f"q{i:06d}",
        "query_image": f"query{i}",
        "query_text": "make the sky cloudy",
        "target_image": target,
        "category": category,
        "subset": subset,
    }
    return Triplet(**(data | fields))


def make_pair(
    pair_id: str = "p000000",
    question: str = "Is the sky cloudy?",
    answers: tuple[str, str] = ("no", "yes"),
    images: tuple[str, str] = ("a1", "b1"),
    captions: tuple[str | None, str | None] = (None, None),
) -> ComplementaryPair:
    return ComplementaryPair(
        id=pair_id,
        original=VqaPair(
            image_id=images[0], question=question, answer=answers[0], caption=captions[0]
        ),
        complement=VqaPair(
            image_id=images[1], question=question, answer=answers[1], caption=captions[1]
        ),
    )
