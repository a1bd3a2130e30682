from typing import Dict, List, Tuple

from src.adapters.completion.base import BaseCompletionClient
from src.errors import CompletionTransportError

DEFAULT_TABLE: Dict[Tuple[str, str], str] = {
    ("Is the sky cloudy?", "yes"): "Make the sky cloudy",
    ("Are there any humans visible in the photo?", "yes"): "Add some people to the photo",
    ("Is there a square on the doors?", "yes"): "Find a door with a square on top of it",
    ("What color is the man's tie?", "blue"): (
        "Change the color of the tie of the man to be blue"
    ),
}


def pending_pair(prompt: str) -> str:
    """The `Q A` text of the prompt's trailing incomplete line."""
    last = prompt.rstrip("\n").rsplit("\n", 1)[-1]
    start, end = last.find('"'), last.rfind('"')
    return last[start + 1 : end] if 0 <= start < end else last


def fallback_rewrite(text: str) -> str:
    question, _, answer = text.rpartition("? ")
    if not question:
        return f"Change the image to match {text}"
    return f"Change the image so the answer to {question.lower()} is {answer}"


class MockCompletionClient(BaseCompletionClient):
    """Deterministic completions from a lookup table, with a template fallback.

    `fail_times` makes the first calls raise a transport error; table entries
    mapped to "" produce an empty completion.
    """

    def __init__(
        self,
        logger,
        table: Dict[Tuple[str, str], str] | None = None,
        fail_times: int = 0,
        quote: bool = False,
    ):
        super().__init__(logger)
        self.table = {f"{q} {a}": s for (q, a), s in (table or DEFAULT_TABLE).items()}
        self.fail_times = fail_times
        self.quote = quote
        self.calls: List[str] = []

    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str:
        self.calls.append(prompt)
        if self.fail_times > 0:
            self.fail_times -= 1
            raise CompletionTransportError("mock transport failure")
        key = pending_pair(prompt)
        text = self.table[key] if key in self.table else fallback_rewrite(key)
        return f' "{text}"\n' if self.quote and text else text
