import re
from typing import Iterable, List, Sequence

from src.constants import (
    CLS_TOKEN,
    PAD_TOKEN,
    REV_TOKEN,
    SEP_TOKEN,
    SPECIAL_TOKENS,
    UNK_TOKEN,
)
from src.errors import ContractError

_WORD = re.compile(r"[^\W_]+")


def split_words(text: str) -> List[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _WORD.findall(text.lower())


class Tokenizer:
    """Whitespace+punctuation tokenizer over a corpus-built vocabulary.

    Special tokens always occupy ids 0..4 in the order of SPECIAL_TOKENS.
    """

    def __init__(self, vocab: Sequence[str], max_text_len: int = 32):
        if list(vocab[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ContractError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(vocab)) != len(vocab):
            raise ContractError("vocabulary entries must be unique")
        if max_text_len < 3:
            raise ContractError("max_text_len must leave room for [CLS] [REV] [SEP]")
        self.vocab = list(vocab)
        self.max_text_len = max_text_len
        self.token_to_id = {token: i for i, token in enumerate(self.vocab)}
        self.pad_id = self.token_to_id[PAD_TOKEN]
        self.cls_id = self.token_to_id[CLS_TOKEN]
        self.sep_id = self.token_to_id[SEP_TOKEN]
        self.rev_id = self.token_to_id[REV_TOKEN]
        self.unk_id = self.token_to_id[UNK_TOKEN]

    @classmethod
    def from_texts(cls, texts: Iterable[str], max_text_len: int = 32) -> "Tokenizer":
        words = sorted({w for text in texts for w in split_words(text)})
        words = [w for w in words if w not in SPECIAL_TOKENS]
        return cls(SPECIAL_TOKENS + words, max_text_len=max_text_len)

    def __len__(self):
        return len(self.vocab)

    @property
    def special_ids(self) -> set[int]:
        return {self.token_to_id[t] for t in SPECIAL_TOKENS}

    def tokenize(self, text: str, reverse: bool = False) -> List[int]:
        """[CLS] (+[REV]) words [SEP], truncated to max_text_len."""
        head = [self.cls_id, self.rev_id] if reverse else [self.cls_id]
        room = self.max_text_len - len(head) - 1
        body = [self.token_to_id.get(w, self.unk_id) for w in split_words(text)]
        return head + body[:room] + [self.sep_id]

    def decode(self, ids: Sequence[int]) -> str:
        """Words only; [UNK] is kept, the framing and [REV] markers are dropped."""
        framing = {self.pad_id, self.cls_id, self.sep_id, self.rev_id}
        return " ".join(self.vocab[i] for i in ids if i not in framing)

    def convert_ids_to_tokens(self, ids: Sequence[int]) -> List[str]:
        return [self.vocab[i] for i in ids]
