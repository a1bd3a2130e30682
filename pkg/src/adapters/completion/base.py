from abc import ABC, abstractmethod


class BaseCompletionClient(ABC):
    """Text-completion backend used to rephrase VQA pairs.

    `complete` returns the raw completion text. Transient failures raise
    CompletionTransportError so the caller can retry; anything else raises
    CompletionClientError.
    """

    @abstractmethod
    def __init__(self, logger):
        self.logger = logger

    @abstractmethod
    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str:
        pass
