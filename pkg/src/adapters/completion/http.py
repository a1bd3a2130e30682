import os
from http import HTTPStatus

import requests

from src import constants as c
from src.adapters.completion.base import BaseCompletionClient
from src.errors import CompletionClientError, CompletionTransportError

RETRYABLE_STATUSES = {HTTPStatus.TOO_MANY_REQUESTS} | {
    s for s in HTTPStatus if s.value >= 500
}


class HttpCompletionClient(BaseCompletionClient):
    """POSTs {prompt, max_tokens, temperature} and reads {text} from the JSON reply."""

    def __init__(
        self,
        logger,
        endpoint: str | None = None,
        key: str | None = None,
        timeout: float = c.COMPLETION_TIMEOUT,
    ):
        super().__init__(logger)
        self.endpoint = endpoint or os.environ.get(c.COMPLETION_ENDPOINT_VAR)
        self.key = key or os.environ.get(c.COMPLETION_KEY_VAR)
        self.timeout = timeout
        if not self.endpoint:
            raise CompletionClientError(f"{c.COMPLETION_ENDPOINT_VAR} is not set")

    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        try:
            payload = {
                "prompt": prompt,
                "max_tokens": max_tokens,
                "temperature": temperature,
            }
            resp = requests.post(
                self.endpoint,
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise CompletionTransportError(f"POST {self.endpoint} failed: {e}") from e

        if resp.status_code in RETRYABLE_STATUSES:
            raise CompletionTransportError(
                f"POST {self.endpoint} response_code={resp.status_code}"
            )
        if resp.status_code != HTTPStatus.OK:
            raise CompletionClientError(
                f"POST {self.endpoint} response_code={resp.status_code}"
            )
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError) as e:
            raise CompletionClientError(f"malformed completion response: {e}") from e
        if not isinstance(text, str):
            raise CompletionClientError("completion text is not a string")
        return text
