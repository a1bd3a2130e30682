import logging
import os

from sentry_sdk import init
from sentry_sdk.integrations.logging import LoggingIntegration

from src.adapters.logger.default import DefaultLogger


class SentryLogger(DefaultLogger):
    """DefaultLogger whose warnings and errors also become Sentry events."""

    def __init__(self, level: int | str | None = None):
        super().__init__(level)

        init(
            send_default_pii=False,
            traces_sample_rate=0.0,
            enable_logs=False,
            environment=os.environ.get("ENV_NAME", "dev"),
            dsn=os.environ.get("SENTRY_DSN"),
            integrations=[
                LoggingIntegration(level=logging.WARNING, event_level=logging.WARNING),
            ],
        )


def make_logger(level: int | str | None = None) -> DefaultLogger:
    if os.environ.get("SENTRY_DSN"):
        return SentryLogger(level)
    return DefaultLogger(level)
