from pydantic import BaseModel, ConfigDict


class SchemaBase(BaseModel):
    model_config = ConfigDict(strict=False)


class ConfigBase(BaseModel):
    """Base for configuration records: unknown keys are an error, never ignored."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)
