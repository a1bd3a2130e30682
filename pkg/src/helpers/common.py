import csv
import hashlib
import json
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

import numpy as np


def dumps_stable(data: Any) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def make_hash(data: Any) -> str:
    if not isinstance(data, str):
        data = dumps_stable(data)
    return hashlib.md5(data.strip().encode("utf-8")).hexdigest()


def write_json(path: str | Path, data: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")


def write_jsonl(path: str | Path, rows: Iterable[Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(dumps_stable(row) + "\n")


def versions() -> dict[str, str]:
    try:
        package = metadata.version("caselab")
    except metadata.PackageNotFoundError:
        package = "unknown"
    return {
        "caselab": package,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def parse_int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def write_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
