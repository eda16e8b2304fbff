import logging
from pathlib import Path
from typing import Any

import orjson
from rich.logging import RichHandler

_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def setup_logging(verbosity: int = 1) -> None:
    logging.basicConfig(
        level=_LEVELS.get(verbosity, logging.DEBUG),
        format="%(message)s",
        datefmt="%H:%M:%S",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


class RunLog:
    """Append-only JSON-lines record of a run."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, event: str, **fields: Any) -> None:
        record = {"event": event, **fields}
        with self.path.open("ab") as handle:
            handle.write(orjson.dumps(record, option=orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS))
            handle.write(b"\n")

    def read(self) -> list:
        if not self.path.exists():
            return []
        return [orjson.loads(line) for line in self.path.read_bytes().splitlines() if line.strip()]
