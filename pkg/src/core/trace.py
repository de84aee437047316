import json
import logging
from typing import Any, Dict, Iterator, List, Optional

logger = logging.getLogger(__name__)


class TraceLog:
    """
    Append-only record of everything observable in a run.

    Entries are plain dicts whose first two keys are ``at_ms`` and ``kind``;
    the remaining keys keep insertion order so serialisation is byte-stable.
    """

    def __init__(self, clock: Optional[Any] = None) -> None:
        self.clock = clock
        self._entries: List[Dict[str, Any]] = []

    def record(self, kind: str, **fields: Any) -> Dict[str, Any]:
        entry: Dict[str, Any] = {"at_ms": self.clock.now() if self.clock else 0, "kind": kind}
        entry.update(fields)
        self._entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self._entries)

    def of_kind(self, *kinds: str) -> List[Dict[str, Any]]:
        return [e for e in self._entries if e["kind"] in kinds]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self._entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "TraceLog":
        """Rebuild a trace from its JSON Lines form."""
        trace = cls()
        trace._entries = [json.loads(line) for line in text.splitlines() if line.strip()]
        return trace


class NullTrace(TraceLog):
    """Trace sink that keeps nothing; used when a component runs outside a harness"""

    def record(self, kind: str, **fields: Any) -> Dict[str, Any]:
        return {"kind": kind, **fields}
