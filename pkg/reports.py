"""Report record shared by every verifier."""

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckReport:
    """Outcome of a property check. Failures are entries, never exceptions."""

    name: str
    ok: bool = True
    checked: int = 0
    values: dict[str, Any] = field(default_factory=dict)
    counterexamples: list[dict[str, Any]] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def fail(self, **details: Any) -> None:
        self.ok = False
        self.counterexamples.append(details)

    def notice(self, message: str) -> None:
        self.notices.append(message)

    def merge(self, other: "CheckReport", prefix: str = "") -> None:
        """Fold `other` into this report, prefixing its values and notices."""
        label = prefix or other.name
        self.checked += other.checked
        if not other.ok:
            self.ok = False
        for item in other.counterexamples:
            self.counterexamples.append({"check": label, **item})
        for key, value in other.values.items():
            self.values[f"{label}.{key}"] = value
        self.notices.extend(f"{label}: {n}" for n in other.notices)
