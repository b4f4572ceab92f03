"""The environment a protocol state machine talks to.

Replicas and clients never touch the network or the clock directly. They call
``env.send`` and ``env.set_timer``, and the simulator (or a test) decides what
happens next. :class:`RecordingEnv` is a stand-alone environment that only
records what a node emitted, which is what unit tests use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol


class Env(Protocol):
    @property
    def now(self) -> int: ...

    def send(self, dst: Any, msg: Any) -> None: ...

    def set_timer(self, name: str, delay: int) -> None: ...

    def cancel_timer(self, name: str) -> None: ...

    def log(self, event: str, **fields: Any) -> None: ...


@dataclass
class RecordingEnv:
    now: int = 0
    sent: list[tuple[Any, Any]] = field(default_factory=list)
    timers: dict[str, int] = field(default_factory=dict)
    events: list[tuple[str, dict]] = field(default_factory=list)

    def send(self, dst: Any, msg: Any) -> None:
        self.sent.append((dst, msg))

    def set_timer(self, name: str, delay: int) -> None:
        self.timers[name] = self.now + delay

    def cancel_timer(self, name: str) -> None:
        self.timers.pop(name, None)

    def log(self, event: str, **fields: Any) -> None:
        self.events.append((event, fields))

    def take(self) -> list[tuple[Any, Any]]:
        """Return and forget everything sent so far."""
        out, self.sent = self.sent, []
        return out

    def of_type(self, cls: type) -> list[tuple[Any, Any]]:
        return [(dst, m) for dst, m in self.sent if isinstance(m, cls)]

    def logged(self, event: str) -> list[dict]:
        return [f for e, f in self.events if e == event]
