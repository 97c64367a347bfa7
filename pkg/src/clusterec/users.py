"""User profiles and their JSONL persistence.

A profile keeps three views of one user: keyword preferences collected at
registration, an append-only (cluster, item) interaction sequence, and the
set of viewed item ids that must never be recommended again. History keeps
the cluster id recorded at interaction time even if that cluster is later
merged away; the item id stays authoritative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import CatalogParseError, ValidationError


@dataclass
class UserProfile:
    user_id: str
    prefs: list[str] = field(default_factory=list)
    history: list[tuple[int, object]] = field(default_factory=list)
    viewed: set = field(default_factory=set)

    def __post_init__(self):
        self.history = [(int(c), i) for c, i in self.history]
        self.viewed = set(self.viewed)
        missing = [i for _, i in self.history if i not in self.viewed]
        if missing:
            raise ValidationError(
                f"user {self.user_id!r}: history items missing from viewed: "
                f"{missing[:5]}")

    @property
    def history_length(self) -> int:
        return len(self.history)

    def to_record(self) -> dict:
        return {
            "user_id": self.user_id,
            "prefs": list(self.prefs),
            "history": [[c, i] for c, i in self.history],
            "viewed": sorted(self.viewed, key=str),
        }

    @classmethod
    def from_record(cls, record: dict) -> "UserProfile":
        return cls(
            user_id=record["user_id"],
            prefs=list(record.get("prefs", [])),
            history=[(c, i) for c, i in record.get("history", [])],
            viewed=set(record.get("viewed", [])),
        )


def load_users(path) -> dict[str, UserProfile]:
    """Load a JSONL user store keyed by user id."""
    users: dict[str, UserProfile] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
                profile = UserProfile.from_record(record)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CatalogParseError(f"bad user record: {exc}", line_no) from exc
            if profile.user_id in users:
                raise CatalogParseError(
                    f"duplicate user id {profile.user_id!r}", line_no)
            users[profile.user_id] = profile
    return users


def save_users(users: dict[str, UserProfile], path) -> None:
    """Write profiles as JSONL; round-trips exactly through load_users."""
    with open(path, "w", encoding="utf-8") as fh:
        for user_id in sorted(users, key=str):
            fh.write(json.dumps(users[user_id].to_record(), ensure_ascii=False)
                     + "\n")
