"""Impression logs: JSON-lines reading/writing and chronological splits."""

import json
from dataclasses import dataclass, field
from datetime import datetime

from .errors import ParseError


@dataclass
class Impression:
    impression_id: str
    user_id: str
    history: list
    candidates: list
    labels: list
    timestamp: object = None
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def positives(self):
        return [c for c, y in zip(self.candidates, self.labels) if y]

    @property
    def negatives(self):
        return [c for c, y in zip(self.candidates, self.labels) if not y]

    def to_json(self):
        return {
            "impression_id": self.impression_id,
            "user_id": self.user_id,
            "history": list(self.history),
            "candidates": [{"news_id": c, "clicked": int(y)} for c, y in zip(self.candidates, self.labels)],
            "timestamp": self.timestamp,
        }


def parse_impression(obj, lineno=None, path=None):
    if not isinstance(obj, dict):
        raise ParseError("impression must be a JSON object", lineno, path)
    try:
        cands = obj["candidates"]
        candidates = [str(c["news_id"]) for c in cands]
        labels = [int(c["clicked"]) for c in cands]
        history = [str(h) for h in obj.get("history") or []]
        imp_id = str(obj["impression_id"])
        user_id = str(obj["user_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed impression: {exc!r}", lineno, path) from None
    if any(y not in (0, 1) for y in labels):
        raise ParseError("clicked must be 0 or 1", lineno, path)
    return Impression(imp_id, user_id, history, candidates, labels, obj.get("timestamp"))


def read_behaviors(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno, path) from None
            out.append(parse_impression(obj, lineno, path))
    return out


def write_behaviors(impressions, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for imp in impressions:
            fh.write(json.dumps(imp.to_json(), sort_keys=True) + "\n")


def _time_key(ts):
    if isinstance(ts, (int, float)):
        return float(ts)
    if isinstance(ts, str):
        try:
            return datetime.fromisoformat(ts).timestamp()
        except ValueError:
            return float("inf")
    return float("inf")


def split_by_time(impressions, test_fraction):
    """Chronological split: the latest ``test_fraction`` of impressions form the test set.

    Ties and missing timestamps keep file order.
    """
    order = sorted(range(len(impressions)), key=lambda i: (_time_key(impressions[i].timestamp), i))
    n_test = int(round(len(impressions) * test_fraction))
    cut = len(order) - n_test
    train = [impressions[i] for i in sorted(order[:cut])]
    test = [impressions[i] for i in sorted(order[cut:])]
    return train, test
