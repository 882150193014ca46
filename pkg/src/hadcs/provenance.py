"""Config-hash header lines carried by every CLI output file."""

import hashlib
import json

PREFIX = "# config-hash: "


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def header_line(h: str) -> str:
    return f"{PREFIX}{h}\n"


def strip_header(lines: list[str]) -> list[str]:
    """Drop leading config-hash lines so loaders see the native format."""
    i = 0
    while i < len(lines) and lines[i].startswith(PREFIX):
        i += 1
    return lines[i:]


def read_hash(path) -> str | None:
    with open(path) as fh:
        first = fh.readline()
    return first[len(PREFIX) :].strip() if first.startswith(PREFIX) else None
