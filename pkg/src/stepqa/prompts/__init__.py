"""Versioned prompt texts for the chat-backed backends.

Each prompt lives in its own file named <name>.<version>.txt. Bumping a
prompt means adding a new file and updating VERSIONS; traces record the
version map so any run can be tied back to the exact wording it used.
"""

from __future__ import annotations

from importlib import resources

VERSIONS = {
    "extract_pattern": "v1",
    "classify_attribute": "v1",
    "simplify_question": "v1",
    "fallback_plan": "v1",
    "judge": "v1",
}


def load(name: str) -> tuple[str, str]:
    """Prompt text and version for a prompt name."""
    if name not in VERSIONS:
        raise KeyError(f"unknown prompt {name!r}")
    version = VERSIONS[name]
    text = resources.files(__package__).joinpath(f"{name}.{version}.txt").read_text()
    return text, version
