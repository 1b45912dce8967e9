"""Small text helpers shared by the prompt and log code."""

from __future__ import annotations


def truncate(text: str, budget: int, tail: bool = False) -> str:
    """Cut ``text`` to at most ``budget`` characters and mark the cut.

    ``tail=True`` keeps the end of the text instead of the start.
    """
    if len(text) <= budget:
        return text
    if budget <= 0:
        return ""
    # reserve room for the widest possible count so the result never overflows
    width = len(f"[... truncated {len(text)} characters ...]") + 1
    keep = budget - width
    if keep <= 0:
        return text[-budget:] if tail else text[:budget]
    marker = f"[... truncated {len(text) - keep} characters ...]"
    if tail:
        return marker + "\n" + text[len(text) - keep:]
    return text[:keep] + "\n" + marker
