#!/usr/bin/env python3
"""Harvest a word-level training corpus from text already on this machine.

Builds data/corpus.txt: lowercase a-z words separated by single spaces, the
same surface form as the text8 benchmark file. Sources, in order, until the
token budget is filled:

  1. Debian package changelogs (/usr/share/doc/*/changelog*.gz)
  2. Debian package copyright files, content-deduplicated, capped
  3. Python standard library sources (docstrings, comments, and code)

Every file list is sorted, so reruns on the same machine reproduce the same
corpus byte for byte. An existing text8 file can be used instead of this
harvest by pointing ZIPFMAX_TEXT8 at it when running the evaluation suite.
"""

import gzip
import hashlib
import sys
from pathlib import Path

TARGET_TOKENS = 2_350_000
COPYRIGHT_CAP = 700_000

DIGITS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
}


def normalize(text: str) -> list[str]:
    """Lowercase, spell out digits, map everything else outside a-z to space."""
    out = []
    for ch in text.lower():
        if "a" <= ch <= "z":
            out.append(ch)
        elif ch in DIGITS:
            out.append(" " + DIGITS[ch] + " ")
        else:
            out.append(" ")
    return "".join(out).split()


def read_any(path: Path) -> str:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rt", encoding="utf-8", errors="replace") as f:
                return f.read()
        return path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return ""


def main() -> int:
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/corpus.txt")
    tokens: list[str] = []
    counts: dict[str, int] = {}

    def take(source: str, files: list[Path], cap: int | None = None) -> None:
        start = len(tokens)
        seen: set[str] = set()
        for path in files:
            if len(tokens) >= TARGET_TOKENS:
                break
            if cap is not None and len(tokens) - start >= cap:
                break
            text = read_any(path)
            if not text:
                continue
            digest = hashlib.sha256(text.encode()).hexdigest()
            if digest in seen:
                continue
            seen.add(digest)
            tokens.extend(normalize(text))
        if cap is not None and len(tokens) - start > cap:
            del tokens[start + cap:]
        counts[source] = len(tokens) - start

    doc = Path("/usr/share/doc")
    take("changelogs", sorted(doc.glob("*/changelog*.gz")))
    take("copyright", sorted(doc.glob("*/copyright")), cap=COPYRIGHT_CAP)
    take("python-stdlib", sorted(Path("/usr/lib/python3.10").rglob("*.py")))

    del tokens[TARGET_TOKENS:]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(" ".join(tokens) + "\n", encoding="ascii")

    for source, n in counts.items():
        print(f"{source}: {n} tokens")
    print(f"total: {len(tokens)} tokens -> {out_path}")
    if len(tokens) < TARGET_TOKENS:
        print("warning: token budget not met on this machine", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
