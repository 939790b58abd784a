#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures under crates/core/tests/data.

    python3 scripts/gen_fixtures.py

Outputs:
  review_corpus.json          100 cached review responses with expected flags
  claude_projects/            three session transcripts (375 usage lines)
"""

import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "crates" / "core" / "tests" / "data"

FILES = ["src/auth.rs", "src/db/pool.rs", "src/api/handlers.rs", "web/app.ts",
         "lib/parser.py", "cmd/server/main.go", "README.md", "tests/it.rs"]
BODIES = [
    "Possible SQL injection: the query string is built with format!.",
    "This unwrap will panic when the config file is missing.",
    "Consider caching this lookup; it runs inside the hot loop.",
    "Add a test for the empty-input case.",
    "Rename `tmp2` to something that says what it holds.",
    "Missing doc comment on the public constructor.",
    "This module mixes transport and persistence concerns.",
    "Trailing whitespace and inconsistent indentation.",
    "nit: prefer `is_empty()` over `len() == 0`.",
    "Looks fine to me.",
    "The token is logged in plaintext here.",
    "Off-by-one: the range should be inclusive of the last page.",
]
SEVERITIES = ["critical", "major", "minor", "info", "nit"]

PREAMBLES = [
    "Sure! Here is my review of the changes:\n\n",
    "Here's the structured review you asked for.\n",
    "Certainly. Below is the JSON review.\n\n",
    "Of course! I've gone through the diff.\n",
    "I'll summarize the findings as JSON:\n",
    "Okay, here is the output:\n\n",
]
POSTAMBLES = [
    "\n\nNote: line numbers refer to the new version of each file.",
    "\n\nFeel free to ask if you want more detail on any item.",
    "\n\nI hope this helps!",
]


def review(rng, long_body=False):
    comments = []
    for _ in range(rng.randint(0, 6)):
        c = {"file": rng.choice(FILES), "body": rng.choice(BODIES),
             "severity": rng.choice(SEVERITIES)}
        if rng.random() < 0.8:
            c["line"] = rng.randint(1, 400)
        comments.append(c)
    if long_body:
        body = "This function is too long to review in one pass. " * 50
        comments.insert(0, {"file": rng.choice(FILES), "line": 12,
                            "body": body, "severity": "major"})
    return {"summary": f"Reviewed {len(comments)} item(s); overall the change is reasonable.",
            "comments": comments}


def render(rng, payload, pre=None, fence=False, post=None):
    body = json.dumps(payload, indent=2 if rng.random() < 0.5 else None, ensure_ascii=False)
    if fence:
        body = f"```{'json' if rng.random() < 0.7 else ''}\n{body}\n```"
    return f"{pre or ''}{body}{post or ''}"


def review_corpus():
    rng = random.Random(20250610)
    items = []

    def add(text, expected):
        items.append({"response": text, "expected": sorted(expected)})

    for _ in range(71):
        add(render(rng, review(rng)), [])
    for i in range(5):
        add(render(rng, review(rng), PREAMBLES[i % 6], True, POSTAMBLES[i % 3]),
            ["preamble_stripped", "json_extracted_from_fence", "postamble_stripped"])
    for i in range(7):
        add(render(rng, review(rng), PREAMBLES[(i + 5) % 6], True),
            ["preamble_stripped", "json_extracted_from_fence"])
    for i in range(6):
        add(render(rng, review(rng), PREAMBLES[i]), ["preamble_stripped"])
    for i in range(4):
        add(render(rng, review(rng), post=POSTAMBLES[i % 3]), ["postamble_stripped"])
    for _ in range(2):
        add(render(rng, review(rng), fence=True), ["json_extracted_from_fence"])
    for _ in range(3):
        add(render(rng, review(rng, long_body=True)), ["comment_truncated"])
    add("I could not produce JSON, sorry.", ["parse_failed"])
    add('{"summary": "truncated output, the model stopped mid-str', ["parse_failed"])

    rng.shuffle(items)
    for n, item in enumerate(items, 1):
        item["id"] = f"r{n:03d}"
    out = [{"id": i["id"], "response": i["response"], "expected": i["expected"]} for i in items]
    (DATA / "review_corpus.json").write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n")


def split_total(rng, total, parts, lo, hi):
    """`parts` integers in [lo, hi) (last one absorbs the remainder) summing to `total`."""
    vals = [rng.randint(lo, hi) for _ in range(parts - 1)]
    vals.append(total - sum(vals))
    assert vals[-1] >= 0, vals[-1]
    return vals


def usage_rows(rng, n, tokens, cache, costs):
    totals = split_total(rng, tokens, n, tokens // n - 2000, tokens // n + 2000)
    caches = split_total(rng, cache, n, 0, 2 * cache // n)
    rows = []
    for t, c, cost in zip(totals, caches, costs):
        out = rng.randint(t // 20, t // 8)
        read = c * 3 // 4
        rows.append({"input_tokens": t - out, "output_tokens": out,
                     "cache_read_input_tokens": read,
                     "cache_creation_input_tokens": c - read, "cost": cost})
    return rows


def transcripts():
    rng = random.Random(375)
    base = DATA / "claude_projects"
    sonnet, haiku = "claude-sonnet-4-5-20250929", "claude-haiku-4-5-20251001"
    # 352 rows summing to $14.44 and 23 rows summing to $0.36, both exact.
    sonnet_costs = ["0.041023"] * 256 + ["0.041022"] * 96
    haiku_costs = ["0.015653"] * 4 + ["0.015652"] * 19
    rng.shuffle(sonnet_costs)
    rng.shuffle(haiku_costs)
    s_rows = usage_rows(rng, 352, 24_900_000, 600_000, sonnet_costs)
    h_rows = usage_rows(rng, 23, 1_100_000, 100_000, haiku_costs)

    sessions = [
        ("-home-dev-tokenledger", "5f0c2a1e-0001", [(sonnet, r) for r in s_rows[:200]]),
        ("-home-dev-tokenledger", "5f0c2a1e-0002",
         [(sonnet, r) for r in s_rows[200:]] + [(haiku, r) for r in h_rows[:13]]),
        ("-home-dev-website", "9a7d1b33-0003", [(haiku, r) for r in h_rows[13:]]),
    ]
    t = datetime(2025, 5, 12, 9, 0, tzinfo=timezone.utc)
    for project, sid, rows in sessions:
        d = base / project
        d.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"type": "summary", "summary": "Session start", "leafUuid": sid})]
        for i, (model, r) in enumerate(rows):
            t += timedelta(seconds=rng.randint(20, 900))
            stamp = t.isoformat(timespec="milliseconds").replace("+00:00", "Z")
            if i % 3 == 0:
                lines.append(json.dumps({
                    "type": "user", "sessionId": sid, "uuid": f"{sid}-u{i:04d}",
                    "timestamp": stamp,
                    "message": {"role": "user", "content": "continue"}}))
            usage = {k: v for k, v in r.items() if k != "cost"}
            lines.append(json.dumps({
                "type": "assistant", "sessionId": sid, "uuid": f"{sid}-a{i:04d}",
                "timestamp": stamp, "costUSD": float(r["cost"]),
                "message": {"role": "assistant", "model": model, "usage": usage,
                            "content": [{"type": "text", "text": "done"}]}}))
        (d / f"{sid}.jsonl").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    review_corpus()
    transcripts()
