#!/usr/bin/env python3
"""Regenerates the synthetic crash report corpus and its ground truth.

Four families of call stacks. Variants inside a family differ in at most two
of seven frames, so every pair stays within a normalized edit distance of
2/7. Frames never coincide across families.
"""
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
rng = random.Random(20240611)

KINDS = {"parser": "OobHeapWrite", "codec": "NullDeref", "net": "DivByZero", "vfs": "OobStackRead"}


def family(prefix, n_frames=7):
    return [(f"{prefix}_f{i}", f"{prefix}.asm", 10 + 7 * i) for i in range(n_frames)]


def variant(base, changes):
    out = list(base)
    for pos, tag in changes:
        fn, file, line = out[pos]
        out[pos] = (f"{fn}_{tag}", file, line + 1)
    return out


families = {
    "parser": [[], [(1, "a")], [(2, "b")]],
    "codec": [[], [(3, "a")]],
    "net": [[], [(0, "a")], [(0, "a"), (4, "b")]],
    "vfs": [[]],
}
# reports per trace, 50 in total
copies = [9, 6, 5, 7, 4, 6, 5, 3, 5]

traces = []
for name, variants in families.items():
    base = family(name)
    for k, changes in enumerate(variants):
        traces.append((f"{name}{k}", name, variant(base, changes)))
assert len(traces) == len(copies) == 9 and sum(copies) == 50

reports_dir = HERE / "reports"
reports_dir.mkdir(exist_ok=True)
for old in reports_dir.glob("*.json"):
    old.unlink()

used = set()
truth_traces = {}
for (label, fam, frames), n in zip(traces, copies):
    ids = []
    for _ in range(n):
        while True:
            rid = f"{rng.getrandbits(64):016x}"
            if rid not in used:
                used.add(rid)
                break
        top = frames[0]
        report = {
            "id": rid,
            "cmdline": f"hfz replay {fam}.asm seed-{rid}",
            "crash_kind": KINDS[fam],
            "crash_loc": {"file": top[1], "line": top[2], "column": 3},
            "stack_trace": [{"function": f, "file": fl, "line": ln} for f, fl, ln in frames],
            "registers": [f"{rng.getrandbits(32):016x}" for _ in range(8)],
            "flags": {"cf": False, "of": False, "zf": bool(rng.getrandbits(1)), "sf": False},
            "source_excerpt": [],
            "seed_path": f"seed-{rid}",
            "crash_address": f"{rng.getrandbits(20):016x}",
            "is_write": KINDS[fam] == "OobHeapWrite",
            "diagnostics": [],
        }
        (reports_dir / f"{rid}.json").write_text(json.dumps(report, indent=2) + "\n")
        ids.append(rid)
    truth_traces[label] = sorted(ids)

truth = {
    "reports": sum(copies),
    "threshold": 0.3,
    "traces": truth_traces,
    "clusters": [[label for label, fam, _ in traces if fam == name] for name in families],
}
(HERE / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
