#!/usr/bin/env python3
"""Train the full model and its three ablations on 250 synthetic scenarios.

Prints per-variant progress, the benchmark gates, and writes a JSON summary.

    python scripts/run_benchmark.py --out results/benchmark.json
"""

import argparse
import json
from pathlib import Path

from intentraj import benchmark
from intentraj.config import RunConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=250)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None, help="override RunConfig.small() epochs")
    ap.add_argument("--data", type=Path, default=None, help="reuse or create a dataset here")
    ap.add_argument("--logs", type=Path, default=None, help="directory for per-variant train logs")
    ap.add_argument("--out", type=Path, default=Path("benchmark.json"))
    args = ap.parse_args()

    cfg = RunConfig.small() if args.epochs is None else RunConfig.small(epochs=args.epochs)
    if args.logs:
        args.logs.mkdir(parents=True, exist_ok=True)
    res = benchmark.run(args.count, args.seed, cfg, root=args.data, log_dir=args.logs)
    gates = benchmark.gates(res)
    for key, (ok, msg) in gates.items():
        status = "PASS" if ok else ("WARN" if key == "5d" else "FAIL")
        print(f"{status} {key}: {msg}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    payload = json.loads(res.to_json())
    payload["gates"] = {k: {"ok": ok, "detail": msg} for k, (ok, msg) in gates.items()}
    args.out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"wrote {args.out} ({res.seconds / 60:.1f} min)")


if __name__ == "__main__":
    main()
