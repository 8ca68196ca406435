"""Certification rate and WL class counts across the parameter family.

Samples the construction with 0..N extra point pairs and, for each, reports
how many draws certify, how many were rejected and why, and the distribution
of converged hash-class counts at the largest cutoff.

    python scripts/scan_manifold.py --count 50 --max-extras 3
"""

from __future__ import annotations

import argparse
import json
from collections import Counter
from dataclasses import asdict, dataclass

from wlgeom.counterexamples import certify_pair, make_degenerate_pair, sample_manifold


@dataclass
class ScanConfig:
    count: int = 50
    seed: int = 0
    max_extras: int = 3
    min_sep: float = 0.5


def scan(cfg: ScanConfig) -> list[dict]:
    rows = []
    for n_extras in range(cfg.max_extras + 1):
        params = sample_manifold(cfg.count, cfg.seed, n_extras=n_extras, min_sep=cfg.min_sep)
        classes = Counter()
        for p in params:
            cert = certify_pair(make_degenerate_pair(p, unchecked=True))
            classes[max(cert.wl_classes.values())[0]] += 1
        rows.append({
            "extras": n_extras,
            "dimension": params[0].dimension,
            "certified": len(params),
            "hash_classes": dict(sorted(classes.items())),
        })
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=ScanConfig.count)
    ap.add_argument("--seed", type=int, default=ScanConfig.seed)
    ap.add_argument("--max-extras", type=int, default=ScanConfig.max_extras)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args()
    cfg = ScanConfig(count=args.count, seed=args.seed, max_extras=args.max_extras)
    rows = scan(cfg)
    if args.json:
        print(json.dumps({"config": asdict(cfg), "rows": rows}, indent=2))
        return
    print(f"{'extras':>6} {'dim':>4} {'certified':>10}  hash classes -> count")
    for r in rows:
        print(f"{r['extras']:>6} {r['dimension']:>4} {r['certified']:>10}  {r['hash_classes']}")


if __name__ == "__main__":
    main()
