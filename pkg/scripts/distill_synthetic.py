"""Distill a synthetic scored corpus at both threshold presets and report
retention, alert-set size and per-metric rejections."""
import argparse
import json
import random
from dataclasses import dataclass

from clozefix.distill import PRESETS, Decision, DistillationRecord, build_summdsc

SENTENCES = [
    "Mayor Alice Brown said the plan would cost 3.5 million pounds.",
    "John Carver has been in a row for Newcastle united since the defeat .",
    "Work starts in March 2025 and ends in 2027.",
]


@dataclass
class SyntheticConfig:
    n_records: int = 1000
    seed: int = 0


def synthetic_records(cfg: SyntheticConfig) -> list[DistillationRecord]:
    rng = random.Random(cfg.seed)
    out = []
    for i in range(cfg.n_records):
        # correlated metrics: one latent faithfulness draw plus per-metric noise
        z = rng.random()
        scores = {m: min(1.0, max(0.0, z + rng.gauss(0, 0.15))) for m in ("dae", "summac", "cloze", "rouge2p")}
        out.append(DistillationRecord(f"r{i:05d}", "doc", rng.choice(SENTENCES), scores, Decision.DISCARDED))
    return out


def run(cfg: SyntheticConfig) -> dict:
    records = synthetic_records(cfg)
    report = {}
    for name, th in PRESETS.items():
        base, alert, stats = build_summdsc(records, th)
        report[name] = stats.to_dict()
    return report


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    print(json.dumps(run(SyntheticConfig(a.n, a.seed)), indent=2))
