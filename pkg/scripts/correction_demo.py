"""Correct one hallucinated obituary sentence with the retrieval oracle, then
replay it with two pinned wrong factors to show the alert path."""
import argparse
from dataclasses import dataclass

from clozefix import (Category, CorrectionMode, CorrectionOptions, Hypothesis, OracleBackend, ScriptedBackend,
                      SourceDocument, UNK, correct)

DOC = ('(...) Temperton died in London last week at the age of 66 after "a brief aggressive battle with cancer", '
       'Jon Platt of Warner/Chappell music publishing said. (...)')
HYP = "Templeton Templeton, one of the UK's most famous 66, has died at the age of 74."


@dataclass
class DemoConfig:
    mode: CorrectionMode = CorrectionMode.SLOT_FILL
    self_diagnosis: bool = True


def run(cfg: DemoConfig) -> None:
    doc, hyp = SourceDocument("obit", DOC), Hypothesis("h", "obit", HYP)
    auto = correct(doc, hyp, OracleBackend(), CorrectionOptions(mode=cfg.mode, self_diagnosis=cfg.self_diagnosis))
    print("hypothesis :", HYP)
    print("automatic  :", auto.corrected, "| alert =", auto.alert, "| kept =", auto.diagnosis_kept)
    for c in auto.changes:
        print(f"   slot {c.slot}: {c.old!r} -> {c.new!r}")
    numbers = correct(doc, hyp, OracleBackend(), CorrectionOptions(mode=cfg.mode,
                      factor_categories=frozenset({Category.NUMBER})))
    print("numbers    :", numbers.corrected, "| alert =", numbers.alert)
    disturbed = correct(doc, hyp, ScriptedBackend(lambda req, slot, prev: UNK),
                        CorrectionOptions(self_diagnosis=False),
                        prefilled=[(0, "Chaka Khan"), (1, "vocalists")])
    print("disturbed  :", disturbed.corrected, "| alert =", disturbed.alert)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mode", choices=[m.value for m in CorrectionMode], default=CorrectionMode.SLOT_FILL.value)
    ap.add_argument("--no-self-diagnosis", action="store_true")
    a = ap.parse_args()
    run(DemoConfig(CorrectionMode(a.mode), not a.no_self_diagnosis))
