"""Interrupt a run, resume it from the checkpoint, and compare.

A run halted mid-way stores its loop counter, RNG state, assignment, and
term cache at a step boundary. Resuming replays the remaining steps and
produces exactly the labels an uninterrupted run would have produced.
"""

import os
import tempfile
from dataclasses import asdict, replace

from icm.harness import generate_synthetic_task
from icm.predictor import SyntheticTaskSpec, make_oracle
from icm.search import SearchConfig, load_checkpoint, run_icm


def main():
    spec = SyntheticTaskSpec(size=40, planted_seed=11, link_fraction=0.5)
    dataset, _ = generate_synthetic_task(spec)
    config = SearchConfig(seed=4, iterations=120, scoring_mode="cached")

    uninterrupted = run_icm(dataset, make_oracle(spec, dataset.ids()), config)
    print(f"uninterrupted run: {len(uninterrupted.trace)} steps, "
          f"final U {uninterrupted.trace[-1].utility:+.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = os.path.join(tmp, "demo.ckpt")
        halted = run_icm(
            dataset, make_oracle(spec, dataset.ids()),
            replace(config, halt_after_steps=45), checkpoint_path=ckpt,
        )
        print(f"halted run: stopped after {len(halted.trace)} steps, checkpoint written")

        payload = load_checkpoint(ckpt)
        payload["config"]["halt_after_steps"] = None
        resumed = run_icm(
            dataset, make_oracle(spec, dataset.ids()),
            SearchConfig(**payload["config"]),
            checkpoint_path=ckpt, resume_from=payload,
        )
        print(f"resumed run: continued to {len(resumed.trace)} steps")

    same_labels = resumed.assignment == uninterrupted.assignment
    same_trace = [asdict(r) for r in resumed.trace] == [asdict(r) for r in uninterrupted.trace]
    print(f"\nassignments identical: {same_labels}")
    print(f"traces identical:      {same_trace}")


if __name__ == "__main__":
    main()
