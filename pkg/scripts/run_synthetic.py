"""Compare the search with both sequential baselines on the bundled synthetic instance."""

import argparse
import time

from mfgapfill.baselines import SequentialConfig, run_lp_seq, run_mip_seq
from mfgapfill.fixtures import search_instance
from mfgapfill.search import MultiFactorialSearch, Scorer, SearchConfig, preprocess
from mfgapfill.objectives import Betas


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    model, media = search_instance()
    prep = preprocess(model, media)
    scorer = Scorer(model, prep, Betas())

    def show(label, state, secs):
        s = scorer.score(state)
        ev = s.evaluation
        print(f"{label:<14}{s.objective:>12.4f}{ev.gme:>5}{ev.tau:>8.3f}{ev.rms:>8.4f}{secs:>8.2f}s")

    print(f"{'method':<14}{'objective':>12}{'GME':>5}{'tau-b':>8}{'RMS':>8}{'time':>9}")
    for label, runner in (("seq-lp", run_lp_seq), ("seq-mip", run_mip_seq)):
        t0 = time.perf_counter()
        res = runner(model, media, SequentialConfig(), prep)
        state = res.state.copy()
        state.eval_costs[:] = 1.0
        show(label, state, time.perf_counter() - t0)
    for seed in range(args.seeds):
        t0 = time.perf_counter()
        res = MultiFactorialSearch(model, media, SearchConfig(iterations=args.iterations, seed=seed), prep).run()
        show(f"search s={seed}", res.best.state, time.perf_counter() - t0)


if __name__ == "__main__":
    main()
