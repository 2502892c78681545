"""Held-out prediction: token, model, and joint extrapolation sweeps.

Fits on truncated data (first j checkpoints, k smallest models, or
both) and scores pooled R^2 on the held-out complement, concatenating
predictions across all perturbation levels into one flat array. On
self-generated capacity-law data the generating law extrapolates
essentially perfectly while mis-specified baselines fall off, most
visibly in the joint (unseen model x unseen tokens) protocol.

Equivalent CLI:
    scalelaws extrapolate --data measurements.csv \
        --laws shannon_full,chinchilla,openai --mode joint --k 5 --j 12 \
        --objective log_loss --random-starts 8
"""

import numpy as np

import scalelaws as sl

SIZES = np.array([1.6e8, 4.1e8, 1.0e9, 2.8e9, 6.9e9, 1.2e10])
TOKENS = np.geomspace(4.2e9, 3.07e11, 16)
LEVELS = [10.0, 20.0, 40.0]


def level_params(level):
    noise = 10.0 ** ((40.0 - level) / 20.0)
    return sl.ParamVector.from_dict("shannon_full", {
        "a": 1.2, "b": 2.0, "c": 0.004 * noise, "d": 0.01 * noise, "e": 0.3,
        "alpha": 0.45, "beta": 0.55, "gamma": 0.6, "delta": 1.1,
    })


def build_data():
    generator = sl.get_law("shannon_full")
    observations = []
    for level in LEVELS:
        params = level_params(level)
        for i, n in enumerate(SIZES):
            for d in TOKENS:
                loss = sl.predict_loss(generator, params, n / 1e9, d / 1e9)
                observations.append(
                    sl.Observation(f"model-{i}", n, float(d), loss, x_level=level)
                )
    return sl.ObservationSet(tuple(observations))


def main():
    data = build_data()
    laws = [sl.get_law(law_id) for law_id in ("shannon_full", "chinchilla", "openai")]
    config = sl.FitConfig(starts=4, random_starts=8, seed=0,
                          objective_space="log_loss", max_iters=300)

    for title, specs in [
        ("token extrapolation (train on first j checkpoints)",
         [sl.SplitSpec("token", j=j) for j in (8, 12, 15)]),
        ("model extrapolation (train on k smallest models)",
         [sl.SplitSpec("model", k=k) for k in (3, 4, 5)]),
        ("joint extrapolation (k smallest models, first j checkpoints)",
         [sl.SplitSpec("joint", k=k, j=j) for k, j in ((4, 8), (5, 12), (5, 15))]),
    ]:
        print(f"\n== {title}, pooled R^2 over {len(LEVELS)} levels ==")
        sweep = sl.progressive_sweep(data, laws, specs, config)
        print(sweep.to_text())

    report = sl.run_extrapolation(
        data, laws[0], sl.SplitSpec("joint", k=5, j=12), config
    )
    print(f"\njoint k=5, j=12 detail: train={report.train_count} "
          f"test={report.test_count} excluded={report.excluded_count} "
          f"pooled={report.pooled_r2:.6f}")


if __name__ == "__main__":
    main()
