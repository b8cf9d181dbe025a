"""Absorption times of dX = aX dt + sqrt(X) dB^H for a = -0.1 and a = 0.1.

For each drift, writes the histogram CSV, the per-path absorption times
and (with matplotlib installed) an SVG histogram, then prints survivor
counts at t = 50 and t = 500.
"""

import argparse
import json
from pathlib import Path

from mixsde.pricing import hitting_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--drifts", type=float, nargs="+", default=[-0.1, 0.1])
    ap.add_argument("--H", type=float, default=0.8)
    ap.add_argument("--horizon", type=float, default=500.0)
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    for a in args.drifts:
        st = hitting_experiment(a, args.H, 1.0, args.horizon, args.paths, args.steps, args.seed,
                                checkpoints=(args.horizon / 10, args.horizon))
        tag = f"hitting_a{a:+g}"
        (args.outdir / f"{tag}.csv").write_text(st.histogram_csv())
        (args.outdir / f"{tag}_nu0.csv").write_text(st.nu0_csv())
        (args.outdir / f"{tag}.json").write_text(json.dumps(st.summary(), indent=2, sort_keys=True))
        try:
            st.to_svg(args.outdir / f"{tag}.svg")
        except Exception as exc:  # noqa: BLE001 - plotting is optional
            print(f"  (no SVG: {exc})")
        counts = ", ".join(f"t={t:g}: {n}" for t, n in st.survivors.items())
        print(f"a={a:+g}: survivors {counts} of {st.n_paths}")


if __name__ == "__main__":
    main()
