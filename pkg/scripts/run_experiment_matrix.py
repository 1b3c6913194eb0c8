#!/usr/bin/env python3
"""Desk-scale replication of the sensor-placement optimization study.

Runs both algorithms over the (N, M) matrix against a prebuilt
surrogate, then emits the designs/reestimates/gaps/iterations and
MSE-versus-time tables used for the study's comparisons.
"""

import argparse
import json

from oedopt import harness


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--surrogate", required=True)
    ap.add_argument("--out", default="matrix_out")
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-list", default="1,11,101")
    ap.add_argument("--m-list", default="2,11,101")
    ap.add_argument("--algorithm", default="both", choices=["rm", "saa", "both"])
    args = ap.parse_args()

    config = harness.ExperimentConfig(
        algorithm=args.algorithm,
        N_list=tuple(int(v) for v in args.n_list.split(",")),
        M_list=tuple(int(v) for v in args.m_list.split(",")),
        T=args.runs,
        seed=args.seed,
        surrogate_path=args.surrogate,
    )
    result = harness.run_matrix(config)
    paths = harness.emit_reports(result, args.out)
    print(json.dumps({"U_ref": result.U_ref, "files": paths}, indent=1))


if __name__ == "__main__":
    main()
