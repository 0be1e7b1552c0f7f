"""Seeded end-to-end missions of the 11-brick task, noisy and clean."""

import argparse

from brickyard.evaluation import mission_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--clean-only", action="store_true")
    args = ap.parse_args()
    print("seed,noisy,success,reason,placed,max_error_m,retries,sim_time_s,runtime_s")
    for noisy in ((False,) if args.clean_only else (True, False)):
        for s in range(args.seeds):
            m = mission_trial(s, noisy)
            err = "" if m.max_error is None else f"{m.max_error:.4f}"
            print(f"{s},{int(noisy)},{int(m.success)},{m.reason},{m.placed},{err},{m.retries},"
                  f"{m.sim_time_s:.0f},{m.runtime_s:.1f}", flush=True)


if __name__ == "__main__":
    main()
