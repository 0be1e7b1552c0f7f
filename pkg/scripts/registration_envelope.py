"""Wall registration from initial guesses up to 1 m / 15 deg off."""

import argparse

from brickyard.evaluation import registration_envelope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=0.01)
    args = ap.parse_args()
    out = registration_envelope(range(args.n), sigma=args.sigma)
    print("seed,dt_m,dyaw_deg,ok,runtime_s")
    for o in out:
        print(f"{o.seed},{o.dt:.5f},{o.dyaw_deg:.4f},{int(o.ok)},{o.runtime_s:.3f}")
    print(f"# {sum(o.ok for o in out)}/{len(out)} within 0.02 m / 2 deg")


if __name__ == "__main__":
    main()
