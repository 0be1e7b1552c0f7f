"""Marker drive-by from 11 m to 3 m, real and 1.5x fake."""

import argparse

from brickyard.evaluation import drive_by


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=4)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    print("run,distance_m,subtense_px,detected,error_m,valid")
    for s in range(args.runs):
        for f in drive_by(s, scale=args.scale):
            err = "" if f.error is None else f"{f.error:.4f}"
            print(f"{s},{f.distance:.2f},{f.subtense_px:.1f},{int(f.detected)},{err},{int(f.valid)}")


if __name__ == "__main__":
    main()
