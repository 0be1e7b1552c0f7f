"""Heat-source ranging error over 1-4 m and ambient false positives."""

from brickyard.evaluation import THERMAL_CAMERA, ambient_frames, thermal_ranging
from brickyard.thermal import detect_heat


def main():
    print("truth_m,estimate_m,rel_error")
    for z, e in thermal_ranging():
        print(f"{z:.2f},{'' if e is None else f'{e:.3f}'},{'' if e is None else f'{(e - z) / z:+.3f}'}")
    fp = sum(detect_heat(img, 8000, THERMAL_CAMERA) is not None for img in ambient_frames(100))
    print(f"# {fp}/100 ambient frames with a detection")


if __name__ == "__main__":
    main()
