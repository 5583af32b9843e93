from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from detlattice.domain import GridSpec, LabeledVolume
from detlattice.store import save_volume
from detlattice.volume import remove_small_instances


def parse_triple(value: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers: {value}")
    return float(parts[0]), float(parts[1]), float(parts[2])


def mask_to_volume(
    mask: np.ndarray,
    *,
    spacing: tuple[float, float, float],
    origin: tuple[float, float, float],
    min_voxels: int = 1,
) -> LabeledVolume:
    if mask.ndim != 3:
        raise ValueError(f"expected a 3-D (z, y, x) mask, got shape {mask.shape}")
    if mask.size and (mask.min() < 0 or not np.array_equal(mask, np.round(mask))):
        raise ValueError("mask must hold non-negative integer IDs")
    nz, ny, nx = mask.shape
    volume = LabeledVolume(GridSpec((nx, ny, nz), spacing, origin), mask.astype(np.uint32))
    if min_voxels > 1:
        volume = remove_small_instances(volume, min_voxels, relabel=True)
    return volume


def main() -> None:
    parser = argparse.ArgumentParser(
        description="Convert a segmenter's .npy instance mask (z, y, x) into a VLF volume."
    )
    parser.add_argument("--npy", required=True, help="Path to the .npy mask.")
    parser.add_argument("--out", default="data/volume", help="Output VLF stem (default: data/volume).")
    parser.add_argument("--spacing", type=parse_triple, default=(1.0, 1.0, 1.0), help="dx,dy,dz")
    parser.add_argument("--origin", type=parse_triple, default=(0.0, 0.0, 0.0), help="x0,y0,z0")
    parser.add_argument(
        "--min-voxels",
        type=int,
        default=1,
        help="Drop instances smaller than this and renumber the rest.",
    )
    args = parser.parse_args()

    npy_path = Path(args.npy)
    if not npy_path.exists():
        raise SystemExit(f"NPY not found: {npy_path}")

    mask = np.load(npy_path, allow_pickle=False)
    try:
        volume = mask_to_volume(
            mask, spacing=args.spacing, origin=args.origin, min_voxels=args.min_voxels
        )
    except ValueError as exc:
        raise SystemExit(f"Invalid mask: {exc}") from exc

    for path in save_volume(volume, args.out):
        print(path.resolve())
    print(f"Import completed: {volume.n_instances} instances.")


if __name__ == "__main__":
    main()
