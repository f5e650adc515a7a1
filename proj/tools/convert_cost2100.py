#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The spikecsi Authors
"""Convert COST 2100 CSI matrices in the common CsiNet layout to CSIF.

Input: a .mat file (v5 via scipy, or v7.3 via h5py) holding an N x 2048
array, each row being one sample already truncated to 32 delay rows x 32
antennas: the real plane then the imaginary plane, each 32 x 32 row-major
(numpy reshape to (N, 2, 32, 32), as the CsiNet loaders do).

Source normalization assumed: values were min-max mapped into [0, 1] with
zero at 0.5, which is how the widely circulated DATA_H*.mat files are
stored. The 0.5 offset is removed (pass --offset 0 for raw files), then the
whole set is scaled by one global factor so that max |value| == 25. The
applied factor is written to the CSIF header.

  python3 tools/convert_cost2100.py DATA_Htrainin.mat indoor_train.csif
"""

import argparse
import struct
import sys

import numpy as np

MAGIC = b"CSIF"
VERSION = 1


def load_matrix(path, key):
    try:
        from scipy.io import loadmat

        mat = loadmat(path)
        return np.asarray(mat[key], dtype=np.float64)
    except NotImplementedError:
        # MATLAB v7.3 files are HDF5; h5py returns the transpose.
        import h5py

        with h5py.File(path, "r") as f:
            return np.asarray(f[key], dtype=np.float64).T


def write_csif(path, planes, scale):
    count, _, rows, cols = planes.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HIHHd", VERSION, count, rows, cols, scale))
        f.write(planes.astype("<f4").tobytes(order="C"))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("mat")
    ap.add_argument("out")
    ap.add_argument("--key", default="HT", help="variable name inside the .mat file (default HT)")
    ap.add_argument("--rows", type=int, default=32, help="delay rows N_s")
    ap.add_argument("--cols", type=int, default=32, help="antennas N_t")
    ap.add_argument("--offset", type=float, default=0.5, help="subtracted from every value before scaling")
    ap.add_argument("--input-scale", type=float, default=25.0)
    args = ap.parse_args(argv)

    h = load_matrix(args.mat, args.key)
    if h.ndim != 2 or h.shape[1] != 2 * args.rows * args.cols:
        sys.exit(f"{args.mat}:{args.key} has shape {h.shape}, expected (N, {2 * args.rows * args.cols})")
    planes = h.reshape(len(h), 2, args.rows, args.cols) - args.offset
    peak = np.abs(planes).max()
    if not np.isfinite(peak) or peak == 0.0:
        sys.exit("dataset is all zero or holds non-finite values")
    scale = args.input_scale / peak
    write_csif(args.out, planes * scale, scale)
    print(f"wrote {len(h)} samples ({args.rows}x{args.cols}) to {args.out}, scale factor {scale:.6g}")


if __name__ == "__main__":
    main()
