"""Convert NOAA OI SST v2 weekly NetCDF files into SST1/MSK1 binaries.

Usage::

    python scripts/netcdf_to_sst1.py sst.wkmean.1990-present.nc lsmask.nc out/

Needs ``h5py`` for NetCDF-4 files; classic NetCDF-3 files are read with
``scipy.io.netcdf_file``. Fill values and land points become NaN.
"""

import argparse
from pathlib import Path

import numpy as np

from nasuq.sst.grid import write_mask, write_snapshots


def read_var(path, name):
    try:
        from scipy.io import netcdf_file

        with netcdf_file(path, "r", mmap=False) as nc:
            var = nc.variables[name]
            data = var.data.astype(np.float64)
            scale = getattr(var, "scale_factor", 1.0)
            offset = getattr(var, "add_offset", 0.0)
            fill = getattr(var, "missing_value", None)
    except TypeError:
        import h5py

        with h5py.File(path, "r") as nc:
            var = nc[name]
            data = var[...].astype(np.float64)
            scale = var.attrs.get("scale_factor", 1.0)
            offset = var.attrs.get("add_offset", 0.0)
            fill = var.attrs.get("missing_value")
    if fill is not None:
        data[data == np.asarray(fill).ravel()[0]] = np.nan
    return data * scale + offset


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("sst")
    p.add_argument("mask")
    p.add_argument("out")
    p.add_argument("--start", type=int, default=0, help="first week to keep")
    p.add_argument("--count", type=int, default=None, help="number of weeks to keep")
    args = p.parse_args(argv)

    sst = read_var(args.sst, "sst")
    ocean = read_var(args.mask, "mask").squeeze() > 0.5
    stop = None if args.count is None else args.start + args.count
    sst = sst[args.start:stop]
    sst[:, ~ocean] = np.nan
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshots(out / "sst.bin", sst)
    write_mask(out / "mask.bin", ocean)
    print(f"{sst.shape[0]} weeks, {int(ocean.sum())} ocean points -> {out}")


if __name__ == "__main__":
    main()
