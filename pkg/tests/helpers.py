"""Shared fixtures-by-hand: canonical small datasets and randomized generators."""

from __future__ import annotations

import math
import random
import string

from esgrid.gridfmt import Dimension, GridDataset, Variable


def t1_dataset() -> GridDataset:
    """time=3 (unlimited), lat=2, lon=2; PS holds 0..11 row-major."""
    return GridDataset(
        dimensions=[
            Dimension("time", 3, unlimited=True),
            Dimension("lat", 2),
            Dimension("lon", 2),
        ],
        variables=[
            Variable("time", ["time"], "f64", {"units": "days"}, [0.0, 1.0, 2.0]),
            Variable("lat", ["lat"], "f64", {"units": "degrees_north"}, [-45.0, 45.0]),
            Variable("lon", ["lon"], "f64", {"units": "degrees_east"}, [0.0, 180.0]),
            Variable("PS", ["time", "lat", "lon"], "f64",
                     {"units": "Pa"}, [float(i) for i in range(12)]),
        ],
        global_attributes={"title": "T1 surface pressure sample"},
    ).validate()


def record_series(name: str, n_time: int, lat: int = 2, lon: int = 2,
                  t0: float = 0.0, base: float = 0.0) -> GridDataset:
    """A time-series dataset with coordinate variables and one field."""
    count = n_time * lat * lon
    return GridDataset(
        dimensions=[
            Dimension("time", n_time, unlimited=True),
            Dimension("lat", lat),
            Dimension("lon", lon),
        ],
        variables=[
            Variable("time", ["time"], "f64", {}, [t0 + i for i in range(n_time)]),
            Variable("lat", ["lat"], "f64", {},
                     [-90.0 + 180.0 * i / max(lat - 1, 1) for i in range(lat)]),
            Variable("lon", ["lon"], "f64", {},
                     [360.0 * i / lon for i in range(lon)]),
            Variable(name, ["time", "lat", "lon"], "f64", {"units": "Pa"},
                     [base + float(i) for i in range(count)]),
        ],
        global_attributes={"title": f"{name} series"},
    ).validate()


def random_dataset(rng: random.Random, max_dims: int = 3, max_size: int = 5,
                   max_vars: int = 4, with_record_axis: bool = False) -> GridDataset:
    """Random small dataset honoring every container invariant."""
    n_dims = rng.randint(1, max_dims)
    names = rng.sample(["time", "lat", "lon", "lev", "x", "y", "z"], n_dims)
    dims = []
    unlimited_at = 0 if with_record_axis else (rng.randrange(n_dims) if rng.random() < 0.5 else -1)
    if with_record_axis and "time" not in names:
        names[0] = "time"
    for i, name in enumerate(names):
        size = rng.randint(1, max_size)
        dims.append(Dimension(name, size, unlimited=(i == unlimited_at)))

    variables = []
    # coordinate variables for a random subset of dims
    for d in dims:
        if rng.random() < 0.6 or (with_record_axis and d.unlimited):
            variables.append(Variable(
                d.name, [d.name], "f64", {},
                [round(rng.uniform(-90, 90), 3) for _ in range(d.size)]))
    n_fields = rng.randint(1, max_vars)
    for i in range(n_fields):
        vname = f"V{i}" if i else rng.choice(["PS", "TS", "U", "V0"])
        if any(v.name == vname for v in variables):
            vname = f"F{i}"
        k = rng.randint(0 if not with_record_axis else 1, len(dims))
        if with_record_axis:
            vdims = [dims[0].name] + [d.name for d in rng.sample(dims[1:], k - 1)] if k else []
        else:
            vdims = [d.name for d in rng.sample(dims, k)]
        count = math.prod(next(d.size for d in dims if d.name == n) for n in vdims) if vdims else 1
        dtype = rng.choice(["f64", "f64", "i64"])
        if dtype == "i64":
            data = [rng.randint(-10**6, 10**6) for _ in range(count)]
        else:
            data = [round(rng.uniform(-1e4, 1e4), 6) for _ in range(count)]
        attrs = {}
        if rng.random() < 0.5:
            attrs["units"] = rng.choice(["Pa", "K", "m_s"])
        if rng.random() < 0.3:
            attrs["scale"] = round(rng.uniform(0.1, 2.0), 4)
        variables.append(Variable(vname, vdims, dtype, attrs, data))

    gattrs: dict = {"title": "".join(rng.choice(string.ascii_letters) for _ in range(8))}
    if rng.random() < 0.4:
        gattrs["run"] = rng.randint(0, 99)
    return GridDataset(dimensions=dims, variables=variables, global_attributes=gattrs).validate()


def random_constraint(rng: random.Random, ds: GridDataset) -> str:
    """Random valid constraint text for a dataset (at least one projection)."""
    field_vars = [v for v in ds.variables if v.name not in {d.name for d in ds.dimensions}]
    pool = field_vars or ds.variables
    chosen = rng.sample(pool, rng.randint(1, len(pool)))
    # avoid conflicting selections: slice only the first projected variable
    parts = []
    for i, var in enumerate(chosen):
        text = var.name
        if i == 0 and var.dims:
            n_slabs = rng.randint(0, var.rank())
            for dim_name in var.dims[:n_slabs]:
                size = ds.dim(dim_name).size
                start = rng.randrange(size)
                stop = rng.randrange(start, size)
                stride = rng.randint(1, 3)
                text += f"[{start}:{stride}:{stop}]"
        parts.append(text)
    return ",".join(parts)
