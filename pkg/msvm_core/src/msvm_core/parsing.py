"""Utilities for parsing configuration dictionaries and command-line values."""
from itertools import product
from pathlib import Path

import numpy as np
import yaml

from msvm_core.kernels import KernelSpec, KernelError


# This is from <https://github.com/Maples7/dict-recursive-update/blob/07204cdab891ac4123b19fe3fa148c3dd1c93992/dict_recursive_update/__init__.py>
def recursive_dict_update(default, custom):
    """Return a dict merged from default and custom"""
    if not isinstance(default, dict) or not isinstance(custom, dict):
        raise TypeError("Params of recursive_update should be dicts")

    for key in custom:
        if isinstance(custom[key], dict) and isinstance(default.get(key), dict):
            default[key] = recursive_dict_update(default[key], custom[key])
        else:
            default[key] = custom[key]

    return default


def load_config(path, depth=0, max_depth=5):
    """Load configuration file located at `path`.

    Entries of the `include` list are paths relative to the including file,
    or dicts with a `path` and an optional `key` to nest the included dict
    under. `depth` and `max_depth` arguments are provided to protect against
    unexpectedly deep or infinite recursion through included files.
    """
    if depth > max_depth:
        raise ValueError(f"Maximum inclusion depth {max_depth} exceeded.")

    path = Path(path)
    with open(path) as f:
        d = yaml.safe_load(f)
    if d is None:
        d = {}

    # get the includes while also removing them from the dict
    includes = d.pop("include", [])

    # construct a dict of everything included
    includes_dict = {}
    for include in includes:
        if isinstance(include, dict):
            include_path = path.parent / include["path"]
        else:
            include_path = path.parent / include
        include_dict = load_config(include_path, depth=depth + 1, max_depth=max_depth)

        # nest the include under `key` if specified
        if isinstance(include, dict) and "key" in include:
            include_dict = {include["key"]: include_dict}

        # update the includes dict and reassign
        includes_dict = recursive_dict_update(includes_dict, include_dict)

    # now add in the info from this file
    d = recursive_dict_update(includes_dict, d)
    return d


def parse_number(x, dtype=float):
    """Parse a number from the config.

    PyYAML reads numbers like 1e-8 (no decimal point) as strings, so strings
    are converted as well.
    """
    if isinstance(x, str):
        x = x.strip()
        if dtype is int:
            return int(float(x))
    return dtype(x)


def parse_grid_element(x):
    """Values of a grid element: a number, or `lo:hi:n` for n log-spaced values."""
    if isinstance(x, str) and ":" in x:
        parts = x.split(":")
        if len(parts) != 3:
            raise ValueError(f"Could not convert {x} to a range lo:hi:n.")
        lo, hi = parse_number(parts[0]), parse_number(parts[1])
        n = int(parts[2])
        if not (lo > 0 and hi > 0 and n >= 1):
            raise ValueError(f"Range {x} needs lo, hi > 0 and n >= 1.")
        if n == 1:
            return [lo]
        return list(np.geomspace(lo, hi, n))
    try:
        return [parse_number(x)]
    except ValueError:
        raise ValueError(f"Could not convert {x} to grid element.")


def parse_grid(a):
    """Parse a grid given as a list or a comma-separated string."""
    if isinstance(a, str):
        a = [s for s in a.split(",") if s.strip()]
    elif not isinstance(a, (list, tuple)):
        a = [a]
    values = []
    for x in a:
        values.extend(parse_grid_element(x))
    return [float(v) for v in values]


def _parse_assignments(text):
    params = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"Expected key=value, got {item!r}.")
        params[key.strip()] = value.strip()
    return params


def parse_kernel_string(text):
    """Kernel spec from `linear`, `rbf,gamma=G` or `poly,degree=D,scale=A,offset=B`."""
    family, _, rest = text.partition(",")
    family = family.strip()
    params = _parse_assignments(rest)
    try:
        if "degree" in params:
            params["degree"] = parse_number(params["degree"], dtype=int)
        for key in ("gamma", "scale", "offset"):
            if key in params:
                params[key] = parse_number(params[key])
        return KernelSpec(family, **params)
    except TypeError as e:
        raise KernelError(f"Invalid kernel {text!r}: {e}")
    except ValueError as e:
        raise KernelError(f"Invalid kernel {text!r}: {e}")


def parse_param_grid(text):
    """Kernel parameter grid, e.g. `gamma=0.1;gamma=1` or `gamma=0.01:1:3`.

    Entries are separated by ';'. Within an entry, values given as ranges
    expand to the product of all combinations. Integer-valued keys (degree)
    stay integers.
    """
    if text is None:
        return [{}]
    if isinstance(text, (list, tuple)):
        entries = list(text)
    else:
        entries = [e for e in text.split(";") if e.strip()]

    grid = []
    for entry in entries:
        assignments = entry if isinstance(entry, dict) else _parse_assignments(entry)
        keys = sorted(assignments)
        values = []
        for key in keys:
            v = parse_grid_element(assignments[key])
            if key == "degree":
                v = [int(x) for x in v]
            values.append(v)
        for combination in product(*values):
            grid.append(dict(zip(keys, combination)))
    return grid if grid else [{}]
