"""Zero-shot hyperspectral restoration: SURE + robust equivariance training."""

import json

import torch  # noqa: F401  loads libtorch before the extension

from . import _share
from ._share import ConfigError, Error, ShapeError, gaussian_kernel, mpsnr, mssim, sam, synthesize_lowrank_cube

__all__ = [
    "ConfigError",
    "Error",
    "ShapeError",
    "column_mask",
    "corrupt",
    "gaussian_kernel",
    "inpaint_operator",
    "make_fixtures",
    "mpsnr",
    "mssim",
    "restore_single",
    "run_experiment",
    "sam",
    "sr_operator",
    "synthesize_lowrank_cube",
    "transform",
]


def inpaint_operator(mask):
    return _share.make_operator(json.dumps({"kind": "inpaint"}), mask)


def sr_operator(kernel=None, factor=2, boundary="reflect", pinv="bicubic"):
    kernel = kernel or {"type": "gaussian", "size": 7, "std": 1.0}
    spec = {"kind": "blur-downsample", "kernel": kernel, "factor": factor, "boundary": boundary, "pinv": pinv}
    return _share.make_operator(json.dumps(spec))


def column_mask(bands, height, width, ratio, pattern="random", seed=0):
    return _share.column_mask(bands, height, width, ratio, pattern, seed)


def corrupt(x, noise, seed=0):
    return _share.corrupt(x, json.dumps(noise), seed)


def transform(action, x):
    return _share.transform(json.dumps(action), x)


def restore_single(y, op, train=None, reference=None):
    """Returns (estimate, report dict)."""
    xhat, report = _share.restore_single(y, op, json.dumps(train or {}), reference)
    return xhat, json.loads(report)


def run_experiment(config_path, out_dir):
    return json.loads(_share.run_experiment(str(config_path), str(out_dir)))


def make_fixtures(out_dir):
    return _share.make_fixtures(str(out_dir))
