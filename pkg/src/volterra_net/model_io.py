"""Saving and loading trained models.

A model is stored as two files sharing one base path: ``<base>.bin``
holds the flat parameter storage (with its own slice-table sidecar
``<base>.bin.json``) and ``<base>.json`` holds a small header naming the
model kind and its dimensions, enough to rebuild the object and refuse
mismatched parameter files.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import load_params, save_params
from .baselines import DeepOnetModel, NeuralSdeModel, _deeponet_net_specs, _sde_net_specs
from .errors import ValidationError
from .nsve import NeuralSveModel, _sve_net_specs
from .paths import make_uniform_grid

FORMAT_VERSION = 1


def save_model(model, base):
    """Write ``<base>.json`` (header) and ``<base>.bin`` (+ sidecar)."""
    header = {"format_version": FORMAT_VERSION, "kind": model.kind}
    if model.kind in ("nsve", "nsde"):
        header.update(d=model.d, m=model.m, d_h=model.d_h, d_K=model.d_K)
    elif model.kind == "deeponet":
        header.update(
            m=model.m, p=model.p, width=model.width,
            T=model.grid.T, dt=model.grid.dt,
        )
    else:
        raise ValidationError("unknown model kind %r" % model.kind)
    with open(base + ".json", "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
    save_params(model.params, base + ".bin")


def load_model(base):
    """Rebuild the model saved at ``base``; validates kind and sizes."""
    with open(base + ".json") as fh:
        header = json.load(fh)
    if header.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            "unsupported model format version %r" % header.get("format_version")
        )
    pv = load_params(base + ".bin")
    kind = header.get("kind")
    if kind == "nsve":
        specs = _sve_net_specs(header["d"], header["m"], header["d_h"], header["d_K"])
        _check_size(pv, specs, base)
        return NeuralSveModel(
            d=header["d"], m=header["m"], d_h=header["d_h"], d_K=header["d_K"], params=pv
        )
    if kind == "nsde":
        specs = _sde_net_specs(header["d"], header["m"], header["d_h"], header["d_K"])
        _check_size(pv, specs, base)
        return NeuralSdeModel(
            d=header["d"], m=header["m"], d_h=header["d_h"], d_K=header["d_K"], params=pv
        )
    if kind == "deeponet":
        grid = make_uniform_grid(header["T"], header["dt"])
        specs = _deeponet_net_specs(grid.n_steps, header["m"], header["p"], header["width"])
        _check_size(pv, specs, base)
        return DeepOnetModel(m=header["m"], p=header["p"], grid=grid, params=pv,
                             width=header["width"])
    raise ValidationError("unknown model kind %r in %s.json" % (kind, base))


def _check_size(pv, specs, base):
    expected = int(np.sum([s.n_params for s in specs.values()]))
    if pv.size != expected:
        raise ValidationError(
            "parameter file %s.bin holds %d values but the header implies %d"
            % (base, pv.size, expected)
        )
