"""Tri-plane volumetric models: configs, FLOP accounting, inference and data."""

import json

from . import _core
from ._core import ConfigError, IoError, NumericError, ShapeError, gen_shapes, read_vxg, write_vxg, plot_metrics

__all__ = [
    "ConfigError", "IoError", "NumericError", "ShapeError",
    "Model", "config_hash", "count_flops", "default_config",
    "gen_shapes", "plot_metrics", "read_vxg", "write_vxg",
]


def default_config(variant="hybrid"):
    return json.loads(_core.default_config(variant))


def _dump(config):
    return config if isinstance(config, str) else json.dumps(config)


def config_hash(config):
    return _core.config_hash(_dump(config))


def count_flops(config, dims):
    """FLOP report for one forward pass, as a dict with per-stage counts."""
    if isinstance(dims, int):
        dims = (dims, dims, dims)
    return json.loads(_core.count_flops(_dump(config), tuple(dims)))


class Model:
    def __init__(self, config):
        self._impl = _core.Model(_dump(config))

    @property
    def config(self):
        return json.loads(self._impl.config())

    def parameter_count(self):
        return self._impl.parameter_count()

    def __call__(self, volume):
        """Logits for a float32 [C, D, H, W] volume."""
        return self._impl.forward(volume)
