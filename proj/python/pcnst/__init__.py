"""Colored point cloud classification and neural style transfer."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401


def load_network(path):
    """Load a checkpoint written by ``save_params`` or ``pcnst train``."""
    return load_params(path)  # noqa: F405


def transfer(content, style, params, preset_name="pc-to-pc", **overrides):
    """Stylize ``content`` with a named preset; keyword arguments override config fields."""
    config = preset(preset_name)  # noqa: F405
    for key, value in overrides.items():
        if not hasattr(config, key):
            raise AttributeError(f"TransferConfig has no field {key!r}")
        setattr(config, key, value)
    config.fusion = params.config.fusion
    return stylize(content, style, params, config)  # noqa: F405
