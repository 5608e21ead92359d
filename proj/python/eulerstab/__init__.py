"""Nonlinear stability of steady 2D Euler flows, via the compiled core."""

from ._eulerstab import *  # noqa: F401,F403
from ._eulerstab import __version__, EulerstabError, ConfigError  # noqa: F401


def steady_from_config(config):
    """Build the steady state a config describes; returns the parsed steady.json."""
    import json

    files = run_subcommand("steady", config)
    return json.loads(files["steady.json"])
