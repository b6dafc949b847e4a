"""Euler-Maruyama deviation experiments: Stein solutions, statistics and bounds."""

import json

from ._mdev import *  # noqa: F401,F403
from ._mdev import __version__, model_from_json, run_experiment_json


def model(spec="ou", **params):
    """Build a model from an id ("ou", "ou-matrix", "tanh") and parameters."""
    if isinstance(spec, dict):
        return model_from_json(json.dumps(spec))
    if params:
        return model_from_json(json.dumps({"id": spec, **params}))
    return model_from_json(json.dumps(spec))


def run_experiment(config, threads=0):
    """Run an experiment from a config dict or JSON text.

    Returns the parsed result document with the CSV tables under "csv".
    """
    text = config if isinstance(config, str) else json.dumps(config)
    raw = run_experiment_json(text, threads)
    out = json.loads(raw["result"])
    out["csv"] = {k[:-4]: raw[k] for k in ("tail_csv", "ks_csv", "mdp_csv", "conc_csv")}
    return out
