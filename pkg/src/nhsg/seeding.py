"""Deterministic, named RNG streams.

All randomness in the pipeline flows through `stream(seed, name)`.  Each
(seed, name) pair yields an independent, reproducible generator, so adding
a consumer of randomness under one name never perturbs draws under another
name.  The environment variable NHSG_SEED, when set, overrides the seed
passed by configs.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

ENV_SEED = "NHSG_SEED"


def resolve_seed(config_seed: int) -> int:
    """Config seed, unless NHSG_SEED is set in the environment."""
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    return int(config_seed)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under a base seed."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), tag])))
