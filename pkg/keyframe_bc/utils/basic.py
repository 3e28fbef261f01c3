"""
    File contains useful methods
"""

import json
import hashlib

import numpy as np


def canonical_json(obj):
    """
        Serializes an object to JSON with sorted keys and no whitespace, so equal
        objects always produce equal strings
    """
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def hash_dict(obj):
    """Returns the sha256 hex digest of the canonical JSON of an object

    Arguments
    ---------
        obj : dict
            Any JSON-serializable object

    Returns
    -------
        digest : str
            64 character hex digest
    """
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def derive_seeds(seed, count):
    """Derives `count` independent 32-bit seeds from a parent seed

    Arguments
    ---------
        seed : int
            Parent seed
        count : int
            Number of child seeds

    Returns
    -------
        seeds : list
            List of python ints
    """

    if count <= 0:
        return []

    # SeedSequence spreads nearby parent seeds across the state space
    states = np.random.SeedSequence(int(seed)).generate_state(count)

    return [int(s) for s in states]


def to_float_list(array):
    """
        Converts a numpy array to nested python floats (exact under json.dumps)
    """
    return np.asarray(array, dtype=np.float64).tolist()
