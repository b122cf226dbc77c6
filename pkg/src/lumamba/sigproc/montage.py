"""Electrode montages with unit-sphere coordinates.

Positions are given as (polar angle from the vertex, azimuth) in degrees on an
idealised spherical head: azimuth 0 points to the nasion, +90 to the left ear.
x points right, y to the nose, z up through Cz.
"""
from dataclasses import dataclass

import numpy as np

# 10-20 / 10-10 placements on the idealised sphere
_POSITIONS = {
    "Fp1": (90, 18), "Fp2": (90, -18), "Fpz": (90, 0),
    "F7": (90, 54), "F8": (90, -54), "F3": (60, 40), "F4": (60, -40), "Fz": (45, 0),
    "FC5": (68, 69), "FC6": (68, -69), "FC1": (32, 45), "FC2": (32, -45),
    "T7": (90, 90), "T8": (90, -90), "C3": (45, 90), "C4": (45, -90), "Cz": (0, 0),
    "CP5": (68, 111), "CP6": (68, -111), "CP1": (32, 135), "CP2": (32, -135),
    "P7": (90, 126), "P8": (90, -126), "P3": (60, 140), "P4": (60, -140), "Pz": (45, 180),
    "O1": (90, 162), "O2": (90, -162), "Oz": (90, 180),
}

TEMPLATES = {
    16: ["Fp1", "Fp2", "F7", "F3", "F4", "F8", "T7", "C3", "C4", "T8",
         "P7", "P3", "P4", "P8", "O1", "O2"],
    20: ["Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8",
         "P7", "P3", "Pz", "P4", "P8", "O1", "Oz", "O2"],
    26: ["Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6",
         "T7", "C3", "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6",
         "P7", "P3", "Pz", "P4", "P8", "O1"],
}


def sphere_xyz(polar_deg, azimuth_deg):
    p, a = np.radians(polar_deg), np.radians(azimuth_deg)
    v = np.array([-np.sin(p) * np.sin(a), np.sin(p) * np.cos(a), np.cos(p)])
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Montage:
    names: tuple
    coords: np.ndarray   # (C, 3), unit rows

    def __post_init__(self):
        names = tuple(self.names)
        coords = np.asarray(self.coords, dtype=np.float32).reshape(-1, 3)
        if not 1 <= len(names) <= 64:
            raise ValueError(f"montage must have 1..64 channels, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if coords.shape[0] != len(names):
            raise ValueError(f"{len(names)} names but {coords.shape[0]} coordinates")
        norms = np.linalg.norm(coords.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("electrode coordinates must lie on the unit sphere")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "coords", coords)

    @property
    def C(self):
        return len(self.names)

    def permute(self, order):
        order = np.asarray(order)
        return Montage(tuple(self.names[i] for i in order), self.coords[order])

    def __eq__(self, other):
        return (isinstance(other, Montage) and self.names == other.names
                and np.array_equal(self.coords, other.coords))

    def __hash__(self):
        return hash(self.names)


def unit_coords(names):
    raw = np.stack([sphere_xyz(*_POSITIONS[n]) for n in names])
    # renormalise after the float32 cast so every row is within 1e-7 of unit length
    c = raw.astype(np.float32)
    return c / np.linalg.norm(c.astype(np.float64), axis=1, keepdims=True).astype(np.float32)


def template(n_channels):
    """The shipped 16-, 20- or 26-channel montage."""
    try:
        names = TEMPLATES[int(n_channels)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown montage template {n_channels!r}; choose from {sorted(TEMPLATES)}") from None
    return Montage(tuple(names), unit_coords(names))
