"""Closed-form solutions used as referees for bundled scenarios."""

import numpy as np

from .geometry import as_point


def circle(radius=1.0, omega=1.0, phase=0.0, center=(0.0, 0.0)):
    """Uniform motion on a circle: ``c + R (cos(w t + p), sin(w t + p))``."""
    c = as_point(center, 2)

    def exact(t):
        a = omega * t + phase
        return c + radius * np.array([np.cos(a), np.sin(a)])

    return exact


def clamped_drift(x0, velocity, lower, upper):
    """Constant field on a box: each coordinate drifts until it meets its face."""
    x0, v = as_point(x0), as_point(velocity)
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    return lambda t: np.clip(x0 + t * v, lo, hi)


def stopped_decay(x0, rate, radius):
    """``x' = -rate x`` outside a ball of given radius: exponential decay halted on the sphere."""
    x0 = as_point(x0)
    n0 = np.linalg.norm(x0)
    return lambda t: x0 * max(np.exp(-rate * t), radius / n0)


def exp_decay(x0, rate):
    """Unconstrained ``x' = -rate x``."""
    x0 = as_point(x0)
    return lambda t: x0 * np.exp(-rate * t)


REFERENCES = {
    "circle": circle,
    "clamped_drift": clamped_drift,
    "stopped_decay": stopped_decay,
    "exp_decay": exp_decay,
}


def build_reference(spec):
    params = {k: v for k, v in spec.items() if k != "type"}
    try:
        factory = REFERENCES[spec["type"]]
    except KeyError:
        raise ValueError(f"unknown reference {spec.get('type')!r}") from None
    return factory(**params)
