"""Agent-level continuous dynamics and sample-and-hold estimate propagation.

Between broadcasts each agent's last sample is propagated open loop,
x_tilde(t) = e^{A (t - t_k)} x(t_k), and the gap between that estimate and
the live state is the measurement error that drives triggering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SystemModel, matrix_exponential


@dataclass
class BroadcastSample:
    """A broadcast value (state or observer state) with its trigger instant."""

    value: np.ndarray
    stamp: float


@dataclass
class AgentRuntime:
    """One agent's live state plus the sampled information it works from.

    ``neighbor_samples`` maps neighbour index to that neighbour's latest
    broadcast as received by this agent; broadcasts are delivered lossless
    and instantaneously, so the received copy always equals the sender's
    ``own_sample``.
    """

    x: np.ndarray
    own_sample: BroadcastSample
    neighbor_samples: dict[int, BroadcastSample] = field(default_factory=dict)
    chi: np.ndarray | None = None


def propagate_estimate(A: np.ndarray, sample: BroadcastSample, t: float) -> np.ndarray:
    """Open-loop estimate e^{A (t - stamp)} value for t >= stamp."""
    dt = t - sample.stamp
    if dt < 0:
        raise ValueError(f"cannot propagate backwards: t={t} < stamp={sample.stamp}")
    if dt == 0:
        return np.array(sample.value, dtype=float)
    return matrix_exponential(A, dt) @ np.asarray(sample.value, dtype=float)


def measurement_error(
    A: np.ndarray, sample: BroadcastSample, current: np.ndarray, t: float
) -> np.ndarray:
    """Gap between the propagated broadcast and the live value at time t."""
    return propagate_estimate(A, sample, t) - np.asarray(current, dtype=float)


def agent_derivative(
    model: SystemModel,
    x: np.ndarray,
    u: np.ndarray,
    w: np.ndarray | None = None,
) -> np.ndarray:
    """xdot = A x + B u (+ w for perturbed agents)."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    if u.shape != (model.p,):
        raise ValueError(f"input has shape {u.shape}, expected ({model.p},)")
    out = model.A @ x + model.B @ u
    if w is not None:
        w = np.asarray(w, dtype=float)
        if w.shape != (model.n,):
            raise ValueError(f"disturbance has shape {w.shape}, expected ({model.n},)")
        out = out + w
    return out


def output(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """y = C x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    return model.C @ x
