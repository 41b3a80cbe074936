"""Adaptive event-based control laws and triggering functions.

All three variants share the same building blocks, evaluated on propagated
broadcast estimates only:

* control input        u_i = K sum_j c_ij a_ij (est_i - est_j)
* weight adaptation    cdot_ij = kappa_ij a_ij [-varrho_ij c_ij + d' Gamma d]
* trigger value        f_i = sum_j w_e (1 + delta c_ij) a_ij e_i' Gamma e_i
                             - sum_j v_e a_ij d_ij' Gamma d_ij - mu e^{-nu t}

with d_ij the estimate disagreement on edge (i,j). Leaderless triggering
uses w_e = 1, v_e = 1/4 on every edge; the leader-follower trigger halves
the error coefficient on the leader edge (w_e = 1/2) and doubles its
disagreement share (v_e = 1/2). Observer-based runs substitute the
observer state chi for x everywhere; the formulas are unchanged.

Every operation here consumes agent-local and incident-edge data only.
``ProtocolKernel`` stacks the same per-agent computations across the
network for the simulation engine; it carries no global graph quantities
beyond the edge list itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .graph import Edge, Graph


def _edge_key(e) -> Edge:
    i, j = int(e[0]), int(e[1])
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class ProtocolParams:
    """Design constants of the adaptive event-based protocol.

    ``kappa``, ``varrho`` and ``c0`` may be scalars (applied to every edge)
    or per-edge mappings keyed by node pair. A single value is stored per
    undirected edge, which enforces the required symmetry of the gains and
    of the initial weights identically.
    """

    delta: float
    mu: float
    nu: float
    kappa: float | Mapping = 0.2
    varrho: float | Mapping = 0.0
    c0: float | Mapping = 0.0

    def __post_init__(self):
        for name in ("delta", "mu", "nu"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a positive constant, got {v}")
            object.__setattr__(self, name, v)

    def _per_edge(self, value, edges: tuple[Edge, ...], name: str) -> np.ndarray:
        if isinstance(value, Mapping):
            table = {_edge_key(k if isinstance(k, tuple) else tuple(k)): float(v)
                     for k, v in value.items()}
            missing = [e for e in edges if e not in table]
            if missing:
                raise ConfigError(f"{name} missing entries for edges {missing}")
            out = np.array([table[e] for e in edges], dtype=float)
        else:
            out = np.full(len(edges), float(value))
        if not np.isfinite(out).all():
            raise ConfigError(f"{name} contains non-finite values")
        return out

    def edge_arrays(self, g: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(kappa, varrho, c0) aligned with g.edges; validates signs."""
        kappa = self._per_edge(self.kappa, g.edges, "kappa")
        varrho = self._per_edge(self.varrho, g.edges, "varrho")
        c0 = self._per_edge(self.c0, g.edges, "c0")
        if (kappa <= 0).any():
            raise ConfigError("kappa must be positive on every edge")
        if (varrho < 0).any():
            raise ConfigError("varrho must be nonnegative")
        return kappa, varrho, c0


def control_input(
    K: np.ndarray,
    own_estimate: np.ndarray,
    neighbor_estimates: Mapping[int, np.ndarray],
    weights: Mapping[int, float],
) -> np.ndarray:
    """u_i = K sum_j c_ij (est_i - est_j) over the agent's neighbours.

    The same sum serves the state-feedback, observer-based (estimates are
    chi_tilde) and leader-follower (leader included as a neighbour) laws.
    """
    u = np.zeros(K.shape[0])
    for j, c in weights.items():
        if j not in neighbor_estimates:
            raise ValueError(f"missing broadcast sample from neighbor {j}")
        u += c * (K @ (own_estimate - neighbor_estimates[j]))
    return u


def weight_rate(
    kappa: float,
    varrho: float,
    c: float,
    diff: np.ndarray,
    Gamma: np.ndarray,
) -> float:
    """cdot = kappa [-varrho c + diff' Gamma diff] for one edge.

    ``diff`` is the estimate disagreement across the edge; on a leader edge
    it is the follower-to-leader gap.
    """
    diff = np.atleast_1d(np.asarray(diff, dtype=float))
    return float(kappa * (-varrho * c + diff @ Gamma @ diff))


def trigger_value(
    error: np.ndarray,
    own_estimate: np.ndarray,
    neighbor_estimates: Mapping[int, np.ndarray],
    weights: Mapping[int, float],
    delta: float,
    mu: float,
    nu: float,
    Gamma: np.ndarray,
    t: float,
    leader: int | None = None,
) -> float:
    """Trigger function value for one agent; an event fires at f >= 0.

    With ``leader`` set (leader-follower mode, leader among the
    neighbours), the leader edge takes coefficient 1/2 on both the error
    and the disagreement term; every other edge takes 1 and 1/4.
    """
    error = np.atleast_1d(np.asarray(error, dtype=float))
    eqf = float(error @ Gamma @ error)
    f = -mu * math.exp(-nu * t)
    for j, c in weights.items():
        diff = np.atleast_1d(own_estimate - neighbor_estimates[j])
        q = float(diff @ Gamma @ diff)
        if leader is not None and j == leader:
            f += 0.5 * (1.0 + delta * c) * eqf - 0.5 * q
        else:
            f += (1.0 + delta * c) * eqf - 0.25 * q
    return f


def trigger_value_state(error, own_estimate, neighbor_estimates, weights,
                        delta, mu, nu, Gamma, t) -> float:
    """Leaderless state-feedback trigger."""
    return trigger_value(error, own_estimate, neighbor_estimates, weights,
                         delta, mu, nu, Gamma, t, leader=None)


#: observer-based trigger: identical shape with chi-estimates substituted
trigger_value_observer = trigger_value_state


def trigger_value_leader_follower(error, own_estimate, neighbor_estimates,
                                  weights, delta, mu, nu, Gamma, t,
                                  leader: int) -> float:
    """Follower trigger with the halved leader-edge coefficients."""
    return trigger_value(error, own_estimate, neighbor_estimates, weights,
                         delta, mu, nu, Gamma, t, leader=leader)


def observer_rate(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    F: np.ndarray,
    chi: np.ndarray,
    u: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Observer flow chidot = A chi + B u + F (C chi - y)."""
    if F is None:
        raise ValueError("observer gain F is required")
    chi = np.asarray(chi, dtype=float)
    return A @ chi + B @ np.atleast_1d(u) + F @ (C @ chi - np.atleast_1d(y))


class ProtocolKernel:
    """Network-stacked evaluation of the per-agent protocol formulas.

    Precomputes edge index arrays and the per-edge trigger coefficients so
    the engine can evaluate controls, weight rates and trigger values with
    a handful of vectorized operations. Inputs are the estimate stack Z
    (N x n), the live stack X or CHI, and the edge weight vector c (M,).
    """

    def __init__(self, graph: Graph, params: ProtocolParams,
                 K: np.ndarray, Gamma: np.ndarray):
        self.graph = graph
        self.params = params
        self.K = np.asarray(K, dtype=float)
        self.Gamma = np.asarray(Gamma, dtype=float)
        self.n_agents = graph.n_nodes
        self.leader = graph.leader
        self.kappa, self.varrho, self.c0 = params.edge_arrays(graph)
        m = len(graph.edges)
        self.ei = np.array([e[0] for e in graph.edges], dtype=int)
        self.ej = np.array([e[1] for e in graph.edges], dtype=int)
        is_leader_edge = np.zeros(m, dtype=bool)
        if self.leader is not None:
            is_leader_edge = (self.ei == self.leader) | (self.ej == self.leader)
        self.err_w = np.where(is_leader_edge, 0.5, 1.0)
        self.dis_w = np.where(is_leader_edge, 0.5, 0.25)
        # signed incidence (N x M): scatter sums become small matmuls
        self.inc = np.zeros((self.n_agents, m))
        self.inc[self.ei, np.arange(m)] = 1.0
        self.inc[self.ej, np.arange(m)] = -1.0
        self.inc_abs = np.abs(self.inc)
        self.degrees = self.inc_abs.sum(axis=1).astype(int)

    def edge_diffs(self, Z: np.ndarray) -> np.ndarray:
        """Estimate disagreement d_e = Z[i] - Z[j] per edge, (M, n)."""
        return Z[self.ei] - Z[self.ej]

    def edge_quadratic(self, d: np.ndarray) -> np.ndarray:
        """d' Gamma d per edge."""
        return ((d @ self.Gamma) * d).sum(axis=1)

    def controls(self, Z: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Stacked control inputs (N, p); the leader's input is zero."""
        return self.flow_terms(Z, c)[0]

    def weight_rates(self, Z: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Stacked adaptation rates (M,)."""
        return self.flow_terms(Z, c)[1]

    def flow_terms(self, Z: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Control inputs (N, p) and weight rates (M,) sharing the edge work."""
        d = self.edge_diffs(Z)
        q = self.edge_quadratic(d)
        cdot = self.kappa * (-self.varrho * c + q)
        s = self.inc @ (c[:, None] * d)
        if self.leader is not None:
            s[self.leader] = 0.0
        return s @ self.K.T, cdot

    def trigger_values(self, live: np.ndarray, Z: np.ndarray,
                       c: np.ndarray, t: float) -> np.ndarray:
        """Stacked trigger values (N,); the leader's entry is -inf.

        ``live`` is the stack the broadcasts sample from: X for state
        feedback and leader-follower runs, CHI for observer runs.
        """
        err = Z - live
        eqf = ((err @ self.Gamma) * err).sum(axis=1)
        q = self.edge_quadratic(self.edge_diffs(Z))
        err_coef = self.inc_abs @ (self.err_w * (1.0 + self.params.delta * c))
        dis = self.inc_abs @ (self.dis_w * q)
        f = err_coef * eqf - dis - self.params.mu * math.exp(-self.params.nu * t)
        if self.leader is not None:
            f[self.leader] = -np.inf
        return f
