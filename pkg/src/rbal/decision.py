"""Single-step maintenance decision process and value of perfect information.

The decision process is a small influence diagram: the current health state
``y_t`` carries a utility, the decision ``d_t`` carries a cost, and the next
state ``y_{t+1}`` is drawn from a transition table conditioned on both.
All states are 0-indexed internally (state 0 is "normal"); actions are
0 (do nothing) and 1 (repair).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

ROW_SUM_TOL = 1e-9
RENORMALIZE_SLACK = 0.05

DO_NOTHING = 0
REPAIR = 1


class DecisionProcessError(ValueError):
    """Raised for malformed decision-process tables."""


@dataclass(frozen=True)
class DecisionProcess:
    """Transition tensor ``[y, y', d]``, utilities and inspection cost."""

    transition: np.ndarray
    state_utility: np.ndarray
    action_utility: np.ndarray
    inspection_cost: float

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        U = np.array(self.state_utility, dtype=float)
        A = np.array(self.action_utility, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[1]:
            raise DecisionProcessError(f"transition must be K x K x M, got shape {T.shape}")
        K, _, M = T.shape
        if U.shape != (K,):
            raise DecisionProcessError(f"state_utility must have length {K}")
        if A.shape != (M,):
            raise DecisionProcessError(f"action_utility must have length {M}")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(A))):
            raise DecisionProcessError("utilities must be finite")
        if np.any(T < 0):
            raise DecisionProcessError("transition probabilities must be non-negative")
        sums = T.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            y, d = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
            raise DecisionProcessError(
                f"transition row (y={y + 1}, d={d}) sums to {sums[y, d]:.6g}, not 1"
            )
        if not np.isfinite(self.inspection_cost) or self.inspection_cost < 0:
            raise DecisionProcessError("inspection_cost must be a finite value >= 0")
        for arr in (T, U, A):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "state_utility", U)
        object.__setattr__(self, "action_utility", A)
        object.__setattr__(self, "inspection_cost", float(self.inspection_cost))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[2]

    def with_inspection_cost(self, cost: float) -> "DecisionProcess":
        return DecisionProcess(self.transition, self.state_utility, self.action_utility, cost)

    def to_dict(self) -> dict:
        return {
            "transition": self.transition.tolist(),
            "state_utility": self.state_utility.tolist(),
            "action_utility": self.action_utility.tolist(),
            "inspection_cost": self.inspection_cost,
        }

    @classmethod
    def from_dict(cls, doc: dict, renormalize: bool = False) -> "DecisionProcess":
        try:
            T = np.array(doc["transition"], dtype=float)
            U = doc["state_utility"]
            A = doc["action_utility"]
            cost = float(doc["inspection_cost"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DecisionProcessError(f"invalid decision process document: {exc}") from exc
        if renormalize:
            T = renormalize_rows(T)
        return cls(T, U, A, cost)


def renormalize_rows(transition: np.ndarray, slack: float = RENORMALIZE_SLACK) -> np.ndarray:
    """Rescale transition rows whose sum is within ``slack`` of 1.

    Rows further off than ``slack`` are left alone so that validation still
    rejects them.
    """
    T = np.array(transition, dtype=float)
    if T.ndim != 3:
        raise DecisionProcessError(f"transition must be K x K x M, got shape {T.shape}")
    sums = T.sum(axis=1, keepdims=True)
    near = np.abs(sums - 1.0) <= slack
    return np.where(near & (sums > 0), T / np.where(sums > 0, sums, 1.0), T)


def z24_default(inspection_cost: float = 30.0) -> DecisionProcess:
    """The four-state, two-action bridge maintenance process.

    Two printed rows are repaired so every row is a distribution: the
    cold-state row under "do nothing" takes the same damage-onset
    probabilities as the normal row (0.015, 0.005), and the normal-state row
    under "repair" becomes (0.7143, 0.2857, 0, 0).
    """
    do_nothing = np.array([
        [0.70, 0.28, 0.015, 0.005],
        [0.43, 0.55, 0.015, 0.005],
        [0.00, 0.00, 0.80, 0.20],
        [0.00, 0.00, 0.00, 1.00],
    ])
    repair = np.array([
        [0.7143, 0.2857, 0.00, 0.00],
        [0.4388, 0.5612, 0.00, 0.00],
        [0.5996, 0.3904, 0.01, 0.00],
        [0.5996, 0.3904, 0.00, 0.01],
    ])
    transition = np.stack([do_nothing, repair], axis=2)
    return DecisionProcess(
        transition=transition,
        state_utility=np.array([10.0, 10.0, -50.0, -1000.0]),
        action_utility=np.array([0.0, -100.0]),
        inspection_cost=inspection_cost,
    )


def load_decision_process(path, renormalize: bool = False) -> DecisionProcess:
    with open(Path(path), encoding="utf-8") as fh:
        doc = json.load(fh)
    return DecisionProcess.from_dict(doc, renormalize=renormalize)


def _check_belief(belief, dp: DecisionProcess) -> np.ndarray:
    b = np.asarray(belief, dtype=float)
    if b.shape[-1] != dp.n_states:
        raise ValueError(
            f"belief has {b.shape[-1]} states but the decision process has {dp.n_states}"
        )
    return b


def state_action_values(dp: DecisionProcess) -> np.ndarray:
    """K x M table of U(y) + E[U(y') | y, d] + U(d) for a known current state."""
    future = np.einsum("ijd,j->id", dp.transition, dp.state_utility)
    return dp.state_utility[:, None] + future + dp.action_utility[None, :]


def expected_utilities(belief, dp: DecisionProcess) -> np.ndarray:
    """Expected utility of every action; ``belief`` may be batched (..., K)."""
    b = _check_belief(belief, dp)
    return b @ state_action_values(dp)


def expected_utility(belief, action: int, dp: DecisionProcess) -> float:
    if not 0 <= action < dp.n_actions:
        raise ValueError(f"action {action} outside 0..{dp.n_actions - 1}")
    return float(expected_utilities(belief, dp)[action])


def meu(belief, dp: DecisionProcess) -> Tuple[int, float]:
    """Best action and its expected utility; ties go to the lower action index."""
    eu = expected_utilities(belief, dp)
    # np.argmax returns the first maximum
    action = int(np.argmax(eu))
    return action, float(eu[action])


def meu_perfect_info(belief, dp: DecisionProcess) -> float:
    b = _check_belief(belief, dp)
    return float(b @ state_action_values(dp).max(axis=1))


def evpi(belief, dp: DecisionProcess) -> float:
    return meu_perfect_info(belief, dp) - meu(belief, dp)[1]


def evpi_batch(beliefs, dp: DecisionProcess) -> np.ndarray:
    """Vectorised EVPI over an (n, K) array of beliefs."""
    V = state_action_values(dp)
    b = _check_belief(beliefs, dp)
    return b @ V.max(axis=1) - (b @ V).max(axis=-1)


def decide_batch(beliefs, dp: DecisionProcess) -> np.ndarray:
    return np.argmax(expected_utilities(beliefs, dp), axis=-1)


def should_query(evpi_value: float, dp: DecisionProcess) -> bool:
    """Inspect only when information is worth strictly more than it costs."""
    return bool(evpi_value > dp.inspection_cost)
