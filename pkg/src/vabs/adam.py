"""Functional ADAM optimizer over named parameter collections.

State and parameters are plain dicts keyed by parameter name; arrays may be
numpy or torch tensors since only elementwise arithmetic is used.  Each step
produces fresh dicts, leaving the inputs untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import InvalidConfigError, ShapeMismatchError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidConfigError(f"{name} must lie in [0, 1)")
        if self.epsilon <= 0:
            raise InvalidConfigError("epsilon must be positive")


@dataclass(frozen=True)
class AdamState:
    step: int = 0
    m: dict[str, Any] = field(default_factory=dict)
    v: dict[str, Any] = field(default_factory=dict)


def init_adam_state(params: Mapping[str, Any]) -> AdamState:
    """Zeroed first and second moments matching the parameter shapes."""
    return AdamState(
        step=0,
        m={name: p * 0 for name, p in params.items()},
        v={name: p * 0 for name, p in params.items()},
    )


def adam_step(
    params: Mapping[str, Any],
    grads: Mapping[str, Any],
    state: AdamState,
    config: AdamConfig = AdamConfig(),
) -> tuple[dict[str, Any], AdamState]:
    """One bias-corrected moment update; epsilon sits outside the square root."""
    if set(params) != set(grads):
        raise ShapeMismatchError(
            f"parameter/gradient name mismatch: "
            f"{sorted(set(params) ^ set(grads))}"
        )
    t = state.step + 1
    correction1 = 1.0 - config.beta1 ** t
    correction2 = 1.0 - config.beta2 ** t
    new_params: dict[str, Any] = {}
    new_m: dict[str, Any] = {}
    new_v: dict[str, Any] = {}
    for name, p in params.items():
        g = grads[name]
        if tuple(p.shape) != tuple(g.shape):
            raise ShapeMismatchError(
                f"{name}: parameter shape {tuple(p.shape)} vs gradient "
                f"shape {tuple(g.shape)}"
            )
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = p - config.learning_rate * m_hat / (
            v_hat ** 0.5 + config.epsilon
        )
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)
