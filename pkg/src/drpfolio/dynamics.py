"""Wealth-dependent evolution of loss aversion and reference return.

Between rebalances the investor's attitude may react to realized wealth:

* ``CONSTANT`` keeps the base parameters.
* ``LOSS_REACTIVE`` raises loss aversion after losing money: with
  ``ratio = W_prev / W_now > 1`` it sets ``lam_t = lam0 + (ratio - 1)``
  and scales the reference return to ``ratio * ref0`` (recovering the
  loss restores the baseline).
* ``GAIN_REACTIVE`` protects gains instead: after a gain, with
  ``ratio = W_now / W_prev > 1``, ``lam_t = lam0 + (ratio - 1)`` and
  ``ref_t = ratio * ref0``.

Both updates are continuous at ``W_now == W_prev`` and never drop below
the base values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .exceptions import NonpositiveWealthError, ValidationError

__all__ = ["InvestorType", "InvestorState", "update_aversion"]


class InvestorType(enum.Enum):
    CONSTANT = "constant"
    LOSS_REACTIVE = "loss"
    GAIN_REACTIVE = "gain"


@dataclass(frozen=True)
class InvestorState:
    """Base attitude plus the two wealth observations straddling a rebalance."""

    investor_type: InvestorType
    base_loss_aversion: float
    base_reference: float
    wealth_prev: float
    wealth_now: float

    def __post_init__(self):
        if not isinstance(self.investor_type, InvestorType):
            object.__setattr__(self, "investor_type",
                               InvestorType(self.investor_type))
        if self.base_loss_aversion <= 0.0:
            raise ValidationError("base loss aversion must be positive")
        if self.base_reference <= 0.0:
            raise ValidationError("base reference return must be positive")
        if self.wealth_prev <= 0.0 or self.wealth_now <= 0.0:
            raise NonpositiveWealthError("wealth must stay positive")


def update_aversion(state: InvestorState):
    """Return the updated ``(loss_aversion, reference_return)`` pair."""
    lam0 = state.base_loss_aversion
    ref0 = state.base_reference
    kind = state.investor_type
    if kind is InvestorType.CONSTANT:
        return lam0, ref0
    if kind is InvestorType.LOSS_REACTIVE:
        if state.wealth_now < state.wealth_prev:
            ratio = state.wealth_prev / state.wealth_now
            return lam0 + (ratio - 1.0), ratio * ref0
        return lam0, ref0
    if kind is InvestorType.GAIN_REACTIVE:
        if state.wealth_now > state.wealth_prev:
            ratio = state.wealth_now / state.wealth_prev
            return lam0 + (ratio - 1.0), ratio * ref0
        return lam0, ref0
    raise ValidationError(f"unknown investor type {kind!r}")
