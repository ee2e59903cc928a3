"""Workload applications implemented as registered native behaviors."""

from __future__ import annotations

from .. import protocol
from ..vm import BehaviorRegistry
from . import kitties, payload, scoin


def standard_registry() -> BehaviorRegistry:
    """Registry with every built-in behavior; shared by all chains of a run."""
    registry = BehaviorRegistry()
    registry.register(scoin.token_behavior())
    registry.register(scoin.account_behavior())
    registry.register(kitties.game_behavior())
    registry.register(kitties.cat_behavior())
    registry.register(payload.state_words_behavior())
    registry.register(protocol.relay_behavior())
    registry.register(protocol.relay_factory_behavior())
    return registry
