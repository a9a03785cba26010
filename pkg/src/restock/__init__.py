"""Inventory replenishment RL lab.

A desk-scale testbed for multi-product store replenishment: a normalized
shelf-unit environment with decomposed business rewards, DQN agents with
general-value-function heads and directed exploration, a proportional
order-up-to heuristic, and a perfect-information LP bound.
"""

__version__ = "0.1.0"
