"""Versioned external-memory dictionaries: the stratified doubling array and baselines."""
from .engine import SDA, SdaConfig, InvariantViolation
from .store import BlockDevice
from .versions import VersionTree

__all__ = ["SDA", "SdaConfig", "InvariantViolation", "BlockDevice", "VersionTree"]
