from .cow import CowBTree
from .oracle import OracleStore

__all__ = ["CowBTree", "OracleStore"]
