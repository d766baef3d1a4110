"""Attribution-weighted repair of unsolvable tile levels."""

from tilerepair.level import Level, TileKind, parse_level, serialize_level

__version__ = "0.1.0"

__all__ = ["Level", "TileKind", "parse_level", "serialize_level", "__version__"]
