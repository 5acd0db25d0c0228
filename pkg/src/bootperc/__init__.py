"""Two-neighbour bootstrap percolation: simulation, droplet geometry and experiments."""
from __future__ import annotations

__version__ = "0.1.0"
