"""Self-contained IoT testbed in a box.

A virtual fleet of city-scale sensor nodes with radios, ambient sensing,
per-node agents, an artifact registry with vulnerability vetting, calendar
reservations, gated queues, and full experiment orchestration, all driven
by a discrete-event clock so runs are fast and reproducible.
"""

from .clock import DEFAULT_EPOCH, EventScheduler
from .config import PlatformConfig
from .orchestrator import Platform

__version__ = "0.1.0"

__all__ = ["DEFAULT_EPOCH", "EventScheduler", "PlatformConfig", "Platform",
           "__version__"]
