"""HTTP service wrapping the aggregation server, plus the device client."""

from .app import Coordinator, create_app
from .client import HttpDeviceRunner
