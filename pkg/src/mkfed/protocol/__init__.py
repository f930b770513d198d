"""Five-step aggregation round: message schema, state machines, transports."""

from .config import FederationConfig, RoundPlan, parse_config_file
from .messages import SERVER_ID, MessageKind, RoundMessage
from .server import FederationServer, ServerPhase
from .device import FederationDevice
from .transport import run_loopback_session, run_tcp_device, TcpServerRunner
