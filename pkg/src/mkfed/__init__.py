"""Privacy-preserving federated averaging over multi-key lattice encryption.

Layers, bottom up: exact ring arithmetic with an NTT fast path (`ring`,
`ntt`), fixed-point real-vector encoding (`encoding`), the additive
multi-key schemes (`mkhe`), plain federated averaging (`fedavg`), the
five-step aggregation round over loopback/TCP/HTTP transports (`protocol`,
`service`), and the benchmark harness plus CLI (`bench`, `cli`).
"""

from .errors import (
    ConfigurationError,
    EncodingOverflowError,
    FrameError,
    MixedKeyError,
    MkfedError,
    ProtocolError,
    QuorumError,
    ShareBindingError,
    TrainingDivergedError,
)
from .params import EncodingParams, RingParams, PRESETS
from .ring import RingElement

__version__ = "0.1.0"
