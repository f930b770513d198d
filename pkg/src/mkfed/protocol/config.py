"""Federation run configuration and the key=value config file format."""

from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigurationError


@dataclass(frozen=True)
class RoundPlan:
    """What every participant must agree on for the training rounds."""

    devices: int
    rounds: int
    local_epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str


def default_rounds(local_epochs: int) -> int:
    # convergence horizons used throughout: 10 rounds at L=20, 5 at L=40
    return 5 if local_epochs >= 40 else 10


@dataclass(frozen=True)
class FederationConfig:
    preset: str = "small"
    devices: int = 10
    rounds: int | None = None
    local_epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "sgd"
    seed: int = 0
    listen_address: str = "127.0.0.1:7710"
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.devices < 2:
            raise ConfigurationError("a federation needs at least 2 devices")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigurationError("rounds must be positive")
        if self.timeout_s <= 0:
            raise ConfigurationError("timeout must be positive")

    @property
    def effective_rounds(self) -> int:
        return self.rounds if self.rounds is not None else default_rounds(self.local_epochs)

    def plan(self) -> RoundPlan:
        return RoundPlan(
            self.devices,
            self.effective_rounds,
            self.local_epochs,
            self.batch_size,
            self.learning_rate,
            self.optimizer,
        )

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigurationError(f"bad listen address {self.listen_address!r}")
        return host, int(port)


_INT_KEYS = {"devices", "rounds", "local_epochs", "batch_size", "seed"}
_FLOAT_KEYS = {"learning_rate", "timeout_s"}


def parse_config_file(path) -> dict:
    """Line-oriented key=value file; # starts a comment."""
    values = {}
    known = {f.name for f in fields(FederationConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path=None, **overrides) -> FederationConfig:
    values = parse_config_file(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return FederationConfig(**values)
