"""Exception taxonomy shared across the package."""


class MkfedError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MkfedError):
    """Invalid or mismatched parameters (ring params, domains, presets, lengths)."""


class EncodingOverflowError(MkfedError):
    """Scaled plaintext magnitude too large for the ciphertext modulus."""


class MixedKeyError(MkfedError):
    """Ciphertexts under different keys combined into one aggregate."""


class ShareBindingError(MkfedError):
    """Decryption share bound to a different ciphertext sum, or produced by a non-contributor."""


class QuorumError(MkfedError):
    """Merge attempted without exactly one share per contributor."""

    def __init__(self, message, missing=(), extra=()):
        super().__init__(message)
        self.missing = tuple(missing)
        self.extra = tuple(extra)


class FrameError(MkfedError):
    """Wire frame or message body failed to decode."""


class ProtocolError(MkfedError):
    """Round state machine violation or aborted session."""


class TrainingDivergedError(MkfedError):
    """Local training produced a non-finite loss."""
