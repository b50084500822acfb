"""Python bindings for warp2: sealed headers, receipts, inbox and client engine."""

from ._warp2 import (
    HEADER_CIPHERTEXT_SIZE,
    HEADER_SIZE,
    SEAL_OVERHEAD,
    Client,
    Error,
    Header,
    Inbox,
    KeyPair,
    canonical_serialize,
    compose,
    estimate,
    generate_keypair,
    open,
    parse_header,
    receipt_lock,
    receipt_secret,
    seal,
    sha256,
    verify_and_open,
)


def error_code(exc: Error) -> str:
    """Stable snake_case code of a warp2.Error."""
    return exc.args[0]


__all__ = [
    "HEADER_CIPHERTEXT_SIZE",
    "HEADER_SIZE",
    "SEAL_OVERHEAD",
    "Client",
    "Error",
    "Header",
    "Inbox",
    "KeyPair",
    "canonical_serialize",
    "compose",
    "error_code",
    "estimate",
    "generate_keypair",
    "open",
    "parse_header",
    "receipt_lock",
    "receipt_secret",
    "seal",
    "sha256",
    "verify_and_open",
]
