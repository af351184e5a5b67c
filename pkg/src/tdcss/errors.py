"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end and,
for the storage errors, an ``http_status`` used by the service.
"""


class TdcssError(Exception):
    exit_code = 1
    http_status = 500


class DecodeError(TdcssError, ValueError):
    """Malformed, non-canonical or out-of-group encoding."""

    exit_code = 3
    http_status = 400


class UnsupportedParameters(TdcssError, ValueError):
    exit_code = 2
    http_status = 400


class PolicySyntaxError(TdcssError, ValueError):
    exit_code = 2
    http_status = 400

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownAttribute(TdcssError, ValueError):
    exit_code = 2
    http_status = 400


class PolicyNotSatisfied(TdcssError):
    exit_code = 5
    http_status = 403


class TamperDetected(TdcssError):
    exit_code = 4
    http_status = 422


class ChecksumMismatch(TdcssError):
    """A decrypted granule failed its frame checksum (wrong task or key)."""

    exit_code = 13
    http_status = 422


# -- cloud storage -----------------------------------------------------------

class StoreError(TdcssError):
    pass


class UnknownCapsule(StoreError, KeyError):
    exit_code = 9
    http_status = 404

    def __str__(self):
        return Exception.__str__(self)


class DuplicateCapsule(StoreError):
    exit_code = 10
    http_status = 409


class IntegrityFailure(StoreError):
    """A capsule uploaded to the store does not verify against its DCI."""

    exit_code = 11
    http_status = 422


class TokenRejected(StoreError):
    """Download token refused at registration (already expired)."""

    exit_code = 12
    http_status = 422


class TokenMismatch(StoreError):
    exit_code = 6
    http_status = 403


class TokenExpired(StoreError):
    exit_code = 7
    http_status = 410


class TokenConsumed(StoreError):
    exit_code = 8
    http_status = 410


STORE_ERRORS = {
    cls.__name__: cls
    for cls in (UnknownCapsule, DuplicateCapsule, IntegrityFailure, TokenRejected,
                TokenMismatch, TokenExpired, TokenConsumed, DecodeError)
}
