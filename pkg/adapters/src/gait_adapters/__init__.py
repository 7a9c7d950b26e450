"""Thin executables conforming to the regait backend protocol.

Each adapter is invoked as ``<adapter> --manifest <path>`` and writes one
output file per manifest request, nothing else. Diagnostics and per-image
timing go to standard error; exit code 0 means the manifest was processed
(individual request failures are reported and skipped), 3 means a startup,
configuration or protocol error.

The analysis pipeline never imports this package; the manifest file format
is the only coupling.
"""

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_PROTOCOL_ERROR = 3
