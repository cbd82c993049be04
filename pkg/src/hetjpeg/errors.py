"""Exception hierarchy for the decoder and scheduler."""


class HetJpegError(Exception):
    """Base class for all package errors."""


# --- stream / header parsing ---

class MissingMarker(HetJpegError):
    """A required marker (SOI, SOF, SOS, EOI) was not found."""


class UnsupportedFeature(HetJpegError):
    """The stream is valid JPEG but outside the supported baseline subset."""


class CorruptSegment(HetJpegError):
    """A segment length or payload is inconsistent with the stream."""


class InvalidTable(HetJpegError):
    """A Huffman table specification overflows its canonical code space."""


# --- entropy decoding ---

class BitstreamExhausted(HetJpegError):
    """Ran out of entropy-coded bits in the middle of a block."""


class BadCode(HetJpegError):
    """No Huffman symbol matches the next 16 bits of the stream."""


class MarkerInScan(HetJpegError):
    """Hit a non-restart marker inside entropy-coded data."""


# --- performance model ---

class ZeroArea(HetJpegError):
    """Entropy density requested for a zero-pixel image."""


class SingularFit(HetJpegError):
    """Polynomial regression design matrix is rank deficient."""


class InsufficientSamples(HetJpegError):
    """Too few profiling samples for the requested model degree."""


class ZeroEstimate(HetJpegError):
    """Density update requested with a zero Huffman-time estimate."""


class ZeroHuffman(HetJpegError):
    """Speedup bound requested from a report with zero Huffman time."""


# --- execution ---

class LaneShutDown(HetJpegError):
    """Work submitted to a lane that has been shut down."""


class PlanInfeasible(HetJpegError):
    """The image cannot be scheduled (smaller than one MCU row)."""
