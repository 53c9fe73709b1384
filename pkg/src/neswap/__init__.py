"""Named entity swapping: anonymize a chunked text corpus by exchanging
same-category named entities between semantically similar chunks, then measure
what the release costs in embedding utility and buys in disclosure risk."""

__version__ = "0.1.0"
