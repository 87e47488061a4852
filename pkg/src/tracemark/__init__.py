"""tracemark: traitor-tracing watermarks for simple PDF documents.

Three cooperating channels hide a per-recipient payload in a page of text:

* linguistic: synonym substitution over a keyed homograph graph,
* structural: inter-word space statistics decodable without the original,
* fontmark: a self-inverting permutation of the embedded font's character
  map, with content strings rewritten so rendering is unchanged.

Payloads are sealed (encrypt-then-MAC) and protected by Reed-Solomon parity
before embedding; a small append-only download log resolves recovered ids
back to recipients.
"""

__version__ = "0.1.0"

from .errors import TracemarkError

__all__ = ["TracemarkError", "__version__"]
