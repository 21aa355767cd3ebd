"""Blockchain-mediated access control for stored surveillance video.

Subpackages and modules:

* :mod:`sepris.codec` -- the DCT/AES/block-shuffle frame cipher
* :mod:`sepris.metrics` -- statistical security measurements on cipher images
* :mod:`sepris.envelope` -- sign-then-encrypt message envelopes
* :mod:`sepris.ledger` -- proof-of-work chain with encrypted block bodies
* :mod:`sepris.contract` -- UID registry, ACL evaluation, access codes
* :mod:`sepris.storage` -- off-chain video storage site
* :mod:`sepris.network` -- deterministic multi-node protocol simulation
"""

__version__ = "0.1.0"
