"""Privacy-preserving collaborative inference over additively shared models.

Model owners split feed-forward network parameters between two non-colluding
workers; a client splits its input the same way; workers evaluate the network
over shares with dealer-issued correlated randomness; a trusted aggregator
reconstructs only the final outputs, aggregates them under Laplace noise, and
returns an encrypted label.
"""

from .ring import (DEFAULT_PRIME, DEFAULT_SCALE, EncodingRangeError, FixedPointCodec,
                   ModulusMismatchError, RingElement, RingError, RingModulus)
from .sharing import (AdditiveShare, ProtocolError, TripleReuseError,
                      TruncationRangeError, reconstruct, split_secret)
from .model import (ModelParameters, ModelParseError, NetworkSpec, forward_fixed,
                    forward_float, generate_fixture, load_model, save_model)
from .dp import BudgetExhaustedError, BudgetLedger, PrivacyParams, aggregate
from .protocol import SessionConfig
from .session import SessionReport, run_session

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PRIME", "DEFAULT_SCALE", "RingModulus", "RingElement", "FixedPointCodec",
    "RingError", "ModulusMismatchError", "EncodingRangeError",
    "AdditiveShare", "split_secret", "reconstruct",
    "ProtocolError", "TripleReuseError", "TruncationRangeError",
    "NetworkSpec", "ModelParameters", "ModelParseError",
    "forward_float", "forward_fixed", "generate_fixture", "load_model", "save_model",
    "PrivacyParams", "BudgetLedger", "BudgetExhaustedError", "aggregate",
    "SessionConfig", "SessionReport", "run_session",
    "__version__",
]
