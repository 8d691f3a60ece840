from .channels import Channel, ChannelClosed, DuplexChannel, SocketFrameChannel
from .engine import (
    MASKED_REVEAL_KINDS,
    PartyEngine,
    Transcript,
    TAG_ACCURACY,
    TAG_BEAVER,
    TAG_BIT_AND,
    TAG_BIT_MASK,
    TAG_COMPARE,
    TAG_CONFIG,
    TAG_INPUT,
    TAG_Z,
)
from .randomness import (
    Budget,
    PartyBundle,
    Pool,
    ProtocolAbort,
    budget_for,
    dealer_generate,
    deserialize_bundle,
    serialize_bundle,
)
from .session import (
    MpcRunResult,
    MpcSessionConfig,
    analytic_payload_bytes,
    classify_reveals,
    labels_to_onehot_bits,
    run_inference_party,
    run_local_mpc,
)
from .sharing import reconstruct, reconstruct_bits, share, share_bits, uniform_ring
