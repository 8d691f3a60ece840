from .ca import (
    CA_COMMON_NAME,
    CertError,
    EphemeralCert,
    PlatformCA,
    ROLES,
    generate_identity_key,
    load_private_key,
    save_private_key,
    verify_cert,
)
from .channel import (
    CertUseRegistry,
    ChannelIntegrityError,
    FrameError,
    HandshakeError,
    MAX_FRAME,
    SecureChannel,
    recv_raw_frame,
    secure_handshake,
    send_raw_frame,
    tcp_connect,
    tcp_listen,
)
