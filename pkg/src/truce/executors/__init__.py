from .errors import ExecutorAbort, ExecutorError, RefusalError
from .flow import ARTIFACTS, FLOW_POLICY, FlowEvent, FlowTranscript, PRINCIPALS, scan_flows
from .sources import InlineWeights, RemoteEndpoint, check_mode_compatibility
from .modelapi import StubModelServer, run_model_api
from .plaintext import TtpExecutor, run_dataset_owner, run_ttp
from .enclave import (
    AttestationRoot,
    ENCLAVE_BUILD_ID,
    Enclave,
    compute_measurement,
    encrypt_to_enclave,
    run_tee,
    serve_enclave,
    socket_channel,
    verify_attestation,
)
from .mpcmode import run_mpc
