from .bounds import confidence_bound, required_kappa
from .commitments import (
    SALT_LEN,
    BindingViolation,
    Commitment,
    CommitmentError,
    CommitmentSet,
    MerkleProof,
    MerkleRoot,
    commit_dataset,
    commit_point,
    derive_salts,
    merkle_prove,
    merkle_root,
    merkle_verify,
    open_and_verify,
    verify_committed_dataset,
)
from .session import (
    AuditOwner,
    AuditSession,
    AuditState,
    AuditTest,
    AuditVariant,
    CompositeTest,
    LocalOwner,
    NoDuplicateTest,
    NonDegenerateTest,
    SchemaTest,
    default_test,
    evaluate_sample,
    run_audit,
    sample_indices,
)
from .evaluation import accuracy_fn, accuracy_threshold_fn, audit_as_evaluation, recall_floor_fn
