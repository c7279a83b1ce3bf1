"""Incremental L2 gain machinery: LMI builders, certificates, oracles."""

from .certificates import (
    DissipationReport,
    GainCertificate,
    LoopMatrices,
    l2minus_gain_certificate,
    l2plus_gain_certificate,
    random_trajectory_pairs,
    verify_dissipation,
)
from .lmis import (
    LmiConstraint,
    build_delta_iss_ctrl_lmi,
    build_iss_observer_lmi,
    build_l2minus_lmi,
    build_l2plus_lmi,
    build_anchored_detection_lmi,
    build_anchored_codesign_lmi,
    build_anchored_perf_lmi,
    build_anchored_observer_lmi,
    build_perf_l2plus,
    build_watermark_l2minus,
    detection_lmi_matrix,
    perf_lmi_matrix,
    observer_iss_matrix,
    detection_lmi_expanded,
    perf_lmi_schur,
    observer_lmi_schur,
    codesign_block_schur,
)
from .oracle import lti_frequency_gain_oracle

__all__ = [
    "DissipationReport",
    "GainCertificate",
    "LoopMatrices",
    "LmiConstraint",
    "build_delta_iss_ctrl_lmi",
    "build_iss_observer_lmi",
    "build_l2minus_lmi",
    "build_l2plus_lmi",
    "build_anchored_detection_lmi",
    "build_anchored_codesign_lmi",
    "build_anchored_perf_lmi",
    "build_anchored_observer_lmi",
    "build_perf_l2plus",
    "build_watermark_l2minus",
    "detection_lmi_matrix",
    "perf_lmi_matrix",
    "l2minus_gain_certificate",
    "l2plus_gain_certificate",
    "lti_frequency_gain_oracle",
    "observer_iss_matrix",
    "detection_lmi_expanded",
    "perf_lmi_schur",
    "observer_lmi_schur",
    "random_trajectory_pairs",
    "verify_dissipation",
    "codesign_block_schur",
]
