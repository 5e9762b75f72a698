"""Simulator for a polarization-encoded QKD star network with a relay that
switches between a trusted BB84 + parity-relay mode and an untrusted
MDI-QKD Bell-state-measurement mode."""

from .bb84 import DistillParams, KeyMaterial, KeyRole, ProtocolAbort, prepare
from .channel import ChannelModel, EveConfig, SourceKind, SourceModel, expected_detections, transmit
from .netsim import ConfigError, ScenarioConfig, SessionReport, load_config, run_session, sweep
from .optics import (
    Basis,
    BsmOutcome,
    DetectionPattern,
    DetectorId,
    DetectorModel,
    PolarizationState,
    TwoPhotonDistribution,
    bb84_measure,
    bsm_distribution,
    classify,
    jones_of,
    observe,
    rotate,
)
from .relay import RelayMode, RelayNode, SwitchSchedule, infer_peer_key, schedule, xor_relay

__version__ = "0.1.0"
