"""Exact and simulated goodput of stop-and-wait over a bursty bit-error link
when messages are segmented into packets."""
from .analysis import (
    GoodputReport,
    TimingConfig,
    attempts_pmf,
    attempts_pmf_iid,
    expected_attempts,
    expected_time_given_size,
    goodput,
    goodput_const_approx,
    optimal_payload,
    retry_kernel,
)
from .channel import (
    GilbertParams,
    StateDist,
    from_mean_ber_and_burst,
    matrix_power,
    mean_ber,
    stationary,
    success_matrix,
    transition_matrix,
)
from .segmentation import (
    DiscreteMessageDist,
    PacketMix,
    SegmentationConfig,
    discretize,
    edge_probability,
    mean_packet_size,
    packet_mix,
    segment_message,
)
from .simulator import SimConfig, SimReport, StateMode

__version__ = "0.1.0"
