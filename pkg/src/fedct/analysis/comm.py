"""Bytes on the wire, per client and per direction."""

from __future__ import annotations

import math
from dataclasses import dataclass

LABEL_PROTOCOLS = ("fedct", "dp-fedct")
SILENT_PROTOCOLS = ("local-only", "centralized")


class CommError(ValueError):
    pass


@dataclass(frozen=True)
class CommSpec:
    protocol: str
    u_size: int = 0
    num_classes: int = 0
    parameter_count: int = 0
    bits_per_parameter: int = 32
    rounds: int = 1
    period: int = 1

    def __post_init__(self):
        known = LABEL_PROTOCOLS + SILENT_PROTOCOLS + ("fedavg", "pate")
        if self.protocol not in known:
            raise CommError(f"unknown protocol {self.protocol!r}")
        if self.rounds < 1 or not 1 <= self.period <= self.rounds:
            raise CommError("need rounds >= 1 and 1 <= period <= rounds")
        if self.protocol in LABEL_PROTOCOLS + ("pate",):
            if self.u_size < 1 or self.num_classes < 2:
                raise CommError(f"{self.protocol} needs u_size >= 1 and num_classes >= 2")
        if self.protocol == "fedavg":
            if self.parameter_count < 1 or self.bits_per_parameter < 1:
                raise CommError("fedavg needs parameter_count >= 1 and bits_per_parameter >= 1")

    @property
    def communication_rounds(self) -> int:
        if self.protocol in SILENT_PROTOCOLS:
            return 0
        if self.protocol == "pate":
            return 1
        return self.rounds // self.period


def label_message_bytes(u_size: int, num_classes: int) -> int:
    """One-hot label matrix of ``u_size x num_classes`` bits."""
    return math.ceil(u_size * num_classes / 8)


def packed_label_message_bytes(u_size: int, num_classes: int) -> int:
    return math.ceil(u_size * max(1, math.ceil(math.log2(num_classes))) / 8)


def communication_cost(spec: CommSpec) -> dict:
    if spec.protocol in SILENT_PROTOCOLS:
        per_round = 0
    elif spec.protocol == "fedavg":
        per_round = math.ceil(spec.parameter_count * spec.bits_per_parameter / 8)
    else:
        per_round = label_message_bytes(spec.u_size, spec.num_classes)
    out = {
        "protocol": spec.protocol,
        "bytes_per_round": per_round,
        "communication_rounds": spec.communication_rounds,
        "total_bytes": per_round * spec.communication_rounds,
    }
    if spec.protocol in LABEL_PROTOCOLS + ("pate",):
        out["packed_bytes_per_round"] = packed_label_message_bytes(spec.u_size, spec.num_classes)
    return out
