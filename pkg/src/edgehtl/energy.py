"""Radio catalog and transmission-energy accounting.

Energy of one transmission is ``P * t`` with ``P`` in mW and ``t = bits / rate``
in seconds, so every figure in this module is in millijoules.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .errors import ConfigurationError

FLOAT_BITS = 64
MODEL_HEADER_BITS = 128


@dataclass(frozen=True)
class WirelessTech:
    name: str
    tx_power: float  # mW
    rx_power: float  # mW
    uplink_rate: float  # bps
    downlink_rate: float  # bps

    def __post_init__(self):
        if min(self.tx_power, self.rx_power, self.uplink_rate, self.downlink_rate) <= 0:
            raise ConfigurationError(f"{self.name}: all radio parameters must be positive")

    def tx_energy_per_bit(self) -> float:
        return self.tx_power / self.uplink_rate


FOUR_G = WirelessTech("4g", 2100.0, 2100.0, 75e6, 35e6)
NB_IOT = WirelessTech("nbiot", 199.0, 199.52, 0.2e6, 0.2e6)
IEEE_802_15_4 = WirelessTech("802.15.4", 3.0, 3.0, 0.12e6, 0.12e6)
IEEE_802_11G = WirelessTech("802.11g", 1080.0, 740.0, 48e6, 48e6)

CATALOG: dict[str, WirelessTech] = {t.name: t for t in (FOUR_G, NB_IOT, IEEE_802_15_4, IEEE_802_11G)}
_ALIASES = {"wifi": "802.11g", "lte": "4g", "nb-iot": "nbiot", "zigbee": "802.15.4"}


def get_tech(name: str | WirelessTech) -> WirelessTech:
    if isinstance(name, WirelessTech):
        return name
    key = _ALIASES.get(name.lower(), name.lower())
    try:
        return CATALOG[key]
    except KeyError:
        raise ConfigurationError(f"unknown wireless technology {name!r}") from None


class Endpoint(enum.Enum):
    TX = "tx"
    RX = "rx"


class Link(enum.Enum):
    UPLINK = "uplink"
    DOWNLINK = "downlink"


class NodeKind(str, enum.Enum):
    SENSOR = "sensor"
    MULE = "mule"
    EDGE = "edge"


class PayloadKind(str, enum.Enum):
    OBSERVATIONS = "observations"
    MODEL = "model"
    SCALAR_INDEX = "scalar_index"
    CENTER_ID = "center_id"


def transmission_time(bits: float, rate: float) -> float:
    """Seconds needed to push ``bits`` through a link of ``rate`` bps."""
    if rate <= 0:
        raise ConfigurationError("rate must be positive")
    return bits / rate


def transmission_energy(bits: float, tech: str | WirelessTech, endpoint: Endpoint, link: Link) -> float:
    tech = get_tech(tech)
    if bits < 0:
        raise ValueError("bits must be non-negative")
    power = tech.tx_power if endpoint is Endpoint.TX else tech.rx_power
    rate = tech.uplink_rate if link is Link.UPLINK else tech.downlink_rate
    return power * transmission_time(bits, rate)


def observation_bits(d: int) -> int:
    """Wire size of one observation: ``d`` 64-bit features, no label or framing."""
    if d < 1:
        raise ValueError("feature count must be >= 1")
    return d * FLOAT_BITS


def model_bits(num_classes: int, feature_dim: int) -> int:
    """Wire size of a serialized K x (d+1) linear model including its 16-byte header."""
    return num_classes * (feature_dim + 1) * FLOAT_BITS + MODEL_HEADER_BITS


@dataclass
class MessageRecord:
    window: int
    src_id: int
    src_kind: NodeKind
    dst_id: int
    dst_kind: NodeKind
    payload_kind: PayloadKind
    bits: int
    tech: str
    # Hops of one relayed message share ``msg_id``; ``hop`` > 0 marks the relay leg.
    msg_id: int = 0
    hop: int = 0
    mj_tx: float = 0.0
    mj_rx: float = 0.0

    def __post_init__(self):
        if self.src_kind == self.dst_kind and self.src_id == self.dst_id:
            raise ValueError("message source and destination must differ")


@dataclass
class EnergyLedger:
    collection_short_mJ: float = 0.0
    collection_long_mJ: float = 0.0
    learning_tx_mJ: float = 0.0
    learning_rx_mJ: float = 0.0

    @property
    def collection_mJ(self) -> float:
        return self.collection_short_mJ + self.collection_long_mJ

    @property
    def learning_mJ(self) -> float:
        return self.learning_tx_mJ + self.learning_rx_mJ

    def total(self) -> float:
        return session_energy(self)

    def __add__(self, other: "EnergyLedger") -> "EnergyLedger":
        return EnergyLedger(
            self.collection_short_mJ + other.collection_short_mJ,
            self.collection_long_mJ + other.collection_long_mJ,
            self.learning_tx_mJ + other.learning_tx_mJ,
            self.learning_rx_mJ + other.learning_rx_mJ,
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "collection_short_mJ": self.collection_short_mJ,
            "collection_long_mJ": self.collection_long_mJ,
            "learning_tx_mJ": self.learning_tx_mJ,
            "learning_rx_mJ": self.learning_rx_mJ,
        }


def _battery(kind: NodeKind) -> bool:
    return kind is not NodeKind.EDGE


def message_energy(record: MessageRecord) -> tuple[float, float]:
    """(tx mJ, rx mJ) charged for ``record`` under the battery-only policy.

    Battery devices transmit on the uplink rate and receive on the downlink
    rate. The edge server's radio is never charged.
    """
    tech = get_tech(record.tech)
    tx = rx = 0.0
    if _battery(record.src_kind):
        tx = transmission_energy(record.bits, tech, Endpoint.TX, Link.UPLINK)
    if _battery(record.dst_kind):
        rx = transmission_energy(record.bits, tech, Endpoint.RX, Link.DOWNLINK)
    return tx, rx


def charge(ledger: EnergyLedger, record: MessageRecord) -> EnergyLedger:
    """Add the energy of ``record`` to ``ledger`` in place and return it.

    Sensor uploads land in the collection categories (long range when the
    destination is the edge server, short range otherwise); everything else
    is learning traffic split into tx and rx.
    """
    tx, rx = message_energy(record)
    record.mj_tx, record.mj_rx = tx, rx
    if record.src_kind is NodeKind.SENSOR:
        if record.dst_kind is NodeKind.EDGE:
            ledger.collection_long_mJ += tx + rx
        else:
            ledger.collection_short_mJ += tx + rx
    else:
        ledger.learning_tx_mJ += tx
        ledger.learning_rx_mJ += rx
    return ledger


def session_energy(ledger: EnergyLedger) -> float:
    return (ledger.collection_short_mJ + ledger.collection_long_mJ) + (
        ledger.learning_tx_mJ + ledger.learning_rx_mJ
    )


def replay(records: Iterable[MessageRecord]) -> EnergyLedger:
    ledger = EnergyLedger()
    for record in records:
        charge(ledger, record)
    return ledger


MESSAGE_COLUMNS = [
    "window", "src_id", "src_kind", "dst_id", "dst_kind",
    "payload_kind", "bits", "tech", "mJ_tx", "mJ_rx",
]


def write_messages_csv(records: Iterable[MessageRecord], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MESSAGE_COLUMNS)
    for r in records:
        writer.writerow([
            r.window, r.src_id, r.src_kind.value, r.dst_id, r.dst_kind.value,
            r.payload_kind.value, r.bits, r.tech, repr(r.mj_tx), repr(r.mj_rx),
        ])


def read_messages_csv(fh: TextIO) -> list[MessageRecord]:
    records = []
    for row in csv.DictReader(fh):
        records.append(MessageRecord(
            window=int(row["window"]),
            src_id=int(row["src_id"]),
            src_kind=NodeKind(row["src_kind"]),
            dst_id=int(row["dst_id"]),
            dst_kind=NodeKind(row["dst_kind"]),
            payload_kind=PayloadKind(row["payload_kind"]),
            bits=int(row["bits"]),
            tech=row["tech"],
            mj_tx=float(row["mJ_tx"]),
            mj_rx=float(row["mJ_rx"]),
        ))
    return records


@dataclass
class MessageLog:
    """Append-only message log that charges every record as it is posted."""

    window: int = 0
    records: list[MessageRecord] = field(default_factory=list)
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    _next_id: int = 0

    def send(self, src_id, src_kind, dst_id, dst_kind, payload_kind, bits, tech, hop=0, msg_id=None):
        if msg_id is None:
            msg_id = self._next_id
            self._next_id += 1
        record = MessageRecord(
            self.window, src_id, src_kind, dst_id, dst_kind, payload_kind, int(bits),
            get_tech(tech).name, msg_id=msg_id, hop=hop,
        )
        charge(self.ledger, record)
        self.records.append(record)
        return record

    def count(self, payload_kind: PayloadKind) -> int:
        """Number of logical messages of ``payload_kind`` (relay legs not double counted)."""
        return sum(1 for r in self.records if r.payload_kind is payload_kind and r.hop == 0)

    def bits(self, learning_only: bool = False) -> int:
        return sum(
            r.bits for r in self.records
            if not (learning_only and r.src_kind is NodeKind.SENSOR)
        )
