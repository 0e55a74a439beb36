"""Satellite downlink power budget in dB and linear forms.

All powers are ratios referenced to a unit-power noise floor, so carrier and
interference terms come out directly as CNR / INR.
"""

import math
from dataclasses import dataclass

from .errors import ConfigError

SPEED_OF_LIGHT_M_S = 299_792_458.0


def fspl_db(distance_m: float, freq_hz: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c) in dB."""
    if distance_m <= 0.0:
        raise ConfigError(f"distance must be positive, got {distance_m}")
    if freq_hz <= 0.0:
        raise ConfigError(f"frequency must be positive, got {freq_hz}")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * freq_hz
                             / SPEED_OF_LIGHT_M_S)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0.0:
        raise ConfigError(f"cannot convert non-positive power {x} to dB")
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class LinkGeometry:
    """One transmitter-to-victim-receiver path.

    spectral_overlap is the fraction of the transmit power falling inside
    the victim's band (1.0 for the wanted carrier, possibly 0 for a LEO
    whose beam misses the band). doppler_offset_hz only matters for
    waveform synthesis, not for the power budget.
    """

    eirp_dbw: float
    rx_gain_db: float
    fspl_db: float
    add_loss_db: float
    spectral_overlap: float = 1.0
    doppler_offset_hz: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.spectral_overlap <= 1.0):
            raise ConfigError(
                f"spectral_overlap must be in [0,1], got {self.spectral_overlap}")
        if self.add_loss_db < 0.0:
            raise ConfigError(f"add_loss_db must be >= 0, got {self.add_loss_db}")


def carrier_power(link: LinkGeometry) -> float:
    """Received power as a linear ratio over the unit noise floor."""
    budget_db = (link.eirp_dbw + link.rx_gain_db - link.fspl_db
                 - link.add_loss_db)
    return db_to_linear(budget_db)


def interference_power(link: LinkGeometry) -> float:
    """Like carrier_power but weighted by the in-band overlap fraction."""
    return carrier_power(link) * link.spectral_overlap


def aggregate_interference(links) -> float:
    """Total in-band interference from several links (linear sum)."""
    return float(sum(interference_power(lk) for lk in links))
