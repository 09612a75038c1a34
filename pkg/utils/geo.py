"""Great-circle distances and propagation delays between node locations."""
import math
from typing import NamedTuple

EARTH_RADIUS_KM = 6371.0
SPEED_OF_LIGHT_M_S = 299_792_458.0
# Signal speed in fibre
PROPAGATION_SPEED_M_S = 2.0 * SPEED_OF_LIGHT_M_S / 3.0


class GeoCoord(NamedTuple):
    lat: float
    lon: float


def haversine_km(a: GeoCoord, b: GeoCoord) -> float:
    """Great-circle distance in kilometres between two coordinates given in degrees."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def propagation_delay_s(a: GeoCoord, b: GeoCoord) -> float:
    """
    One-way propagation delay between two locations.

    Args:
        a: (latitude, longitude) in degrees
        b: (latitude, longitude) in degrees

    Returns:
        float: delay in seconds at two thirds of the speed of light
    """
    return haversine_km(a, b) * 1000.0 / PROPAGATION_SPEED_M_S
