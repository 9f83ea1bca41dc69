"""Light interception by LiDAR-scanned tree canopies.

Weather records are split into direct and diffuse light, spread over a
discretised sky, and traced through a voxelised point cloud. The light reaching
the ground is compared with ceptometer readings to tune and validate the model.
"""

from .ceptometer import CeptometerReading, OpenAirLog, calibrated_par, sample_virtual
from .cloud import BRANCH, FOLIAGE, LabeledCloud, assign_coefficients, load_cloud, save_cloud, voxelize
from .metrics import FitReport, PairedSample, fit, window_average
from .radiance import EnergyField, GroundGrid, accumulate, trace_node
from .skydome import SkyDome, composite_sky, instantaneous_sky, sky_at
from .tuner import Dataset, ParameterPoint, ablate, evaluate, grid_search, offset_search
from .weather import GeoLocation, WeatherSeries, decompose, solar_position

__version__ = "0.1.0"

__all__ = [
    "BRANCH",
    "FOLIAGE",
    "CeptometerReading",
    "Dataset",
    "EnergyField",
    "FitReport",
    "GeoLocation",
    "GroundGrid",
    "LabeledCloud",
    "OpenAirLog",
    "PairedSample",
    "ParameterPoint",
    "SkyDome",
    "WeatherSeries",
    "ablate",
    "accumulate",
    "assign_coefficients",
    "calibrated_par",
    "composite_sky",
    "decompose",
    "evaluate",
    "fit",
    "grid_search",
    "instantaneous_sky",
    "load_cloud",
    "offset_search",
    "sample_virtual",
    "save_cloud",
    "sky_at",
    "solar_position",
    "trace_node",
    "voxelize",
    "window_average",
]
