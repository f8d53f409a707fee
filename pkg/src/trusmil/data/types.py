"""Core data model: RF frames, needle geometry, biopsy cores and ROI patches."""

from dataclasses import dataclass, field

import numpy as np

ROI_GRID_SIZE = 256
PATCHES_PER_CORE = 55


@dataclass
class RFFrame:
    """One raw RF ultrasound frame.

    ``samples`` is an (axial x lateral) matrix of RF amplitude in arbitrary
    units; rows advance along the probe axis (depth), columns across scan
    lines. Spacings convert sample indices to millimetres.
    """

    samples: np.ndarray            # [H_ax, W_lat] float
    axial_spacing: float           # mm per sample (row step)
    lateral_spacing: float         # mm per line (column step)
    probe_origin: tuple[float, float] = (0.0, 0.0)   # (row, col) in sample coords

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or min(self.samples.shape) < 1:
            raise ValueError("RF frame must be a non-empty 2-D matrix")
        if self.axial_spacing <= 0 or self.lateral_spacing <= 0:
            raise ValueError("spacings must be positive")
        if not np.isfinite(self.samples).all():
            raise ValueError("RF frame contains non-finite samples")

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape


@dataclass
class NeedleGeometry:
    """Biopsy needle penetration: angle from the probe axis, depth and
    trace width, all physical units (degrees / mm)."""

    angle: float          # degrees from probe axis; 0 = straight down rows
    depth: float          # mm of penetration
    width: float = 2.0    # mm trace width

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("needle depth must be positive")
        if self.width <= 0:
            raise ValueError("needle width must be positive")
        if not -90.0 < self.angle < 90.0:
            raise ValueError("needle angle must lie in (-90, 90) degrees")


@dataclass
class ProstateMask:
    """Boolean mask aligned with an RFFrame; True marks prostate tissue."""

    mask: np.ndarray      # [H_ax, W_lat] bool

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValueError("mask must be a 2-D matrix")

    def matches(self, frame: RFFrame) -> bool:
        return self.mask.shape == frame.shape


@dataclass
class BiopsyCore:
    """One needle sample: frame, geometry, mask and the pathology label.

    ``involvement`` is the pathologist's estimated cancer fraction of the
    core (0 for benign). ``cancer_spans`` exists only for synthetic cores:
    intervals, as fractions of the sampled needle segment, where the
    generator placed cancerous tissue. None marks real (non-synthetic)
    data; synthetic benign cores carry an empty list.
    """

    core_id: str
    patient_id: str
    center_id: str
    label: int                      # 0 benign, 1 cancer
    involvement: float              # in [0, 1]; 0 iff benign
    frame: RFFrame
    needle: NeedleGeometry
    mask: ProstateMask
    cancer_spans: list[tuple[float, float]] | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if not 0.0 <= self.involvement <= 1.0:
            raise ValueError("involvement must lie in [0, 1]")
        if self.label == 0 and self.involvement != 0.0:
            raise ValueError("benign cores must have involvement 0")
        if self.label == 1 and self.involvement <= 0.0:
            raise ValueError("cancer cores must have involvement > 0")
        if not self.mask.matches(self.frame):
            raise ValueError("mask shape must equal frame shape")


@dataclass
class ROIPatch:
    """One preprocessed 256x256 window along the needle trace.

    ``weak_label`` is the parent core's label copied onto the patch.
    ``synth_truth`` is the generator's actual per-ROI cancer flag; None
    for real data.
    """

    pixels: np.ndarray                 # [256, 256] float in [0, 1]
    core_id: str
    index_along_needle: int            # 0 .. PATCHES_PER_CORE-1
    weak_label: int
    synth_truth: int | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.shape != (ROI_GRID_SIZE, ROI_GRID_SIZE):
            raise ValueError(f"ROI pixels must be {ROI_GRID_SIZE}x{ROI_GRID_SIZE}")
        if not 0 <= self.index_along_needle < PATCHES_PER_CORE:
            raise ValueError("index_along_needle out of range")
        if self.weak_label not in (0, 1):
            raise ValueError("weak_label must be 0 or 1")


@dataclass
class TextureParams:
    """Colored-noise speckle texture: spectral slope (larger = smoother,
    coarser), variance of the RF amplitude, and speckle cell scale in
    samples."""

    spectral_slope: float = 1.0
    variance: float = 1.0
    speckle_scale: float = 2.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("texture variance must be positive")
        if self.speckle_scale <= 0:
            raise ValueError("speckle scale must be positive")


@dataclass
class SynthConfig:
    """Configuration for the synthetic micro-ultrasound dataset generator."""

    n_patients: int = 60
    cores_per_patient: int = 1
    n_centers: int = 5
    cancer_core_rate: float = 0.133
    involvement_range: tuple[float, float] = (0.2, 0.8)
    benign_texture: TextureParams = field(default_factory=lambda: TextureParams(1.0, 1.0, 2.0))
    cancer_texture: TextureParams = field(default_factory=lambda: TextureParams(2.6, 2.5, 6.0))
    seed: int = 0
    # frame geometry (artifact plumbing; sized so desk runs stay cheap)
    frame_shape: tuple[int, int] = (220, 220)
    axial_spacing: float = 0.2     # mm/sample
    lateral_spacing: float = 0.2   # mm/line
    needle_width: float = 2.0      # mm
    max_needle_angle: float = 12.0  # degrees; per-core angle ~ U(-max, max)

    def __post_init__(self):
        if self.n_patients < 1 or self.cores_per_patient < 1 or self.n_centers < 1:
            raise ValueError("population counts must be positive")
        if not 0.0 <= self.cancer_core_rate <= 1.0:
            raise ValueError("cancer_core_rate must lie in [0, 1]")
        lo, hi = self.involvement_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("involvement_range must be a subinterval of (0, 1]")
        if min(self.frame_shape) < 32:
            raise ValueError("frame too small")
        if self.axial_spacing <= 0 or self.lateral_spacing <= 0:
            raise ValueError("spacings must be positive")
