"""Keypoint detection, description and matching for open-set image identification."""
from .descriptor import (
    GradientField,
    assign_orientation,
    compute_descriptor,
    compute_gradients,
    describe,
    root_normalize,
)
from .detector import Keypoint, RawExtremum, detect, filter_contrast, filter_edges, refine_subpixel, scan_extrema
from .errors import DecodeError, DimensionError, IndexFormatError, ParameterError, UsageError
from .gallery import (
    Gates,
    GalleryEntry,
    GalleryIndex,
    IdentificationReport,
    evaluate,
    identify,
    ingest,
    load_index,
    save_index,
)
from .imgio import Circle, Line, downsample_half, encode_png, load_image, to_grayscale
from .matcher import (
    MatchPair,
    SimilarityScore,
    approx_knn,
    brute_force_knn,
    cross_check,
    lowe_similarity,
    ratio_test,
)
from .scalespace import (
    DoGPyramid,
    GaussianPyramid,
    PyramidParams,
    build_dog_pyramid,
    build_gaussian_pyramid,
    gaussian_blur,
)

__version__ = "0.1.0"
