"""Instance-level alpha mattes from instance-segmentation annotations."""

from .coco_ingest import (
    CategoryTable,
    InstanceAnnotation,
    Polygon,
    RleSegmentation,
    decode_rle,
    encode_rle,
    load_annotations,
    polygons_to_mask,
)
from .fusion import FusionConfig, FusionResult, assign_and_fuse_image, fuse_accessories
from .losses import GhmConfig, LossWeights, ghm_trimap_loss, matting_loss, regularization_loss, total_loss
from .mask_ops import Rect, dilate, erode, masks_intersect, min_bounding_rect, rect_overlap
from .metrics import MetricReport, conn_metric, grad_metric, imq, pixel_metrics
from .pipeline import PipelineConfig, build_dataset, derive_bbox, evaluate, evaluate_instances, proportional_resize, stats
from .solver import ExternalBackendConfig, SolverConfig, build_matting_laplacian, run_external_backend, solve_alpha
from .trimap import TrimapConfig, adaptive_kernel_size, make_trimap, trimap_from_alpha

__version__ = "0.1.0"
