"""Motion-forecast virtual points for 3D object detection in point cloud
sequences, with a deterministic desk-scale benchmark around them."""

from .geometry import Box3D, ObjectClass, Pose, heading_delta, iou_3d, iou_bev
from .dataio import (DetectionCache, NormalizationManifest, SequenceDataset,
                     build_normalization, read_sequence, write_sequence)
from .simkit import LidarModel, SceneConfig, scenario_library, simulate
from .detector import ClusterParams, OracleNoise, detect_cluster, detect_oracle, nms
from .tracker import KalmanTrack, TrackerParams, track_sequence, tracking_score
from .forecast import (HORIZON, TrackletInput, Trajectory, forecast_cv,
                       forecast_metrics, forecast_multihyp, forecast_reverse,
                       forecast_stationary)
from .points import (ModarConfig, ModarPoint, build_windows, decode_box,
                     encode_modar, generate_modar)
from .fusion import (FusedPoint, FusionWeights, assemble_early, early_plus_late,
                     fusion_detector, late_fuse, modar_only_detect,
                     weighted_box_fusion)
from .evalkit import EvalConfig, EvalResult, compute_ap, evaluate, match_frame
from .pipeline import PipelineConfig, parse_config, run_pipeline

__version__ = "0.1.0"
