"""
Frame Prediction
================

PURPOSE: Predict frames n+1 .. n+k-1 from the rendered RGB-D frames n and n-k
and known camera poses, by separating camera motion from object motion.

STAGES:
1. build               m_n, and m_{n-k} on m_n's plane table
2. camera-compensate   warp m_{n-k} into view n with zero local flow
3. estimate-flow       local 3D flow from m_n into the compensated m_{n-k}
4. extrapolate         scale the flow by -k'/k for every requested step
5. warp                forward-warp m_n to view n+k' with the scaled flow
6. infill              iterative disocclusion infilling, then a nearest-valid
                       pass over whatever remains
7. composite           over-composite to the predicted frame

Only frames n and n-k are read from the dataset.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src import DEFAULT_DEPTH_WINDOW, DEFAULT_INFILL_ITERATIONS, DEFAULT_NUM_PLANES
from src.common.console import StageReporter
from src.common.errors import ConfigurationError, InputError, LayeredMotionError, PipelineError
from src.flow.field import Flow3D, extrapolate_flow
from src.flow.matcher import MatcherConfig, estimate_flow_matcher
from src.flow.network import estimate_flow_network
from src.flow.weights import FlowNetworkWeights
from src.infill.filling import METHODS, detect_disocclusions, fill_remaining, infill_iterative
from src.infill.network import InfillNetwork, InfillNetworkWeights
from src.metrics.quality import composite_flow_to_pixels
from src.mpi.representation import MultiPlaneImage, alpha_composite, build_mpi
from src.mpi.warping import warp_mpi
from src.pipeline.dataset import SequenceDataset

BACKENDS = ("matcher", "network")
DIAGNOSTIC_STAGES = ("camera_compensated", "local_motion", "total_motion", "infilled")


@dataclass
class PredictionRequest:
    """
    One prediction window.

    Attributes:
        index: n, the latest rendered frame
        factor: k >= 2; frame n-k is the second input
        steps: k' values to predict (default 1 .. k-1)
        flow_override: externally supplied local flow (e.g. renderer ground
            truth); skips estimation
    """
    index: int
    factor: int = 2
    steps: Optional[List[int]] = None
    num_planes: int = DEFAULT_NUM_PLANES
    s_z: int = DEFAULT_DEPTH_WINDOW
    backend: str = "matcher"
    flow_weights: Optional[FlowNetworkWeights] = None
    radius_xy: int = 4
    levels: int = 3
    infill: str = "nearest"
    infill_weights: Optional[InfillNetworkWeights] = None
    iterations: int = DEFAULT_INFILL_ITERATIONS
    depth_range: Optional[Tuple[float, float]] = None
    dump_intermediates: bool = False
    seed_with_predictions: bool = False
    flow_override: Optional[Flow3D] = None

    @property
    def past_index(self) -> int:
        return self.index - self.factor

    @property
    def target_steps(self) -> List[int]:
        return list(range(1, self.factor)) if self.steps is None else list(self.steps)

    def validate(self, dataset: Optional[SequenceDataset] = None):
        """
        Raises:
            ConfigurationError: inconsistent options
            InputError: frames or poses missing from the dataset
        """
        if self.factor < 2:
            raise ConfigurationError(f"Upsampling factor k must be >= 2, got {self.factor}")
        if self.past_index < 0:
            raise ConfigurationError(
                f"Frame n-k = {self.past_index} is negative (n={self.index}, k={self.factor})")
        steps = self.target_steps
        if not steps:
            raise ConfigurationError("No prediction steps requested")
        bad = [s for s in steps if not 1 <= s <= self.factor - 1]
        if bad:
            raise ConfigurationError(f"Steps {bad} outside 1..{self.factor - 1}")
        if self.num_planes < 2:
            raise ConfigurationError(f"num_planes must be >= 2, got {self.num_planes}")
        if self.s_z < 0:
            raise ConfigurationError(f"s_z must be >= 0, got {self.s_z}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"Unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.backend == "network" and self.flow_override is None:
            if self.flow_weights is None:
                raise ConfigurationError("backend 'network' needs flow weights")
            if self.flow_weights.s_z != self.s_z:
                raise ConfigurationError(
                    f"Flow weights were built for s_z={self.flow_weights.s_z}, request has s_z={self.s_z}")
        if self.infill not in METHODS:
            raise ConfigurationError(f"Unknown infill method {self.infill!r}; expected one of {METHODS}")
        if self.infill == "network" and self.infill_weights is None:
            raise ConfigurationError("infill 'network' needs infill weights")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.seed_with_predictions:
            raise ConfigurationError(
                "Seeding windows with predicted frames is not supported; only rendered frames are used")

        if dataset is not None:
            for index in (self.index, self.past_index):
                if not dataset.has_frame(index):
                    raise InputError(f"Frame {index} is not in the dataset")
            for step in steps:
                if not dataset.has_pose(self.index + step):
                    raise InputError(f"Missing pose for predicted frame {self.index + step}")


@dataclass
class PredictionResult:
    """
    Attributes:
        predictions: predicted RGB frame per absolute frame index n+k'
        flow: estimated local flow u_{n -> n-k} on m_n's grid
        diagnostics: stage name -> frame index -> composite (when requested)
        metadata: run parameters and per-step counters
        pixel_flow: (H, W, 3) real flow at each pixel's front plane of m_n
    """
    predictions: Dict[int, np.ndarray]
    flow: Flow3D
    diagnostics: Dict[str, Dict[int, np.ndarray]] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
    pixel_flow: Optional[np.ndarray] = None


@contextmanager
def _stage(name: str):
    """Tag any failure raised inside the block with the stage name."""
    try:
        yield
    except PipelineError:
        raise
    except (LayeredMotionError, ValueError, ArithmeticError, IndexError, KeyError) as e:
        raise PipelineError(name, e) from e


def _estimate(request: PredictionRequest, m_ref: MultiPlaneImage, m_src: MultiPlaneImage) -> Flow3D:
    if request.flow_override is not None:
        return request.flow_override
    if request.backend == "network":
        return estimate_flow_network(m_ref, m_src, request.flow_weights)
    config = MatcherConfig(levels=request.levels, radius_xy=request.radius_xy, s_z=request.s_z)
    return estimate_flow_matcher(m_ref, m_src, config)


def predict_frames(dataset: SequenceDataset, request: PredictionRequest,
                   reporter: Optional[StageReporter] = None) -> PredictionResult:
    """
    Run one prediction window.

    Stage lines go to `reporter` (silent when None) and end up in
    metadata["stage_log"].

    Raises:
        ConfigurationError, InputError: request invalid against the dataset
        PipelineError: a stage failed; .stage names it
    """
    request.validate(dataset)
    reporter = reporter if reporter is not None else StageReporter.silent()
    n, past = request.index, request.past_index
    diagnostics: Dict[str, Dict[int, np.ndarray]] = (
        {name: {} for name in DIAGNOSTIC_STAGES} if request.dump_intermediates else {})

    with _stage("build"):
        m_n = build_mpi(dataset.frame(n), dataset.depth(n), request.num_planes, request.depth_range)
        m_past = build_mpi(dataset.frame(past), dataset.depth(past), request.num_planes,
                           plane_depths=m_n.plane_depths)
        camera_n = dataset.camera(n)
    reporter.stage("build", f"frames {n} and {past}, {request.num_planes} planes "
                            f"{np.round(m_n.plane_depths, 3).tolist()}")

    with _stage("camera-compensate"):
        m_compensated = warp_mpi(m_past, dataset.camera(past), camera_n, None, m_n.plane_depths)
    if request.dump_intermediates:
        diagnostics["camera_compensated"][past] = alpha_composite(m_compensated)[0]

    with _stage("estimate-flow"):
        flow = _estimate(request, m_n, m_compensated)
        if flow.shape != m_n.shape:
            raise ConfigurationError(f"Flow grid {flow.shape} does not match MPI {m_n.shape}")
        real_flow = flow.reduce(m_n.plane_depths)
        pixel_flow = composite_flow_to_pixels(real_flow, m_n)[0]
    source = "override" if request.flow_override is not None else request.backend
    reporter.stage("estimate-flow", f"{source}, mean |u_xy| = {np.abs(flow.xy).mean():.3f} px")

    predictions: Dict[int, np.ndarray] = {}
    fallback: Dict[int, int] = {}
    holes: Dict[int, int] = {}
    infill_network = InfillNetwork(request.infill_weights) if request.infill == "network" else None
    for step in request.target_steps:
        target = n + step
        with _stage("extrapolate"):
            u = extrapolate_flow(real_flow, request.factor, step)

        with _stage("warp"):
            m_target = warp_mpi(m_n, camera_n, dataset.camera(target), u)
            holes[target] = int(np.count_nonzero(detect_disocclusions(m_target)))

        with _stage("infill"):
            filled = infill_iterative(m_target, request.infill, request.iterations, infill_network)
            filled, fallback[target] = fill_remaining(filled)

        with _stage("composite"):
            predictions[target] = alpha_composite(filled)[0]
            if request.dump_intermediates:
                local_only = warp_mpi(m_n, camera_n, camera_n, u)
                diagnostics["local_motion"][target] = alpha_composite(local_only)[0]
                diagnostics["total_motion"][target] = alpha_composite(m_target)[0]
                diagnostics["infilled"][target] = predictions[target]
        reporter.stage("infill", f"frame {target}: {holes[target]} disoccluded voxels, "
                                 f"{fallback[target]} left for the final pass")

    metadata = {
        "index": n,
        "factor": request.factor,
        "inputs": [past, n],
        "steps": request.target_steps,
        "num_planes": request.num_planes,
        "s_z": request.s_z,
        "backend": source,
        "infill": request.infill,
        "iterations": request.iterations,
        "plane_depths": m_n.plane_depths.tolist(),
        "disoccluded_voxels": holes,
        "fallback_voxels": fallback,
        "frames_read": sorted(dataset.frames_read),
    }
    reporter.success(f"Predicted frames {sorted(predictions)} from frames {past} and {n}")
    metadata["stage_log"] = reporter.log()
    return PredictionResult(predictions, flow, diagnostics, metadata, pixel_flow)
