"""
Synthetic Layered Scenes
========================

SCENE MODEL:
- Layers are textured rectangles on fronto-parallel world planes
- A layer rectangle is given in the pixel coordinates of a reference camera
  at the world origin; texel (i, j) of a layer at depth d sits at
  d * K^-1 (x + i, y + j, 1)
- Layers move by `velocity` reference pixels per frame and `depth_velocity`
  metres per frame; in the reference view their image motion is exactly
  the velocity
- The camera never rotates; its centre moves linearly from `camera_start`
  by `camera_velocity` metres per frame

Textures are i.i.d. 8-bit colours from the layer seed, so PNG round trips
are lossless and correlation matching has a unique optimum.

CONFIG FILE (flat key-value):
    scene.width = 224
    scene.height = 176
    scene.frames = 6
    camera.focal = 100
    camera.velocity = 0.2 0 0
    layer.background.rect = -200 -200 624 576
    layer.background.depth = 10
    layer.square.rect = 90 70 32 32
    layer.square.depth = 2
    layer.square.velocity = 4 0
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from src.common.console import StageReporter
from src.common.errors import DomainError
from src.common.keyvalue import KeyValueConfig
from src.common.rawio import write_raw_array
from src.geometry.camera import CameraModel, make_intrinsics, pixel_grid
from src.pipeline.dataset import SequenceDataset
from src.synthetic.oracle import oracle_pose_warp


@dataclass
class Layer:
    """Textured rectangle with constant velocity."""
    name: str
    rect: Tuple[int, int, int, int]  # x, y, width, height in reference pixels
    depth: float
    velocity: Tuple[float, float] = (0.0, 0.0)
    depth_velocity: float = 0.0
    seed: int = 0

    def depth_at(self, t: float) -> float:
        return self.depth + self.depth_velocity * t

    def texture(self) -> np.ndarray:
        """(height, width, 3) colours quantised to k/255."""
        _, _, width, height = self.rect
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, 256, (height, width, 3)).astype(np.float64) / 255.0


@dataclass
class SyntheticScene:
    """Layers, camera trajectory, frame count and image size."""
    width: int
    height: int
    num_frames: int
    layers: List[Layer]
    focal: float = 100.0
    principal: Optional[Tuple[float, float]] = None
    camera_start: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    camera_velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.width <= 0 or self.height <= 0 or self.num_frames < 1:
            raise DomainError("Scene needs a positive image size and at least one frame")
        if not self.layers:
            raise DomainError("Scene needs at least one layer")
        for t in range(self.num_frames):
            depths = [layer.depth_at(t) - self.camera_centre(t)[2] for layer in self.layers]
            if min(depths) <= 0:
                raise DomainError(f"A layer is at or behind the camera in frame {t}")
            if len(set(depths)) != len(depths):
                raise DomainError(f"Layers share a depth in frame {t}")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise DomainError("Layer names must be unique")

    @property
    def intrinsics(self) -> np.ndarray:
        cx, cy = self.principal if self.principal is not None else (self.width / 2.0, self.height / 2.0)
        return make_intrinsics(self.focal, self.focal, cx, cy)

    def camera_centre(self, t: float) -> np.ndarray:
        return np.asarray(self.camera_start, dtype=np.float64) + t * np.asarray(self.camera_velocity, dtype=np.float64)

    def pose(self, t: float) -> np.ndarray:
        """World-to-camera pose of frame t (identity rotation)."""
        pose = np.eye(4)
        pose[:3, 3] = -self.camera_centre(t)
        return pose

    def camera(self, t: float) -> CameraModel:
        return CameraModel(self.intrinsics, self.pose(t), (self.width, self.height))


@dataclass
class SyntheticSequence:
    """Rendered frames with ground truth."""
    frames: np.ndarray         # (N, H, W, 3)
    depths: np.ndarray         # (N, H, W)
    poses: np.ndarray          # (N, 4, 4)
    intrinsics: np.ndarray     # (3, 3)
    flows: np.ndarray          # (N, H, W, 3) object flow to the next frame, in each frame's view
    disocclusions: np.ndarray  # (N, H, W) pixels with no source in the previous frame
    labels: np.ndarray         # (N, H, W) visible layer index, -1 where nothing is visible
    layer_names: List[str] = field(default_factory=list)


def _visible_surface(scene: SyntheticScene, t: float):
    """Per pixel of frame t: nearest layer index, its texture coordinates and camera depth."""
    K_inv = np.linalg.inv(scene.intrinsics)
    centre = scene.camera_centre(t)
    rays = np.concatenate([pixel_grid(scene.height, scene.width),
                           np.ones((scene.height, scene.width, 1))], axis=-1) @ K_inv.T

    best_depth = np.full((scene.height, scene.width), np.inf)
    labels = np.full((scene.height, scene.width), -1, dtype=np.int64)
    texel = np.zeros((scene.height, scene.width, 2), dtype=np.int64)
    for index, layer in enumerate(scene.layers):
        plane_depth = layer.depth_at(t)
        camera_depth = plane_depth - centre[2]
        world = centre + camera_depth * rays
        reference = world[..., :2] / plane_depth * scene.focal + scene.intrinsics[:2, 2]
        u = reference - np.asarray(layer.velocity, dtype=np.float64) * t
        x0, y0, width, height = layer.rect
        col = np.floor(u[..., 0] + 0.5).astype(np.int64) - x0
        row = np.floor(u[..., 1] + 0.5).astype(np.int64) - y0
        inside = (col >= 0) & (col < width) & (row >= 0) & (row < height)
        closer = inside & (camera_depth < best_depth)
        best_depth = np.where(closer, camera_depth, best_depth)
        labels = np.where(closer, index, labels)
        texel[closer] = np.stack([col, row], axis=-1)[closer]
    return labels, texel, best_depth


def render_frame(scene: SyntheticScene, t: int, textures: Optional[List[np.ndarray]] = None):
    """(rgb, depth, labels) of frame t. Uncovered pixels are black at the farthest layer depth."""
    textures = textures or [layer.texture() for layer in scene.layers]
    labels, texel, depth = _visible_surface(scene, t)
    rgb = np.zeros((scene.height, scene.width, 3))
    for index, texture in enumerate(textures):
        hit = labels == index
        rgb[hit] = texture[texel[hit][:, 1], texel[hit][:, 0]]
    far = max(layer.depth_at(t) for layer in scene.layers) - scene.camera_centre(t)[2]
    depth = np.where(labels >= 0, depth, far)
    return rgb, depth, labels


def object_flow(scene: SyntheticScene, frame_index: int, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ground-truth object flow in the view of `frame_index` over `step` frames.

    The camera is held at frame_index; each visible surface point moves with
    its layer from t to t + step. Negative steps give the flow into the past.

    Returns:
        (flow (H, W, 3) as (dx, dy, dz metres), valid (H, W))
    """
    t = frame_index
    labels, _, depth = _visible_surface(scene, t)
    centre = scene.camera_centre(t)
    K = scene.intrinsics
    K_inv = np.linalg.inv(K)
    grid = pixel_grid(scene.height, scene.width)
    flow = np.zeros((scene.height, scene.width, 3))
    for index, layer in enumerate(scene.layers):
        hit = labels == index
        if not hit.any():
            continue
        plane_now = layer.depth_at(t)
        plane_then = layer.depth_at(t + step)
        rays = np.concatenate([grid[hit], np.ones((hit.sum(), 1))], axis=-1) @ K_inv.T
        world = centre + (plane_now - centre[2]) * rays
        reference = world[:, :2] / plane_now * scene.focal + K[:2, 2]
        moved_reference = reference + np.asarray(layer.velocity, dtype=np.float64) * step
        homo = np.concatenate([moved_reference, np.ones((hit.sum(), 1))], axis=-1) @ K_inv.T
        moved_world = plane_then * homo
        camera_depth = moved_world[:, 2] - centre[2]
        if np.any(camera_depth <= 0):
            raise DomainError(f"Layer {layer.name} passes behind the camera")
        projected = (moved_world - centre) @ K.T
        target = projected[:, :2] / projected[:, 2:3]
        flow[hit, :2] = target - grid[hit]
        flow[hit, 2] = camera_depth - (plane_now - centre[2])
    return flow, labels >= 0


def render_sequence(scene: SyntheticScene, reporter: Optional[StageReporter] = None) -> SyntheticSequence:
    """Render every frame with poses, object flows and disocclusion masks."""
    scene.validate()
    textures = [layer.texture() for layer in scene.layers]
    n, h, w = scene.num_frames, scene.height, scene.width
    frames = np.zeros((n, h, w, 3))
    depths = np.zeros((n, h, w))
    labels = np.zeros((n, h, w), dtype=np.int64)
    flows = np.zeros((n, h, w, 3))
    disocclusions = np.zeros((n, h, w), dtype=bool)

    for t in range(n):
        frames[t], depths[t], labels[t] = render_frame(scene, t, textures)
        if t + 1 < n:
            flows[t] = object_flow(scene, t, 1)[0]
        if t > 0:
            previous = oracle_pose_warp(frames[t - 1], depths[t - 1], scene.camera(t - 1),
                                        scene.camera(t), flows[t - 1])
            disocclusions[t] = previous.holes
        if reporter is not None:
            reporter.stage("render", f"frame {t:04d}, {int(disocclusions[t].sum())} disoccluded pixels")

    poses = np.stack([scene.pose(t) for t in range(n)])
    return SyntheticSequence(frames, depths, poses, scene.intrinsics, flows, disocclusions,
                             labels, [layer.name for layer in scene.layers])


def scene_from_config(config: Union[KeyValueConfig, Mapping[str, str]]) -> SyntheticScene:
    """Build a scene from flat key-value entries (see module docstring)."""
    if not isinstance(config, KeyValueConfig):
        config = KeyValueConfig(dict(config))
    width = config.get_int('scene.width')
    height = config.get_int('scene.height')
    principal = None
    if 'camera.principal' in config:
        principal = tuple(config.get_floats('camera.principal', 2))

    names: List[str] = []
    for key in config.keys_with_prefix('layer.'):
        name = key.split('.')[1]
        if name not in names:
            names.append(name)
    layers = []
    for index, name in enumerate(names):
        prefix = f'layer.{name}'
        rect = tuple(int(v) for v in config.get_floats(f'{prefix}.rect', 4))
        layers.append(Layer(
            name=name,
            rect=rect,
            depth=config.get_float(f'{prefix}.depth'),
            velocity=tuple(config.get_floats(f'{prefix}.velocity', 2, [0.0, 0.0])),
            depth_velocity=config.get_float(f'{prefix}.depth_velocity', 0.0),
            seed=config.get_int(f'{prefix}.seed', index + 1),
        ))
    return SyntheticScene(
        width=width,
        height=height,
        num_frames=config.get_int('scene.frames'),
        layers=layers,
        focal=config.get_float('camera.focal', 100.0),
        principal=principal,
        camera_start=tuple(config.get_floats('camera.start', 3, [0.0, 0.0, 0.0])),
        camera_velocity=tuple(config.get_floats('camera.velocity', 3, [0.0, 0.0, 0.0])),
    )


def load_scene_config(path: Union[str, Path]) -> SyntheticScene:
    return scene_from_config(KeyValueConfig.load(path))


def write_sequence(sequence: SyntheticSequence, out_dir: Union[str, Path],
                   reporter: Optional[StageReporter] = None) -> Path:
    """
    Write a rendered sequence in the dataset layout plus ground truth.

    Ground-truth flows go to flow/NNNN.raw as {H, W, 3} raw dumps.
    """
    out_dir = Path(out_dir)
    dataset = SequenceDataset.from_arrays(sequence.frames, sequence.depths, sequence.poses,
                                          sequence.intrinsics)
    dataset.save(out_dir)
    flow_dir = out_dir / 'flow'
    flow_dir.mkdir(parents=True, exist_ok=True)
    for t, flow in enumerate(sequence.flows):
        write_raw_array(flow_dir / f'{t:04d}.raw', flow)
    if reporter is not None:
        reporter.success(f"Wrote {len(sequence.frames)} frames to {out_dir}")
    return out_dir
