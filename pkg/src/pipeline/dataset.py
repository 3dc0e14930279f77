"""
Sequence Datasets
=================

DIRECTORY LAYOUT:
    NNNN.png         8-bit RGB frames, NNNN = frame index
    NNNN.dpt         depth, int32 LE {H, W} header + float32 LE metres
    NNNN.pfm         depth, PFM (accepted instead of .dpt)
    poses.txt        one world-to-camera 4x4 per line, row-major
    intrinsics.txt   3x3 row-major
    metadata.json    optional {"frame_rate": ...}

A single `sequence.npz` (arrays frames, depths, poses, intrinsics, optional
frame_rate) is accepted in place of the files above.

poses.txt holds one pose per consecutive frame index starting at the first
frame. It may cover indices with no rendered frame (gaps, or frames after the
last one) since prediction needs the poses of the frames it predicts.

Frame and depth reads are recorded so callers can check which inputs a
computation consumed.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

import imageio.v3 as iio
import numpy as np

from src.common.errors import InputError
from src.common.rawio import read_pfm, read_raw_array, write_raw_array
from src.geometry.camera import CameraModel
from src.metrics.report import read_frame

PathLike = Union[str, Path]
SINGLE_FILE = 'sequence.npz'


def load_depth(path: PathLike) -> np.ndarray:
    """Read a .dpt or .pfm depth map."""
    path = Path(path)
    if path.suffix == '.dpt':
        return read_raw_array(path, 2)
    if path.suffix == '.pfm':
        return read_pfm(path)
    raise InputError(f"Unsupported depth format: {path.suffix}")


def load_poses(path: PathLike) -> np.ndarray:
    """(N, 4, 4) poses from a text file with 16 numbers per line."""
    try:
        values = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as e:
        raise InputError(f"Cannot read poses from {path}: {e}")
    if values.shape[1] != 16:
        raise InputError(f"{path}: each pose line needs 16 numbers, got {values.shape[1]}")
    return values.reshape(-1, 4, 4)


def load_intrinsics(path: PathLike) -> np.ndarray:
    try:
        values = np.loadtxt(path).reshape(-1)
    except (OSError, ValueError) as e:
        raise InputError(f"Cannot read intrinsics from {path}: {e}")
    if values.size != 9:
        raise InputError(f"{path}: intrinsics need 9 numbers, got {values.size}")
    return values.reshape(3, 3)


def _frame_to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def write_frame(path: PathLike, frame: np.ndarray):
    """Write a [0, 1] RGB frame as an 8-bit PNG."""
    iio.imwrite(path, _frame_to_uint8(frame))


class SequenceDataset:
    """
    Ordered RGB-D frames with per-frame poses and shared intrinsics.

    Frames are addressed by frame index (the NNNN of the file names), not by
    list position.
    """

    def __init__(self, indices: List[int], frame_loader, depth_loader, poses: np.ndarray,
                 intrinsics: np.ndarray, frame_rate: Optional[float] = None,
                 image_size: Optional[Tuple[int, int]] = None):
        self.indices = [int(i) for i in indices]
        if not self.indices:
            raise InputError("Sequence has no frames")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InputError(f"Frame indices must increase monotonically: {self.indices}")
        self.poses = np.asarray(poses, dtype=np.float64)
        if self.poses.ndim != 3 or self.poses.shape[1:] != (4, 4):
            raise InputError(f"Poses must be (N, 4, 4), got {self.poses.shape}")
        span = self.indices[-1] - self.indices[0] + 1
        if len(self.poses) < span:
            raise InputError(f"Frames {self.indices[0]}..{self.indices[-1]} need {span} poses, got {len(self.poses)}")
        self.intrinsics = np.asarray(intrinsics, dtype=np.float64)
        self.frame_rate = frame_rate
        self._frame_loader = frame_loader
        self._depth_loader = depth_loader
        self._image_size = image_size
        self.frames_read: Set[int] = set()
        self.depths_read: Set[int] = set()

    def __len__(self) -> int:
        return len(self.indices)

    def _position(self, index: int) -> int:
        try:
            return self.indices.index(index)
        except ValueError:
            raise InputError(f"Frame {index} is not in the sequence")

    def has_frame(self, index: int) -> bool:
        return index in self.indices

    def frame(self, index: int) -> np.ndarray:
        position = self._position(index)
        self.frames_read.add(index)
        frame = self._frame_loader(position)
        if self._image_size is None:
            self._image_size = (frame.shape[1], frame.shape[0])
        return frame

    def depth(self, index: int) -> np.ndarray:
        position = self._position(index)
        self.depths_read.add(index)
        depth = self._depth_loader(position)
        if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
            raise InputError(f"Depth map of frame {index} has non-positive or non-finite values")
        return depth

    def pose_position(self, index: int) -> int:
        """Row of poses holding frame `index` (rows count consecutive indices from the first frame)."""
        position = index - self.indices[0]
        if position < 0 or position >= len(self.poses):
            raise InputError(f"No pose for frame {index}")
        return position

    def pose(self, index: int) -> np.ndarray:
        return self.poses[self.pose_position(index)]

    def has_pose(self, index: int) -> bool:
        try:
            self.pose_position(index)
            return True
        except InputError:
            return False

    @property
    def image_size(self) -> Tuple[int, int]:
        """
        (width, height).

        Taken from file metadata or a frame already read; otherwise the first
        frame is read through the tracked accessor.
        """
        if self._image_size is None:
            self.frame(self.indices[0])
        return self._image_size

    def camera(self, index: int) -> CameraModel:
        return CameraModel(self.intrinsics, self.pose(index), self.image_size)

    def reset_access_log(self):
        self.frames_read.clear()
        self.depths_read.clear()

    @classmethod
    def from_arrays(cls, frames: np.ndarray, depths: np.ndarray, poses: np.ndarray,
                    intrinsics: np.ndarray, frame_rate: Optional[float] = None,
                    indices: Optional[List[int]] = None) -> 'SequenceDataset':
        frames = np.asarray(frames, dtype=np.float64)
        depths = np.asarray(depths, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise InputError(f"Frames must be (N, H, W, 3), got {frames.shape}")
        if depths.shape != frames.shape[:3]:
            raise InputError(f"Depths {depths.shape} do not match frames {frames.shape}")
        if indices is None:
            indices = list(range(len(frames)))
        if len(indices) != len(frames):
            raise InputError(f"{len(indices)} indices for {len(frames)} frames")
        return cls(indices, lambda i: frames[i], lambda i: depths[i], poses, intrinsics,
                   frame_rate, (frames.shape[2], frames.shape[1]))

    @classmethod
    def from_directory(cls, path: PathLike) -> 'SequenceDataset':
        """Open a dataset directory lazily; frames and depths load on access."""
        path = Path(path)
        if not path.is_dir():
            raise InputError(f"Dataset directory not found: {path}")
        if (path / SINGLE_FILE).exists():
            return cls.from_npz(path / SINGLE_FILE)

        frame_files: Dict[int, Path] = {int(p.stem): p for p in path.glob('*.png') if p.stem.isdigit()}
        if not frame_files:
            raise InputError(f"No NNNN.png frames in {path}")
        indices = sorted(frame_files)
        depth_files = []
        for index in indices:
            for suffix in ('.dpt', '.pfm'):
                candidate = path / f"{frame_files[index].stem}{suffix}"
                if candidate.exists():
                    depth_files.append(candidate)
                    break
            else:
                raise InputError(f"Frame {index} has no depth map (.dpt or .pfm) in {path}")
        for name in ('poses.txt', 'intrinsics.txt'):
            if not (path / name).exists():
                raise InputError(f"Missing {name} in {path}")

        # PNG header only; not a frame read
        height, width = iio.improps(frame_files[indices[-1]]).shape[:2]

        frame_rate = None
        if (path / 'metadata.json').exists():
            with open(path / 'metadata.json') as f:
                frame_rate = json.load(f).get('frame_rate')
        return cls(indices,
                   lambda i: read_frame(frame_files[indices[i]]),
                   lambda i: load_depth(depth_files[i]),
                   load_poses(path / 'poses.txt'), load_intrinsics(path / 'intrinsics.txt'),
                   frame_rate, (width, height))

    @classmethod
    def from_npz(cls, path: PathLike) -> 'SequenceDataset':
        try:
            with np.load(path) as data:
                arrays = {key: data[key] for key in data.files}
        except (OSError, ValueError) as e:
            raise InputError(f"Cannot read {path}: {e}")
        missing = {'frames', 'depths', 'poses', 'intrinsics'} - set(arrays)
        if missing:
            raise InputError(f"{path} lacks arrays {sorted(missing)}")
        frame_rate = float(arrays['frame_rate']) if 'frame_rate' in arrays else None
        frames = arrays['frames']
        if frames.dtype == np.uint8:
            frames = frames.astype(np.float64) / 255.0
        return cls.from_arrays(frames, arrays['depths'], arrays['poses'], arrays['intrinsics'], frame_rate)

    def save(self, out_dir: PathLike, extra_poses: Optional[np.ndarray] = None) -> Path:
        """Write the directory layout (frames as 8-bit PNG, depths as .dpt)."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for position, index in enumerate(self.indices):
            write_frame(out_dir / f"{index:04d}.png", self._frame_loader(position))
            write_raw_array(out_dir / f"{index:04d}.dpt", self._depth_loader(position))
        poses = self.poses if extra_poses is None else np.concatenate([self.poses, extra_poses])
        np.savetxt(out_dir / 'poses.txt', poses.reshape(len(poses), 16), fmt='%.10g')
        np.savetxt(out_dir / 'intrinsics.txt', self.intrinsics, fmt='%.10g')
        if self.frame_rate is not None:
            with open(out_dir / 'metadata.json', 'w') as f:
                json.dump({'frame_rate': self.frame_rate}, f, indent=2)
        return out_dir
