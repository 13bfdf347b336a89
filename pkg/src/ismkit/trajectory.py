"""Rigid-body poses, tool-tip pivot calibration, and colored trajectory export.

Poses arrive from an external tracker as timestamped position + unit
quaternion. The tool tip is found by rotating a fixed body-frame offset; the
offset itself is recovered by pivoting the tool around a stationary point
and solving the stacked least-squares system R_i * o + p_i = c for the
offset o and the pivot c.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .colormap import ColorLut, NormalizationConfig, TURBO, map_color, normalize
from .errors import DataError, FileFormatError
from .ism import IntensityProfile

QUAT_NORM_TOL = 1e-6
MAX_PIVOT_CONDITION = 1e6
# Slack on the spacing gate: keeps decimation deterministic when step sizes
# land exactly on min_spacing and absorbs float32 quantization of positions
# stored in session files (ULP ~1e-7 m at meter scale). One micron is far
# below any meaningful spacing threshold.
SPACING_EPSILON_M = 1e-6


@dataclass(frozen=True)
class PoseSample:
    """Timestamped rigid-body pose: position in meters, orientation (w, x, y, z)."""

    t_us: int
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        quat = np.asarray(self.orientation, dtype=np.float64)
        if pos.shape != (3,) or quat.shape != (4,):
            raise DataError("pose needs a 3-vector position and 4-vector quaternion")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(quat))):
            raise DataError("pose contains non-finite values")
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise DataError(f"quaternion norm {norm} deviates from 1 beyond {QUAT_NORM_TOL}")
        object.__setattr__(self, "t_us", int(self.t_us))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat)


@dataclass(frozen=True)
class ToolCalibration:
    tip_offset: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.tip_offset, dtype=np.float64)
        if off.shape != (3,) or not np.all(np.isfinite(off)):
            raise DataError("tip offset must be a finite 3-vector")
        object.__setattr__(self, "tip_offset", off)


IDENTITY_CALIBRATION = ToolCalibration(np.zeros(3))


@dataclass(frozen=True)
class TrajectoryPoint:
    t_us: int
    tip_position: np.ndarray
    intensity: float
    rgb: tuple[int, int, int]


@dataclass(frozen=True)
class TrajectoryConfig:
    min_spacing_m: float = 0.002
    max_point_rate_hz: float = 200.0
    align_tolerance_ms: float = 20.0

    def __post_init__(self):
        if self.min_spacing_m <= 0 or self.max_point_rate_hz <= 0 or self.align_tolerance_ms <= 0:
            raise DataError("trajectory config values must be positive")


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def tip_position(pose: PoseSample, calibration: ToolCalibration) -> np.ndarray:
    """World position of the tool tip: p + R(q) @ offset."""
    return pose.position + quat_to_matrix(pose.orientation) @ calibration.tip_offset


def pivot_calibrate(poses: list[PoseSample]) -> tuple[ToolCalibration, float]:
    """Recover the tip offset from poses pivoting about a fixed point.

    Solves R_i * o + p_i = c for (o, c) by least squares over all poses and
    returns the calibration plus the per-equation residual RMS (comparable to
    the per-axis tracker noise). Orientation diversity is required: the
    stacked system must be reasonably conditioned, otherwise the offset is
    unobservable.
    """
    if len(poses) < 3:
        raise DataError(f"pivot calibration needs at least 3 poses, got {len(poses)}")
    n = len(poses)
    a = np.zeros((3 * n, 6))
    b = np.zeros(3 * n)
    for i, pose in enumerate(poses):
        a[3 * i:3 * i + 3, 0:3] = quat_to_matrix(pose.orientation)
        a[3 * i:3 * i + 3, 3:6] = -np.eye(3)
        b[3 * i:3 * i + 3] = -pose.position
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_PIVOT_CONDITION:
        raise DataError(
            f"orientations too similar for pivot calibration (condition number {cond:.3g})")
    sol, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    residual = a @ sol - b
    rms = float(np.sqrt(np.mean(residual ** 2)))
    return ToolCalibration(sol[:3]), rms


def build_trajectory(poses: list[PoseSample], profile: IntensityProfile,
                     calibration: ToolCalibration = IDENTITY_CALIBRATION,
                     lut: ColorLut = TURBO,
                     norm: NormalizationConfig = NormalizationConfig(1.0),
                     config: TrajectoryConfig = TrajectoryConfig()) -> list[TrajectoryPoint]:
    """Decimate poses into colored trajectory points.

    A pose is emitted only when its tip has moved at least min_spacing_m from
    the last emitted point AND at least 1/max_point_rate_hz has elapsed.
    Intensity comes from the profile segment whose midpoint is nearest the
    pose timestamp (within align_tolerance_ms); outside the tolerance the
    last known intensity is held, starting from zero.
    """
    if not poses:
        raise DataError("empty pose stream")
    if len(profile) == 0:
        raise DataError("empty intensity profile")
    t_prev = None
    for pose in poses:
        if t_prev is not None and pose.t_us <= t_prev:
            raise DataError(f"pose timestamps not strictly increasing at t_us={pose.t_us}")
        t_prev = pose.t_us

    midpoints = profile.midpoints_s()
    values = profile.values
    tol_s = config.align_tolerance_ms / 1000.0
    min_interval_us = 1e6 / config.max_point_rate_hz

    points: list[TrajectoryPoint] = []
    last_tip = None
    last_t_us = None
    held_intensity = 0.0
    for pose in poses:
        t_s = pose.t_us / 1e6
        j = int(np.searchsorted(midpoints, t_s))
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < midpoints.size:
                d = abs(midpoints[cand] - t_s)
                if best is None or d < best[0]:
                    best = (d, cand)
        if best is not None and best[0] <= tol_s:
            held_intensity = float(values[best[1]])

        tip = tip_position(pose, calibration)
        if last_tip is not None:
            if np.linalg.norm(tip - last_tip) < config.min_spacing_m - SPACING_EPSILON_M:
                continue
            if pose.t_us - last_t_us < min_interval_us:
                continue
        rgb = map_color(normalize(held_intensity, norm), lut)
        points.append(TrajectoryPoint(t_us=pose.t_us, tip_position=tip,
                                      intensity=held_intensity, rgb=rgb))
        last_tip = tip
        last_t_us = pose.t_us
    return points


def export_ply(points: list[TrajectoryPoint], path) -> None:
    """Write trajectory points as an ASCII PLY point cloud with vertex colors."""
    if not points:
        raise DataError("refusing to write an empty PLY")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\n"
                 "format ascii 1.0\n"
                 f"element vertex {len(points)}\n"
                 "property float x\n"
                 "property float y\n"
                 "property float z\n"
                 "property uchar red\n"
                 "property uchar green\n"
                 "property uchar blue\n"
                 "end_header\n")
        for p in points:
            x, y, z = p.tip_position
            r, g, b = p.rgb
            fh.write(f"{x:g} {y:g} {z:g} {r} {g} {b}\n")


def load_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back an ASCII PLY written by export_ply: (positions Nx3, colors Nx3)."""
    with open(path, "r", encoding="ascii") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise FileFormatError(f"{path}: not a PLY file")
        n = None
        while True:
            line = fh.readline()
            if not line:
                raise FileFormatError(f"{path}: header never ends")
            line = line.strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            if line == "end_header":
                break
        if n is None:
            raise FileFormatError(f"{path}: no vertex element")
        pos = np.zeros((n, 3))
        rgb = np.zeros((n, 3), dtype=np.int64)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) < 6:
                raise FileFormatError(f"{path}: truncated vertex list at row {i}")
            pos[i] = [float(v) for v in parts[:3]]
            rgb[i] = [int(v) for v in parts[3:6]]
    return pos, rgb


def save_pose_csv(poses: list[PoseSample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_us", "px", "py", "pz", "qw", "qx", "qy", "qz"])
        for p in poses:
            writer.writerow([p.t_us,
                             *(f"{v:.9g}" for v in p.position),
                             *(f"{v:.9g}" for v in p.orientation)])


def load_pose_csv(path) -> list[PoseSample]:
    """Read `t_us,px,py,pz,qw,qx,qy,qz` rows into pose samples."""
    poses: list[PoseSample] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["t_us", "px", "py", "pz", "qw", "qx", "qy", "qz"]
        if header is None or [h.strip() for h in header[:8]] != expected:
            raise FileFormatError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t_us = int(row[0])
                vals = [float(v) for v in row[1:8]]
            except (ValueError, IndexError):
                raise FileFormatError(f"{path}:{lineno}: bad pose row {row!r}") from None
            try:
                poses.append(PoseSample(t_us, np.array(vals[0:3]), np.array(vals[3:7])))
            except DataError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from None
    return poses


def save_calibration(calibration: ToolCalibration, residual_rms: float, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        off = calibration.tip_offset
        fh.write(f"tip_offset {off[0]:.9g} {off[1]:.9g} {off[2]:.9g}\n")
        fh.write(f"residual_rms_m {residual_rms:.9g}\n")


def load_calibration(path) -> ToolCalibration:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if parts and parts[0] == "tip_offset":
                if len(parts) != 4:
                    raise FileFormatError(f"{path}:{lineno}: tip_offset needs 3 values")
                try:
                    return ToolCalibration(np.array([float(v) for v in parts[1:4]]))
                except ValueError:
                    raise FileFormatError(f"{path}:{lineno}: non-numeric offset") from None
    raise FileFormatError(f"{path}: no tip_offset line found")
