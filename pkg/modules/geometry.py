"""
Coordinate frames for the drone camera.

Local frame: origin on the ground below the first recorded drone position,
x East, y North, z Down. The text this frame comes from calls it NED although
E-N-D is left-handed; every routine here uses the E-N-D axis order throughout.

Camera frame: x along the boresight, y to the right of the image, z towards
the bottom of the image. R_q maps local vectors into the camera frame.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from pyproj import Transformer
from scipy.spatial.transform import Rotation

from utils.errors import DegenerateGeometryError, InvalidInputError, NoIntersectionError

UNIT_TOL = 1e-9
QUAT_TOL = 1e-6
GROUND_RAY_MIN_Z = 1e-9


@dataclass(frozen=True)
class Quaternion:
    """Scalar-first unit quaternion q1 + q2 i + q3 j + q4 k."""

    q1: float
    q2: float
    q3: float
    q4: float

    def as_array(self):
        return np.array([self.q1, self.q2, self.q3, self.q4], dtype=float)

    def norm(self):
        return float(np.linalg.norm(self.as_array()))

    def normalized(self):
        """
        Returns the quaternion scaled to unit norm.

        Raises:
            InvalidInputError: If the quaternion has zero norm.
        """
        n = self.norm()
        if n == 0.0 or not np.isfinite(n):
            raise InvalidInputError("Quaternion: zero or non-finite norm")
        q = self.as_array() / n
        return Quaternion(*[float(v) for v in q])


@dataclass(frozen=True)
class CameraPose:
    """
    Drone position and camera attitude for a single frame.

    Args:
        position_local (tuple): Drone position s in the local frame (m). The drone is
            above the ground when s_z < 0.
        quat (Quaternion): Camera attitude with respect to the local frame.
        fov (tuple): Field of view (fx, fy) in radians.
        image (tuple): Image size (w, h) in pixels, both even.
    """

    position_local: tuple
    quat: Quaternion
    fov: tuple
    image: tuple

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position_local)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise InvalidInputError(f"CameraPose: bad position {self.position_local}")
        object.__setattr__(self, "position_local", pos)
        fx, fy = (float(v) for v in self.fov)
        if not (0.0 < fx < 2.0 * math.pi) or not (0.0 < fy < math.pi):
            raise InvalidInputError(f"CameraPose: FoV out of range ({fx}, {fy})")
        object.__setattr__(self, "fov", (fx, fy))
        w, h = self.image
        if int(w) != w or int(h) != h or w <= 0 or h <= 0 or int(w) % 2 or int(h) % 2:
            raise InvalidInputError(f"CameraPose: image size must be positive even integers, got {self.image}")
        object.__setattr__(self, "image", (int(w), int(h)))

    @property
    def s(self):
        return np.array(self.position_local, dtype=float)

    @property
    def altitude(self):
        return -self.position_local[2]


@dataclass(frozen=True)
class GeoCoordinate:
    """WGS84 latitude/longitude in radians and ellipsoidal altitude in metres."""

    latitude: float
    longitude: float
    altitude: float

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2.0:
            raise InvalidInputError(f"GeoCoordinate: latitude {self.latitude} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class PixelPoint:
    ix: float
    iy: float


@dataclass(frozen=True)
class BoundingBox:
    """Detector box with upper-left corner (bx, by) and size (bw, bh) in pixels."""

    bx: float
    by: float
    bw: float
    bh: float

    def __post_init__(self):
        if not (self.bw > 0 and self.bh > 0):
            raise InvalidInputError(f"BoundingBox: width and height must be positive, got {self.bw}x{self.bh}")


def unit_vector(v):
    """
    Validates and returns a direction as a float array of shape (3,).

    Args:
        v (array-like): Candidate unit vector.

    Returns:
        numpy.ndarray: The vector, unchanged.

    Raises:
        InvalidInputError: If the vector is not 3-dimensional or its norm differs
            from one by more than 1e-9.
    """
    z = np.asarray(v, dtype=float)
    if z.shape != (3,) or abs(np.linalg.norm(z) - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"unit_vector: not a unit 3-vector {v}")
    return z


def rotation_matrix(q):
    """
    Returns R_q, the rotation taking local-frame vectors into the camera frame.

    Args:
        q (Quaternion): Unit quaternion, scalar first.

    Returns:
        numpy.ndarray: 3x3 orthogonal matrix with determinant +1.

    Raises:
        InvalidInputError: If the norm of q deviates from one by more than 1e-6.
    """
    if abs(q.norm() - 1.0) > QUAT_TOL:
        raise InvalidInputError(f"rotation_matrix: quaternion norm {q.norm()} is not 1")
    q1, q2, q3, q4 = q.q1, q.q2, q.q3, q.q4
    return np.array(
        [
            [2 * q1 * q1 - 1 + 2 * q2 * q2, 2 * q2 * q3 + 2 * q1 * q4, 2 * q2 * q4 - 2 * q1 * q3],
            [2 * q2 * q3 - 2 * q1 * q4, 2 * q1 * q1 - 1 + 2 * q3 * q3, 2 * q3 * q4 + 2 * q1 * q2],
            [2 * q2 * q4 + 2 * q1 * q3, 2 * q3 * q4 - 2 * q1 * q2, 2 * q1 * q1 - 1 + 2 * q4 * q4],
        ]
    )


def look_at_quaternion(position, target):
    """
    Builds the camera attitude that points the boresight from position to target.

    The camera y-axis is kept horizontal so the image is not rolled. When the
    camera looks straight down the image top faces North.

    Args:
        position (array-like): Camera position in the local frame.
        target (array-like): Point the boresight should pass through.

    Returns:
        Quaternion: Scalar-first unit quaternion whose R_q maps local to camera.

    Raises:
        InvalidInputError: If position and target coincide.
    """
    d = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    n = np.linalg.norm(d)
    if n == 0.0:
        raise InvalidInputError("look_at_quaternion: target equals position")
    x_cam = d / n
    down = np.array([0.0, 0.0, 1.0])
    z_cam = down - np.dot(down, x_cam) * x_cam
    if np.linalg.norm(z_cam) < 1e-9:
        # Straight up or down: bottom of the image faces South.
        south = np.array([0.0, -1.0, 0.0])
        z_cam = south - np.dot(south, x_cam) * x_cam
    z_cam = z_cam / np.linalg.norm(z_cam)
    y_cam = np.cross(z_cam, x_cam)
    # Columns are the camera axes in local coordinates, i.e. R_q transposed.
    c = np.column_stack([x_cam, y_cam, z_cam])
    x, y, z, w = Rotation.from_matrix(c).as_quat()
    if w < 0:
        x, y, z, w = -x, -y, -z, -w
    return Quaternion(float(w), float(x), float(y), float(z))


def focal_length_pixels(fov, image):
    """
    Returns the pinhole distance f_I (pixels) averaged over both image axes.

    Args:
        fov (tuple): (fx, fy) in radians.
        image (tuple): (w, h) in pixels.

    Returns:
        float: 0.5 * (w / (2 tan(fx/2)) + h / (2 tan(fy/2))).

    Raises:
        InvalidInputError: If either FoV is not inside (0, pi).
    """
    fx, fy = fov
    w, h = image
    if not (0.0 < fx < math.pi) or not (0.0 < fy < math.pi):
        raise InvalidInputError(f"focal_length_pixels: FoV ({fx}, {fy}) must lie in (0, pi)")
    return 0.5 * (w / (2.0 * math.tan(fx / 2.0)) + h / (2.0 * math.tan(fy / 2.0)))


def axis_focal_lengths(fov, image):
    """Per-axis pinhole distances (f_Ix, f_Iy) in pixels."""
    fx, fy = fov
    w, h = image
    return w / (2.0 * math.tan(fx / 2.0)), h / (2.0 * math.tan(fy / 2.0))


def pixel_to_angles(p, pose, method=2):
    """
    Converts a pixel into camera-frame azimuth and elevation.

    Method 1 scales the centred pixel linearly by the FoV. Method 2 uses the
    pinhole model with the averaged focal length f_I. Pixels outside the image
    are extrapolated.

    Args:
        p (PixelPoint): Pixel, sub-pixel coordinates allowed.
        pose (CameraPose): Provides FoV and image size.
        method (int): 1 or 2.

    Returns:
        tuple: (phi, theta) in radians.
    """
    w, h = pose.image
    fx, fy = pose.fov
    dx = p.ix - w / 2.0
    dy = p.iy - h / 2.0
    if method == 1:
        return dx / w * fx, dy / h * fy
    if method == 2:
        f_i = focal_length_pixels(pose.fov, pose.image)
        return math.atan(dx / f_i), math.atan(dy / f_i)
    raise InvalidInputError(f"pixel_to_angles: unknown method {method}")


def angles_to_doa(phi, theta):
    """
    Maps azimuth/elevation to a unit direction (cos phi cos theta, sin phi cos theta, sin theta).

    Accepts scalars or broadcastable arrays; the trailing axis of the result has length 3.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    ct = np.cos(theta)
    return np.stack([np.cos(phi) * ct, np.sin(phi) * ct, np.sin(theta)], axis=-1)


def doa_to_angles(z):
    """
    Returns (phi, theta) of a direction. Azimuth is undefined at the poles and
    reported as 0 there.

    Raises:
        InvalidInputError: For a zero-norm vector.
    """
    z = np.asarray(z, dtype=float)
    n = np.linalg.norm(z)
    if n == 0.0:
        raise InvalidInputError("doa_to_angles: zero-norm direction")
    z = z / n
    theta = math.asin(min(1.0, max(-1.0, z[2])))
    if math.hypot(z[0], z[1]) < 1e-15:
        return 0.0, theta
    return math.atan2(z[1], z[0]), theta


def camera_to_local(nu_camera, pose):
    """Rotates a camera-frame direction into the local frame (R_q transposed)."""
    return rotation_matrix(pose.quat).T @ np.asarray(nu_camera, dtype=float)


def _check_above_ground(pose):
    if pose.position_local[2] >= 0.0:
        raise InvalidInputError(f"drone must be above the ground (s_z < 0), got s_z={pose.position_local[2]}")


def project_doa_to_ground(nu_camera, pose):
    """
    Intersects the ray from the drone along a camera-frame DOA with the ground.

    Args:
        nu_camera (array-like): Unit DOA in the camera frame.
        pose (CameraPose): Drone pose; the drone must be above the ground.

    Returns:
        numpy.ndarray: Ground point (px, py) in metres.

    Raises:
        NoIntersectionError: If the local-frame ray does not point down
            (nu_z <= 1e-9).
    """
    _check_above_ground(pose)
    nu = camera_to_local(nu_camera, pose)
    if nu[2] <= GROUND_RAY_MIN_Z:
        raise NoIntersectionError(f"project_doa_to_ground: ray does not reach the ground (nu_z={nu[2]:.3e})")
    s = pose.s
    lam = -s[2] / nu[2]
    return np.array([s[0] + lam * nu[0], s[1] + lam * nu[1]])


def ground_to_doa(point, pose):
    """
    Camera-frame unit DOA of a ground point (px, py, 0): R_q (p - s) / ||R_q (p - s)||.

    Raises:
        DegenerateGeometryError: If the point coincides with the drone.
    """
    p = np.array([point[0], point[1], 0.0])
    v = rotation_matrix(pose.quat) @ (p - pose.s)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise DegenerateGeometryError("ground_to_doa: object at the drone position")
    return v / n


def ground_to_doas(points, pose):
    """Row-wise ground_to_doa for an n x 2 array of ground points."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    p = np.column_stack([points, np.zeros(points.shape[0])])
    v = (p - pose.s) @ rotation_matrix(pose.quat).T
    n = np.linalg.norm(v, axis=1)
    if np.any(n < 1e-12):
        raise DegenerateGeometryError("ground_to_doas: object at the drone position")
    return v / n[:, None]


def pixel_to_ground(p, pose, method=2):
    """Ground point seen at a pixel (pixel -> angles -> DOA -> ground)."""
    phi, theta = pixel_to_angles(p, pose, method)
    return project_doa_to_ground(angles_to_doa(phi, theta), pose)


def fov_footprint(pose):
    """
    Projects the four image corners onto the ground.

    Returns:
        numpy.ndarray: 4x2 polygon ordered top-left, top-right, bottom-right, bottom-left.

    Raises:
        NoIntersectionError: If a corner ray misses the ground.
    """
    fx, fy = pose.fov
    corners = [(-fx / 2, -fy / 2), (fx / 2, -fy / 2), (fx / 2, fy / 2), (-fx / 2, fy / 2)]
    return np.array([project_doa_to_ground(angles_to_doa(a, b), pose) for a, b in corners])


def point_in_footprint(point, pose):
    """True when the ground point is seen inside the camera FoV."""
    phi, theta = doa_to_angles(ground_to_doa(point, pose))
    fx, fy = pose.fov
    return abs(phi) <= fx / 2.0 and abs(theta) <= fy / 2.0


def landmark_distance_rmse(pixels, pose, spacing, method=2):
    """
    RMSE of the ground distances between consecutive landmarks against their known spacing.

    Args:
        pixels (list): PixelPoint landmarks in order along the ground.
        pose (CameraPose): Pose of the frame the pixels come from.
        spacing (float): True distance between consecutive landmarks (m).
        method (int): Pixel-to-angle method, 1 or 2.

    Returns:
        float: Root mean square distance error (m).
    """
    if len(pixels) < 2:
        raise InvalidInputError("landmark_distance_rmse: need at least two landmarks")
    points = np.array([pixel_to_ground(p, pose, method) for p in pixels])
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return float(np.sqrt(np.mean((d - spacing) ** 2)))


@lru_cache(maxsize=1)
def _ecef_transformer():
    # EPSG:4979 is 3D WGS84 geographic, EPSG:4978 is WGS84 geocentric.
    return Transformer.from_crs("EPSG:4979", "EPSG:4978", always_xy=True)


def _to_ecef(geo):
    x, y, z = _ecef_transformer().transform(math.degrees(geo.longitude), math.degrees(geo.latitude), geo.altitude)
    return np.array([x, y, z])


def wgs84_to_local(geo, origin):
    """
    Converts a WGS84 position into the local frame anchored on the ground at origin.

    The conversion goes geodetic -> ECEF -> tangent plane at the origin's
    latitude/longitude (altitude 0), then reorders to x East, y North, z Down.

    Args:
        geo (GeoCoordinate): Position to convert.
        origin (GeoCoordinate): Anchor; only its latitude and longitude are used.

    Returns:
        numpy.ndarray: (x, y, z) in metres.
    """
    ground = GeoCoordinate(origin.latitude, origin.longitude, 0.0)
    d = _to_ecef(geo) - _to_ecef(ground)
    lat, lon = ground.latitude, ground.longitude
    east = np.array([-math.sin(lon), math.cos(lon), 0.0])
    north = np.array([-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)])
    up = np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    return np.array([east @ d, north @ d, -(up @ d)])


def bbox_center(b):
    """Centre pixel of a bounding box."""
    return PixelPoint(b.bx + b.bw / 2.0, b.by + b.bh / 2.0)
