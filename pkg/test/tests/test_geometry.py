import unittest
import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from modules.geometry import (
    BoundingBox,
    CameraPose,
    GeoCoordinate,
    PixelPoint,
    Quaternion,
    angles_to_doa,
    axis_focal_lengths,
    bbox_center,
    camera_to_local,
    doa_to_angles,
    focal_length_pixels,
    fov_footprint,
    ground_to_doa,
    landmark_distance_rmse,
    look_at_quaternion,
    pixel_to_angles,
    pixel_to_ground,
    point_in_footprint,
    project_doa_to_ground,
    rotation_matrix,
    unit_vector,
    wgs84_to_local,
)
from presets.camera_presets import CameraPresets
from utils.errors import InvalidInputError, NoIntersectionError


logging.basicConfig(
    level=logging.WARN, format=f"%(asctime)s.%(msecs)03d %(levelname)s:%(message)s",
    datefmt="%d-%b-%y %H:%M:%S",
)
logger = logging.getLogger(__name__)


def make_pose(drone=(0.0, 0.0, -25.0), target=(25.0, 25.0, 0.0), camera="optical"):
    presets = CameraPresets()
    return CameraPose(drone, look_at_quaternion(drone, target), presets.get_fov_radians(camera), presets.get_image_size(camera))


class TestGeometry(unittest.TestCase):
    def test_focal_lengths_optical(self):
        presets = CameraPresets()
        fx, fy = axis_focal_lengths(presets.get_fov_radians("optical"), presets.get_image_size("optical"))
        self.assertAlmostEqual(1396.80, fx, delta=0.05)
        self.assertAlmostEqual(1396.91, fy, delta=0.05)
        self.assertAlmostEqual(
            0.5 * (fx + fy),
            focal_length_pixels(presets.get_fov_radians("optical"), presets.get_image_size("optical")),
            places=9,
        )

    def test_focal_length_rejects_wide_fov(self):
        with self.assertRaises(InvalidInputError):
            focal_length_pixels((math.pi, 1.0), (100, 100))

    def test_rotation_matrix_matches_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            quat = Quaternion(*q)
            expected = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix().T
            np.testing.assert_allclose(rotation_matrix(quat), expected, atol=1e-12)

    def test_rotation_matrix_rejects_non_unit(self):
        with self.assertRaises(InvalidInputError):
            rotation_matrix(Quaternion(1.0, 1.0, 0.0, 0.0))

    def test_look_at_boresight(self):
        pose = make_pose()
        target = np.array([25.0, 25.0, 0.0])
        boresight = camera_to_local([1.0, 0.0, 0.0], pose)
        expected = (target - pose.s) / np.linalg.norm(target - pose.s)
        np.testing.assert_allclose(boresight, expected, atol=1e-12)
        # Camera y-axis stays horizontal.
        self.assertAlmostEqual(0.0, camera_to_local([0.0, 1.0, 0.0], pose)[2], places=12)
        np.testing.assert_allclose(ground_to_doa(target[:2], pose), [1.0, 0.0, 0.0], atol=1e-12)

    def test_look_straight_down(self):
        pose = make_pose(target=(0.0, 0.0, 0.0))
        np.testing.assert_allclose(camera_to_local([1.0, 0.0, 0.0], pose), [0.0, 0.0, 1.0], atol=1e-12)

    def test_angles_round_trip(self):
        for phi, theta in ((0.0, 0.0), (0.3, -0.2), (-1.0, 0.5)):
            p, t = doa_to_angles(angles_to_doa(phi, theta))
            self.assertAlmostEqual(phi, p, places=12)
            self.assertAlmostEqual(theta, t, places=12)

    def test_doa_to_angles_pole(self):
        self.assertEqual(
            (0.0, math.pi / 2.0),
            doa_to_angles([0.0, 0.0, 1.0]),
        )

    def test_ground_round_trip_random_poses(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(2000):
            drone = (rng.uniform(-50, 50), rng.uniform(-50, 50), -rng.uniform(10, 100))
            target = (drone[0] + rng.uniform(-40, 40), drone[1] + rng.uniform(-40, 40), 0.0)
            pose = make_pose(drone, target)
            point = np.array([drone[0] + rng.uniform(-100, 100), drone[1] + rng.uniform(-100, 100)])
            back = project_doa_to_ground(ground_to_doa(point, pose), pose)
            worst = max(worst, float(np.linalg.norm(back - point)))
        self.assertLess(worst, 1e-9)

    def test_ray_missing_ground(self):
        pose = make_pose()
        upward = rotation_matrix(pose.quat) @ np.array([0.0, 0.0, -1.0])
        with self.assertRaises(NoIntersectionError):
            project_doa_to_ground(upward, pose)

    def test_drone_below_ground_rejected(self):
        pose = make_pose(drone=(0.0, 0.0, 5.0), target=(10.0, 0.0, 0.0))
        with self.assertRaises(InvalidInputError):
            project_doa_to_ground([1.0, 0.0, 0.0], pose)

    def test_pixel_methods_agree_near_centre(self):
        pose = make_pose()
        w, h = pose.image
        worst = 0.0
        for dx in range(-8, 9, 2):
            for dy in range(-8, 9, 2):
                p = PixelPoint(w / 2 + dx, h / 2 + dy)
                a1 = np.array(pixel_to_angles(p, pose, method=1))
                a2 = np.array(pixel_to_angles(p, pose, method=2))
                worst = max(worst, float(np.abs(a1 - a2).max()))
        self.assertLess(worst, 1e-3)

    def test_pixel_image_centre(self):
        pose = make_pose()
        w, h = pose.image
        for method in (1, 2):
            self.assertEqual(
                (0.0, 0.0),
                pixel_to_angles(PixelPoint(w / 2, h / 2), pose, method=method),
            )
        np.testing.assert_allclose(pixel_to_ground(PixelPoint(w / 2, h / 2), pose), [25.0, 25.0], atol=1e-9)

    def test_pixel_unknown_method(self):
        with self.assertRaises(InvalidInputError):
            pixel_to_angles(PixelPoint(0, 0), make_pose(), method=3)

    def test_bbox_center(self):
        self.assertEqual(
            PixelPoint(15.0, 40.0),
            bbox_center(BoundingBox(10.0, 20.0, 10.0, 40.0)),
        )
        with self.assertRaises(InvalidInputError):
            BoundingBox(0.0, 0.0, 0.0, 5.0)

    def test_footprint_contains_centre(self):
        pose = make_pose()
        corners = fov_footprint(pose)
        self.assertEqual((4, 2), corners.shape)
        self.assertTrue(point_in_footprint((25.0, 25.0), pose))
        self.assertFalse(point_in_footprint((-25.0, -25.0), pose))
        for c in corners:
            self.assertTrue(point_in_footprint(c * 0.999 + np.array([25.0, 25.0]) * 0.001, pose))

    def test_landmark_rmse_zero_on_exact_pixels(self):
        pose = make_pose()
        f_i = focal_length_pixels(pose.fov, pose.image)
        w, h = pose.image
        pixels = []
        for i in range(6):
            phi, theta = doa_to_angles(ground_to_doa((22.0 + i, 24.0 + 0.5 * i), pose))
            pixels.append(PixelPoint(w / 2 + f_i * math.tan(phi), h / 2 + f_i * math.tan(theta)))
        spacing = math.hypot(1.0, 0.5)
        self.assertLess(landmark_distance_rmse(pixels, pose, spacing, method=2), 1e-9)
        self.assertGreater(landmark_distance_rmse(pixels, pose, spacing, method=1), 0.0)

    def test_wgs84_to_local(self):
        origin = GeoCoordinate(math.radians(57.7), math.radians(11.97), 0.0)
        np.testing.assert_allclose(wgs84_to_local(origin, origin), [0.0, 0.0, 0.0], atol=1e-6)
        above = GeoCoordinate(origin.latitude, origin.longitude, 25.0)
        np.testing.assert_allclose(wgs84_to_local(above, origin), [0.0, 0.0, -25.0], atol=1e-6)
        north = wgs84_to_local(GeoCoordinate(origin.latitude + 1e-5, origin.longitude, 0.0), origin)
        east = wgs84_to_local(GeoCoordinate(origin.latitude, origin.longitude + 1e-5, 0.0), origin)
        self.assertAlmostEqual(63.8, north[1], delta=0.5)
        self.assertAlmostEqual(0.0, north[0], delta=1e-3)
        self.assertGreater(east[0], 30.0)
        self.assertAlmostEqual(0.0, east[1], delta=1e-3)

    def test_camera_pose_validation(self):
        q = Quaternion(1.0, 0.0, 0.0, 0.0)
        with self.assertRaises(InvalidInputError):
            CameraPose((0.0, 0.0, -1.0), q, (1.0, 1.0), (101, 100))
        with self.assertRaises(InvalidInputError):
            CameraPose((0.0, 0.0), q, (1.0, 1.0), (100, 100))
        with self.assertRaises(InvalidInputError):
            unit_vector([1.0, 1.0, 0.0])

    def test_camera_presets(self):
        presets = CameraPresets()
        self.assertEqual(
            (1190, 928),
            presets.get_image_size("thermal"),
        )
        self.assertAlmostEqual(math.radians(69.0), presets.get_fov_radians("optical")[0], places=12)
        presets_dict = presets.get_preset_dict()
        self.assertEqual(["optical", "thermal"], sorted(presets_dict))
        for entry in presets_dict.values():
            self.assertEqual({"name", "description", "fov_deg", "image_px", "fps"}, set(entry))
        self.assertEqual([69.0, 42.27], presets_dict["optical"]["fov_deg"])
        self.assertIs(presets_dict["thermal"], presets.get_camera("thermal"))
        with self.assertRaises(InvalidInputError):
            presets.get_camera("infrared")
