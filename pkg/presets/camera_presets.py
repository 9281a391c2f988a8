import math

from utils.errors import InvalidInputError


class CameraPresets:

    def __init__(self):
        self.presets = {
            "optical": self.optical(),
            "thermal": self.thermal(),
        }

    def get_preset_dict(self):
        """
        Returns the dictionary of camera presets keyed by preset name.

        Returns:
            dict: Preset name -> {"name", "description", "fov_deg", "image_px", "fps"}.
        """
        return self.presets

    def get_camera(self, name):
        """
        Retrieves one camera preset by name.

        Args:
            name (str): Preset name, "optical" or "thermal".

        Returns:
            dict: The preset entry.

        Raises:
            InvalidInputError: If the preset is unknown.
        """
        entry = self.presets.get(name)
        if entry is None:
            raise InvalidInputError(f"get_camera: unknown camera preset {name}, expected one of {sorted(self.presets)}")
        return entry

    def get_fov_radians(self, name):
        fx, fy = self.get_camera(name)["fov_deg"]
        return math.radians(fx), math.radians(fy)

    def get_image_size(self, name):
        return tuple(self.get_camera(name)["image_px"])

    def optical(self):
        """
        Returns the visible-light camera of the drone: 69 x 42.27 degree field of view on a
        1920 x 1080 sensor at 30 frames per second.
        """
        return {
            "name": "Optical",
            "description": "Visible-light gimbal camera.",
            "fov_deg": [69.0, 42.27],
            "image_px": [1920, 1080],
            "fps": 30.0,
        }

    def thermal(self):
        return {
            "name": "Thermal",
            "description": "Long-wave infrared gimbal camera.",
            "fov_deg": [46.14, 36.75],
            "image_px": [1190, 928],
            "fps": 8.6,
        }
