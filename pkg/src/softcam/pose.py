from dataclasses import dataclass
from typing import Optional

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class Pose:
    """Point of interest in the camera frame, millimetres.

    Components disabled by an axes mask are ``None``.
    """

    x: Optional[float]
    y: Optional[float]
    z: Optional[float]
    t: float = 0.0

    def as_tuple(self):
        return (self.x, self.y, self.z)
