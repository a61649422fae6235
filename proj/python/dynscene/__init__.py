"""Dynamic-object tracking, keypoint culling and semantic octree mapping."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
