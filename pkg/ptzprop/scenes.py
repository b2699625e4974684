""" Synthetic underground scenes and a ray-casting LiDAR renderer.

A scene is a straight tunnel along the world x axis: a circular cross
section cut by a flat floor at z = 0, open at both ends. Objects stand on
the floor, protrusions stick out of the walls and belong to the
environment. A multi-beam LiDAR moving along a trajectory is simulated by
casting its beams against these primitives.
"""
# License: BSD (3-clause)

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .checks import check_positive, check_random_state
from .exceptions import SceneError
from .geometry import Pose, direction_from_angles
from .scan_io import LidarScan, write_dataset


logger = logging.getLogger(__name__)

SHAPES = ('box', 'cylinder', 'mannequin')
ARTIFACT_VOLUME = (0.01, 0.8)


@dataclass(frozen=True)
class Tunnel:
    """ Tunnel geometry and wall reflectivity.

    Parameters
    ----------
    radius : float, radius of the circular cross section in meters.
    length : float, the tunnel spans x in [0, length].
    center_height : float, height of the circle centre above the floor.
    roughness : float, amplitude of the wall bumps in meters.
    intensity : float, mean wall and floor intensity.
    intensity_std : float, spread of the intensity between wall patches.
    intensity_mixture : tuple of float, per-patch mean intensities drawn
        instead of ``intensity`` when not empty.
    patch_length : float, size of the intensity patches along x.
    floor_intensity : float or None, floor intensity, ``intensity`` if None.
    """
    radius: float = 3.0
    length: float = 70.0
    center_height: float = 1.0
    roughness: float = 0.05
    intensity: float = 15.0
    intensity_std: float = 3.0
    intensity_mixture: tuple = ()
    patch_length: float = 1.5
    floor_intensity: float = None

    def __post_init__(self):
        check_positive(self.radius, 'radius')
        check_positive(self.length, 'length')
        if not 0 <= self.center_height < self.radius:
            raise SceneError("tunnel center_height should be in "
                             "[0, radius)")
        object.__setattr__(self, 'intensity_mixture',
                           tuple(float(v) for v in self.intensity_mixture))

    @property
    def floor_half_width(self):
        return float(np.sqrt(self.radius ** 2 - self.center_height ** 2))


@dataclass(frozen=True)
class SceneObject:
    """ Object standing in the scene.

    Parameters
    ----------
    name : str, object class (backpack, survivor, drill, bin, rock...).
    shape : str, 'box', 'cylinder' (vertical) or 'mannequin' (two stacked
        cylinders).
    size : tuple, (length, width, height) of a box, (diameter, diameter,
        height) of the round shapes, in meters.
    position : tuple, world position of the centre of the object base.
    yaw_deg : float, rotation of a box around the vertical axis.
    intensity : float, mean return intensity.
    is_artifact : bool, mission-relevant object.
    """
    name: str
    shape: str
    size: tuple
    position: tuple
    yaw_deg: float = 0.0
    intensity: float = 200.0
    is_artifact: bool = False

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise SceneError(f"object {self.name!r}: shape should be in "
                             f"{SHAPES}, got {self.shape!r}")
        size = tuple(float(v) for v in self.size)
        position = tuple(float(v) for v in self.position)
        if len(size) != 3 or min(size) <= 0:
            raise SceneError(f"object {self.name!r}: size should hold 3 "
                             f"positive values")
        if len(position) != 3:
            raise SceneError(f"object {self.name!r}: position should hold "
                             f"3 values")
        if not 0 <= self.intensity <= 255:
            raise SceneError(f"object {self.name!r}: intensity should be "
                             f"in [0, 255]")
        object.__setattr__(self, 'size', size)
        object.__setattr__(self, 'position', position)

    @property
    def center(self):
        x, y, z = self.position
        return np.array([x, y, z + self.size[2] / 2])

    def aabb(self):
        """ World axis-aligned bounding box (lo, hi). """
        x, y, z = self.position
        if self.shape == 'box':
            yaw = np.radians(self.yaw_deg)
            c, s = abs(np.cos(yaw)), abs(np.sin(yaw))
            hx = (c * self.size[0] + s * self.size[1]) / 2
            hy = (s * self.size[0] + c * self.size[1]) / 2
        else:
            hx = hy = self.size[0] / 2
        return (np.array([x - hx, y - hy, z]),
                np.array([x + hx, y + hy, z + self.size[2]]))

    @property
    def volume(self):
        lo, hi = self.aabb()
        return float(np.prod(hi - lo))

    def distance_to(self, point):
        """ Distance from a point to the bounding box, 0 inside. """
        lo, hi = self.aabb()
        point = np.asarray(point, dtype=np.float64)
        return float(np.linalg.norm(np.maximum(lo - point, 0) +
                                    np.maximum(point - hi, 0)))

    def intersect(self, origin, directions):
        """ Distance along each ray to the object, inf on miss. """
        if self.shape == 'box':
            return intersect_box(origin, directions, self.center,
                                 self.size, self.yaw_deg)
        x, y, z = self.position
        d, h = self.size[0], self.size[2]
        if self.shape == 'cylinder':
            return intersect_cylinder(origin, directions, (x, y), d / 2, z,
                                      z + h)
        body = intersect_cylinder(origin, directions, (x, y), d / 2, z,
                                  z + 0.75 * h)
        head = intersect_cylinder(origin, directions, (x, y), 0.225 * d,
                                  z + 0.75 * h, z + h)
        return np.minimum(body, head)


@dataclass(frozen=True)
class BeamModel:
    """ Multi-beam spinning LiDAR.

    Parameters
    ----------
    n_beams : int (default: 16), number of beams.
    fov_up_deg, fov_down_deg : float (default: 15, -15), elevation span.
    azimuth_step_deg : float (default: 0.2), horizontal step.
    range_noise : float (default: 0.01), std of the range noise in meters.
    intensity_noise : float (default: 2.0), std of the intensity noise.
    min_range, max_range : float (default: 0.3, 100), returns outside are
        dropped.
    """
    n_beams: int = 16
    fov_up_deg: float = 15.0
    fov_down_deg: float = -15.0
    azimuth_step_deg: float = 0.2
    range_noise: float = 0.01
    intensity_noise: float = 2.0
    min_range: float = 0.3
    max_range: float = 100.0

    def __post_init__(self):
        if int(self.n_beams) != self.n_beams or self.n_beams < 1:
            raise SceneError("n_beams should be an integer >= 1")
        check_positive(self.azimuth_step_deg, 'azimuth_step_deg')
        check_positive(self.range_noise, 'range_noise', strict=False)
        check_positive(self.intensity_noise, 'intensity_noise', strict=False)

    def directions(self):
        """ Unit beam directions in the sensor frame, shape (n_rays, 3). """
        elevation = np.linspace(self.fov_down_deg, self.fov_up_deg,
                                self.n_beams)
        azimuth = np.arange(0.0, 360.0, self.azimuth_step_deg)
        az, el = np.meshgrid(azimuth, elevation)
        return direction_from_angles(az.ravel(), el.ravel())


@dataclass(frozen=True)
class TrajectorySpec:
    """ Straight walk along the tunnel with a periodic gait sway.

    Parameters
    ----------
    start : tuple, initial sensor position.
    heading_deg : float, walking direction around z.
    speed : float, meters per second.
    rate_hz : float, scan rate.
    n_scans : int, number of scans.
    sway_pitch_deg, sway_roll_deg : float, gait oscillation amplitudes.
    sway_hz : float, gait frequency.
    t0 : float, timestamp of the first scan.
    """
    start: tuple = (1.0, 0.0, 0.8)
    heading_deg: float = 0.0
    speed: float = 1.0
    rate_hz: float = 5.0
    n_scans: int = 200
    sway_pitch_deg: float = 2.0
    sway_roll_deg: float = 1.5
    sway_hz: float = 1.2
    t0: float = 0.0

    def __post_init__(self):
        check_positive(self.rate_hz, 'rate_hz')
        check_positive(self.speed, 'speed', strict=False)
        if int(self.n_scans) != self.n_scans or self.n_scans < 1:
            raise SceneError("n_scans should be an integer >= 1")
        object.__setattr__(self, 'start',
                           tuple(float(v) for v in self.start))

    def poses(self):
        heading = np.radians(self.heading_deg)
        forward = np.array([np.cos(heading), np.sin(heading), 0.0])
        poses = []
        for i in range(self.n_scans):
            dt = i / self.rate_hz
            phase = 2 * np.pi * self.sway_hz * dt
            poses.append(Pose.from_euler(
                np.asarray(self.start) + self.speed * dt * forward,
                roll=self.sway_roll_deg * np.sin(phase),
                pitch=self.sway_pitch_deg * np.sin(2 * phase),
                yaw=self.heading_deg, timestamp=self.t0 + dt))
        return poses


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """ Tunnel, objects, sensor trajectory and beam model.

    Parameters
    ----------
    name : str.
    tunnel : Tunnel.
    objects : tuple of SceneObject, ground truth objects.
    protrusions : tuple of SceneObject, parts of the environment.
    trajectory : tuple of Pose, sensor poses (world <- sensor).
    beam : BeamModel.
    trajectory_spec : TrajectorySpec or None, how the trajectory was built.
    """
    name: str
    tunnel: Tunnel
    objects: tuple = ()
    protrusions: tuple = ()
    trajectory: tuple = ()
    beam: BeamModel = field(default_factory=BeamModel)
    trajectory_spec: TrajectorySpec = None

    def __post_init__(self):
        object.__setattr__(self, 'objects', tuple(self.objects))
        object.__setattr__(self, 'protrusions', tuple(self.protrusions))
        object.__setattr__(self, 'trajectory', tuple(self.trajectory))
        if not self.trajectory:
            raise SceneError("a scene needs at least one trajectory pose")
        lo_vol, hi_vol = ARTIFACT_VOLUME
        for obj in self.objects:
            if obj.is_artifact and not lo_vol <= obj.volume <= hi_vol:
                raise SceneError(f"artifact {obj.name!r} has a volume of "
                                 f"{obj.volume:.3f} m3 outside of "
                                 f"[{lo_vol}, {hi_vol}]")
        boxes = [o.aabb() for o in self.all_objects]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                (lo_i, hi_i), (lo_j, hi_j) = boxes[i], boxes[j]
                if np.all(lo_i < hi_j) and np.all(lo_j < hi_i):
                    raise SceneError(
                        f"objects {self.all_objects[i].name!r} and "
                        f"{self.all_objects[j].name!r} overlap")

    @property
    def all_objects(self):
        return self.objects + self.protrusions

    @property
    def artifacts(self):
        return tuple(o for o in self.objects if o.is_artifact)

    # serialization

    def to_dict(self):
        scene = dict(name=self.name, tunnel=asdict(self.tunnel),
                     objects=[asdict(o) for o in self.objects],
                     protrusions=[asdict(o) for o in self.protrusions],
                     beam=asdict(self.beam))
        if self.trajectory_spec is not None:
            scene['trajectory'] = asdict(self.trajectory_spec)
        else:
            scene['poses'] = [[p.timestamp, *p.translation, *p.rotation]
                              for p in self.trajectory]
        return scene

    @classmethod
    def from_dict(cls, scene):
        try:
            tunnel = Tunnel(**scene.get('tunnel', {}))
            objects = [SceneObject(**o) for o in scene.get('objects', [])]
            protrusions = [SceneObject(**o)
                           for o in scene.get('protrusions', [])]
            beam = BeamModel(**scene.get('beam', {}))
            spec = None
            if 'poses' in scene:
                trajectory = [Pose(p[1:4], p[4:8], timestamp=p[0])
                              for p in scene['poses']]
            else:
                spec = TrajectorySpec(**scene.get('trajectory', {}))
                trajectory = spec.poses()
        except (TypeError, ValueError) as e:
            if isinstance(e, SceneError):
                raise
            raise SceneError(f"invalid scene description: {e}") from e
        return cls(scene.get('name', 'scene'), tunnel, objects, protrusions,
                   trajectory, beam, spec)


def load_scene(path):
    """ Read a scene JSON file. """
    try:
        scene = json.loads(Path(path).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise SceneError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(scene, dict):
        raise SceneError(f"{path} should hold a JSON object")
    return SyntheticScene.from_dict(scene)


def save_scene(scene, path):
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2),
                          encoding='utf-8')


###############################################################################
# Ray casting

def intersect_box(origin, directions, center, size, yaw_deg=0.0):
    """ Entry distance of rays into a box rotated by yaw around z. """
    yaw = np.radians(yaw_deg)
    c, s = np.cos(yaw), np.sin(yaw)
    to_local = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    o = to_local @ (np.asarray(origin, dtype=np.float64) - center)
    d = directions @ to_local.T
    half = np.asarray(size) / 2
    with np.errstate(divide='ignore', invalid='ignore'):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    t_near = np.nanmax(np.minimum(t1, t2), axis=1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    # rays parallel to a slab and outside of it never hit
    outside = np.any((d == 0) & (np.abs(o) > half), axis=1)
    hit = (t_far >= t_near) & (t_near > 0) & ~outside
    return np.where(hit, t_near, np.inf)


def intersect_cylinder(origin, directions, center_xy, radius, z_low, z_high):
    """ Entry distance of rays into a vertical capped cylinder. """
    o = np.asarray(origin, dtype=np.float64)
    d = directions
    ox, oy = o[0] - center_xy[0], o[1] - center_xy[1]
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (ox * d[:, 0] + oy * d[:, 1])
    c = ox ** 2 + oy ** 2 - radius ** 2
    disc = b ** 2 - 4 * a * c
    t = np.full(len(d), np.inf)
    with np.errstate(divide='ignore', invalid='ignore'):
        t_side = (-b - np.sqrt(disc)) / (2 * a)
        z_side = o[2] + t_side * d[:, 2]
        side = (a > 0) & (disc >= 0) & (t_side > 0) & (z_side >= z_low) & \
            (z_side <= z_high)
        t = np.where(side, t_side, t)
        for z_cap in (z_low, z_high):
            t_cap = (z_cap - o[2]) / d[:, 2]
            x_cap = ox + t_cap * d[:, 0]
            y_cap = oy + t_cap * d[:, 1]
            cap = (t_cap > 0) & (x_cap ** 2 + y_cap ** 2 <= radius ** 2)
            t = np.where(cap & (t_cap < t), t_cap, t)
    return t


def _hash01(i, j):
    """ Deterministic pseudo-random value in [0, 1) per integer cell. """
    return np.modf(np.abs(np.sin(i * 12.9898 + j * 78.233)) * 43758.5453)[0]


def tunnel_intersect(tunnel, origin, directions):
    """ Distance to the tunnel wall or floor and the surface intensity.

    Return
    ------
    t : array, shape (n_rays,), inf on miss.
    intensity : array, shape (n_rays,), mean intensity at the hit.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = directions
    oz = o[2] - tunnel.center_height
    a = d[:, 1] ** 2 + d[:, 2] ** 2
    b = 2 * (o[1] * d[:, 1] + oz * d[:, 2])
    c = o[1] ** 2 + oz ** 2 - tunnel.radius ** 2
    with np.errstate(divide='ignore', invalid='ignore'):
        t_wall = (-b + np.sqrt(b ** 2 - 4 * a * c)) / (2 * a)
        t_floor = -o[2] / d[:, 2]
    t_wall = np.where((a > 0) & np.isfinite(t_wall) & (t_wall > 0), t_wall,
                      np.inf)
    wall_hit = o + np.where(np.isfinite(t_wall), t_wall, 0)[:, None] * d
    t_wall[wall_hit[:, 2] < 0] = np.inf

    if tunnel.roughness > 0:
        theta = np.arctan2(wall_hit[:, 2] - tunnel.center_height,
                           wall_hit[:, 1])
        bump = np.sin(2 * np.pi * wall_hit[:, 0] / 1.7) * \
            np.sin(3 * theta + wall_hit[:, 0])
        t_wall = t_wall + tunnel.roughness * bump

    t_floor = np.where((d[:, 2] < 0) & (t_floor > 0), t_floor, np.inf)
    t = np.minimum(t_wall, t_floor)
    hit = o + np.where(np.isfinite(t), t, 0)[:, None] * d
    t[(hit[:, 0] < 0) | (hit[:, 0] > tunnel.length)] = np.inf

    patch_x = np.floor(hit[:, 0] / tunnel.patch_length)
    theta = np.arctan2(hit[:, 2] - tunnel.center_height, hit[:, 1])
    patch_t = np.floor(theta / (np.pi / 6))
    u = _hash01(patch_x, patch_t)
    if tunnel.intensity_mixture:
        mixture = np.asarray(tunnel.intensity_mixture)
        intensity = mixture[(u * len(mixture)).astype(int) % len(mixture)]
    else:
        intensity = tunnel.intensity + \
            (u - 0.5) * np.sqrt(12) * tunnel.intensity_std
    floor_intensity = tunnel.intensity if tunnel.floor_intensity is None \
        else tunnel.floor_intensity
    on_floor = t_floor <= t_wall
    intensity = np.where(on_floor, floor_intensity + (u - 0.5) * np.sqrt(12)
                         * tunnel.intensity_std, intensity)
    return t, intensity


def cast_rays(scene, origin, directions):
    """ Noise-free distance and intensity along world frame rays.

    Return
    ------
    t : array, shape (n_rays,), inf on miss.
    intensity : array, shape (n_rays,).
    """
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    t, intensity = tunnel_intersect(scene.tunnel, origin, directions)
    for obj in scene.all_objects:
        t_obj = obj.intersect(origin, directions)
        closer = t_obj < t
        t = np.where(closer, t_obj, t)
        intensity = np.where(closer, obj.intensity, intensity)
    return t, intensity


def render_scan(scene, pose, seed=None):
    """ Simulate one LiDAR scan at a pose.

    Every beam is cast against the scene; hits get Gaussian range and
    intensity noise from the beam model, misses and out of range returns
    are dropped. The output only depends on (scene, pose, seed).

    Return
    ------
    scan : LidarScan, points in the sensor frame, with ``pose`` attached.
    """
    rng = check_random_state(seed)
    beam = scene.beam
    local = beam.directions()
    world = pose.rot.apply(local)
    t, intensity = cast_rays(scene, pose.translation, world)

    hit = np.isfinite(t)
    noise_r = rng.randn(len(t)) * beam.range_noise
    noise_i = rng.randn(len(t)) * beam.intensity_noise
    t = t + noise_r
    hit &= (t >= beam.min_range) & (t <= beam.max_range)
    if not hit.any():
        raise SceneError(f"no return at pose t={pose.timestamp}")

    points = np.empty((int(hit.sum()), 4))
    points[:, :3] = local[hit] * t[hit, None]
    points[:, 3] = np.clip(intensity[hit] + noise_i[hit], 0, 255)
    return LidarScan(points, timestamp=pose.timestamp, pose=pose)


def render_scans(scene, seed=None, n_jobs=1, poses=None):
    """ Render the scans of a trajectory, in parallel over poses.

    Parameters
    ----------
    scene : SyntheticScene.
    seed : int or None, seeds one random draw per pose.
    n_jobs : int (default: 1), number of CPU to use.
    poses : list of Pose or None, ``scene.trajectory`` if None.
    """
    poses = scene.trajectory if poses is None else poses
    rng = check_random_state(seed)
    seeds = rng.randint(0, 2 ** 31 - 1, size=len(poses))
    return Parallel(n_jobs=n_jobs)(delayed(render_scan)(scene, pose, s)
                                   for pose, s in zip(poses, seeds))


def export_dataset(scene, output_dir, seed=None, n_jobs=1, binary=True):
    """ Render a scene to ``<timestamp_ns>.pcd`` files plus
    ``trajectory.txt``. """
    scans = render_scans(scene, seed=seed, n_jobs=n_jobs)
    logger.info("writing %d scans of scene %r to %s", len(scans), scene.name,
                output_dir)
    return write_dataset(scans, output_dir, binary=binary)


###############################################################################
# Presets

def _cave_objects():
    return [
        SceneObject('backpack', 'box', (0.6, 0.4, 0.6), (12.0, 1.5, 0.0),
                    yaw_deg=35.0, intensity=200.0, is_artifact=True),
        SceneObject('bin', 'cylinder', (0.5, 0.5, 0.6), (19.0, -1.5, 0.0),
                    intensity=80.0),
        SceneObject('survivor', 'mannequin', (0.5, 0.5, 0.7),
                    (26.0, 1.5, 0.0), intensity=210.0, is_artifact=True),
        SceneObject('crate', 'box', (0.6, 0.4, 0.5), (33.0, -1.5, 0.0),
                    yaw_deg=25.0, intensity=100.0),
        SceneObject('extinguisher', 'cylinder', (0.35, 0.35, 0.6),
                    (40.0, 1.5, 0.0), intensity=220.0, is_artifact=True),
        SceneObject('drum', 'cylinder', (0.5, 0.5, 0.6), (47.0, -1.5, 0.0),
                    intensity=90.0),
        SceneObject('box', 'box', (0.5, 0.5, 0.4), (54.0, 1.5, 0.0),
                    yaw_deg=45.0, intensity=120.0),
        SceneObject('bucket', 'cylinder', (0.4, 0.4, 0.5), (61.0, -1.5, 0.0),
                    intensity=70.0),
    ]


def cave_scene(n_scans=200):
    """ Natural cave: homogeneous dark walls, 3 artifacts, 5 clutter
    objects. """
    spec = TrajectorySpec(n_scans=n_scans)
    return SyntheticScene('cave', Tunnel(), _cave_objects(), (),
                          spec.poses(), BeamModel(), spec)


def urban_scene(n_scans=200):
    """ Urban tunnel whose walls mix dark and bright painted patches. """
    tunnel = Tunnel(roughness=0.02, intensity_mixture=(20.0, 60.0, 110.0,
                                                       160.0),
                    patch_length=2.0, floor_intensity=30.0)
    spec = TrajectorySpec(n_scans=n_scans)
    return SyntheticScene('urban', tunnel, _cave_objects(), (),
                          spec.poses(), BeamModel(), spec)


def clutter_scene(n_scans=250):
    """ Cave with rocks protruding from the walls and a single artifact. """
    objects = [SceneObject('drill', 'box', (0.5, 0.3, 0.4), (20.0, 1.4, 0.0),
                           yaw_deg=30.0, intensity=210.0, is_artifact=True)]
    protrusions = []
    for i, x in enumerate(np.arange(6.0, 60.0, 4.5)):
        side = 1.0 if i % 2 else -1.0
        protrusions.append(SceneObject(
            f'rock-{i}', 'box' if i % 3 else 'cylinder', (0.7, 0.6, 0.5),
            (float(x), side * 2.55, 0.5 + 0.1 * (i % 4)),
            yaw_deg=20.0 * (i % 3), intensity=15.0))
    tunnel = Tunnel(roughness=0.08)
    beam = BeamModel(range_noise=0.02, intensity_noise=4.0)
    spec = TrajectorySpec(n_scans=n_scans)
    return SyntheticScene('clutter', tunnel, objects, protrusions,
                          spec.poses(), beam, spec)


PRESETS = dict(cave=cave_scene, urban=urban_scene, clutter=clutter_scene)


def get_scene(name_or_path):
    """ Preset scene by name, or scene loaded from a JSON file. """
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    path = Path(name_or_path)
    if not path.is_file():
        raise FileNotFoundError(f"scene {name_or_path} is neither a preset "
                                f"({', '.join(PRESETS)}) nor a file")
    return load_scene(path)
