"""Simulated device fleet: grid scene, cameras, a mobile robot and a router.

Scenes load from JSON.  Every simulated reading is a pure function of scene
state, so identical inputs always produce identical observations; there is no
hidden randomness anywhere in the fleet.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .registry import ApiDescriptor, ApiError, ApiRegistry, param

log = logging.getLogger(__name__)

# Vision defaults; a scene may override via its "vision" section.
D_MAX = 12.0
RECOGNITION_THRESHOLD = 0.6
CLOSE_RANGE = 2.0


class SceneError(Exception):
    pass


@dataclass(frozen=True)
class Grid:
    width: int
    height: int
    obstacles: frozenset

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def passable(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and (x, y) not in self.obstacles


@dataclass
class Person:
    name: Optional[str]
    position: tuple
    face_quality: float


def bfs_path(grid: Grid, start: tuple, goal: tuple) -> Optional[list]:
    """Shortest 4-connected path from start to goal, or None if unreachable.

    Neighbor order is fixed (E, W, S, N) so the returned path is
    deterministic, not merely minimal.
    """
    if not grid.passable(*start) or not grid.passable(*goal):
        return None
    if start == goal:
        return [list(start)]
    came_from = {start: None}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        if current == goal:
            break
        x, y = current
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if grid.passable(*nxt) and nxt not in came_from:
                came_from[nxt] = current
                queue.append(nxt)
    if goal not in came_from:
        return None
    path = []
    node: Optional[tuple] = goal
    while node is not None:
        path.append(list(node))
        node = came_from[node]
    path.reverse()
    return path


def _distance(a: tuple, b: tuple) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def apparent_quality(face_quality: float, distance: float, d_max: float = D_MAX) -> float:
    """Distance attenuation: quality * max(0, 1 - d/d_max)."""
    return face_quality * max(0.0, 1.0 - distance / d_max)


@dataclass
class Vision:
    d_max: float = D_MAX
    threshold: float = RECOGNITION_THRESHOLD
    close_range: float = CLOSE_RANGE


class CameraSim:
    """Fixed ceiling camera, or a mobile one when mounted on the robot."""

    def __init__(self, camera_id: str, scene: "Scene", position: Optional[tuple] = None,
                 mount: Optional[str] = None, radius: Optional[float] = None,
                 description: str = ""):
        self.id = camera_id
        self.scene = scene
        self._position = position
        self.mount = mount
        self.radius = radius
        self.description = description or f"camera {camera_id}"
        self.enabled = True

    @property
    def position(self) -> tuple:
        if self.mount is not None:
            robot = self.scene.robot
            if robot is None:
                raise ApiError("Misconfigured", f"{self.id} is mounted on a missing robot")
            return robot.position
        return self._position

    def capture(self) -> dict:
        if not self.enabled:
            raise ApiError("DeviceDisabled", f"{self.id} is disabled")
        here = self.position
        vision = self.scene.vision
        persons = []
        for person in self.scene.persons:
            d = _distance(here, person.position)
            if self.radius is not None and d > self.radius:
                continue
            if self.mount is not None and d <= vision.close_range:
                quality = person.face_quality
            else:
                quality = apparent_quality(person.face_quality, d, vision.d_max)
            persons.append({
                "position": list(person.position),
                "apparent_face_quality": round(quality, 6),
            })
        objects = []
        for obj in self.scene.objects:
            d = _distance(here, tuple(obj["position"]))
            if self.radius is not None and d > self.radius:
                continue
            objects.append({"class": obj["class"], "position": list(obj["position"])})
        return {
            "camera_id": self.id,
            "taken_at": self.scene.tick(),
            "persons_in_view": persons,
            "objects_in_view": objects,
        }


class RobotSim:
    def __init__(self, robot_id: str, scene: "Scene", position: tuple, speed: float = 1.0):
        self.id = robot_id
        self.scene = scene
        self.position = position
        self.speed = speed
        self.enabled = True
        self._lock = threading.Lock()

    def move_to(self, x, y) -> dict:
        """Plan with BFS and drive.  Unreachable or out-of-grid targets come
        back as arrived=false rather than an error."""
        if not self.enabled:
            raise ApiError("DeviceDisabled", f"{self.id} is disabled")
        for value in (x, y):
            if isinstance(value, float) and not value.is_integer():
                raise ApiError("BadTarget", f"grid coordinates must be integers, got {value}")
        target = (int(x), int(y))
        with self._lock:
            path = None
            if self.scene.grid.in_bounds(*target):
                path = bfs_path(self.scene.grid, self.position, target)
            if path is None:
                return {"robot": self.id, "arrived": False, "target": list(target),
                        "path": []}
            self.position = target
            return {
                "robot": self.id,
                "arrived": True,
                "target": list(target),
                "path": path,
                "distance": len(path) - 1,
            }


class RouterSim:
    """Bandwidth allocator with a hard total cap.

    set_tier is an atomic check-and-set: the projected total is computed and
    applied under one lock, so concurrent upgrades can never oversubscribe.
    """

    def __init__(self, router_id: str, total_mbps: float, tiers: dict, users: dict,
                 position: Optional[tuple] = None):
        self.id = router_id
        self.total_mbps = total_mbps
        self.tiers = dict(tiers)
        self.users = dict(users)
        self.position = position
        self.enabled = True
        self._lock = threading.Lock()

    def _total(self) -> float:
        return sum(self.tiers[tier] for tier in self.users.values())

    def rates(self) -> dict:
        if not self.enabled:
            raise ApiError("DeviceDisabled", f"{self.id} is disabled")
        with self._lock:
            return {
                name: {"tier": tier, "mbps": self.tiers[tier]}
                for name, tier in self.users.items()
            }

    def set_tier(self, user: str, tier: str) -> dict:
        if not self.enabled:
            raise ApiError("DeviceDisabled", f"{self.id} is disabled")
        with self._lock:
            if user not in self.users:
                raise ApiError("UnknownUser", f"router has no user {user!r}", fatal=True)
            if tier not in self.tiers:
                raise ApiError("UnknownTier", f"router has no tier {tier!r}", fatal=True)
            projected = self._total() - self.tiers[self.users[user]] + self.tiers[tier]
            if projected > self.total_mbps:
                raise ApiError(
                    "OverBudget",
                    f"cannot move {user} to {tier}: projected total {projected:g} Mbps "
                    f"exceeds the {self.total_mbps:g} Mbps limit",
                    fatal=True,
                    payload={"projected_total": projected, "limit": self.total_mbps,
                             "user": user, "tier": tier},
                )
            self.users[user] = tier
            return {
                "ok": True,
                "user": user,
                "tier": tier,
                "mbps": self.tiers[tier],
                "total_mbps": self._total(),
            }


@dataclass
class Scene:
    name: str
    grid: Grid
    persons: list
    objects: list
    enrolled: list
    vision: Vision
    cameras: list = field(default_factory=list)
    robot: Optional[RobotSim] = None
    router: Optional[RouterSim] = None
    _ticks: int = 0

    def tick(self) -> int:
        """Logical capture clock: deterministic stand-in for wall time."""
        self._ticks += 1
        return self._ticks

    def person_at(self, position: tuple) -> Optional[Person]:
        for person in self.persons:
            if person.position == tuple(position):
                return person
        return None

    def device_ids(self) -> list:
        ids = [camera.id for camera in self.cameras]
        if self.robot is not None:
            ids.append(self.robot.id)
        if self.router is not None:
            ids.append(self.router.id)
        return ids

    def snapshot(self) -> dict:
        """Plain-data view of the whole scene for UI event payloads."""
        doc = {
            "name": self.name,
            "grid": {
                "width": self.grid.width,
                "height": self.grid.height,
                "obstacles": sorted([list(p) for p in self.grid.obstacles]),
            },
            "persons": [
                {"name": person.name, "position": list(person.position)}
                for person in self.persons
            ],
            "cameras": [
                {"id": camera.id, "position": list(camera.position),
                 "enabled": camera.enabled}
                for camera in self.cameras
            ],
        }
        if self.robot is not None:
            doc["robot"] = {
                "id": self.robot.id,
                "position": list(self.robot.position),
                "enabled": self.robot.enabled,
            }
        if self.router is not None:
            doc["router"] = {
                "id": self.router.id,
                "total_mbps": self.router.total_mbps,
                "users": {
                    name: {"tier": tier, "mbps": self.router.tiers[tier]}
                    for name, tier in self.router.users.items()
                },
            }
        return doc


def _fail(path: str, message: str):
    raise SceneError(f"scene {path}: {message}")


def _coord(value, path: str, where: str) -> tuple:
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        _fail(path, f"{where} must be an [x, y] pair of integers, got {value!r}")
    return (value[0], value[1])


def load_scene(path: str) -> Scene:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene {path} is not valid JSON: {exc}") from exc
    return build_scene(doc, source=str(path))


def build_scene(doc: dict, source: str = "<inline>") -> Scene:
    if not isinstance(doc, dict):
        _fail(source, "top level must be an object")
    grid_doc = doc.get("grid")
    if not isinstance(grid_doc, dict):
        _fail(source, "missing grid section")
    width = grid_doc.get("width")
    height = grid_doc.get("height")
    for label, value in (("grid.width", width), ("grid.height", height)):
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            _fail(source, f"{label} must be a positive integer, got {value!r}")
    obstacles = set()
    for i, cell in enumerate(grid_doc.get("obstacles", [])):
        obstacles.add(_coord(cell, source, f"grid.obstacles[{i}]"))
    grid = Grid(width=width, height=height, obstacles=frozenset(obstacles))
    for x, y in obstacles:
        if not grid.in_bounds(x, y):
            _fail(source, f"obstacle {[x, y]} is outside the {width}x{height} grid")

    vision_doc = doc.get("vision") or {}
    vision = Vision(
        d_max=float(vision_doc.get("d_max", D_MAX)),
        threshold=float(vision_doc.get("threshold", RECOGNITION_THRESHOLD)),
        close_range=float(vision_doc.get("close_range", CLOSE_RANGE)),
    )
    if vision.d_max <= 0:
        _fail(source, "vision.d_max must be positive")

    persons = []
    for i, p_doc in enumerate(doc.get("persons", [])):
        where = f"persons[{i}]"
        if not isinstance(p_doc, dict):
            _fail(source, f"{where} must be an object")
        name = p_doc.get("name")
        if name is not None and not isinstance(name, str):
            _fail(source, f"{where}.name must be a string or null")
        position = _coord(p_doc.get("position"), source, f"{where}.position")
        quality = p_doc.get("face_quality")
        if not isinstance(quality, (int, float)) or not 0 <= quality <= 1:
            _fail(source, f"{where}.face_quality must be in [0, 1], got {quality!r}")
        if not grid.passable(*position):
            _fail(source, f"{where} stands out of bounds or inside an obstacle at {list(position)}")
        persons.append(Person(name=name, position=position, face_quality=float(quality)))

    objects = []
    for i, o_doc in enumerate(doc.get("objects", [])):
        where = f"objects[{i}]"
        if not isinstance(o_doc, dict) or not isinstance(o_doc.get("class"), str):
            _fail(source, f"{where} needs a string class")
        position = _coord(o_doc.get("position"), source, f"{where}.position")
        objects.append({"class": o_doc["class"], "position": list(position)})

    enrolled = doc.get("enrolled", [])
    if not isinstance(enrolled, list) or not all(isinstance(n, str) for n in enrolled):
        _fail(source, "enrolled must be a list of names")

    scene = Scene(
        name=doc.get("name", "scene"),
        grid=grid,
        persons=persons,
        objects=objects,
        enrolled=list(enrolled),
        vision=vision,
    )

    robot_doc = doc.get("robot")
    if robot_doc is not None:
        if not isinstance(robot_doc, dict) or not isinstance(robot_doc.get("id"), str):
            _fail(source, "robot needs a string id")
        position = _coord(robot_doc.get("position"), source, "robot.position")
        if not grid.passable(*position):
            _fail(source, f"robot starts out of bounds or inside an obstacle at {list(position)}")
        scene.robot = RobotSim(
            robot_id=robot_doc["id"], scene=scene, position=position,
            speed=float(robot_doc.get("speed", 1.0)))

    for i, c_doc in enumerate(doc.get("cameras", [])):
        where = f"cameras[{i}]"
        if not isinstance(c_doc, dict) or not isinstance(c_doc.get("id"), str):
            _fail(source, f"{where} needs a string id")
        mount = c_doc.get("mount")
        position = None
        if mount is not None:
            if scene.robot is None or mount != scene.robot.id:
                _fail(source, f"{where} is mounted on unknown device {mount!r}")
        else:
            position = _coord(c_doc.get("position"), source, f"{where}.position")
            if not grid.in_bounds(*position):
                _fail(source, f"{where} sits outside the grid at {list(position)}")
        radius = c_doc.get("radius")
        if radius is not None and (not isinstance(radius, (int, float)) or radius <= 0):
            _fail(source, f"{where}.radius must be positive")
        scene.cameras.append(CameraSim(
            camera_id=c_doc["id"], scene=scene, position=position, mount=mount,
            radius=float(radius) if radius is not None else None,
            description=c_doc.get("description", "")))

    router_doc = doc.get("router")
    if router_doc is not None:
        if not isinstance(router_doc, dict) or not isinstance(router_doc.get("id"), str):
            _fail(source, "router needs a string id")
        tiers = router_doc.get("tiers")
        if not isinstance(tiers, dict) or not tiers:
            _fail(source, "router.tiers must be a non-empty object")
        for tier, mbps in tiers.items():
            if not isinstance(mbps, (int, float)) or mbps <= 0:
                _fail(source, f"router tier {tier!r} must have positive mbps")
        total = router_doc.get("total_mbps")
        if not isinstance(total, (int, float)) or total <= 0:
            _fail(source, "router.total_mbps must be positive")
        users = router_doc.get("users", {})
        if not isinstance(users, dict):
            _fail(source, "router.users must be an object")
        for user, tier in users.items():
            if tier not in tiers:
                _fail(source, f"router user {user!r} has unknown tier {tier!r}")
        position = None
        if router_doc.get("position") is not None:
            position = _coord(router_doc["position"], source, "router.position")
        scene.router = RouterSim(
            router_id=router_doc["id"], total_mbps=float(total), tiers=tiers,
            users=users, position=position)
        if scene.router._total() > scene.router.total_mbps:
            _fail(source, f"initial allocation {scene.router._total():g} Mbps exceeds "
                          f"the {total:g} Mbps cap")

    seen: set = set()
    for device_id in scene.device_ids():
        if device_id in seen:
            _fail(source, f"duplicate device id {device_id!r}")
        seen.add(device_id)
    return scene


# ---------------------------------------------------------------------------
# Registry wiring


def register_scene(scene: Scene, registry: ApiRegistry) -> None:
    """Expose every device in the scene as callable API functions."""
    for camera in scene.cameras:
        registry.register(
            ApiDescriptor(
                owner=camera.id, name="capture", params=(), returns="record",
                description=f"Take a snapshot; returns persons and objects in view. "
                            f"{camera.description}".strip(),
                expected_latency=0.2),
            camera.capture,
            alive=lambda c=camera: c.enabled)
    if scene.robot is not None:
        robot = scene.robot
        registry.register(
            ApiDescriptor(
                owner=robot.id, name="move_to",
                params=(param("x", "number"), param("y", "number")), returns="record",
                description="Drive to a grid cell; returns the path taken.",
                expected_latency=0.5),
            robot.move_to,
            alive=lambda r=robot: r.enabled)
    if scene.router is not None:
        router = scene.router
        registry.register(
            ApiDescriptor(
                owner=router.id, name="rates", params=(), returns="record",
                description="Current bandwidth tier and Mbps per user.",
                expected_latency=0.05),
            router.rates,
            alive=lambda r=router: r.enabled)
        registry.register(
            ApiDescriptor(
                owner=router.id, name="set_tier",
                params=(param("user", "string"), param("tier", "string")), returns="record",
                description="Move a user to a bandwidth tier; rejected if the total "
                            "would exceed the cap.",
                expected_latency=0.05, on_error="terminate"),
            router.set_tier,
            alive=lambda r=router: r.enabled)


def environment_devices(scene: Scene) -> list:
    """Device inventory for the short-term memory's environment section."""
    devices = []
    for camera in scene.cameras:
        location = "mobile" if camera.mount is not None else list(camera.position)
        devices.append({
            "id": camera.id, "kind": "camera", "location": location,
            "description": camera.description,
        })
    if scene.robot is not None:
        devices.append({
            "id": scene.robot.id, "kind": "robot", "location": "mobile",
            "description": "mobile robot that can drive to any reachable grid cell",
        })
    if scene.router is not None:
        location = list(scene.router.position) if scene.router.position else "fixed"
        devices.append({
            "id": scene.router.id, "kind": "router", "location": location,
            "description": f"Wi-Fi router with a {scene.router.total_mbps:g} Mbps "
                           f"total budget and tiers "
                           + ", ".join(f"{t}={m:g}" for t, m in scene.router.tiers.items()),
        })
    return devices
