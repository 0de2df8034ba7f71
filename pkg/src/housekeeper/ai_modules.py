"""Simulated AI modules: object detection and face recognition.

Both behave like their real counterparts from the orchestrator's point of
view (they consume camera observations and produce detections), but run on
scene ground truth so results are exactly reproducible.
"""

from __future__ import annotations

import logging

from .devices import Scene
from .registry import ApiDescriptor, ApiError, ApiRegistry, param

log = logging.getLogger(__name__)

UNKNOWN = "Unknown"


def _persons_in_view(observation: dict) -> list:
    persons = observation.get("persons_in_view")
    if not isinstance(persons, list):
        raise ApiError("BadObservation", "observation lacks a persons_in_view list")
    return persons


def detect_objects(observation: dict, object_class: str) -> list:
    """Detections of one class within an observation."""
    if object_class == "person":
        return [
            {"class": "person", "position": list(p["position"]), "confidence": 0.99}
            for p in _persons_in_view(observation)
        ]
    found = []
    for obj in observation.get("objects_in_view", []):
        if obj.get("class") == object_class:
            found.append({"class": object_class, "position": list(obj["position"]),
                          "confidence": 0.95})
    return found


class FaceRecognizer:
    """Names people in view when the face is clear enough and enrolled.

    Identity comes from scene ground truth; a face below the quality
    threshold, or one that is not in the enrolled list, comes back Unknown.
    """

    def __init__(self, scene: Scene):
        self.scene = scene

    def recognize(self, observation: dict, enrolled: list) -> list:
        results = []
        for viewed in _persons_in_view(observation):
            position = tuple(viewed["position"])
            quality = viewed.get("apparent_face_quality", 0.0)
            person = self.scene.person_at(position)
            name = person.name if person is not None else None
            if (name is not None and name in enrolled
                    and quality >= self.scene.vision.threshold):
                identity = name
            else:
                identity = UNKNOWN
            results.append({
                "identity": identity,
                "position": list(position),
                "confidence": round(float(quality), 6),
            })
        return results


def register_modules(scene: Scene, registry: ApiRegistry) -> None:
    recognizer = FaceRecognizer(scene)
    registry.register(
        ApiDescriptor(
            owner="object_detection", name="detect_objects",
            params=(param("observation", "record"), param("object_class", "string")),
            returns="list",
            description="Find objects of a class (e.g. 'person') in a camera observation.",
            expected_latency=0.3),
        detect_objects)
    registry.register(
        ApiDescriptor(
            owner="face_recognition", name="recognize_faces",
            params=(param("observation", "record"), param("enrolled", "list")),
            returns="list",
            description="Identify each person in view against the enrolled names; "
                        "unclear or unenrolled faces come back 'Unknown'.",
            expected_latency=0.4),
        recognizer.recognize)


def environment_modules() -> list:
    return [
        {"id": "object_detection",
         "capability": "locate objects of a named class in camera observations"},
        {"id": "face_recognition",
         "capability": "identify enrolled people from camera observations"},
    ]
