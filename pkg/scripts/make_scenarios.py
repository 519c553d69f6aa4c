"""Regenerate the bundled scenarios' replay data and their golden outputs.

Replay files are written from the detection tables below; goldens come
from the brute-force oracle, never from the engine under test.

    python scripts/make_scenarios.py
"""

from __future__ import annotations

from pathlib import Path

from semrob.codec import encode, encode_blocks
from semrob.oracle import scenario_outputs
from semrob.query import parse_triples
from semrob.scenario import BUNDLED, STANDARD_PREFIXES, bundled_path, load_scenario

ROOT = Path(__file__).resolve().parents[1] / "src" / "semrob" / "scenarios"


def stamp(second: int) -> str:
    return f'"2021-06-01T12:{second // 60:02d}:{second % 60:02d}Z"^^xsd:dateTime'


def observation(obs: str, second: int, boxes) -> str:
    """One detector message: an observation with its result time and boxes."""
    lines = [f"{obs} ssn:resultTime {stamp(second)} ."]
    for box, cls in boxes:
        lines.append(f"{obs} ssn:hasResult {box} .")
        lines.append(f"{box} a ssr:{cls} .")
    return encode(parse_triples("\n".join(lines), STANDARD_PREFIXES))


# frame -> classes seen by each camera; both cameras describe the same stereo frame
LEFT = {1: ["Car"], 2: ["Truck"], 3: ["Pedestrian"], 4: ["TrafficSign"], 5: ["Car"],
        6: ["Cyclist"], 7: ["Car", "Pedestrian"], 8: ["Car"], 9: ["Truck"]}
RIGHT = {1: ["Car"], 2: ["Truck"], 3: ["Pedestrian"], 4: ["Car"], 5: ["LaneMarking"],
         6: ["Cyclist"], 7: ["Car"], 8: ["Car"], 9: ["Truck"], 10: ["Car"]}
# frames whose right-camera message is held back: 6 arrives late but inside
# the 5 s window, 3 arrives after the window has moved past it
RIGHT_EMIT = {6: 8500, 3: 9500}
LIDAR = {1: ["Car"], 2: ["Truck"], 3: ["Pedestrian"], 4: ["Car"], 5: ["TrafficSign"],
         6: ["Cyclist"], 7: ["Car", "Pedestrian"], 9: ["Truck"], 10: ["Car"]}
# lidar scans normally trail the cameras by 100 ms; frame 9 leads them
LIDAR_EMIT = {9: 8900}


def camera_replay(side: str, table, emit_override=None, frames=None) -> str:
    blocks = []
    for frame, classes in table.items():
        if frames is not None and frame not in frames:
            continue
        boxes = [(f":{side}Box{frame}_{k}", c) for k, c in enumerate(classes)]
        emit = (emit_override or {}).get(frame, frame * 1000)
        blocks.append((emit, observation(f":frame{frame}", frame, boxes)))
    return encode_blocks(sorted(blocks, key=lambda b: b[0]))


def lidar_replay(table, emit_override=None, prefix="scan", offset=100) -> str:
    blocks = []
    for frame, classes in table.items():
        boxes = [(f":box3d_{frame}_{k}", c) for k, c in enumerate(classes)]
        emit = (emit_override or {}).get(frame, frame * 1000 + offset)
        blocks.append((emit, observation(f":{prefix}{frame}", frame, boxes)))
    return encode_blocks(sorted(blocks, key=lambda b: b[0]))


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


ONTOLOGY = """
:mountedOnFrontLeft rdfs:subPropertyOf :mountedOn .
:mountedOnFrontRight rdfs:subPropertyOf :mountedOn .
:mountedOnTop rdfs:subPropertyOf :mountedOn .
ssn:hasResult rdfs:subPropertyOf sosa:hasResult .
ssr:Car rdfs:subClassOf ssr:Vehicle .
ssr:Truck rdfs:subClassOf ssr:Vehicle .
ssr:Vehicle rdfs:subClassOf ssr:TrafficObstacle .
ssr:Pedestrian rdfs:subClassOf ssr:TrafficObstacle .
ssr:Cyclist rdfs:subClassOf ssr:TrafficObstacle .
ssr:TrafficSign rdfs:subClassOf ssr:RoadFeature .
ssr:LaneMarking rdfs:subClassOf ssr:RoadFeature .
"""


def make_data() -> None:
    write(ROOT / "ontology.nt", encode(parse_triples(ONTOLOGY, STANDARD_PREFIXES)))
    for name in ("fuse2cams", "fuse3sensors", "multi-agent"):
        d = ROOT / name / "data"
        write(d / "left.replay", camera_replay("left", LEFT))
        write(d / "right.replay", camera_replay("right", RIGHT, RIGHT_EMIT))
    for name in ("fuse3sensors", "multi-agent"):
        write(ROOT / name / "data" / "lidar.replay", lidar_replay(LIDAR, LIDAR_EMIT))

    # discovery: cameras run for 20 s; the LiDAR node joins at 10 s
    cams = {f: ["Car"] if f % 3 else ["Pedestrian"] for f in range(1, 21)}
    d = ROOT / "discovery" / "data"
    write(d / "left.replay", camera_replay("left", cams))
    write(d / "right.replay", camera_replay("right", {f: ["Truck"] for f in range(1, 21) if f % 4}))
    write(d / "lidar.replay", lidar_replay({f: ["Car"] for f in range(11, 21)}))
    write(d / "other.replay", camera_replay("other", {f: ["Car"] for f in range(1, 21, 2)}))


def make_goldens() -> None:
    for name in BUNDLED:
        scenario = load_scenario(bundled_path(name))
        logs, tees = scenario_outputs(scenario)
        expected = ROOT / name / "expected"
        for qname, text in logs.items():
            write(expected / "results" / f"{qname}.log", text)
        for qname, text in tees.items():
            write(expected / "outputs" / f"{qname}.nt", text)


if __name__ == "__main__":
    make_data()
    make_goldens()
