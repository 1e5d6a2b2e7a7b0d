#!/usr/bin/env python3
"""Regenerates the map fixtures under data/maps.

The fixtures are small synthetic street networks laid out in local meters.
They carry the names of the four maps the platform ships with; the geometry
is hand-designed (grids, arcs, one-way pairs) rather than surveyed.
"""

import json
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "maps"


class Builder:
    def __init__(self, name, lat, lon):
        self.name = name
        self.origin = {"lat": lat, "lon": lon}
        self.nodes = []
        self.ways = []
        self.routes = []
        self._next_node = 1
        self._next_way = 100
        self._index = {}

    def node(self, x, y, tags=None):
        key = (round(x, 3), round(y, 3))
        if key in self._index and not tags:
            return self._index[key]
        nid = self._next_node
        self._next_node += 1
        entry = {"id": nid, "x": round(x, 3), "y": round(y, 3)}
        if tags:
            entry["tags"] = tags
        self.nodes.append(entry)
        self._index[key] = nid
        return nid

    def way(self, refs, **tags):
        wid = self._next_way
        self._next_way += 1
        self.ways.append({"id": wid, "nodes": refs, "tags": tags})
        return wid

    def polyline(self, pts, **tags):
        return self.way([self.node(x, y) for x, y in pts], **tags)

    def route(self, name, start, goal):
        self.routes.append({"name": name, "start": list(start), "goal": list(goal)})

    def dump(self):
        doc = {
            "format": "arena-map-fixture",
            "version": 1,
            "name": self.name,
            "origin": self.origin,
            "nodes": self.nodes,
            "ways": self.ways,
            "routes": self.routes,
        }
        OUT.mkdir(parents=True, exist_ok=True)
        (OUT / f"{self.name}.json").write_text(json.dumps(doc, indent=1) + "\n")


def arc(cx, cy, r, a0, a1, step=12.0):
    n = max(2, int(math.ceil(abs(a1 - a0) * r / step)))
    return [(cx + r * math.cos(a0 + (a1 - a0) * k / n),
             cy + r * math.sin(a0 + (a1 - a0) * k / n)) for k in range(n + 1)]


def singapore_onenorth():
    b = Builder("singapore-onenorth", 1.2995, 103.7872)
    # Two-lane-per-direction arterial along y = 0.
    b.polyline([(-300, 0), (-150, 0), (0, 0), (150, 0), (300, 0)],
               highway="primary", lanes="4")
    # Residential cross streets.
    for x in (-150, 0, 150):
        b.polyline([(x, -160), (x, 0)], highway="residential")
        b.polyline([(x, 0), (x, 160)], highway="residential")
    b.polyline([(-150, 160), (0, 160), (150, 160)], highway="residential")
    # Curved connector from the north-east corner down to the arterial end.
    b.polyline([(150, 160), (160, 160)] + arc(160, 20, 140, math.pi / 2, 0)[1:-1]
               + [(300, 20), (300, 0)], highway="tertiary")
    b.node(75, 0, {"highway": "crossing"})
    b.route("sing_route_1", (-290, -5.25), (140, 155))
    b.route("sing_route_2", (-150 + 1.75, -150), (257.0, 117.0))
    b.dump()


def boston_seaport():
    b = Builder("boston-seaport", 42.3510, -71.0440)
    # One-way pair plus two-way avenues.
    b.polyline([(-250, 0), (-120, 0), (0, 0), (120, 0), (250, 0)],
               highway="secondary", oneway="yes", lanes="2")
    b.polyline([(250, 120), (120, 120), (0, 120), (-120, 120), (-250, 120)],
               highway="secondary", oneway="yes", lanes="2")
    for x in (-120, 0, 120):
        b.polyline([(x, -120), (x, 0), (x, 120), (x, 240)], highway="tertiary")
    b.polyline([(-250, 0), (-250, 120)], highway="residential")
    b.polyline([(250, 120), (250, 0)], highway="residential", oneway="yes")
    b.node(60, 120, {"highway": "crossing"})
    b.route("boston_route_1", (-230, -1.75), (1.75, 230))
    b.dump()


def boston_thomaspark():
    b = Builder("boston-thomaspark", 42.3330, -71.0510)
    # Loop road around a park with two spokes.
    # 68 segments put a loop node exactly on each compass point.
    loop = arc(0, 0, 140, -math.pi, math.pi, step=13.0)
    loop_ids = [b.node(x, y) for x, y in loop[:-1]]
    loop_ids.append(loop_ids[0])
    b.way(loop_ids, highway="residential")
    b.polyline([(-140, 0), (-260, 0)], highway="residential")
    b.polyline([(140, 0), (260, 0), (260, -150)], highway="tertiary")
    b.polyline([(0, 140), (0, 260)], highway="residential")
    b.route("boston_route_2", (-250, -1.75), (258.25, -120))
    b.dump()


def carla_town05():
    b = Builder("carla-town05", 48.8566, 2.3522)
    for y in (-100, 100):
        b.polyline([(-200, y), (0, y), (200, y)], highway="primary", lanes="4")
    for x in (-200, 0, 200):
        b.polyline([(x, -100), (x, 100)], highway="secondary", lanes="2")
    b.node(-100, 100, {"highway": "crossing"})
    b.route("town05_route_1", (-190, -101.75), (1.75, 75))
    b.dump()


if __name__ == "__main__":
    singapore_onenorth()
    boston_seaport()
    boston_thomaspark()
    carla_town05()
