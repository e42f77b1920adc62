"""Standard test domains shared by the property suite, the CLI and the tests."""

from __future__ import annotations

from .geometry.specs import Ball, Ellipsoid, Torus, Union

ORIGIN = (0.0, 0.0, 0.0)


def standard_corpus() -> dict:
    """Name to spec: a ball, two ellipsoids, a torus and a two-ball union."""
    return {
        "ball": Ball(ORIGIN, 1.0),
        "ellipsoid_prolate": Ellipsoid(ORIGIN, (1.5, 1.0, 1.0)),
        "ellipsoid_triaxial": Ellipsoid(ORIGIN, (1.3, 1.0, 0.7)),
        "torus": Torus(ORIGIN, 1.0, 0.4),
        "two_balls": Union((Ball((-1.3, 0.0, 0.0), 1.0), Ball((1.3, 0.0, 0.0), 0.7))),
    }


CONVEX = ("ball", "ellipsoid_prolate", "ellipsoid_triaxial")


def nested_pairs() -> list[tuple[str, object, object]]:
    return [
        ("ball_in_ball", Ball(ORIGIN, 0.8), Ball(ORIGIN, 1.0)),
        ("ball_in_ellipsoid", Ball(ORIGIN, 0.9), Ellipsoid(ORIGIN, (2.0, 1.0, 1.0))),
        ("ball_in_torus", Ball((1.0, 0.0, 0.0), 0.3), Torus(ORIGIN, 1.0, 0.4)),
    ]


def disjoint_pairs() -> list[tuple[str, object, object]]:
    return [
        ("ball_ball", Ball(ORIGIN, 1.0), Ball((2.6, 0.0, 0.0), 1.0)),
        ("ball_small_ball", Ball(ORIGIN, 1.0), Ball((2.0, 0.0, 0.0), 0.5)),
        ("ball_torus", Ball(ORIGIN, 1.0), Torus((3.0, 0.0, 0.0), 1.0, 0.4)),
    ]
