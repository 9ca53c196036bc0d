"""Deterministic OBJ output for canonical meshes."""

from __future__ import annotations

from .geometry import Mesh

__all__ = ["write_obj"]

_QUANT = float(2**30)


def write_obj(mesh: Mesh, path, comments: tuple[str, ...] = ()) -> None:
    """Write "v" and 1-based "f" lines.

    Vertices are deduplicated by exact quantized coordinate match and
    numbers are printed with shortest round-trip formatting, so identical
    meshes always produce byte-identical files.
    """
    index: dict[tuple[int, int, int], int] = {}
    vertices = []
    faces = []
    for tri in mesh:
        face = []
        for v in (tri.a, tri.b, tri.c):
            key = (round(v.x * _QUANT), round(v.y * _QUANT), round(v.z * _QUANT))
            vid = index.get(key)
            if vid is None:
                vid = len(vertices) + 1
                index[key] = vid
                vertices.append(v)
            face.append(vid)
        faces.append(face)
    with open(path, "w", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        for v in vertices:
            fh.write(f"v {float(v.x)!r} {float(v.y)!r} {float(v.z)!r}\n")
        for a, b, c in faces:
            fh.write(f"f {a} {b} {c}\n")
