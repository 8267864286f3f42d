"""
Model archive: a directory with topology.obj, model.json and raw float64 blobs.

Blobs are flat little-endian float64; matrices are stored column-major. Every
blob length is checked against the dimensions in model.json.
"""

import json
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from facefit.exceptions import InvalidModelError, ModelFormatError
from facefit.model.base_model import BaseModel
from facefit.model.corrective import AffineLayer, CorrectiveMap, CorrectiveVariant
from facefit.model.multilevel import MultiLevelModel
from facefit.model.topology import AnchorKind, LandmarkAnchor, MeshTopology
from facefit.utils.logging_setup import get_logger, log_run_event

logger = get_logger("model.store")

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def _write_blob(path: Path, array: np.ndarray) -> None:
    data = np.asarray(array, dtype=_DTYPE)
    path.write_bytes(data.tobytes(order="F"))


def _read_blob(path: Path, shape: Tuple[int, ...]) -> np.ndarray:
    if not path.exists():
        raise ModelFormatError(path, "missing blob")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * _DTYPE.itemsize
    if len(raw) != expected:
        raise ModelFormatError(path, f"blob has {len(raw)} bytes, dimensions in model.json need {expected}")
    values = np.frombuffer(raw, dtype=_DTYPE).astype(float)
    return values.reshape(shape, order="F") if len(shape) > 1 else values


def _layer_shapes(corrective: CorrectiveMap) -> List[List[int]]:
    return [list(layer.matrix.shape) for layer in corrective.layers]


def save_model(model: MultiLevelModel, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    topo, base = model.topology, model.base

    vertices = base.a_g.reshape(-1, 3)
    with open(directory / "topology.obj", "w", encoding="utf-8") as f:
        f.write(f"# facefit mean geometry, {topo.vertex_count} vertices\n")
        for x, y, z in vertices:
            f.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in topo.triangles:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")

    meta = {
        "format": FORMAT_VERSION,
        "vertex_count": topo.vertex_count,
        "m_s": base.m_s,
        "m_e": base.m_e,
        "m_r": base.m_r,
        "C": model.corrective_dim,
        "variant": model.variant.value,
        "seed": model.seed,
        "layers": {"theta_g": _layer_shapes(model.geom_corr), "theta_r": _layer_shapes(model.refl_corr)},
        "landmark_anchors": [{"kind": a.kind.value, "vertex": a.vertex} for a in topo.landmark_anchors],
        "skin_mask": [int(i) for i in topo.skin_mask],
        "contour_candidates": [int(i) for i in topo.contour_candidates],
    }
    with open(directory / "model.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")

    for name in ("a_g", "a_r", "B_g", "B_r", "sigma_g", "sigma_r"):
        _write_blob(directory / f"{name}.bin", getattr(base, name))
    for part, corrective in (("theta_g", model.geom_corr), ("theta_r", model.refl_corr)):
        for i, layer in enumerate(corrective.layers):
            _write_blob(directory / f"{part}_layer{i}_M.bin", layer.matrix)
            _write_blob(directory / f"{part}_layer{i}_b.bin", layer.bias)

    log_run_event("model.store", f"saved model (N={topo.vertex_count}, C={model.corrective_dim}) to {directory}")
    return directory


def _read_obj(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise ModelFormatError(path, "missing mesh")
    vertices, faces = [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    vertices.append([float(p) for p in parts[1:4]])
                elif parts[0] == "f":
                    if len(parts) != 4:
                        raise ModelFormatError(path, f"line {lineno}: only triangles are supported")
                    faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
            except ValueError as e:
                raise ModelFormatError(path, f"line {lineno}: {e}") from e
    return np.array(vertices, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _read_meta(path: Path) -> Dict:
    if not path.exists():
        raise ModelFormatError(path, "missing model description")
    try:
        with open(path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(path, f"invalid JSON ({e})") from e
    required = ("vertex_count", "m_s", "m_e", "m_r", "C", "variant", "layers", "landmark_anchors",
                "skin_mask", "contour_candidates")
    missing = [key for key in required if key not in meta]
    if missing:
        raise ModelFormatError(path, f"missing field(s): {', '.join(missing)}")
    return meta


def _read_corrective(directory: Path, part: str, variant: CorrectiveVariant, shapes, meta_path: Path,
                     n3: int, c: int) -> CorrectiveMap:
    if len(shapes) != variant.layer_count:
        raise ModelFormatError(meta_path, f"{part} lists {len(shapes)} layers, {variant.value} needs "
                                          f"{variant.layer_count}")
    layers = []
    for i, (rows, cols) in enumerate(shapes):
        matrix = _read_blob(directory / f"{part}_layer{i}_M.bin", (int(rows), int(cols)))
        bias = _read_blob(directory / f"{part}_layer{i}_b.bin", (int(rows),))
        layers.append(AffineLayer(matrix, bias))
    corrective = CorrectiveMap(variant, layers)
    if corrective.input_dim != c or corrective.output_dim != n3:
        raise ModelFormatError(meta_path, f"{part} maps {corrective.input_dim} -> {corrective.output_dim}, "
                                          f"expected {c} -> {n3}")
    return corrective


def load_model(directory: Union[str, Path]) -> MultiLevelModel:
    directory = Path(directory)
    if not directory.is_dir():
        raise ModelFormatError(directory, "model directory not found")
    meta_path = directory / "model.json"
    meta = _read_meta(meta_path)

    n = int(meta["vertex_count"])
    m_s, m_e, m_r, c = (int(meta[k]) for k in ("m_s", "m_e", "m_r", "C"))
    try:
        variant = CorrectiveVariant(meta["variant"])
    except ValueError as e:
        raise ModelFormatError(meta_path, f"unknown variant '{meta['variant']}'") from e

    obj_path = directory / "topology.obj"
    obj_vertices, triangles = _read_obj(obj_path)
    if len(obj_vertices) != n:
        raise ModelFormatError(obj_path, f"{len(obj_vertices)} vertices, model.json declares {n}")

    n3 = 3 * n
    base = BaseModel(a_g=_read_blob(directory / "a_g.bin", (n3,)),
                     a_r=_read_blob(directory / "a_r.bin", (n3,)),
                     B_g=_read_blob(directory / "B_g.bin", (n3, m_s + m_e)),
                     B_r=_read_blob(directory / "B_r.bin", (n3, m_r)),
                     sigma_g=_read_blob(directory / "sigma_g.bin", (m_s + m_e,)),
                     sigma_r=_read_blob(directory / "sigma_r.bin", (m_r,)),
                     m_s=m_s, m_e=m_e, m_r=m_r)

    try:
        anchors = [LandmarkAnchor(AnchorKind(a["kind"]), int(a["vertex"])) for a in meta["landmark_anchors"]]
    except (KeyError, ValueError, TypeError) as e:
        raise ModelFormatError(meta_path, f"bad landmark anchor table ({e})") from e
    topology = MeshTopology(vertex_count=n, triangles=triangles, landmark_anchors=anchors,
                            skin_mask=meta["skin_mask"], contour_candidates=meta["contour_candidates"])

    layers = meta["layers"]
    geom_corr = _read_corrective(directory, "theta_g", variant, layers.get("theta_g", []), meta_path, n3, c)
    refl_corr = _read_corrective(directory, "theta_r", variant, layers.get("theta_r", []), meta_path, n3, c)

    model = MultiLevelModel(topology, base, geom_corr, refl_corr, seed=meta.get("seed"))
    try:
        model.validate()
    except InvalidModelError as e:
        raise ModelFormatError(meta_path, str(e)) from e
    logger.info(f"loaded model from {directory}: N={n} dims=({m_s},{m_e},{m_r}) C={c} variant={variant.value}")
    return model
