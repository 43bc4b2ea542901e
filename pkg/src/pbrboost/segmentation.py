"""Fuse per-view 2D label maps into one per-face 3D semantic mask.

Per-view segmenters emit arbitrary label ids, so the pipeline is: align ids
across views (Jaccard overlap of back-projected face sets), vote per triangle
over every view's z-tested pixels, then flood-fill unseen triangles from
their labeled neighbors. A deterministic k-means over albedo colors stands in
when no external segmenter output is available.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyMask, KTooLarge, ParseError
from .geometry import Camera, GBuffer, TriMesh, frame_camera
from .raster import render_gbuffer

UNLABELED = -1

DEFAULT_VIEW_ANGLES = ((0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0),
                       (0.0, 90.0), (0.0, -90.0))


@dataclass
class ViewLabels:
    """Per-pixel integer labels for one camera view; UNLABELED = -1."""

    camera: Camera
    labels: np.ndarray  # (H, W) int32

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != (self.camera.height, self.camera.width):
            raise ValueError("label image does not match camera resolution")


@dataclass
class SemanticMask3D:
    """Fused per-triangle segment assignment, ids contiguous from 0."""

    face_segments: np.ndarray  # (F,) int32
    segment_count: int

    def __post_init__(self):
        self.face_segments = np.asarray(self.face_segments, dtype=np.int32)

    def face_counts(self) -> np.ndarray:
        return np.bincount(self.face_segments, minlength=self.segment_count)


def default_view_set(width: int = 512, height: int = 512, ortho_scale: float = 1.0,
                     mesh: TriMesh | None = None) -> list[Camera]:
    """The six axis-aligned orthographic views: front, right, back, left, top, bottom."""
    cams = []
    for az, el in DEFAULT_VIEW_ANGLES:
        if mesh is not None:
            cams.append(frame_camera(mesh, az, el, width, height, "orthographic"))
        else:
            cams.append(Camera("orthographic", az, el, width, height,
                               ortho_scale=ortho_scale))
    return cams


# ---------------------------------------------------------------------------
# Label image / set interchange
# ---------------------------------------------------------------------------


def save_label_image(labels: np.ndarray, path: str | Path) -> None:
    """16-bit grayscale PNG; pixel 0 = UNLABELED, pixel v > 0 = label v - 1."""
    raw = (np.asarray(labels, dtype=np.int64) + 1)
    if raw.min() < 0 or raw.max() > 0xFFFF:
        raise ValueError("label out of 16-bit range")
    Image.fromarray(raw.astype(np.uint16)).save(str(path))


def load_label_image(path: str | Path) -> np.ndarray:
    img = Image.open(str(path))
    arr = np.asarray(img, dtype=np.int64)
    if arr.ndim != 2:
        raise ParseError(f"{path}: label image must be single-channel")
    return (arr - 1).astype(np.int32)


def save_label_set(directory: str | Path, views: list[ViewLabels]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, view in enumerate(views):
        save_label_image(view.labels, directory / f"view_{i}.png")
    cams = [view.camera.to_json() for view in views]
    (directory / "cameras.json").write_text(json.dumps(cams, indent=2) + "\n",
                                            encoding="utf-8")


def load_label_set(directory: str | Path) -> list[ViewLabels]:
    directory = Path(directory)
    cam_path = directory / "cameras.json"
    if not cam_path.exists():
        raise ParseError(f"{directory}: missing cameras.json")
    cams = [Camera.from_json(obj)
            for obj in json.loads(cam_path.read_text(encoding="utf-8"))]
    views = []
    for i, cam in enumerate(cams):
        img_path = directory / f"view_{i}.png"
        if not img_path.exists():
            raise ParseError(f"{directory}: missing view_{i}.png")
        views.append(ViewLabels(cam, load_label_image(img_path)))
    return views


# ---------------------------------------------------------------------------
# Cross-view label alignment
# ---------------------------------------------------------------------------


def _label_face_sets(mesh: TriMesh,
                     view: ViewLabels) -> tuple[dict[int, frozenset], frozenset]:
    """Back-projected face-id sets per label, plus all faces the view sees.

    A face joins the set of its majority pixel label only; any-pixel
    membership would let sparse label noise bleed every label onto every
    face and erase the Jaccard signal alignment depends on.
    """
    gbuf = render_gbuffer(mesh, view.camera)
    visible = frozenset(np.unique(gbuf.face_id[gbuf.coverage]).tolist())
    valid = gbuf.coverage & (view.labels != UNLABELED)
    faces = gbuf.face_id[valid]
    labels = view.labels[valid]
    out: dict[int, set] = {}
    if faces.size:
        pairs, counts = np.unique(np.stack([faces, labels], axis=1), axis=0,
                                  return_counts=True)
        # per face: highest count wins, ties break toward the lowest label
        order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
        ranked = pairs[order]
        first = np.unique(ranked[:, 0], return_index=True)[1]
        for face, lab in ranked[first]:
            out.setdefault(int(lab), set()).add(int(face))
    return {k: frozenset(v) for k, v in out.items()}, visible


def align_labels(mesh: TriMesh, views: list[ViewLabels]) -> list[ViewLabels]:
    """Unify label ids across views by face-set overlap.

    Labels from different views whose back-projected face sets overlap with
    Jaccard >= 0.5 share one global id; the Jaccard is measured over faces
    co-visible in both views, so parts wrapping out of one view's sight still
    unify (possibly transitively) while parts never seen together stay apart.
    Global ids are numbered by first appearance in (view, label) order.
    """
    if len(views) < 2:
        return list(views)
    projections = [_label_face_sets(mesh, v) for v in views]
    face_sets = [p[0] for p in projections]
    visible = [p[1] for p in projections]
    nodes = [(vi, lab) for vi, fs in enumerate(face_sets) for lab in sorted(fs)]
    parent = {n: n for n in nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            # keep the earlier (view, label) as root for stable numbering
            parent[max(ra, rb)] = min(ra, rb)

    for vi in range(len(views)):
        for vj in range(vi + 1, len(views)):
            co = visible[vi] & visible[vj]
            if not co:
                continue
            for lab_i, set_i in face_sets[vi].items():
                a = set_i & co
                for lab_j, set_j in face_sets[vj].items():
                    b = set_j & co
                    union_size = len(a | b)
                    if union_size == 0:
                        continue
                    if len(a & b) / union_size >= 0.5:
                        union((vi, lab_i), (vj, lab_j))

    global_id: dict[tuple, int] = {}
    for n in nodes:
        root = find(n)
        if root not in global_id:
            global_id[root] = len(global_id)

    out = []
    for vi, view in enumerate(views):
        labels = view.labels
        relabeled = np.full_like(labels, UNLABELED)
        for lab in face_sets[vi]:
            relabeled[labels == lab] = global_id[find((vi, lab))]
        out.append(ViewLabels(view.camera, relabeled))
    return out


# ---------------------------------------------------------------------------
# Voting and fill
# ---------------------------------------------------------------------------


def fuse_mask(mesh: TriMesh, views: list[ViewLabels]) -> SemanticMask3D:
    """Per-triangle majority vote over all views' visible labeled pixels.

    Ties break to the label with the lowest contributing view index, then to
    the lowest label id. Triangles with no votes inherit from their nearest
    voted neighbor by breadth-first search over shared mesh edges.
    """
    all_faces, all_labels, all_views = [], [], []
    for vi, view in enumerate(views):
        gbuf = render_gbuffer(mesh, view.camera)
        valid = gbuf.coverage & (view.labels != UNLABELED)
        if not valid.any():
            continue
        all_faces.append(gbuf.face_id[valid].astype(np.int64))
        all_labels.append(view.labels[valid].astype(np.int64))
        all_views.append(np.full(int(valid.sum()), vi, dtype=np.int64))
    if not all_faces:
        raise EmptyMask("no triangle received any labeled pixel")

    faces = np.concatenate(all_faces)
    labels = np.concatenate(all_labels)
    view_idx = np.concatenate(all_views)

    # group votes by (face, label); within a group the smallest view index is
    # first because of the sort order
    order = np.lexsort((view_idx, labels, faces))
    f_s, l_s, v_s = faces[order], labels[order], view_idx[order]
    new_group = np.ones(len(f_s), dtype=bool)
    new_group[1:] = (f_s[1:] != f_s[:-1]) | (l_s[1:] != l_s[:-1])
    starts = np.nonzero(new_group)[0]
    counts = np.diff(np.append(starts, len(f_s)))
    g_face, g_label, g_view = f_s[starts], l_s[starts], v_s[starts]

    # winner per face: max count, then min view, then min label
    pick = np.lexsort((g_label, g_view, -counts, g_face))
    first = np.ones(len(pick), dtype=bool)
    first[1:] = g_face[pick][1:] != g_face[pick][:-1]
    winners = pick[first]

    assignment = np.full(mesh.num_faces, UNLABELED, dtype=np.int64)
    assignment[g_face[winners]] = g_label[winners]

    if np.any(assignment == UNLABELED):
        _fill_unlabeled(mesh, assignment)

    used = np.unique(assignment)
    lut = {int(lab): i for i, lab in enumerate(used)}
    remapped = np.array([lut[int(lab)] for lab in assignment], dtype=np.int32)
    return SemanticMask3D(remapped, len(used))


def _face_adjacency(mesh: TriMesh) -> list[np.ndarray]:
    """Neighbor faces across shared edges; seam-duplicated positions are healed
    by keying edges on rounded coordinates rather than raw indices."""
    keys = np.round(mesh.positions * 1e9).astype(np.int64)
    _, canon = np.unique(keys, axis=0, return_inverse=True)
    tri = canon[mesh.triangles[:, :, 0]]  # (F, 3)
    edges = {}
    for f in range(len(tri)):
        a, b, c = tri[f]
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            edges.setdefault(key, []).append(f)
    adj = [[] for _ in range(len(tri))]
    for fs in edges.values():
        for x in fs:
            for y in fs:
                if x != y:
                    adj[x].append(y)
    return [np.unique(np.asarray(a, dtype=np.int64)) for a in adj]


def _fill_unlabeled(mesh: TriMesh, assignment: np.ndarray) -> None:
    """Multi-source BFS from voted faces; in-place."""
    adj = _face_adjacency(mesh)
    queue = deque(int(f) for f in np.nonzero(assignment != UNLABELED)[0])
    while queue:
        f = queue.popleft()
        for nb in adj[f]:
            if assignment[nb] == UNLABELED:
                assignment[nb] = assignment[f]
                queue.append(int(nb))
    # disconnected unseen components: nearest voted face by centroid distance
    remaining = np.nonzero(assignment == UNLABELED)[0]
    if len(remaining):
        centroids = mesh.corner_positions().mean(axis=1)
        voted = np.nonzero(assignment != UNLABELED)[0]
        for f in remaining:
            d = np.linalg.norm(centroids[voted] - centroids[f], axis=1)
            assignment[f] = assignment[voted[np.argmin(d)]]


# ---------------------------------------------------------------------------
# Fallback segmentation (stand-in for an external 2D segmenter)
# ---------------------------------------------------------------------------


def fallback_segment(gbuf: GBuffer, k: int) -> ViewLabels:
    """Deterministic k-means over covered-pixel albedo colors.

    Centers initialize from evenly spaced quantiles of the sorted distinct
    colors, so identical inputs always produce identical clusters; labels are
    renumbered by first appearance in raster order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    cov = gbuf.coverage
    if not cov.any():
        raise EmptyMask("gbuffer has no covered pixels")
    colors = gbuf.albedo[cov]
    distinct = np.unique(colors, axis=0)
    if k > len(distinct):
        raise KTooLarge(f"k={k} exceeds {len(distinct)} distinct covered colors")

    init_idx = np.floor(np.linspace(0, len(distinct) - 1, k)).astype(np.int64)
    centers = distinct[init_idx].copy()
    assign = np.zeros(len(colors), dtype=np.int64)
    for _ in range(100):
        d2 = ((colors[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)  # ties to the lowest center index
        for c in range(k):
            members = new_assign == c
            if members.any():
                centers[c] = colors[members].mean(axis=0)
            else:
                # reseed an empty cluster at the worst-fit point
                worst = np.argmax(d2[np.arange(len(colors)), new_assign])
                centers[c] = colors[worst]
                new_assign[worst] = c
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    # stable ids: first appearance in raster order
    remap = np.full(k, -1, dtype=np.int64)
    next_id = 0
    for c in assign:
        if remap[c] < 0:
            remap[c] = next_id
            next_id += 1
        if next_id == k:
            break
    labels = np.full(cov.shape, UNLABELED, dtype=np.int32)
    labels[cov] = remap[assign]
    return ViewLabels(gbuf.camera, labels)


# ---------------------------------------------------------------------------
# Mask file format
# ---------------------------------------------------------------------------


def save_mask(mask: SemanticMask3D, path: str | Path) -> None:
    """Text format: header 'pbrmask v1 <count>', then line i = segment of face i."""
    lines = [f"pbrmask v1 {mask.segment_count}"]
    lines.extend(str(int(s)) for s in mask.face_segments)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mask(path: str | Path) -> SemanticMask3D:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise ParseError("empty mask file")
    head = text[0].split()
    if len(head) != 3 or head[0] != "pbrmask" or head[1] != "v1":
        raise ParseError("bad mask header, expected 'pbrmask v1 <count>'", 1)
    try:
        count = int(head[2])
    except ValueError:
        raise ParseError("segment count is not an integer", 1) from None
    if count < 1:
        raise ParseError("segment count must be positive", 1)
    segments = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        try:
            val = int(line)
        except ValueError:
            raise ParseError(f"bad segment id {line!r}", lineno) from None
        if val < 0 or val >= count:
            raise ParseError(f"segment id {val} outside 0..{count - 1}", lineno)
        segments.append(val)
    if not segments:
        raise ParseError("mask has no faces")
    present = np.unique(segments)
    if len(present) != count:
        raise ParseError(f"header claims {count} segments, file uses {len(present)}")
    return SemanticMask3D(np.asarray(segments, dtype=np.int32), count)
