"""Command-line pipeline: mask, assign, refine, relight, export, serve.

Exit codes: 0 success, 2 input or schema error, 3 numeric failure. Every
failure prints one "error:" line on stderr.
"""

from __future__ import annotations

import os


def _cap_threads() -> None:
    value = os.environ.get("PBRBOOST_THREADS")
    if value:
        # BLAS pools size themselves at import; must run before numpy loads
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
                    "VECLIB_MAXIMUM_THREADS"):
            os.environ.setdefault(var, value)


_cap_threads()

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import (
    DivergedLoss,
    MissingTargetView,
    PBRBoostError,
    QuadratureDiverged,
    SchemaError,
)
from .geometry import (
    Camera,
    TextureMap,
    TriMesh,
    frame_camera,
    load_camera,
    load_mesh,
    load_texture,
)
from .gltf_export import export_gltf
from .materials import (
    DEFAULT_METALNESS,
    DEFAULT_ROUGHNESS,
    SegmentTable,
    bake_material_uvs,
    load_recommendations,
)
from .raster import render_gbuffer
from .refine import (
    NormalOracle,
    angular_error_vs_oracle,
    bake_normal_uv,
    default_refine_views,
    holdout_refine_views,
    refine,
    render_with_normal_map,
)
from .segmentation import (
    align_labels,
    default_view_set,
    fallback_segment,
    fuse_mask,
    load_label_set,
    load_mask,
    save_mask,
)
from .shading import LightRig, default_rig, load_rig, shade


def relight_frame(mesh: TriMesh, cam: Camera, albedo_uv: TextureMap | None,
                  roughness_uv: TextureMap, metalness_uv: TextureMap,
                  normal_uv: TextureMap | None = None,
                  rig: LightRig | None = None, gbuf=None):
    """One shaded frame; the single rendering path the CLI and service share."""
    if rig is None:
        rig = default_rig()
    if gbuf is None:
        gbuf = render_gbuffer(mesh, cam, albedo_uv=albedo_uv)
    if normal_uv is not None:
        normals = render_with_normal_map(mesh, cam, normal_uv, gbuf=gbuf)
        gbuf = dataclasses.replace(gbuf, normal=normals)
    return shade(gbuf, roughness_uv, metalness_uv, rig)


def _material_maps(mask_path, rec_path):
    """(mask, table) resolved from optional mask/recommendation files."""
    mask = load_mask(mask_path) if mask_path else None
    if rec_path and mask is None:
        raise SchemaError("$", "recommendations need a mask for validation")
    if mask is None:
        return None, None
    table = (load_recommendations(rec_path, mask) if rec_path
             else SegmentTable.from_mask(mask))
    return mask, table


def _load_camera_or_frame(args, mesh: TriMesh) -> Camera:
    if args.camera:
        return load_camera(args.camera)
    return frame_camera(mesh, args.azimuth, args.elevation,
                        args.size, args.size, args.projection)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_mask(args) -> int:
    mesh = load_mesh(args.mesh)
    if args.labels_dir:
        views = load_label_set(args.labels_dir)
    else:
        albedo = load_texture(args.albedo, channels=3) if args.albedo else None
        cams = default_view_set(args.view_res, args.view_res, mesh=mesh)
        views = [fallback_segment(render_gbuffer(mesh, cam, albedo_uv=albedo),
                                  args.fallback_k)
                 for cam in cams]
    aligned = align_labels(mesh, views)
    mask = fuse_mask(mesh, aligned)
    save_mask(mask, args.out)
    print(f"segments: {mask.segment_count}")
    print(f"wrote {args.out}")
    return 0


def cmd_assign(args) -> int:
    mesh = load_mesh(args.mesh)
    mask = load_mask(args.mask)
    table = (load_recommendations(args.recommendations, mask)
             if args.recommendations else SegmentTable.from_mask(mask))
    roughness, metalness = bake_material_uvs(mesh, mask, table, args.res)
    roughness.save_png(args.out_roughness)
    metalness.save_png(args.out_metalness)
    print(f"wrote {args.out_roughness}")
    print(f"wrote {args.out_metalness}")
    return 0


def cmd_refine(args) -> int:
    mesh = load_mesh(args.mesh)
    if args.oracle_dir:
        oracle = NormalOracle.from_directory(args.oracle_dir, args.t0)
        cam_path = Path(args.oracle_dir) / "cameras.json"
        if not cam_path.exists():
            raise MissingTargetView(f"{args.oracle_dir}: missing cameras.json")
        views = [Camera.from_json(o)
                 for o in json.loads(cam_path.read_text(encoding="utf-8"))]
        eval_views = views
    else:
        ref_mesh = load_mesh(args.reference_mesh)
        oracle = NormalOracle.from_reference(ref_mesh, args.t0)
        views = default_refine_views(mesh, args.views, args.view_res,
                                     args.view_res)
        eval_views = holdout_refine_views(mesh, args.holdout, args.view_res,
                                          args.view_res)

    before = angular_error_vs_oracle(mesh, oracle, eval_views)
    result = refine(mesh, oracle, views, rounds=args.rounds,
                    steps_per_round=args.steps,
                    hidden_width=args.hidden_width, levels=args.levels,
                    table_size=args.table_size,
                    base_resolution=args.base_resolution,
                    finest_resolution=args.finest_resolution, seed=args.seed)
    after = angular_error_vs_oracle(mesh, oracle, eval_views, result.field)

    normal_uv = bake_normal_uv(mesh, result.field, resolution=args.res)
    normal_uv.save_png(args.out)

    metrics = {
        "round_losses": result.round_losses,
        "angular_error_deg": {"before": before, "after": after},
        "held_out_views": args.oracle_dir is None,
    }
    metrics_path = args.metrics or f"{args.out}.metrics.json"
    Path(metrics_path).write_text(json.dumps(metrics, indent=2),
                                  encoding="utf-8")
    mean_before = sum(before) / len(before)
    mean_after = sum(after) / len(after)
    print(f"final loss: {result.round_losses[-1]:.6e}")
    print(f"angular error: {mean_before:.3f} deg -> {mean_after:.3f} deg")
    print(f"wrote {args.out}")
    print(f"wrote {metrics_path}")
    return 0


def cmd_relight(args) -> int:
    mesh = load_mesh(args.mesh)
    albedo = load_texture(args.albedo, channels=3) if args.albedo else None
    roughness = (load_texture(args.roughness, channels=1) if args.roughness
                 else TextureMap.full(4, 4, DEFAULT_ROUGHNESS, channels=1))
    metalness = (load_texture(args.metalness, channels=1) if args.metalness
                 else TextureMap.full(4, 4, DEFAULT_METALNESS, channels=1))
    normal_uv = load_texture(args.normal_uv, channels=3) if args.normal_uv else None
    rig = load_rig(args.rig) if args.rig else default_rig()
    cam = _load_camera_or_frame(args, mesh)
    image = relight_frame(mesh, cam, albedo, roughness, metalness,
                          normal_uv, rig)
    TextureMap.from_array(image).save_png(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_export(args) -> int:
    mesh = load_mesh(args.mesh)
    albedo = load_texture(args.albedo, channels=3)
    roughness = load_texture(args.roughness, channels=1)
    metalness = load_texture(args.metalness, channels=1)
    normal_uv = load_texture(args.normal_uv, channels=3) if args.normal_uv else None
    _, table = _material_maps(args.mask, args.recommendations)
    paths = export_gltf(mesh, args.out_dir, albedo=albedo,
                        roughness=roughness, metalness=metalness,
                        normal_uv=normal_uv, table=table, name=args.name)
    for key in sorted(paths):
        print(f"wrote {paths[key]}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import Session, create_app

    mesh = load_mesh(args.mesh)
    albedo = load_texture(args.albedo, channels=3) if args.albedo else None
    mask, table = _material_maps(args.mask, args.recommendations)
    if mask is None:
        raise SchemaError("$", "serve requires --mask")
    normal_uv = load_texture(args.normal_uv, channels=3) if args.normal_uv else None
    session = Session(mesh=mesh, mask=mask, albedo=albedo, table=table,
                      normal_uv=normal_uv, resolution=args.resolution,
                      export_dir=args.export_dir)
    app = create_app(session)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbrboost",
        description="Add PBR materials and refined normals to an "
                    "image-to-3D mesh, then relight or export it.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="seed for every stochastic component")

    p = sub.add_parser("mask", parents=[common],
                       help="fuse per-view labels into a per-face mask")
    p.add_argument("mesh")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--labels-dir", help="directory of view_{i}.png + cameras.json")
    group.add_argument("--fallback-k", type=int,
                       help="k-means over rendered albedo instead of labels")
    p.add_argument("--albedo", help="albedo PNG for the fallback renderer")
    p.add_argument("--view-res", type=int, default=512)
    p.add_argument("--out", default="mask.txt")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("assign", parents=[common],
                       help="bake per-segment roughness/metalness UV maps")
    p.add_argument("mesh")
    p.add_argument("mask")
    p.add_argument("--recommendations", help="per-segment material JSON")
    p.add_argument("--res", type=int, default=1024)
    p.add_argument("--out-roughness", default="roughness.png")
    p.add_argument("--out-metalness", default="metalness.png")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("refine", parents=[common],
                       help="optimize a bump field against a normal oracle")
    p.add_argument("mesh")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--oracle-dir", help="directory of target normal maps")
    group.add_argument("--reference-mesh", help="high-resolution mesh oracle")
    p.add_argument("--t0", type=float, default=1.0,
                   help="oracle blend strength in [0, 1]")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--view-res", type=int, default=256)
    p.add_argument("--holdout", type=int, default=4,
                   help="held-out evaluation views (reference oracle only)")
    p.add_argument("--res", type=int, default=1024,
                   help="baked normal UV resolution")
    p.add_argument("--hidden-width", type=int, default=64)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--table-size", type=int, default=2 ** 16)
    p.add_argument("--base-resolution", type=int, default=16)
    p.add_argument("--finest-resolution", type=int, default=256)
    p.add_argument("--out", default="normal_uv.png")
    p.add_argument("--metrics", help="metrics JSON path (default <out>.metrics.json)")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("relight", parents=[common],
                       help="render the mesh under a light rig")
    p.add_argument("mesh")
    p.add_argument("--albedo")
    p.add_argument("--roughness")
    p.add_argument("--metalness")
    p.add_argument("--normal-uv")
    p.add_argument("--rig", help="light rig JSON")
    p.add_argument("--camera", help="camera JSON (overrides orbit flags)")
    p.add_argument("--azimuth", type=float, default=30.0)
    p.add_argument("--elevation", type=float, default=20.0)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--projection", default="orthographic",
                   choices=("orthographic", "perspective"))
    p.add_argument("--out", default="relit.png")
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("export", parents=[common],
                       help="write a glTF 2.0 bundle")
    p.add_argument("mesh")
    p.add_argument("--albedo", required=True)
    p.add_argument("--roughness", required=True)
    p.add_argument("--metalness", required=True)
    p.add_argument("--normal-uv")
    p.add_argument("--mask")
    p.add_argument("--recommendations")
    p.add_argument("--out-dir", default="gltf")
    p.add_argument("--name", default="asset")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", parents=[common],
                       help="run the interactive material preview service")
    p.add_argument("mesh")
    p.add_argument("--albedo")
    p.add_argument("--mask", required=True)
    p.add_argument("--recommendations")
    p.add_argument("--normal-uv")
    p.add_argument("--port", type=int, default=8745)
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--export-dir", default="gltf")
    p.set_defaults(func=cmd_serve)
    return parser


def _validate(args) -> None:
    if args.command == "mask" and args.fallback_k is not None and args.fallback_k < 1:
        raise ValueError("--fallback-k must be at least 1")
    if args.command == "refine":
        if args.rounds < 1:
            raise ValueError("--rounds must be at least 1")
        if not (0.0 <= args.t0 <= 1.0):
            raise ValueError("--t0 must lie in [0, 1]")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except (DivergedLoss, QuadratureDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (PBRBoostError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
