"""Command line entry points: prep, eval sweep, fabricate, demo, serve."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .bgpcp import build_band, build_cloud, default_filter_radius, radius_filter
from .capture import load_bundle, save_bundle
from .dataset_prep import PatientCensus, plan_oversampling
from .errors import WoundPatchError
from .evalharness import (
    NoiseModel,
    SyntheticScene,
    default_intrinsics,
    default_scenes,
    render_depth,
    run_sweep,
)
from .fabricate import SlicerConfig, slice_solid, write_stl
from .flatten import extrude, flatten
from .meshing import mesh_region, write_obj
from .segmentation import extract_boundary, redraw, select_component


@click.group()
def main():
    """Wound capture to printable patch pipeline."""


@main.command()
@click.option("--census", "census_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--clamp", default=20, show_default=True, help="Oversampling clamp parameter.")
def prep(census_path, out_path, clamp):
    """Read a census CSV (patient_id,count) and emit a plan CSV (patient_id,oversample)."""
    counts = {}
    with open(census_path, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[row["patient_id"]] = int(row["count"])
    plan = plan_oversampling(PatientCensus(counts=counts, clamp=clamp))
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "oversample"])
        for patient, amount in plan.items():
            writer.writerow([patient, amount])
    click.echo(f"wrote plan for {len(plan)} patients to {out_path}")


@main.group()
def eval():
    """Synthetic accuracy experiments."""


@eval.command()
@click.option("--seed", default=0, show_default=True, help="Master RNG seed.")
@click.option("--sigma-mm", default=1.0, show_default=True, help="Depth noise std in mm.")
@click.option("--rim-factor", default=3.0, show_default=True, help="Rim noise amplification.")
@click.option("--repeats", default=5, show_default=True)
@click.option("--angles", default="0,10,20,30", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--serial", is_flag=True, help="Disable parallel cells.")
def sweep(seed, sigma_mm, rim_factor, repeats, angles, out_path, serial):
    """Run the wound-type x angle accuracy sweep and print a Table-3 style report."""
    angle_list = tuple(float(a) for a in angles.split(","))
    report = run_sweep(
        scenes=default_scenes(sigma_mm=sigma_mm, rim_factor=rim_factor),
        angles_deg=angle_list,
        repeats=repeats,
        master_seed=seed,
        parallel=not serial,
    )
    click.echo(report.format_table())
    click.echo(f"grand mean accuracy: {report.grand_accuracy():.2f}%")
    if out_path:
        Path(out_path).write_text(report.to_csv())
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--seed-x", type=int, default=None, help="Seed pixel x (uses the bundle score map).")
@click.option("--seed-y", type=int, default=None)
@click.option("--threshold", type=float, default=None, help="Score threshold; bundle default if omitted.")
@click.option("--boundary", "boundary_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with {\"vertices\": [[x, y], ...]} overriding segmentation.")
@click.option("--thickness-mm", default=2.0, show_default=True)
@click.option("--stl", "stl_path", required=True, type=click.Path(dir_okay=False))
@click.option("--gcode", "gcode_path", required=True, type=click.Path(dir_okay=False))
@click.option("--layer-height", default=0.2, show_default=True)
@click.option("--extrusion-width", default=0.4, show_default=True)
@click.option("--filament-diameter", default=1.75, show_default=True)
@click.option("--perimeters", default=1, show_default=True)
@click.option("--infill-spacing", default=0.4, show_default=True)
@click.option("--feed-rate", default=1200.0, show_default=True)
@click.option("--debug-obj", "obj_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the lifted surface mesh as OBJ.")
def fabricate(bundle_path, seed_x, seed_y, threshold, boundary_path, thickness_mm,
              stl_path, gcode_path, layer_height, extrusion_width, filament_diameter,
              perimeters, infill_spacing, feed_rate, obj_path):
    """Run boundary -> filter -> mesh -> flatten -> STL + G-code on a bundle."""
    try:
        bundle = load_bundle(bundle_path)
        if boundary_path:
            vertices = json.loads(Path(boundary_path).read_text())["vertices"]
            boundary = redraw(np.asarray(vertices, dtype=np.float64))
        else:
            if seed_x is None or seed_y is None:
                raise click.UsageError("need --seed-x/--seed-y or --boundary")
            if bundle.score is None:
                raise click.UsageError("bundle has no score map; pass --boundary")
            t = bundle.default_threshold if threshold is None else threshold
            mask = select_component(bundle.score, (seed_x, seed_y), t)
            boundary = extract_boundary(mask)

        band = build_band(boundary, bundle.depth.values.shape)
        cloud = build_cloud(bundle.depth, bundle.intrinsics, boundary, band)
        filtered = radius_filter(cloud, radius=default_filter_radius(cloud, bundle.intrinsics))
        mesh = mesh_region(filtered, boundary, bundle.intrinsics)
        if obj_path:
            write_obj(mesh, obj_path)
            click.echo(f"wrote {obj_path}")
        flat = flatten(mesh)
        solid = extrude(flat, thickness_mm / 1000.0)
        Path(stl_path).write_bytes(write_stl(solid))
        cfg = SlicerConfig(
            layer_height=layer_height,
            extrusion_width=extrusion_width,
            filament_diameter=filament_diameter,
            perimeter_count=perimeters,
            infill_spacing=infill_spacing,
            feed_rate=feed_rate,
        )
        Path(gcode_path).write_text(slice_solid(solid, cfg).emit())
    except WoundPatchError as exc:
        click.echo(f"error [{exc.stage}/{exc.code}]: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"mesh area {mesh.surface_area() * 1e4:.2f} cm^2, flat area "
        f"{flat.area() * 1e4:.2f} cm^2, wrote {stl_path} and {gcode_path}"
    )


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
@click.option("--kind", default="disk", type=click.Choice(["disk", "crater", "cap"]), show_default=True)
@click.option("--tilt-deg", default=0.0, show_default=True)
@click.option("--sigma-mm", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def demo(out_path, kind, tilt_deg, sigma_mm, seed):
    """Render a synthetic wound capture bundle (for the UI and smoke tests)."""
    scene = SyntheticScene(kind=kind, tilt_deg=tilt_deg, noise=NoiseModel(sigma_mm=sigma_mm))
    bundle = render_depth(scene, default_intrinsics(), seed)
    save_bundle(bundle, out_path)
    click.echo(
        f"wrote demo bundle to {out_path} "
        f"(truth area {scene.truth_area_cm2():.2f} cm^2)"
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True)
@click.option("--persist-dir", type=click.Path(file_okay=False), default=None)
def serve(host, port, persist_dir):
    """Start the HITL session service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(persist_dir=persist_dir), host=host, port=port)


if __name__ == "__main__":
    main()
