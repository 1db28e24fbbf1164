"""tspdraw: raster images to multi-pen, curvature-bounded plotter toolpaths.

The pipeline separates an image into per-pen ink density fields, places
stipple points matching each field, orders them into a short single-stroke
tour, smooths the tour into a spline with bounded join curvature, optionally
plans joint-space trajectories for a serial arm, and emits SVG, a raster
preview, a five-instruction plotter program, and a stats report.
"""

from .imaging import (
    CMYK_COLORS,
    DensityField,
    Palette,
    RasterImage,
    box_downscale,
    cmyk_to_rgb,
    density_at,
    load_image,
    luminance,
    split_cmyk,
    split_kmeans,
)
from .stippling import (
    StippleParams,
    StippleSet,
    lbg_stipple,
    mean_neighbor_spacing,
    relax_step,
    stipple_density_raster,
    validate_stipples,
    voronoi_assign,
    voronoi_stipple,
    weighted_centroid,
)
from .tsp import (
    Tour,
    TspParams,
    build_neighbors,
    construct_tour,
    export_tsplib,
    improve_tour,
    tour_length,
    tour_to_polyline,
)
from .pathopt import (
    PathOptParams,
    Polyline,
    SplinePath,
    bezier_points,
    enforce_curvature,
    fit_spline,
    join_curvature,
    rdp_simplify,
    sample_path,
    segment_lengths,
)
from .kinematics import (
    CanvasSpec,
    GridSpec,
    Joint,
    JointTrajectory,
    KinematicChain,
    SubCanvas,
    ToolPose,
    canvas_orientation,
    chain_from_dict,
    chain_preset,
    chain_to_dict,
    drawing_to_world,
    export_reachability_csv,
    fit_canvas,
    fk,
    generic_6r,
    ik,
    jacobian,
    load_chain,
    pathwise_ik,
    planar_2r,
    plane_basis,
    project_points_2d,
    project_to_canvas,
    reachability_map,
    save_chain,
    tile_canvas,
)
from .output import (
    PlotterProgram,
    StatsReport,
    emit_plotter_program,
    emit_stats,
    emit_svg,
    parse_program,
    parse_stats,
    parse_svg,
    render_preview,
    save_png,
)
from .pipeline import (
    PipelineConfig,
    channel_seed,
    config_from_dict,
    load_config,
    run_pipeline,
    save_config,
)

__version__ = "0.1.0"
