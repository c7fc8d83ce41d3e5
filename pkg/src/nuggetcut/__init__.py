"""Interactive radial graph-cut segmentation for scalar volumes."""

from .errors import NuggetCutError
from .evalstat import CaseRow, EvalReport, SummaryRow, build_report, dice, \
    mann_whitney_u, summarize, wilcoxon_signed_rank
from .flowgraph import CutIndices, CutResult, FlowGraph, INF_CAP, \
    build_graph, extract_cut, max_flow
from .geometry import Polyhedron, RayLattice, build_lattice, icosahedron, \
    ray_adjacency, ray_template, refine_polyhedron
from .phantom import NeedleSpec, PhantomSpec, make_phantom
from .segmenter import Segmentation, SegmentationParams, Session, \
    add_border_seed, clear_border_seeds, drag_seed, node_costs, segment, \
    terminal_weights, voxelize
from .volume import BinaryMask, RegionStats, Volume, load_mask, load_volume, \
    region_stats, sample_trilinear, save_mask, save_volume

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "CaseRow", "CutIndices", "CutResult", "EvalReport",
    "FlowGraph", "INF_CAP", "NeedleSpec", "NuggetCutError", "PhantomSpec",
    "Polyhedron", "RayLattice", "RegionStats", "Segmentation",
    "SegmentationParams", "Session", "SummaryRow", "Volume",
    "add_border_seed", "build_graph", "build_lattice", "build_report",
    "clear_border_seeds", "dice", "drag_seed", "extract_cut", "icosahedron",
    "load_mask", "load_volume", "make_phantom", "mann_whitney_u", "max_flow",
    "node_costs", "ray_adjacency", "ray_template", "refine_polyhedron",
    "region_stats", "sample_trilinear", "save_mask", "save_volume",
    "segment", "summarize", "terminal_weights", "voxelize",
    "wilcoxon_signed_rank",
]
