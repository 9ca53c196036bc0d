"""gridhopping: turn signed-distance-bound shapes into triangle meshes.

Three interchangeable extraction strategies over the unit-cube grid:
exhaustive enumeration, surface continuation from seeds, and gridhopping
(sphere tracing one ray per grid column).  All three produce exactly the
same canonical mesh on valid distance bounds, which the bundled benchmark
harness verifies while measuring how their work scales with resolution.
"""

from .geometry import (CellIndex, GridSpec, Mesh, Ray, TraceStats, Triangle, Vec3,
                       canonicalize, cell_centroid, cell_hit_threshold,
                       cell_of_point, ray_origin)
from .fields import (Field, LipschitzNormalized, PlaneField, box, box_distance,
                     box_exact, capsule, cone, cylinder, estimate_lipschitz,
                     genus2, hex_prism, intersection, knot_tube, plane_distance,
                     scale_uniform, shrink, sierpinski_tetra, sphere, torus,
                     translate, union)
from .marching_cubes import CellCorners, polygonize_cell, surface_crosses_cell
from .polygonize import (MarchBudgetError, MarchRecorder, PolygonizeConfig,
                         PolygonizeResult, continuation, enumerate_all, gridhop)
from .scene import ParseError, SceneAst, build_field, parse_scene, pretty
from .neural import (FitConfig, NeuralField, NnWeights, WeightFormatError, fit,
                     load_weights, nn_evaluate, save_weights,
                     spectral_lipschitz_bound)
from .bench import BenchRecord, ExponentFit, fit_exponent, run_series, write_csv

__version__ = "0.1.0"
