"""Multiple-bounce Smith microfacet BSDFs, evaluated in direction space.

The package factors multi-bounce scattering into per-vertex reflection
terms and per-segment occlusion terms over position-free light paths,
and solves the resulting integral with unbiased path-traced and
bidirectional estimators backed by full-spherical visible-normal
sampling.
"""

from .estimators import (
    BsdfQuery,
    Diagnostics,
    SampleRecord,
    eval_bdpt,
    eval_pt,
    eval_single_bounce,
    pdf_proxy,
    sample,
)
from .fresnel import ConductorIor, DielectricIor, fresnel_conductor, fresnel_dielectric
from .geometry import half_vector, reflect, refract
from .image import ImageBuffer, mse, read_pfm, write_pfm
from .materials import MaterialSpec, conductor, dielectric, metal
from .microfacet import (
    RoughnessProfile,
    beckmann,
    g1,
    g1_dist,
    g1_local,
    ggx,
    ndf_D,
    pdf_vndf,
    sample_vndf,
    smith_lambda,
)
from .paths import (
    EvalConventions,
    LightPath,
    path_contribution,
    path_pdf_forward,
    reverse,
)
from .render import Camera, Light, RunConfig, SceneSpec, lobe_tabulate, render
from .rng import RandomStream
from .scene import load_scene, parse_scene_text

__version__ = "0.1.0"
