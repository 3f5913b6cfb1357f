"""Export of the rank-dropped lifted relaxations to SDPA sparse format."""

from triflow.sdpexport.build import OBJECTIVES, build_bfm_sdp, build_bim_sdp
from triflow.sdpexport.problem import ConicProblem, LinearRow, PSDBlock
from triflow.sdpexport.sdpa import SdpaFile, index_map_json, read_sdpa, write_sdpa
from triflow.sdpexport.verify import evaluate, point_from_lifted, verify_lifted

__all__ = [
    "ConicProblem", "LinearRow", "PSDBlock", "OBJECTIVES", "build_bfm_sdp", "build_bim_sdp",
    "write_sdpa", "read_sdpa", "index_map_json", "SdpaFile", "evaluate",
    "point_from_lifted", "verify_lifted",
]
