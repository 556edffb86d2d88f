"""Model zoo: encoders, graph layers, and the five architectures."""
from .encoders import (FLAT, GRID, NODE, EncodedInput, Encoder, encode_cnn, encode_fcnn, encode_gnn)
from .graph import (GraphContext, bspline_basis, cheb_layer, chebyshev_basis, gcn_layer, gcn_matrix,
                    spline_layer, spline_operators)
from .spec import ARCHITECTURES, CLASSIFICATION, GNNS, REGRESSION, ModelSpec, SpecError
from .zoo import LAYOUT, Model, build_model, parameter_count, parity_specs, regression_dim

__all__ = [
    "FLAT", "GRID", "NODE", "EncodedInput", "Encoder", "encode_fcnn", "encode_cnn", "encode_gnn",
    "GraphContext", "bspline_basis", "cheb_layer", "chebyshev_basis", "gcn_layer", "gcn_matrix",
    "spline_layer", "spline_operators", "ARCHITECTURES", "GNNS", "REGRESSION", "CLASSIFICATION",
    "ModelSpec", "SpecError", "LAYOUT", "Model", "build_model", "parameter_count", "parity_specs",
    "regression_dim",
]
