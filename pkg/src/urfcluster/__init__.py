"""Unsupervised random-forest clustering workbench for traffic scenarios."""

from .dataset import (
    FeatureMatrix,
    FeatureSchema,
    RoadContext,
    SceneryTemplate,
    default_templates,
    extract_features,
    generate_synthetic,
    load_csv,
    save_csv,
    scenario_schema,
)
from .forest import (
    ClusterForest,
    ForestConfig,
    SplitChoice,
    Tree,
    apply,
    apply_batch,
    best_split,
    gini_impurity,
    grow_tree,
    noise_density,
    train_forest,
    virtual_child_counts,
)
from .kinematics import (
    ScenarioWindow,
    VehicleState,
    collision_predicted,
    criticality_index,
    polygons_overlap,
    predict_pose,
    prefilter,
    rectangle_distance,
)
from .proximity import ProximityMatrix, build_proximity, subset, to_dissimilarity
from .render import PARULA_LIKE, Colormap, RegionBox, RenderSpec, render_matrix, render_strips
from .seriation import (
    Dendrogram,
    LeafOrder,
    flat_clusters,
    hc_order,
    linkage,
    olo_order,
    order_cost,
    permute_matrix,
)

__version__ = "0.1.0"
