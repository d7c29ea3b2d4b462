from app.evaluate.metrics import (
    configuration_vectors,
    diversity,
    mean_rotation,
    translation_diversity,
)
from app.evaluate.stability import (
    DIRECTIONS,
    ContactPointSet,
    contacts_from_cloud,
    cone_edges,
    extract_contacts,
    grasp_matrix,
    max_penetration,
    merge_duplicates,
    preclose,
    resists_wrench,
    success_test,
)

__all__ = [
    "DIRECTIONS",
    "ContactPointSet",
    "cone_edges",
    "configuration_vectors",
    "contacts_from_cloud",
    "diversity",
    "extract_contacts",
    "grasp_matrix",
    "max_penetration",
    "mean_rotation",
    "merge_duplicates",
    "preclose",
    "resists_wrench",
    "success_test",
    "translation_diversity",
]
