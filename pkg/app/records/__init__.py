from app.records.exporter import export_heatmap, export_scene, hand_mesh, heat_colors
from app.records.store import RecordStore, read_manifest, write_manifest, write_metrics

__all__ = [
    "RecordStore",
    "export_heatmap",
    "export_scene",
    "hand_mesh",
    "heat_colors",
    "read_manifest",
    "write_manifest",
    "write_metrics",
]
