from app.contact.io import load_contact, load_contact_json, save_contact
from app.contact.maps import (
    FINGERTIPS,
    HUMAN_PART_COUNT,
    NO_PART,
    ContactMap,
    HumanContact,
    HumanPart,
    RobotContact,
    compute_contact_map,
    compute_part_map,
    contact_from_hand,
    one_hot_rows,
)
from app.contact.providers import (
    ContactProvider,
    FileLoader,
    HeuristicGenerator,
    generate_contact,
    make_provider,
)

__all__ = [
    "FINGERTIPS",
    "HUMAN_PART_COUNT",
    "NO_PART",
    "ContactMap",
    "ContactProvider",
    "FileLoader",
    "HeuristicGenerator",
    "HumanContact",
    "HumanPart",
    "RobotContact",
    "compute_contact_map",
    "compute_part_map",
    "contact_from_hand",
    "generate_contact",
    "load_contact",
    "load_contact_json",
    "make_provider",
    "one_hot_rows",
    "save_contact",
]
