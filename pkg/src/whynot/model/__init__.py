"""Nested types, values with multiplicities, placeholder patterns and the
matching relation."""

from whynot.model.distance import result_distance
from whynot.model.patterns import (
    ANY,
    STAR,
    NipBag,
    NipTuple,
    is_concrete,
    matches_nip,
    nip_from_json,
    nip_to_json,
    pattern_conforms,
)
from whynot.model.types import (
    BOOL,
    BOTTOM,
    BagType,
    BottomType,
    DATE,
    INT,
    NestedType,
    PrimitiveType,
    STRING,
    TupleType,
    compatible,
    same_type,
    type_from_json,
    type_to_json,
    unify,
)
from whynot.model.values import (
    Bag,
    Tup,
    conforms,
    null_tuple,
    sort_key,
    type_of,
    value_from_json,
    value_to_json,
)

__all__ = [
    "ANY", "STAR", "NipBag", "NipTuple", "is_concrete", "matches_nip",
    "nip_from_json", "nip_to_json", "pattern_conforms",
    "BOOL", "BOTTOM", "BagType", "BottomType", "DATE", "INT", "NestedType",
    "PrimitiveType", "STRING", "TupleType", "compatible", "same_type",
    "type_from_json", "type_to_json", "unify",
    "Bag", "Tup", "conforms", "null_tuple", "sort_key", "type_of",
    "value_from_json", "value_to_json",
    "result_distance",
]
