from typing import Any, Dict, List

TOPOLOGY_SPEC_SCHEMA = {
    "type": "object",
    "required": ["nodes", "links", "cloud"],
    "properties": {
        "name": {"type": "string"},
        "nodes": {
            "type": "array",
            "description": "Non-cloud nodes with location and server pool",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "lat", "lon", "servers", "server_capacity"],
                "properties": {
                    "id": {"type": "string"},
                    "lat": {"type": "number", "minimum": -90, "maximum": 90},
                    "lon": {"type": "number", "minimum": -180, "maximum": 180},
                    "servers": {"type": "integer", "minimum": 1},
                    "server_capacity": {"type": "number", "exclusiveMinimum": 0}
                }
            }
        },
        "links": {
            "type": "array",
            "description": "Directed links; delay is always derived from coordinates",
            "items": {
                "type": "object",
                "required": ["src", "dst", "capacity"],
                "properties": {
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "capacity": {"type": "number", "exclusiveMinimum": 0}
                }
            }
        },
        "cloud": {
            "type": "object",
            "required": ["lat", "lon", "servers"],
            "properties": {
                "id": {"type": "string"},
                "lat": {"type": "number"},
                "lon": {"type": "number"},
                "servers": {"type": "integer", "minimum": 1}
            }
        }
    }
}

DEMAND_DATASET_SCHEMA = {
    "type": "object",
    "required": ["seed", "periods", "params", "sfcs"],
    "properties": {
        "seed": {"type": "integer"},
        "periods": {"type": "integer", "minimum": 1},
        "params": {"type": "object", "description": "Traffic parameter template"},
        "sfcs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "src", "dst", "flows"],
                "properties": {
                    "id": {"type": "string"},
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "flows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["id", "base", "params", "values"],
                            "properties": {
                                "id": {"type": "string"},
                                "base": {"type": "number"},
                                "params": {"type": "object"},
                                "values": {"type": "array", "items": {"type": "number"}}
                            }
                        }
                    }
                }
            }
        }
    }
}

SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["demand_path", "vnf_servers", "demand_vnf_server", "sync_paths"],
    "properties": {
        "demand_path": {
            "type": "array",
            "items": {"type": "object", "required": ["sfc", "demand", "path"]}
        },
        "vnf_servers": {
            "type": "array",
            "items": {"type": "object", "required": ["sfc", "vnf", "servers"]}
        },
        "demand_vnf_server": {
            "type": "array",
            "items": {"type": "object", "required": ["sfc", "vnf", "demand", "server"]}
        },
        "sync_paths": {
            "type": "array",
            "items": {"type": "object", "required": ["sfc", "vnf", "paths"]}
        }
    }
}

MODEL_STORE_SCHEMA = {
    "type": "object",
    "required": ["config", "models"],
    "properties": {
        "config": {"type": "object"},
        "models": {
            "type": "object",
            "description": "Trained forecaster per flow id",
            "additionalProperties": {
                "type": "object",
                "required": ["weights", "norm_min", "norm_max", "readout"]
            }
        }
    }
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "required": [],
    "properties": {
        "topology": {"type": "string"},
        "dataset": {"type": "string"},
        "model_store": {"type": "string"},
        "out": {"type": "string"},
        "seed": {"type": "integer"},
        "solver": {"type": "string", "enum": ["exact", "greedy", "ff", "rf"]},
        "scenario": {"type": "string", "enum": ["obsv", "over", "pred"]},
        "jobs": {"type": "integer", "minimum": 1}
    }
}


def missing_fields(document: Any, schema: Dict[str, Any], path: str = '$') -> List[str]:
    """
    List required fields absent from a document.

    Walks ``required``/``properties``/``items`` of the schema; types and ranges
    are checked by the loaders that build the domain objects.

    Args:
        document: Parsed JSON document
        schema: One of the schemas in this module
        path: Location prefix used in the returned entries

    Returns:
        List[str]: JSON-path-like locations of the missing fields
    """
    missing = []
    expected = schema.get('type')
    if expected == 'object':
        if not isinstance(document, dict):
            return [f"{path} (expected object)"]
        for key in schema.get('required', []):
            if key not in document:
                missing.append(f"{path}.{key}")
        for key, sub_schema in schema.get('properties', {}).items():
            if key in document:
                missing.extend(missing_fields(document[key], sub_schema, f"{path}.{key}"))
        extra_schema = schema.get('additionalProperties')
        if isinstance(extra_schema, dict):
            for key, value in document.items():
                if key not in schema.get('properties', {}):
                    missing.extend(missing_fields(value, extra_schema, f"{path}.{key}"))
    elif expected == 'array':
        if not isinstance(document, list):
            return [f"{path} (expected array)"]
        item_schema = schema.get('items')
        if isinstance(item_schema, dict):
            for i, item in enumerate(document):
                missing.extend(missing_fields(item, item_schema, f"{path}[{i}]"))
    return missing
