"""JSON schemas (draft 2020-12) for every machine-readable output of the CLI."""

from __future__ import annotations

_LABELS = {"type": "array", "items": {"type": "string", "pattern": r"^[^:]+:[^-]+->[^:]+:.+$"}}

ERROR = {
    "type": "object",
    "required": ["error", "message"],
    "properties": {
        "error": {"type": "string"},
        "message": {"type": "string"},
        "line": {"type": "integer"},
        "column": {"type": "integer"},
        "expected": {"type": "string"},
        "found": {"type": "string"},
    },
}

DIAGNOSTIC = {
    "type": "object",
    "required": ["line", "column", "name", "kind", "message", "path"],
    "properties": {
        "line": {"type": "integer"},
        "column": {"type": "integer"},
        "name": {"type": "string"},
        "kind": {"type": "string"},
        "message": {"type": "string"},
        "path": {"type": "array", "items": {"type": "string"}},
    },
}

CHECK = {
    "type": "object",
    "required": ["ok", "declarations", "diagnostics"],
    "properties": {
        "ok": {"type": "boolean"},
        "declarations": {"type": "array", "items": {
            "type": "object",
            "required": ["name", "kind", "line", "column"],
            "properties": {"name": {"type": "string"},
                           "kind": {"enum": ["global", "local", "context", "process"]},
                           "line": {"type": "integer"}, "column": {"type": "integer"}},
        }},
        "diagnostics": {"type": "array", "items": DIAGNOSTIC},
    },
}

MERGE_FAILURE = {
    "type": "object",
    "required": ["reason", "path", "role", "detail"],
    "properties": {
        "reason": {"enum": ["InternalChoiceClash", "PeerMismatch", "PayloadMismatch", "LabelPayloadClash",
                            "ShapeMismatch", "BinderMismatch"]},
        "path": {"type": "array", "items": {"type": "string"}},
        "role": {"type": ["string", "null"]},
        "detail": {"type": "string"},
    },
}

PROJECT = {
    "type": "object",
    "required": ["global", "projections", "failures"],
    "properties": {
        "global": {"type": "string"},
        "projections": {"type": "object", "additionalProperties": {"type": "string"}},
        "failures": {"type": "array", "items": MERGE_FAILURE},
    },
}

SUBTYPE = {
    "type": "object",
    "required": ["left", "right", "holds"],
    "properties": {"left": {"type": "string"}, "right": {"type": "string"}, "holds": {"type": "boolean"}},
}

_EDGE = {
    "type": "object",
    "required": ["from", "label", "to"],
    "properties": {"from": {"type": "integer"}, "label": {"type": "string"}, "to": {"type": "integer"}},
}

SIMULATE = {
    "type": "object",
    "required": ["kind", "nodes", "edges"],
    "properties": {
        "kind": {"enum": ["global", "context"]},
        "nodes": {"type": "array", "items": {
            "type": "object", "required": ["id", "state"],
            "properties": {"id": {"type": "integer"}, "state": {"type": "string"},
                           "trace": _LABELS},
        }},
        "edges": {"type": "array", "items": _EDGE},
    },
}

ASSOCIATION = {
    "type": "object",
    "required": ["holds", "failure", "roles", "end_part"],
    "properties": {
        "holds": {"type": "boolean"},
        "failure": {"type": ["string", "null"]},
        "roles": {"type": "array", "items": {
            "type": "object",
            "required": ["role", "projection", "entry", "subtype", "failure"],
            "properties": {
                "role": {"type": "string"},
                "projection": {"type": ["string", "null"]},
                "entry": {"type": ["string", "null"]},
                "subtype": {"type": "boolean"},
                "failure": {"type": ["string", "null"]},
            },
        }},
        "end_part": {"type": "array", "items": {"type": "string"}},
    },
}

VERDICT = {
    "type": "object",
    "required": ["property", "holds", "witness"],
    "properties": {
        "property": {"enum": ["Safe", "DeadlockFree", "Live"]},
        "holds": {"type": "boolean"},
        "witness": {"oneOf": [
            {"type": "null"},
            {"type": "object",
             "required": ["trace", "cycle", "prefix", "pending", "detail"],
             "properties": {
                 "trace": _LABELS,
                 "cycle": {"type": "array", "items": _EDGE},
                 "prefix": _LABELS,
                 "pending": {"type": ["string", "null"]},
                 "detail": {"type": "string"},
             }},
        ]},
    },
}

PROPS = {
    "type": "object",
    "required": ["session", "states", "verdicts"],
    "properties": {
        "session": {"type": "string"},
        "states": {"type": "integer"},
        "verdicts": {"type": "array", "items": VERDICT, "minItems": 3, "maxItems": 3},
    },
}

VERIFY = {
    "type": "object",
    "required": ["holds", "context", "association", "verdicts"],
    "properties": {
        "holds": {"type": "boolean"},
        "context": {"type": "string"},
        "association": ASSOCIATION,
        "verdicts": {"type": "array", "items": VERDICT},
    },
}

DERIVATION = {
    "type": "object",
    "required": ["rule", "judgement", "side", "premises"],
    "properties": {
        "rule": {"enum": ["T-0", "T-end", "T-par", "T-⊕", "T-&", "T-def", "T-call", "T-X", "T-B",
                          "T-sub", "T-G-ν"]},
        "judgement": {"type": "string"},
        "side": {"type": "array", "items": {"type": "string"}},
        "premises": {"type": "array", "items": {"$ref": "#/$defs/derivation"}},
    },
}

TYPE_ERROR = {
    "type": "object",
    "required": ["rule", "position", "reason", "detail"],
    "properties": {
        "rule": {"type": "string"},
        "position": {"type": "array", "items": {"type": "string"}},
        "reason": {"type": "string"},
        "detail": {"type": "string"},
    },
}

TYPECHECK = {
    "$defs": {"derivation": DERIVATION},
    "type": "object",
    "required": ["holds"],
    "properties": {
        "holds": {"type": "boolean"},
        "derivation": {"$ref": "#/$defs/derivation"},
        "error": TYPE_ERROR,
    },
}

RUN = {
    "type": "object",
    "required": ["initial", "steps", "outcome"],
    "properties": {
        "initial": {"type": "string"},
        "outcome": {"enum": ["terminated", "stuck", "error", "budget-exhausted"]},
        "steps": {"type": "array", "items": {
            "type": "object",
            "required": ["index", "rule", "label", "process"],
            "properties": {"index": {"type": "integer"}, "rule": {"enum": ["R-comm", "R-err", "R-call"]},
                           "label": {"type": "string"}, "process": {"type": "string"}},
        }},
    },
}

HARNESS = {
    "type": "object",
    "required": ["harness", "holds", "report"],
    "properties": {
        "harness": {"enum": ["soundness", "completeness", "fidelity", "subject-reduction", "properties"]},
        "holds": {"type": "boolean"},
        "report": {"type": "object"},
    },
}

DIALECT = "https://json-schema.org/draft/2020-12/schema"

_SCHEMAS = {
    "error": ERROR,
    "check": CHECK,
    "project": PROJECT,
    "subtype": SUBTYPE,
    "simulate": SIMULATE,
    "assoc": ASSOCIATION,
    "props": PROPS,
    "verify": VERIFY,
    "typecheck": TYPECHECK,
    "run": RUN,
    "harness": HARNESS,
}

SCHEMAS = {name: {"$schema": DIALECT, "title": name, **schema} for name, schema in _SCHEMAS.items()}
