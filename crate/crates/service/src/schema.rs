//! Published payload schemas (JSON Schema, draft 2020-12).

use serde_json::{json, Value};

fn label_path() -> Value {
    json!({"type": "string", "description": "ASPECT, ASPECT/element or ASPECT/element/mode"})
}

fn error() -> Value {
    json!({
        "type": "object",
        "required": ["error"],
        "properties": {"error": {
            "type": "object",
            "required": ["kind", "message"],
            "properties": {"kind": {"type": "string"}, "message": {"type": "string"}}
        }}
    })
}

fn record() -> Value {
    json!({
        "type": "object",
        "required": ["instance_id", "annotator_id", "path", "value", "timestamp", "origin"],
        "properties": {
            "instance_id": {"type": "string"},
            "annotator_id": {"type": "string"},
            "path": label_path(),
            "value": {"type": "string"},
            "timestamp": {"type": "string", "format": "date-time"},
            "origin": {"enum": ["human", "external_model"]}
        }
    })
}

fn endpoint(method: &str, path: &str, request: Value, responses: Value) -> Value {
    json!({"method": method, "path": path, "request": request, "responses": responses})
}

pub(crate) fn document() -> Value {
    let annotator = json!({"header": "X-Annotator", "required": true});
    json!({
        "version": "1",
        "definitions": {
            "Error": error(),
            "AnnotationRecord": record(),
            "AnnotationTask": {
                "type": "object",
                "required": ["instance_id", "text", "requested_paths", "annotator", "status"],
                "properties": {
                    "instance_id": {"type": "string"},
                    "text": {"type": "string"},
                    "requested_paths": {"type": "array", "items": label_path()},
                    "annotator": {"type": "string"},
                    "status": {"enum": ["pending", "done", "skipped"]}
                }
            },
            "AgreementReport": {
                "type": "object",
                "required": ["path", "annotators", "matrix", "pairs", "mean_kappa", "instances"],
                "properties": {
                    "path": label_path(),
                    "annotators": {"type": "array", "items": {"type": "string"}},
                    "matrix": {"type": "array", "items": {"type": "array", "items": {"type": ["number", "null"]}}},
                    "pairs": {"type": "array", "items": {
                        "type": "object",
                        "required": ["first", "second", "items", "status"],
                        "properties": {
                            "first": {"type": "string"},
                            "second": {"type": "string"},
                            "items": {"type": "integer"},
                            "status": {"enum": ["ok", "insufficient_overlap", "undefined"]},
                            "kappa": {"type": "number"},
                            "observed": {"type": "number"},
                            "chance": {"type": "number"}
                        }
                    }},
                    "mean_kappa": {"type": ["number", "null"]},
                    "instances": {"type": "integer"}
                }
            },
            "Disagreement": {
                "type": "object",
                "required": ["instance_id", "path", "labels", "version", "text"],
                "properties": {
                    "instance_id": {"type": "string"},
                    "path": label_path(),
                    "labels": {"type": "object", "additionalProperties": {"type": "string"}},
                    "version": {"type": "string"},
                    "text": {"type": "string"}
                }
            },
            "UnitPrediction": {
                "type": "object",
                "required": ["unit_id", "index", "text", "predictions"],
                "properties": {
                    "unit_id": {"type": "string"},
                    "index": {"type": "integer"},
                    "text": {"type": "string"},
                    "predictions": {"type": "array", "items": {
                        "type": "object",
                        "required": ["instance_id", "label_path", "value", "score", "expert", "explanation"],
                        "properties": {
                            "instance_id": {"type": "string"},
                            "label_path": label_path(),
                            "value": {"enum": ["present", "absent"]},
                            "score": {"type": "number"},
                            "evidence": {"type": "array"},
                            "expert": {"type": "object"},
                            "explanation": {"type": ["object", "null"], "properties": {
                                "kind": {"enum": ["neighbors", "attributions"]}
                            }}
                        }
                    }}
                }
            }
        },
        "endpoints": [
            endpoint("GET", "/ontology", Value::Null, json!({"200": "Ontology"})),
            endpoint("GET", "/schema", Value::Null, json!({"200": "this document"})),
            endpoint("GET", "/tasks/next",
                json!({"query": {"annotator": "string, or the X-Annotator header", "paths": "comma-separated label paths"}}),
                json!({"200": {"task": "AnnotationTask or null"}, "400": "Error"})),
            endpoint("POST", "/tasks/skip",
                json!({"headers": annotator, "body": {"type": "object", "required": ["instance_id"],
                    "properties": {"instance_id": {"type": "string"}}}}),
                json!({"201": "SkipRecord", "400": "Error", "404": "Error"})),
            endpoint("POST", "/annotations",
                json!({"headers": annotator, "body": {"type": "object", "required": ["instance_id", "path", "value"],
                    "properties": {"instance_id": {"type": "string"}, "path": label_path(), "value": {"type": "string"}}}}),
                json!({"201": "AnnotationRecord", "400": "Error", "404": "Error"})),
            endpoint("GET", "/agreement", json!({"query": {"path": "label path"}}),
                json!({"200": "AgreementReport", "400": "Error"})),
            endpoint("GET", "/disagreements", json!({"query": {"path": "label path"}}),
                json!({"200": "array of Disagreement", "400": "Error"})),
            endpoint("POST", "/adjudications",
                json!({"headers": annotator, "body": {"type": "object", "required": ["instance_id", "path", "value", "version"],
                    "properties": {"instance_id": {"type": "string"}, "path": label_path(), "value": {"type": "string"},
                        "version": {"type": "string"}}}}),
                json!({"201": "AdjudicationDecision", "400": "Error", "404": "Error",
                    "409": {"error": "Error.error", "current_version": "string"}})),
            endpoint("POST", "/predict",
                json!({"body": {"type": "object", "required": ["text"], "properties": {
                    "text": {"type": "string"},
                    "paths": {"type": "array", "items": label_path()},
                    "level": {"enum": ["sentence", "paragraph", "document"]},
                    "instance_id": {"type": "string"}}}}),
                json!({"200": {"units": "array of UnitPrediction"}, "400": "Error", "404": "Error"})),
            endpoint("GET", "/reports/{id}", Value::Null, json!({"200": "stored report JSON", "404": "Error"}))
        ]
    })
}
