//! `editspec.json` parsing, validation and canonical serialization.
//!
//! ```json
//! {"ops": [{"kind": "rigid",
//!           "selection": {"object_id": 1},
//!           "keyframes": [{"frame": 0, "scale": 1.0, "quat": [1.0, 0.0, 0.0, 0.0], "t": [0.0, 0.0, 0.0]}],
//!           "params": {}}]}
//! ```
//!
//! Quaternions are `[w, x, y, z]`. The canonical form fills every default,
//! keeps the op fields in the order above and sorts the keys of every nested
//! object, so two specs describing the
//! same edit serialize to the same bytes and hash to the same digest.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::keyframes::Keyframes;
use super::ops::{CameraEdit, CameraEditMode, IntrinsicsOverride};
use super::EditError;
use crate::geometry::SimilarityTransform;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSelection {
    pub frame: usize,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Object(u32),
    Box(BoxSelection),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditOp {
    Rigid {
        selection: Selection,
        keyframes: Keyframes,
        pivot: Option<Vector3<f64>>,
    },
    Lbs {
        handles: Vec<(Selection, Keyframes)>,
        radius: Option<f64>,
    },
    Camera(CameraEdit),
    Remove {
        object_id: u32,
    },
    Duplicate {
        object_id: u32,
        keyframes: Keyframes,
    },
    Transfer {
        object_id: u32,
        /// `F × M` replacement positions, frame-major.
        positions: Vec<Vec<[f64; 3]>>,
    },
    Drop {
        selection: Selection,
    },
    FreezeBackground {
        anchor_frame: usize,
    },
}

impl EditOp {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Rigid { .. } => "rigid",
            Self::Lbs { .. } => "lbs",
            Self::Camera(_) => "camera",
            Self::Remove { .. } => "remove",
            Self::Duplicate { .. } => "duplicate",
            Self::Transfer { .. } => "transfer",
            Self::Drop { .. } => "drop",
            Self::FreezeBackground { .. } => "freeze_background",
        }
    }
}

/// Validated, ordered list of edit operations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EditSpec {
    pub ops: Vec<EditOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    ops: Vec<OpDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selection: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keyframes: Option<Value>,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeDoc {
    frame: usize,
    #[serde(default = "unit_scale")]
    scale: f64,
    #[serde(default = "identity_quat")]
    quat: [f64; 4],
    #[serde(default)]
    t: [f64; 3],
}

fn unit_scale() -> f64 {
    1.0
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    frame: usize,
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_id: Option<u32>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<BoxDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
}

fn from_value<T: for<'de> Deserialize<'de>>(value: &Value, path: &str) -> Result<T, EditError> {
    serde_json::from_value(value.clone()).map_err(|e| EditError::schema(path, e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn parse_selection(value: Option<&Value>, path: &str) -> Result<Selection, EditError> {
    let value = value.ok_or_else(|| EditError::schema(path, "selection is required"))?;
    let doc: SelectionDoc = from_value(value, path)?;
    match (doc.object_id, doc.bbox, doc.indices) {
        (Some(id), None, None) => Ok(Selection::Object(id)),
        (None, Some(b), None) => {
            let finite = b.min.iter().chain(b.max.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(EditError::schema(format!("{path}.box"), "box corners must be finite"));
            }
            Ok(Selection::Box(BoxSelection {
                frame: b.frame,
                min: b.min,
                max: b.max,
            }))
        }
        (None, None, Some(mut idx)) => {
            idx.sort_unstable();
            idx.dedup();
            Ok(Selection::Indices(idx))
        }
        _ => Err(EditError::schema(path, "exactly one of object_id, box, indices is required")),
    }
}

fn selection_doc(sel: &Selection) -> SelectionDoc {
    let mut doc = SelectionDoc {
        object_id: None,
        bbox: None,
        indices: None,
    };
    match sel {
        Selection::Object(id) => doc.object_id = Some(*id),
        Selection::Box(b) => {
            doc.bbox = Some(BoxDoc {
                frame: b.frame,
                min: b.min,
                max: b.max,
            })
        }
        Selection::Indices(i) => doc.indices = Some(i.clone()),
    }
    doc
}

fn parse_keyframes(value: Option<&Value>, path: &str) -> Result<Keyframes, EditError> {
    let value = value.ok_or_else(|| EditError::schema(path, "keyframes are required"))?;
    let docs: Vec<KeyframeDoc> = from_value(value, path)?;
    let mut keys = Vec::with_capacity(docs.len());
    for (i, k) in docs.iter().enumerate() {
        let t = SimilarityTransform::from_parts(k.scale, k.quat, k.t).map_err(|e| EditError::schema(format!("{path}[{i}]"), e.to_string()))?;
        keys.push((k.frame, t));
    }
    Keyframes::new(keys).map_err(|e| match e {
        EditError::Schema { path: p, message } => EditError::schema(format!("{path}{}", p.trim_start_matches("keyframes")), message),
        other => other,
    })
}

fn keyframes_value(k: &Keyframes) -> Value {
    let docs: Vec<KeyframeDoc> = k
        .keys()
        .iter()
        .map(|(frame, t)| KeyframeDoc {
            frame: *frame,
            scale: t.scale,
            quat: t.quat_wxyz(),
            t: [t.translation.x, t.translation.y, t.translation.z],
        })
        .collect();
    to_value(&docs)
}

fn object_selection(value: Option<&Value>, path: &str) -> Result<u32, EditError> {
    match parse_selection(value, path)? {
        Selection::Object(id) => Ok(id),
        _ => Err(EditError::schema(path, "this operation selects by object_id")),
    }
}

/// Rejects parameter keys the operation does not understand.
fn check_params(params: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), EditError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(EditError::schema(format!("{path}.params.{k}"), "unknown parameter")),
        None => Ok(()),
    }
}

fn forbid(present: bool, path: String, what: &str) -> Result<(), EditError> {
    if present {
        Err(EditError::schema(path, format!("{what} is not used by this operation")))
    } else {
        Ok(())
    }
}

fn parse_op(doc: &OpDoc, path: &str) -> Result<EditOp, EditError> {
    let sel_path = format!("{path}.selection");
    let key_path = format!("{path}.keyframes");
    let params = &doc.params;
    let param = |name: &str| params.get(name);
    let op = match doc.kind.as_str() {
        "rigid" => {
            check_params(params, &["pivot"], path)?;
            let pivot = param("pivot").map(|v| from_value::<[f64; 3]>(v, &format!("{path}.params.pivot"))).transpose()?;
            EditOp::Rigid {
                selection: parse_selection(doc.selection.as_ref(), &sel_path)?,
                keyframes: parse_keyframes(doc.keyframes.as_ref(), &key_path)?,
                pivot: pivot.map(Vector3::from),
            }
        }
        "lbs" => {
            check_params(params, &["handles", "radius"], path)?;
            forbid(doc.selection.is_some(), sel_path, "selection")?;
            forbid(doc.keyframes.is_some(), key_path, "keyframes")?;
            let hpath = format!("{path}.params.handles");
            let handles: Vec<Map<String, Value>> = from_value(param("handles").ok_or_else(|| EditError::schema(&hpath, "handles are required"))?, &hpath)?;
            if handles.is_empty() {
                return Err(EditError::schema(hpath, "at least one handle is required"));
            }
            let mut parsed = Vec::with_capacity(handles.len());
            for (i, h) in handles.iter().enumerate() {
                let hp = format!("{hpath}[{i}]");
                check_params(h, &["selection", "keyframes"], &hp)?;
                parsed.push((
                    parse_selection(h.get("selection"), &format!("{hp}.selection"))?,
                    parse_keyframes(h.get("keyframes"), &format!("{hp}.keyframes"))?,
                ));
            }
            let radius = param("radius").map(|v| from_value::<f64>(v, &format!("{path}.params.radius"))).transpose()?;
            if let Some(r) = radius {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(EditError::schema(format!("{path}.params.radius"), "radius must be positive"));
                }
            }
            EditOp::Lbs { handles: parsed, radius }
        }
        "camera" => {
            check_params(params, &["mode", "intrinsics"], path)?;
            forbid(doc.selection.is_some(), sel_path, "selection")?;
            let mode = match param("mode").map(|v| from_value::<String>(v, &format!("{path}.params.mode"))).transpose()?.as_deref() {
                None | Some("relative") => CameraEditMode::Relative,
                Some("absolute") => CameraEditMode::Absolute,
                Some(other) => return Err(EditError::schema(format!("{path}.params.mode"), format!("unknown mode `{other}`"))),
            };
            let intrinsics = param("intrinsics")
                .map(|v| from_value::<IntrinsicsDoc>(v, &format!("{path}.params.intrinsics")))
                .transpose()?
                .map(|d| IntrinsicsOverride {
                    fx: d.fx,
                    fy: d.fy,
                    cx: d.cx,
                    cy: d.cy,
                });
            let keyframes = parse_keyframes(doc.keyframes.as_ref(), &key_path)?;
            if let Some(i) = keyframes.keys().iter().position(|(_, t)| t.scale != 1.0) {
                return Err(EditError::schema(format!("{key_path}[{i}].scale"), "camera keyframes must have scale 1"));
            }
            EditOp::Camera(CameraEdit { mode, keyframes, intrinsics })
        }
        "remove" => {
            check_params(params, &[], path)?;
            forbid(doc.keyframes.is_some(), key_path, "keyframes")?;
            EditOp::Remove {
                object_id: object_selection(doc.selection.as_ref(), &sel_path)?,
            }
        }
        "duplicate" => {
            check_params(params, &[], path)?;
            EditOp::Duplicate {
                object_id: object_selection(doc.selection.as_ref(), &sel_path)?,
                keyframes: parse_keyframes(doc.keyframes.as_ref(), &key_path)?,
            }
        }
        "transfer" => {
            check_params(params, &["positions"], path)?;
            forbid(doc.keyframes.is_some(), key_path, "keyframes")?;
            let ppath = format!("{path}.params.positions");
            let positions: Vec<Vec<[f64; 3]>> = from_value(param("positions").ok_or_else(|| EditError::schema(&ppath, "positions are required"))?, &ppath)?;
            if positions.iter().flatten().flatten().any(|v| !v.is_finite()) {
                return Err(EditError::schema(ppath, "positions must be finite"));
            }
            EditOp::Transfer {
                object_id: object_selection(doc.selection.as_ref(), &sel_path)?,
                positions,
            }
        }
        "drop" => {
            check_params(params, &[], path)?;
            forbid(doc.keyframes.is_some(), key_path, "keyframes")?;
            EditOp::Drop {
                selection: parse_selection(doc.selection.as_ref(), &sel_path)?,
            }
        }
        "freeze_background" => {
            check_params(params, &["anchor_frame"], path)?;
            forbid(doc.selection.is_some(), sel_path, "selection")?;
            forbid(doc.keyframes.is_some(), key_path, "keyframes")?;
            let anchor_frame = param("anchor_frame").map(|v| from_value::<usize>(v, &format!("{path}.params.anchor_frame"))).transpose()?.unwrap_or(0);
            EditOp::FreezeBackground { anchor_frame }
        }
        other => return Err(EditError::schema(format!("{path}.kind"), format!("unknown kind `{other}`"))),
    };
    Ok(op)
}

fn op_doc(op: &EditOp) -> OpDoc {
    let mut doc = OpDoc {
        kind: op.kind().to_string(),
        selection: None,
        keyframes: None,
        params: Map::new(),
    };
    match op {
        EditOp::Rigid { selection, keyframes, pivot } => {
            doc.selection = Some(to_value(&selection_doc(selection)));
            doc.keyframes = Some(keyframes_value(keyframes));
            if let Some(p) = pivot {
                doc.params.insert("pivot".into(), to_value(&[p.x, p.y, p.z]));
            }
        }
        EditOp::Lbs { handles, radius } => {
            let hs: Vec<Value> = handles
                .iter()
                .map(|(s, k)| {
                    let mut m = Map::new();
                    m.insert("keyframes".into(), keyframes_value(k));
                    m.insert("selection".into(), to_value(&selection_doc(s)));
                    Value::Object(m)
                })
                .collect();
            doc.params.insert("handles".into(), Value::Array(hs));
            if let Some(r) = radius {
                doc.params.insert("radius".into(), to_value(r));
            }
        }
        EditOp::Camera(c) => {
            doc.keyframes = Some(keyframes_value(&c.keyframes));
            let mode = match c.mode {
                CameraEditMode::Relative => "relative",
                CameraEditMode::Absolute => "absolute",
            };
            doc.params.insert("mode".into(), Value::String(mode.into()));
            if let Some(i) = &c.intrinsics {
                let d = IntrinsicsDoc {
                    fx: i.fx,
                    fy: i.fy,
                    cx: i.cx,
                    cy: i.cy,
                };
                doc.params.insert("intrinsics".into(), to_value(&d));
            }
        }
        EditOp::Remove { object_id } => doc.selection = Some(to_value(&selection_doc(&Selection::Object(*object_id)))),
        EditOp::Duplicate { object_id, keyframes } => {
            doc.selection = Some(to_value(&selection_doc(&Selection::Object(*object_id))));
            doc.keyframes = Some(keyframes_value(keyframes));
        }
        EditOp::Transfer { object_id, positions } => {
            doc.selection = Some(to_value(&selection_doc(&Selection::Object(*object_id))));
            doc.params.insert("positions".into(), to_value(positions));
        }
        EditOp::Drop { selection } => doc.selection = Some(to_value(&selection_doc(selection))),
        EditOp::FreezeBackground { anchor_frame } => {
            doc.params.insert("anchor_frame".into(), to_value(anchor_frame));
        }
    }
    doc
}

impl EditSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EditError> {
        let raw: Value = serde_json::from_slice(bytes).map_err(|e| EditError::schema("<root>", e.to_string()))?;
        let doc: SpecDoc = from_value(&raw, "<root>")?;
        let ops = doc.ops.iter().enumerate().map(|(i, op)| parse_op(op, &format!("ops[{i}]"))).collect::<Result<_, _>>()?;
        Ok(Self { ops })
    }

    /// Canonical bytes: compact JSON with sorted parameter keys and a trailing newline.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let doc = SpecDoc {
            ops: self.ops.iter().map(op_doc).collect(),
        };
        let mut bytes = serde_json::to_vec(&doc).expect("serializable");
        bytes.push(b'\n');
        bytes
    }

    /// SHA-256 of the canonical bytes, lowercase hex.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json()))
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Canonicalizes raw editspec bytes.
pub fn canonicalize(bytes: &[u8]) -> Result<Vec<u8>, EditError> {
    Ok(EditSpec::from_json(bytes)?.to_canonical_json())
}
