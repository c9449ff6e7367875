use std::path::Path;

use serde_json::{json, Map, Value};

use super::{bin_aes, Category, Group, GroupLabel, ImageLabelSet, LabelError, Result, Variable};
use crate::report::write_atomic;

pub const SCHEMA_VERSION: u64 = 1;

/// Label file document. Object keys come out sorted because `serde_json::Map`
/// is ordered; images are sorted by id.
pub fn labels_to_json(labelsets: &[ImageLabelSet]) -> Value {
    let mut sorted: Vec<&ImageLabelSet> = labelsets.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let images: Vec<Value> = sorted
        .into_iter()
        .map(|set| {
            let mut vars = Map::new();
            for v in Variable::ALL {
                let mut groups = Map::new();
                for g in Group::ALL {
                    if let Some(l) = set.label(v, g) {
                        groups.insert(
                            g.key().into(),
                            json!({"aes": l.aes, "category": l.category.key(), "n": l.n_raters}),
                        );
                    }
                }
                vars.insert(v.key().into(), Value::Object(groups));
            }
            json!({"image_id": set.image_id, "variables": vars})
        })
        .collect();
    json!({"schema_version": SCHEMA_VERSION, "images": images})
}

pub fn export_labels(labelsets: &[ImageLabelSet], path: impl AsRef<Path>) -> Result<()> {
    if labelsets.is_empty() {
        return Err(LabelError::EmptyExport);
    }
    let mut text = serde_json::to_string_pretty(&labels_to_json(labelsets))?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())?;
    Ok(())
}

pub fn import_labels(path: impl AsRef<Path>) -> Result<Vec<ImageLabelSet>> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)?;
    parse_document(&doc)
}

fn fmt_err(msg: impl Into<String>) -> LabelError {
    LabelError::Format(msg.into())
}

fn parse_document(doc: &Value) -> Result<Vec<ImageLabelSet>> {
    let version = doc
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| fmt_err("missing schema_version"))?;
    if version != SCHEMA_VERSION {
        return Err(fmt_err(format!("unsupported schema_version {version}")));
    }
    let images = doc
        .get("images")
        .and_then(Value::as_array)
        .ok_or_else(|| fmt_err("missing images array"))?;

    let mut out = Vec::with_capacity(images.len());
    for img in images {
        let id = img
            .get("image_id")
            .and_then(Value::as_str)
            .ok_or_else(|| fmt_err("image without image_id"))?;
        let mut set = ImageLabelSet::new(id);
        let vars = img
            .get("variables")
            .and_then(Value::as_object)
            .ok_or_else(|| fmt_err(format!("{id}: missing variables")))?;
        for (vkey, groups) in vars {
            let v: Variable = vkey.parse().map_err(fmt_err)?;
            let groups = groups
                .as_object()
                .ok_or_else(|| fmt_err(format!("{id}.{vkey}: expected object")))?;
            for (gkey, label) in groups {
                let g = Group::ALL
                    .into_iter()
                    .find(|g| g.key() == gkey)
                    .ok_or_else(|| fmt_err(format!("{id}.{vkey}: unknown group `{gkey}`")))?;
                *set.variable_mut(v).get_mut(g) = Some(parse_label(label, id, vkey)?);
            }
        }
        out.push(set);
    }
    Ok(out)
}

fn parse_label(v: &Value, id: &str, var: &str) -> Result<GroupLabel> {
    let ctx = |m: &str| fmt_err(format!("{id}.{var}: {m}"));
    let aes = v.get("aes").and_then(Value::as_f64).ok_or_else(|| ctx("missing aes"))?;
    let n = v.get("n").and_then(Value::as_u64).ok_or_else(|| ctx("missing n"))? as usize;
    let category: Category = v
        .get("category")
        .and_then(Value::as_str)
        .ok_or_else(|| ctx("missing category"))?
        .parse()
        .map_err(|e: String| ctx(&e))?;
    if bin_aes(aes)? != category {
        return Err(ctx(&format!("category {category} inconsistent with aes {aes}")));
    }
    if n == 0 {
        return Err(ctx("label with zero raters"));
    }
    Ok(GroupLabel {
        aes,
        category,
        n_raters: n,
    })
}
