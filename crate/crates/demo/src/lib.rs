//! Browser demo: bundled tasks, shortcut analysis, label distributions of the
//! inference layers and a side-by-side count over remap families.
//!
//! Every operation takes and returns strings so the page can stay plain
//! JavaScript. The `*_json` functions hold the logic and are tested natively;
//! the exported wrappers only turn errors into JS exceptions.

use rslab::analysis::{analyze, count_rss, AnalyzeOptions, FamilyBase, Method, RemapFamily};
use rslab::inference::{layer_output, ConceptDistribution, Layer};
use rslab::logic::{build_beta_star, parse_task, InferenceTable, TaskSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Brute force is tried below this many candidates, model counting above.
const DEMO_BUDGET: u128 = 1_000_000;
const DEMO_CAP: usize = 20;

fn compile(text: &str) -> Result<(TaskSpec, InferenceTable), String> {
    let task = parse_task(text).map_err(|e| e.to_string())?;
    let table = build_beta_star(&task).map_err(|e| e.to_string())?;
    Ok((task, table))
}

fn base_of(name: &str) -> Result<FamilyBase, String> {
    match name {
        "full_table" => Ok(FamilyBase::FullTable),
        "per_slot" => Ok(FamilyBase::PerSlot),
        "shared_slot" => Ok(FamilyBase::SharedSlot),
        other => Err(format!("unknown family {other:?}")),
    }
}

fn family(base: FamilyBase, injective: bool) -> RemapFamily {
    let f = RemapFamily::new(base);
    if injective {
        f.injective()
    } else {
        f
    }
}

/// Names of the bundled tasks as a JSON array.
pub fn task_names_json() -> String {
    Value::from(rslab::corpus::TASKS.iter().map(|(n, _)| *n).collect::<Vec<_>>()).to_string()
}

pub fn task_source_text(name: &str) -> Result<String, String> {
    rslab::corpus::source(name)
        .map(str::to_owned)
        .ok_or_else(|| format!("no bundled task named {name:?}"))
}

/// Diagnostics report of one family as JSON.
pub fn analyze_json(text: &str, base: &str, injective: bool) -> Result<String, String> {
    let (task, table) = compile(text)?;
    let opts = AnalyzeOptions { method: Method::Auto, budget: DEMO_BUDGET, cap: DEMO_CAP };
    let report = analyze(&task, &table, &family(base_of(base)?, injective), &opts).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Label distribution of a layer for per-slot concept marginals.
///
/// `slots_json` is an array with one probability vector per concept slot;
/// rows are normalized here so sliders need not sum to one.
pub fn label_distribution_json(text: &str, layer: &str, slots_json: &str) -> Result<String, String> {
    let (task, table) = compile(text)?;
    let layer = match layer {
        "pnsp" => Layer::Pnsp,
        "sl" => Layer::Sl,
        other => return Err(format!("unknown layer {other:?}")),
    };
    let raw: Vec<Vec<f64>> = serde_json::from_str(slots_json).map_err(|e| e.to_string())?;
    let space = task.concepts();
    if raw.len() != space.len() {
        return Err(format!("expected {} slots, got {}", space.len(), raw.len()));
    }
    let mut slots = Vec::with_capacity(raw.len());
    for (row, var) in raw.iter().zip(space.vars()) {
        let z: f64 = row.iter().sum();
        if row.len() != var.card as usize || row.iter().any(|p| !(*p >= 0.0)) || !(z > 0.0) {
            return Err(format!("slot {} needs {} non-negative weights, not all zero", var.name, var.card));
        }
        slots.push(row.iter().map(|p| p / z).collect());
    }
    let q = ConceptDistribution::factorized(slots).map_err(|e| e.to_string())?.joint(space);
    let out = layer_output(layer, &q, &table).map_err(|e| e.to_string())?;
    let labels: Vec<Vec<u32>> = task.labels().vectors().collect();
    Ok(json!({
        "labels": labels,
        "probs": out.probs,
        "argmax": labels[out.argmax()],
    })
    .to_string())
}

/// Shortcut counts for every family base, with and without injectivity.
pub fn compare_families_json(text: &str) -> Result<String, String> {
    let (task, table) = compile(text)?;
    let mut rows = Vec::new();
    for (name, base) in [
        ("full_table", FamilyBase::FullTable),
        ("per_slot", FamilyBase::PerSlot),
        ("shared_slot", FamilyBase::SharedSlot),
    ] {
        for injective in [false, true] {
            let cell = match count_rss(&task, &table, &family(base, injective), Method::Auto, DEMO_BUDGET) {
                Ok((n, method)) => json!({"count": n.to_string(), "method": method}),
                Err(e) => json!({"error": e.to_string()}),
            };
            rows.push(json!({"family": name, "injective": injective, "result": cell}));
        }
    }
    Ok(Value::from(rows).to_string())
}

#[wasm_bindgen]
pub fn task_names() -> String {
    task_names_json()
}

#[wasm_bindgen]
pub fn task_source(name: &str) -> Result<String, JsValue> {
    task_source_text(name).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze_task(text: &str, base: &str, injective: bool) -> Result<String, JsValue> {
    analyze_json(text, base, injective).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn label_distribution(text: &str, layer: &str, slots_json: &str) -> Result<String, JsValue> {
    label_distribution_json(text, layer, slots_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_families(text: &str) -> Result<String, JsValue> {
    compare_families_json(text).map_err(|e| JsValue::from_str(&e))
}
