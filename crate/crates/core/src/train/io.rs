use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::{build_beta_star, TaskFile, TaskSpec};
use crate::train::data::{Dataset, Renderer};
use crate::train::trainer::EpochRecord;

pub const DATA_SCHEMA_VERSION: u32 = 1;

/// JSON file written next to every CSV output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renderer: Option<Renderer>,
}

pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

fn write_sidecar(csv: &Path, sidecar: &Sidecar) -> Result<()> {
    std::fs::write(sidecar_path(csv), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

/// One row per sample: input coordinates `x*`, concepts `c*`, label index `y`.
pub fn write_dataset(path: &Path, data: &Dataset, manifest: Option<&str>) -> Result<()> {
    let d = data.renderer.dim();
    let k = data.task.concepts().len();
    let mut columns: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    columns.extend((0..k).map(|i| format!("c{i}")));
    columns.push("y".into());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&columns)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.inputs[i].iter().map(|v| format!("{v:e}")).collect();
        rec.extend(data.concepts[i].iter().map(|v| v.to_string()));
        rec.push(data.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_sidecar(
        path,
        &Sidecar {
            schema_version: DATA_SCHEMA_VERSION,
            kind: "dataset".into(),
            columns,
            rows: data.len(),
            manifest: manifest.map(str::to_string),
            task: Some(data.task.to_file()),
            renderer: Some(data.renderer.clone()),
        },
    )
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.schema_version != DATA_SCHEMA_VERSION || sidecar.kind != "dataset" {
        return Err(Error::InvalidArgument("not a dataset sidecar of a known version".into()));
    }
    let (tf, renderer) = match (sidecar.task, sidecar.renderer) {
        (Some(t), Some(r)) => (t, r),
        _ => return Err(Error::InvalidArgument("dataset sidecar lacks the task or renderer".into())),
    };
    let task = TaskSpec::try_from(tf)?;
    let table = build_beta_star(&task)?;
    let d = renderer.dim();
    let k = task.concepts().len();
    let mut r = csv::Reader::from_path(path)?;
    let (mut inputs, mut concepts, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d + k + 1 {
            return Err(Error::InvalidArgument(format!("dataset row has {} fields, expected {}", rec.len(), d + k + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}")));
        let int = |s: &str| s.parse::<u32>().map_err(|e| Error::InvalidArgument(format!("bad integer `{s}`: {e}")));
        inputs.push((0..d).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?);
        concepts.push((d..d + k).map(|i| int(&rec[i])).collect::<Result<Vec<_>>>()?);
        labels.push(int(&rec[d + k])? as usize);
    }
    Ok(Dataset { task, table, renderer, inputs, concepts, labels })
}

pub fn write_trajectory(path: &Path, records: &[EpochRecord], manifest: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(TRAJECTORY_COLUMNS)?;
    }
    w.flush()?;
    write_sidecar(
        path,
        &Sidecar {
            schema_version: DATA_SCHEMA_VERSION,
            kind: "trajectory".into(),
            columns: TRAJECTORY_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: records.len(),
            manifest: manifest.map(str::to_string),
            task: None,
            renderer: None,
        },
    )
}

const TRAJECTORY_COLUMNS: [&str; 6] = ["epoch", "loss", "label_nll", "label_accuracy", "concept_accuracy", "mean_entropy"];

pub fn read_trajectory(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}
