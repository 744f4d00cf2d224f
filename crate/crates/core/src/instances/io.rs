//! JSON-lines dataset files: a provenance header line followed by one
//! object per instance.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{
    BppInstance, Dataset, InstanceError, Instances, ProblemKind, Provenance, ReferenceKind,
    TspInstance,
};

const FORMAT: &str = "moh-dataset";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    task_label: String,
    kind: ProblemKind,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_kind: Option<ReferenceKind>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<f64>,
}

pub(crate) fn encode_dataset(ds: &Dataset) -> String {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        task_label: ds.task_label.clone(),
        kind: ds.kind(),
        count: ds.len(),
        reference_kind: ds.reference_kind,
        provenance: ds.provenance.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    let reference = |i: usize| ds.references().map(|r| r[i]);
    let records: Vec<Record> = match &ds.instances {
        Instances::Tsp(v) => v
            .iter()
            .enumerate()
            .map(|(i, t)| Record {
                id: t.id.clone(),
                kind: ProblemKind::Tsp,
                coords: Some(t.coords().to_vec()),
                capacity: None,
                weights: None,
                reference: reference(i),
            })
            .collect(),
        Instances::Bpp(v) => v
            .iter()
            .enumerate()
            .map(|(i, b)| Record {
                id: b.id.clone(),
                kind: ProblemKind::Bpp,
                coords: None,
                capacity: Some(b.capacity()),
                weights: Some(b.weights().to_vec()),
                reference: reference(i),
            })
            .collect(),
    };
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| InstanceError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, encode_dataset(ds)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_dataset(&text, &path.display().to_string())
}

pub(crate) fn decode_dataset(text: &str, origin: &str) -> Result<Dataset, InstanceError> {
    let err = |line: usize, message: String| InstanceError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty dataset file".into()))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| err(1, format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }

    let mut tsp = Vec::new();
    let mut bpp = Vec::new();
    let mut refs: Vec<Option<f64>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let rec: Record = serde_json::from_str(line).map_err(|e| err(lineno, e.to_string()))?;
        if rec.kind != header.kind {
            return Err(err(lineno, format!("record kind {:?} in a {:?} dataset", rec.kind, header.kind)));
        }
        match rec.kind {
            ProblemKind::Tsp => {
                let coords = rec.coords.ok_or_else(|| err(lineno, "missing `coords`".into()))?;
                tsp.push(TspInstance::new(rec.id, coords).map_err(|e| err(lineno, e.to_string()))?);
            }
            ProblemKind::Bpp => {
                let capacity = rec.capacity.ok_or_else(|| err(lineno, "missing `capacity`".into()))?;
                let weights = rec.weights.ok_or_else(|| err(lineno, "missing `weights`".into()))?;
                bpp.push(
                    BppInstance::new(rec.id, capacity, weights)
                        .map_err(|e| err(lineno, e.to_string()))?,
                );
            }
        }
        refs.push(rec.reference);
    }
    let instances = match header.kind {
        ProblemKind::Tsp => Instances::Tsp(tsp),
        ProblemKind::Bpp => Instances::Bpp(bpp),
    };
    if instances.len() != header.count {
        return Err(err(
            1,
            format!("header announces {} instances, file has {}", header.count, instances.len()),
        ));
    }
    let mut ds = Dataset::new(header.task_label, instances, header.provenance);
    if refs.iter().any(Option::is_some) {
        let refs: Option<Vec<f64>> = refs.into_iter().collect();
        let refs = refs.ok_or_else(|| err(1, "references present for only some instances".into()))?;
        let kind = header
            .reference_kind
            .ok_or_else(|| err(1, "references without a reference_kind".into()))?;
        ds.set_references(refs, kind).map_err(|e| err(1, e.to_string()))?;
    }
    Ok(ds)
}
