//! Versioned JSON model files.
//!
//! Axis ensembles are stored as a header plus one preorder node list per
//! tree. Oblique trees store each internal node's active weights sparsely,
//! as `[column, value]` pairs or, with a codebook, `[column, center]`
//! pairs. Floats are written in shortest round-trip form, so loading a
//! saved model reproduces every threshold and weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{column_name, FeatureKind, N_FEATURES};
use crate::gbdt::{AxisEnsemble, AxisNode};
use crate::oblique::{InternalNode, LogScaler, ObliqueTree, SharedCodebook};

pub const FORMAT_NAME: &str = "neurotree-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dvte(AxisEnsemble),
    Oblique(ObliqueTree),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Dvte(_) => "dvte",
            Model::Oblique(_) => "oblique",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Model::Dvte(e) => e.channels,
            Model::Oblique(t) => t.channels,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    channels: usize,
    feature_order: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NodeRecord {
    Split {
        feature: FeatureKind,
        channel: usize,
        threshold: f64,
        cover: f64,
    },
    Leaf {
        weight: f64,
        cover: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct DvteFile {
    #[serde(flatten)]
    header: Header,
    depth_schedule: Vec<usize>,
    learning_rate: f64,
    base_score: f64,
    trees: Vec<Vec<NodeRecord>>,
}

#[derive(Serialize, Deserialize)]
struct ObliqueNodeRecord {
    bias: f64,
    /// `[column, value]`, or `[column, center]` when a codebook exists.
    weights: Vec<(usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct ObliqueFile {
    #[serde(flatten)]
    header: Header,
    depth: usize,
    nodes: Vec<ObliqueNodeRecord>,
    leaves: Vec<f64>,
    scaler: Option<LogScaler>,
    codebook: Option<Vec<f64>>,
    frac_bits: Option<u32>,
}

fn header(kind: &str, channels: usize) -> Header {
    Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: kind.into(),
        channels,
        feature_order: (0..channels * N_FEATURES).map(column_name).collect(),
    }
}

fn check_header(h: &Header, kind: &str) -> Result<()> {
    if h.format != FORMAT_NAME {
        return Err(Error::Format(format!("not a model file (format {:?})", h.format)));
    }
    if h.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", h.version)));
    }
    if h.kind != kind {
        return Err(Error::Format(format!("expected a {kind} model, found {}", h.kind)));
    }
    let expected: Vec<String> = (0..h.channels * N_FEATURES).map(column_name).collect();
    if h.feature_order != expected {
        return Err(Error::Format("feature ordering does not match this build".into()));
    }
    Ok(())
}

fn flatten(node: &AxisNode, out: &mut Vec<NodeRecord>) {
    match node {
        AxisNode::Leaf { weight, cover } => out.push(NodeRecord::Leaf {
            weight: *weight,
            cover: *cover,
        }),
        AxisNode::Internal {
            feature,
            channel,
            threshold,
            cover,
            left,
            right,
        } => {
            out.push(NodeRecord::Split {
                feature: *feature,
                channel: *channel,
                threshold: *threshold,
                cover: *cover,
            });
            flatten(left, out);
            flatten(right, out);
        }
    }
}

fn rebuild(records: &mut std::slice::Iter<'_, NodeRecord>, channels: usize) -> Result<AxisNode> {
    match records.next() {
        None => Err(Error::Format("truncated node list".into())),
        Some(NodeRecord::Leaf { weight, cover }) => Ok(AxisNode::Leaf {
            weight: *weight,
            cover: *cover,
        }),
        Some(NodeRecord::Split {
            feature,
            channel,
            threshold,
            cover,
        }) => {
            if *channel >= channels || !threshold.is_finite() {
                return Err(Error::Format("split out of range".into()));
            }
            let left = rebuild(records, channels)?;
            let right = rebuild(records, channels)?;
            Ok(AxisNode::Internal {
                feature: *feature,
                channel: *channel,
                threshold: *threshold,
                cover: *cover,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
    }
}

pub fn dvte_to_json(e: &AxisEnsemble) -> Result<String> {
    let file = DvteFile {
        header: header("dvte", e.channels),
        depth_schedule: e.depth_schedule.clone(),
        learning_rate: e.learning_rate,
        base_score: e.base_score,
        trees: e
            .trees
            .iter()
            .map(|t| {
                let mut v = Vec::new();
                flatten(t, &mut v);
                v
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

fn dvte_from_file(file: DvteFile) -> Result<AxisEnsemble> {
    check_header(&file.header, "dvte")?;
    if file.trees.len() != file.depth_schedule.len() {
        return Err(Error::Format("tree count differs from depth schedule".into()));
    }
    let mut trees = Vec::with_capacity(file.trees.len());
    for (records, &depth) in file.trees.iter().zip(&file.depth_schedule) {
        let mut it = records.iter();
        let tree = rebuild(&mut it, file.header.channels)?;
        if it.next().is_some() {
            return Err(Error::Format("trailing nodes after tree".into()));
        }
        if tree.depth() > depth {
            return Err(Error::Format("tree deeper than its schedule entry".into()));
        }
        trees.push(tree);
    }
    Ok(AxisEnsemble {
        trees,
        depth_schedule: file.depth_schedule,
        learning_rate: file.learning_rate,
        base_score: file.base_score,
        channels: file.header.channels,
    })
}

pub fn oblique_to_json(t: &ObliqueTree) -> Result<String> {
    let center_of = |node: usize, col: usize| -> Option<f64> {
        let book = t.codebook.as_ref()?;
        book.indices
            .get(node)?
            .iter()
            .find(|(c, _)| *c == col)
            .map(|&(_, i)| i as f64)
    };
    let mut nodes = Vec::with_capacity(t.nodes.len());
    for (i, n) in t.nodes.iter().enumerate() {
        let mut weights = Vec::new();
        for col in (0..n.theta.len()).filter(|&j| n.active[j]) {
            let v = match &t.codebook {
                Some(_) => center_of(i, col).ok_or_else(|| {
                    Error::Format(format!("node {i} column {col} has no codebook entry"))
                })?,
                None => n.theta[col],
            };
            weights.push((col, v));
        }
        nodes.push(ObliqueNodeRecord {
            bias: n.bias,
            weights,
        });
    }
    let file = ObliqueFile {
        header: header("oblique", t.channels),
        depth: t.depth,
        nodes,
        leaves: t.leaves.clone(),
        scaler: t.scaler.clone(),
        codebook: t.codebook.as_ref().map(|b| b.centers.clone()),
        frac_bits: t.frac_bits,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

fn oblique_from_file(file: ObliqueFile) -> Result<ObliqueTree> {
    check_header(&file.header, "oblique")?;
    let nf = file.header.channels * N_FEATURES;
    if file.depth > 16
        || file.nodes.len() != (1 << file.depth) - 1
        || file.leaves.len() != 1 << file.depth
    {
        return Err(Error::Format("node or leaf count does not match depth".into()));
    }
    let mut book = file.codebook.map(|centers| SharedCodebook {
        centers,
        indices: Vec::new(),
    });
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for rec in &file.nodes {
        let mut node = InternalNode::new(vec![0.0; nf], rec.bias);
        node.active = vec![false; nf];
        let mut map = Vec::new();
        for &(col, v) in &rec.weights {
            if col >= nf {
                return Err(Error::Format(format!("weight column {col} out of range")));
            }
            node.active[col] = true;
            node.theta[col] = match &book {
                Some(b) => {
                    let idx = v as usize;
                    if v != idx as f64 || idx >= b.centers.len() {
                        return Err(Error::Format(format!("bad codebook index {v}")));
                    }
                    map.push((col, idx as u16));
                    b.centers[idx]
                }
                None => v,
            };
        }
        if let Some(b) = &mut book {
            b.indices.push(map);
        }
        nodes.push(node);
    }
    if let Some(s) = &file.scaler {
        if s.mean.len() != nf || s.std.len() != nf {
            return Err(Error::Format("scaler width does not match feature row".into()));
        }
    }
    Ok(ObliqueTree {
        depth: file.depth,
        n_features: nf,
        channels: file.header.channels,
        nodes,
        leaves: file.leaves,
        scaler: file.scaler,
        codebook: book,
        frac_bits: file.frac_bits,
    })
}

pub fn model_to_json(model: &Model) -> Result<String> {
    match model {
        Model::Dvte(e) => dvte_to_json(e),
        Model::Oblique(t) => oblique_to_json(t),
    }
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    let bad = |e: serde_json::Error| Error::Format(e.to_string());
    match kind {
        "dvte" => Ok(Model::Dvte(dvte_from_file(
            serde_json::from_value(value).map_err(bad)?,
        )?)),
        "oblique" => Ok(Model::Oblique(oblique_from_file(
            serde_json::from_value(value).map_err(bad)?,
        )?)),
        other => Err(Error::Format(format!("unknown model kind {other:?}"))),
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), model_to_json(model)?.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    model_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble() -> AxisEnsemble {
        AxisEnsemble {
            trees: vec![
                AxisNode::split(
                    FeatureKind::Delta,
                    1,
                    0.1 + 0.2,
                    AxisNode::split(FeatureKind::Beta, 0, 1e-300, AxisNode::leaf(-0.5), AxisNode::leaf(1.0 / 3.0)),
                    AxisNode::leaf(2.0f64.sqrt()),
                ),
                AxisNode::leaf(0.0),
            ],
            depth_schedule: vec![2, 1],
            learning_rate: 0.3,
            base_score: -2.1972245773362196,
            channels: 2,
        }
    }

    #[test]
    fn dvte_round_trip_is_bit_exact() {
        let m = Model::Dvte(ensemble());
        let text = model_to_json(&m).unwrap();
        assert_eq!(model_from_json(&text).unwrap(), m);
        assert!(text.contains("\"ch1:Delta\""));
    }

    #[test]
    fn oblique_round_trip_with_and_without_codebook() {
        let mut t = ObliqueTree::zeros(1, 10, 1);
        t.nodes[0].theta[3] = 0.1 + 0.2;
        t.nodes[0].theta[7] = -1.0 / 7.0;
        t.nodes[0].active[5] = false;
        t.nodes[0].bias = 1e-17;
        t.leaves = vec![0.25, -3.5];
        let m = Model::Oblique(t.clone());
        assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap(), m);

        let mut shared = t;
        for a in &mut shared.nodes[0].active {
            *a = false;
        }
        shared.nodes[0].active[3] = true;
        shared.nodes[0].active[7] = true;
        shared.nodes[0].theta[3] = 0.5;
        shared.nodes[0].theta[7] = -0.5;
        shared.codebook = Some(SharedCodebook {
            centers: vec![-0.5, 0.0 + 0.5],
            indices: vec![vec![(3, 1), (7, 0)]],
        });
        shared.frac_bits = Some(12);
        let m = Model::Oblique(shared);
        assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_wrong_format() {
        assert!(matches!(model_from_json("{}"), Err(Error::Format(_))));
        let text = model_to_json(&Model::Dvte(ensemble())).unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(model_from_json(&bumped), Err(Error::Format(_))));
        assert!(model_from_json("not json").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
