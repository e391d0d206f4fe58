//! Versioned JSON model files.
//!
//! Tensors are written as nested arrays (`pi2[i][j]`, `pi3[i][j][k]`,
//! `transitions[i]..[w]`). Floats use the shortest decimal form that parses
//! back to the same `f64`, so a round trip is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::gmm::GmmEmission;
use super::model::{BoundaryDistributions, HmmModel, TransitionTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "hosid-hmm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    order: usize,
    num_states: usize,
    feature_dim: usize,
    boundary: BoundaryDocument,
    transitions: Value,
    emissions: Vec<GmmEmission<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDocument {
    pi1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi2: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi3: Option<Value>,
}

/// Nests a flat row-major table of `n^depth` values.
fn nest(values: &[f64], n: usize, depth: usize) -> Value {
    if depth == 1 {
        return Value::from(values.to_vec());
    }
    let stride = values.len() / n;
    Value::Array(values.chunks(stride).map(|c| nest(c, n, depth - 1)).collect())
}

fn flatten(value: &Value, n: usize, depth: usize, name: &str, out: &mut Vec<f64>) -> Result<()> {
    let items = value
        .as_array()
        .filter(|a| a.len() == n)
        .ok_or_else(|| Error::ModelFormat(format!("`{name}` must be nested arrays of length {n}")))?;
    for item in items {
        if depth == 1 {
            out.push(
                item.as_f64()
                    .ok_or_else(|| Error::ModelFormat(format!("`{name}` holds a non-number")))?,
            );
        } else {
            flatten(item, n, depth - 1, name, out)?;
        }
    }
    Ok(())
}

fn unnest(value: &Value, n: usize, depth: usize, name: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n.pow(depth as u32));
    flatten(value, n, depth, name, &mut out)?;
    Ok(out)
}

fn to_f64<F: Scalar>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn from_f64<F: Scalar>(v: Vec<f64>) -> Vec<F> {
    v.into_iter().map(F::lit).collect()
}

pub fn model_to_json<F: Scalar>(model: &HmmModel<F>) -> String {
    let n = model.num_states;
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        order: model.order,
        num_states: n,
        feature_dim: model.feature_dim,
        boundary: BoundaryDocument {
            pi1: to_f64(&model.boundary.pi1),
            pi2: model.boundary.pi2.as_ref().map(|p| nest(&to_f64(p), n, 2)),
            pi3: model.boundary.pi3.as_ref().map(|p| nest(&to_f64(p), n, 3)),
        },
        transitions: nest(&to_f64(&model.transitions.probs), n, model.order + 1),
        emissions: model
            .emissions
            .iter()
            .map(|e| e.map_scalars(|x| x.to_f64_lossy()))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

pub fn model_from_json<F: Scalar>(text: &str) -> Result<HmmModel<F>> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!("unknown format `{}`", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {}", doc.version)));
    }
    let n = doc.num_states;
    let table = |v: &Option<Value>, depth: usize, name: &str| -> Result<Option<Vec<F>>> {
        v.as_ref()
            .map(|v| unnest(v, n, depth, name).map(from_f64))
            .transpose()
    };
    let boundary = BoundaryDistributions {
        pi1: from_f64(doc.boundary.pi1),
        pi2: table(&doc.boundary.pi2, 2, "pi2")?,
        pi3: table(&doc.boundary.pi3, 3, "pi3")?,
    };
    let transitions = TransitionTensor::new(
        doc.order,
        n,
        from_f64(unnest(&doc.transitions, n, doc.order + 1, "transitions")?),
    )?;
    let emissions = doc
        .emissions
        .iter()
        .map(|e| e.map_scalars(F::lit))
        .collect();
    let model = HmmModel::new(boundary, transitions, emissions)?;
    if model.feature_dim != doc.feature_dim {
        return Err(Error::ModelFormat(format!(
            "declared feature_dim {} but emissions have dimension {}",
            doc.feature_dim, model.feature_dim
        )));
    }
    Ok(model)
}

pub fn write_model<F: Scalar>(model: &HmmModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model<F: Scalar>(path: impl AsRef<Path>) -> Result<HmmModel<F>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::SplitMix64;

    fn random_model(order: usize, n: usize, seed: u64) -> HmmModel<f64> {
        let mut g = SplitMix64::new(seed);
        let mut dist = |len: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..len).map(|_| g.next_f64() + 0.01).collect();
            v.chunks(n).flat_map(|c| {
                let s: f64 = c.iter().sum();
                c.iter().map(move |x| x / s)
            }).collect()
        };
        let boundary = BoundaryDistributions {
            pi1: dist(n),
            pi2: (order >= 2).then(|| dist(n * n)),
            pi3: (order >= 3).then(|| dist(n * n * n)),
        };
        let trans = TransitionTensor::new(order, n, dist(n.pow(order as u32 + 1))).unwrap();
        let mut g = SplitMix64::new(seed ^ 0xff);
        let emissions = (0..n)
            .map(|_| {
                GmmEmission::new(
                    vec![0.25, 0.75],
                    vec![vec![g.normal(), g.normal()], vec![g.normal(), g.normal()]],
                    vec![vec![0.1 + g.next_f64(), 1.0 / 3.0], vec![2.0, 0.5 + g.next_f64()]],
                )
                .unwrap()
            })
            .collect();
        HmmModel::new(boundary, trans, emissions).unwrap()
    }

    #[test]
    fn exact_round_trip() {
        for order in 1..=3 {
            let m = random_model(order, 3, order as u64);
            let back: HmmModel<f64> = model_from_json(&model_to_json(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn nested_layout() {
        let m = random_model(3, 2, 9);
        let v: Value = serde_json::from_str(&model_to_json(&m)).unwrap();
        assert_eq!(v["transitions"][1][0][1][1].as_f64().unwrap(), m.transitions.get(&[1, 0, 1], 1));
        assert_eq!(v["boundary"]["pi3"][0][1][0].as_f64().unwrap(), m.boundary.pi3.as_ref().unwrap()[2]);
        assert_eq!(v["version"], 1);
    }

    #[test]
    fn rejects_bad_documents() {
        let m = random_model(2, 2, 1);
        let text = model_to_json(&m);
        let wrong_version = text.replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(model_from_json::<f64>(&wrong_version), Err(Error::ModelFormat(_))));
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["transitions"][0] = Value::from(vec![0.5]);
        assert!(model_from_json::<f64>(&v.to_string()).is_err());
        v = serde_json::from_str(&text).unwrap();
        v["extra"] = Value::from(1);
        assert!(model_from_json::<f64>(&v.to_string()).is_err());
        assert!(model_from_json::<f64>("not json").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = random_model(1, 4, 3);
        write_model(&m, &path).unwrap();
        assert_eq!(read_model::<f64>(&path).unwrap(), m);
        assert!(matches!(read_model::<f64>(dir.path().join("none.json")), Err(Error::Io { .. })));
    }
}
