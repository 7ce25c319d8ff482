use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, TensorError, Var};

pub const CHECKPOINT_FORMAT: &str = "wlpt-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct EncodedTensor {
    name: String,
    shape: Vec<usize>,
    /// Little-endian IEEE-754 doubles, base64.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    tensors: Vec<EncodedTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Put every tensor on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Put every tensor on `tape` as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = Document {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| {
                    let bytes: Vec<u8> = t.data().iter().flat_map(|x| x.to_le_bytes()).collect();
                    EncodedTensor {
                        name: name.clone(),
                        shape: t.shape().to_vec(),
                        data: B64.encode(bytes),
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, TensorError> {
        let bad = |m: String| TensorError::Argument(format!("malformed parameter checkpoint: {m}"));
        let doc: Document = serde_json::from_str(doc).map_err(|e| bad(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format {} v{}", doc.format, doc.version)));
        }
        let mut store = ParamStore::new();
        for t in doc.tensors {
            let bytes = B64.decode(&t.data).map_err(|e| bad(format!("{}: {e}", t.name)))?;
            if bytes.len() % 8 != 0 {
                return Err(bad(format!("{}: truncated data", t.name)));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.push(t.name, Tensor::new(t.shape, data)?);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::ANY, 1..40)) {
            let values: Vec<f64> = values.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }).collect();
            let mut s = ParamStore::new();
            s.push("w", Tensor::new(vec![values.len()], values.clone()).unwrap());
            s.push("b", Tensor::scalar(-0.0));
            let back = ParamStore::from_json(&s.to_json()).unwrap();
            prop_assert_eq!(back.names(), s.names());
            for (a, b) in back.tensors().iter().zip(s.tensors()) {
                prop_assert_eq!(a.shape(), b.shape());
                let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
                let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(ParamStore::from_json("{}").is_err());
        let s = ParamStore::new().to_json().replace("wlpt-params", "other");
        assert!(ParamStore::from_json(&s).is_err());
    }
}
