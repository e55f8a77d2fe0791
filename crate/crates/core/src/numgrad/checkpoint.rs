use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NumError, ParamStore, Tensor2D};

pub const CHECKPOINT_FORMAT: &str = "roleplay-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Versioned JSON manifest: named flat arrays with shapes, free-form metadata,
/// and optional serialized RNG / optimizer state.
///
/// Floats are written with shortest round-trip formatting and parsed with
/// exact round-trip parsing, so save followed by load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub metadata: BTreeMap<String, String>,
    pub params: Vec<ParamRecord>,
    #[serde(default)]
    pub rng: Option<serde_json::Value>,
    #[serde(default)]
    pub optimizer: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            metadata: BTreeMap::new(),
            params: store
                .iter()
                .map(|(_, name, t)| ParamRecord {
                    name: name.to_string(),
                    shape: [t.rows(), t.cols()],
                    data: t.data().to_vec(),
                })
                .collect(),
            rng: None,
            optimizer: None,
        }
    }

    /// Rebuilds a store in manifest order.
    pub fn to_store(&self) -> Result<ParamStore, NumError> {
        let mut store = ParamStore::new();
        for p in &self.params {
            let t = Tensor2D::from_vec(p.shape[0], p.shape[1], p.data.clone())?;
            store.add(p.name.clone(), t);
        }
        Ok(store)
    }

    /// Copies values into an existing store, matching by name and shape.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), NumError> {
        if self.params.len() != store.len() {
            return Err(NumError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in &self.params {
            let id = store
                .id_of(&p.name)
                .ok_or_else(|| NumError::Checkpoint(format!("unknown parameter {}", p.name)))?;
            let t = Tensor2D::from_vec(p.shape[0], p.shape[1], p.data.clone())?;
            store.set(id, t)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, NumError> {
        serde_json::to_string_pretty(self).map_err(|e| NumError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NumError> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| NumError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(NumError::Checkpoint(format!("unexpected format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(NumError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| NumError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NumError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        store.add_uniform("a", 3, 4, 4, &mut rng);
        store.add("b", Tensor2D::row_vector(vec![1e-300, -0.1 + 0.2, f64::MIN_POSITIVE, 1.0 / 3.0]));
        let _ = rng.gen::<f64>();
        let mut ck = Checkpoint::from_store(&store);
        ck.metadata.insert("env".into(), "matrix".into());
        ck.rng = Some(serde_json::to_value(&rng).unwrap());
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_store().unwrap(), store);
        let mut rng2: ChaCha8Rng = serde_json::from_value(back.rng.clone().unwrap()).unwrap();
        assert_eq!(rng2.next_u64(), rng.next_u64());
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let mut ck = Checkpoint::from_store(&ParamStore::new());
        ck.format = "other".into();
        let text = ck.to_json().unwrap();
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
