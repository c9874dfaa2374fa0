use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ParamsError, PolicyPair, PolicyParams};

pub const CHECKPOINT_SCHEMA: &str = "packing-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint schema {schema} v{version}")]
    Schema { schema: String, version: u32 },
    #[error("digest mismatch for {role}: file says {stored}, content hashes to {actual}")]
    Digest { role: &'static str, stored: String, actual: String },
    #[error(transparent)]
    Params(#[from] ParamsError),
}

impl PolicyParams {
    /// SHA-256 over the architecture and the little-endian parameter bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("architecture serializes"));
        for t in &self.theta {
            h.update(t.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredParams {
    params: PolicyParams,
    digest: String,
}

impl StoredParams {
    fn new(params: &PolicyParams) -> Self {
        Self { params: params.clone(), digest: params.digest() }
    }

    fn verify(self, role: &'static str) -> Result<PolicyParams, CheckpointError> {
        self.params.validate()?;
        let actual = self.params.digest();
        if actual != self.digest {
            return Err(CheckpointError::Digest { role, stored: self.digest, actual });
        }
        Ok(self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    schema: String,
    version: u32,
    k: usize,
    proposal: StoredParams,
    selection: StoredParams,
    #[serde(default)]
    meta: serde_json::Value,
}

/// A policy pair plus free-form metadata, stored as JSON with one digest
/// per parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub pair: PolicyPair,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(pair: PolicyPair) -> Self {
        Self { pair, meta: serde_json::Value::Null }
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            schema: CHECKPOINT_SCHEMA.into(),
            version: CHECKPOINT_VERSION,
            k: self.pair.k,
            proposal: StoredParams::new(&self.pair.proposal),
            selection: StoredParams::new(&self.pair.selection),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        let file: CheckpointFile = serde_json::from_str(s)?;
        if file.schema != CHECKPOINT_SCHEMA || file.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Schema { schema: file.schema, version: file.version });
        }
        let pair = PolicyPair {
            proposal: file.proposal.verify("proposal")?,
            selection: file.selection.verify("selection")?,
            k: file.k,
        };
        Ok(Self { pair, meta: file.meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mlp;

    #[test]
    fn round_trip_preserves_bits() {
        let mut pair = PolicyPair::from_shared(&PolicyParams::init(mlp(), 9), 3);
        pair.selection.theta[4] = 0.1 + 0.2;
        let ck = Checkpoint { pair, meta: serde_json::json!({"epochs": 2}) };
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.pair.proposal.digest(), ck.pair.proposal.digest());
    }

    #[test]
    fn tampering_is_detected() {
        let ck = Checkpoint::new(PolicyPair::from_shared(&PolicyParams::init(mlp(), 1), 3));
        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["selection"]["params"]["theta"][0] = serde_json::json!(123.0);
        let err = Checkpoint::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, CheckpointError::Digest { role: "selection", .. }));
        v["schema"] = serde_json::json!("other");
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(CheckpointError::Schema { .. })));
    }

    #[test]
    fn digest_tracks_content() {
        let a = PolicyParams::init(mlp(), 1);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.theta[0] = f64::from_bits(b.theta[0].to_bits() ^ 1);
        assert_ne!(a.digest(), b.digest());
    }
}
