//! Network checkpoints: architecture descriptor plus the flat parameter and
//! optimizer-state vectors, stored as JSON. Values round-trip losslessly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, QNetwork};

const CHECKPOINT_KIND: &str = "qnetwork-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    kind: String,
    version: u32,
    /// (height, width, channels)
    input_shape: (usize, usize, usize),
    leak: f64,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    optimizer_state: Vec<f64>,
}

/// Writes the network to `path` as a self-describing JSON document.
pub fn save_net(net: &QNetwork, path: &Path) -> Result<()> {
    let doc = CheckpointDoc {
        kind: CHECKPOINT_KIND.into(),
        version: 1,
        input_shape: net.input_shape(),
        leak: net.leak(),
        layers: net.layers().to_vec(),
        params: net.params().to_vec(),
        optimizer_state: net.optimizer_state().to_vec(),
    };
    fs::write(path, serde_json::to_string(&doc).expect("serializable checkpoint"))?;
    Ok(())
}

/// Restores a network saved by [`save_net`], bit-exact.
pub fn load_net(path: &Path) -> Result<QNetwork> {
    let text = fs::read_to_string(path)?;
    let doc: CheckpointDoc =
        serde_json::from_str(&text).map_err(|e| Error::BadSnapshot(e.to_string()))?;
    if doc.kind != CHECKPOINT_KIND {
        return Err(Error::BadSnapshot(format!(
            "expected kind {CHECKPOINT_KIND}, got {}",
            doc.kind
        )));
    }
    let mut net = QNetwork::new(doc.input_shape, doc.layers, doc.leak, 0)?;
    if doc.params.len() != net.param_count() || doc.optimizer_state.len() != net.param_count() {
        return Err(Error::BadSnapshot(format!(
            "parameter count {} does not match architecture ({})",
            doc.params.len(),
            net.param_count()
        )));
    }
    net.params_mut().copy_from_slice(&doc.params);
    net.set_optimizer_state(doc.optimizer_state);
    Ok(net)
}
