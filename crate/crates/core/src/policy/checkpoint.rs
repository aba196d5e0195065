//! Policy checkpoints: the tensor checkpoint file plus a JSON sidecar
//! carrying the policy configuration.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::policy::config::PolicyConfig;
use crate::policy::network::PolicyNetwork;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Write `<path>` (tensors incl. optimizer state) and `<path>.json` (config).
pub fn save_policy(path: &Path, network: &PolicyNetwork) -> Result<()> {
    save_checkpoint(path, &network.store.to_named_tensors(true))?;
    let file = std::io::BufWriter::new(std::fs::File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(file, &network.config)?;
    Ok(())
}

/// Rebuild a network from `<path>` + `<path>.json`, validating that every
/// parameter in the freshly initialized architecture is present with the
/// right shape.
pub fn load_policy(path: &Path) -> Result<PolicyNetwork> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(Error::Checkpoint(format!(
            "missing config sidecar {}",
            sidecar.display()
        )));
    }
    let file = std::io::BufReader::new(std::fs::File::open(&sidecar)?);
    let config: PolicyConfig = serde_json::from_reader(file)?;
    let mut network = PolicyNetwork::init(config)?;
    let tensors = load_checkpoint(path)?;
    network.store.restore_named_tensors(&tensors)?;
    Ok(network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::config::{ChannelKind, DecisionMode};
    use crate::policy::forward::{LegalizeContext, ObsFeatures};

    #[test]
    fn save_load_round_trip_preserves_behavior() {
        let config = PolicyConfig {
            rnn_hidden: 5,
            fc_hidden: 6,
            rounds_k: 2,
            channel: ChannelKind::Attention,
            n_heads: 2,
            init_seed: 3,
            ..PolicyConfig::default()
        };
        let net = PolicyNetwork::init(config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        save_policy(&path, &net).unwrap();
        let loaded = load_policy(&path).unwrap();
        assert_eq!(net.store.flat_values(), loaded.store.flat_values());

        let feats = vec![ObsFeatures {
            market: vec![[1.0, 0.5], [1.01, 0.4]],
            scalars: [0.25, -1.0, 0.0, 1.0],
        }];
        let ctx = LegalizeContext::unrestricted(1, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let (a, _) = net
            .forward_timestep(&feats, DecisionMode::Greedy, None, &ctx, 2)
            .unwrap();
        let (b, _) = loaded
            .forward_timestep(&feats, DecisionMode::Greedy, None, &ctx, 2)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_policy(&dir.path().join("nope.ckpt")).is_err());
    }
}
