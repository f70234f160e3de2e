//! JSON checkpoints: named parameter arrays with shapes and row-major
//! values, plus the resolved run config.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::{Agent, NetworkSizes};
use super::config::ResolvedConfig;
use super::mlp::Mlp;
use super::normalizer::RunningNorm;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub iteration: usize,
    pub config_hash: String,
    pub config: ResolvedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub metadata: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

fn push_mlp(out: &mut Vec<NamedArray>, prefix: &str, mlp: &Mlp) {
    let sizes = mlp.sizes();
    for k in 0..mlp.num_layers() {
        let (w, b) = mlp.layer_offsets(k);
        out.push(NamedArray {
            name: format!("{prefix}.layer{k}.weight"),
            shape: vec![sizes[k], sizes[k + 1]],
            values: mlp.params[w..b].to_vec(),
        });
        out.push(NamedArray {
            name: format!("{prefix}.layer{k}.bias"),
            shape: vec![sizes[k + 1]],
            values: mlp.params[b..b + sizes[k + 1]].to_vec(),
        });
    }
}

fn push_norm(out: &mut Vec<NamedArray>, prefix: &str, n: &RunningNorm) {
    let d = n.dim();
    out.push(NamedArray {
        name: format!("{prefix}.mean"),
        shape: vec![d],
        values: n.mean.clone(),
    });
    out.push(NamedArray {
        name: format!("{prefix}.var"),
        shape: vec![d],
        values: n.var.clone(),
    });
    out.push(NamedArray {
        name: format!("{prefix}.count"),
        shape: vec![1],
        values: vec![n.count],
    });
}

const CRITIC_NAMES: [&str; 2] = ["critic.motion", "critic.barrier"];
const VALUE_NORM_NAMES: [&str; 2] = ["value_norm.motion", "value_norm.barrier"];

impl Checkpoint {
    pub fn from_agent(agent: &Agent, metadata: CheckpointMeta) -> Self {
        let mut arrays = Vec::new();
        push_mlp(&mut arrays, "policy", &agent.policy);
        arrays.push(NamedArray {
            name: "policy.log_std".into(),
            shape: vec![agent.log_std.len()],
            values: agent.log_std.to_vec(),
        });
        for (h, name) in CRITIC_NAMES.iter().enumerate() {
            push_mlp(&mut arrays, name, &agent.critics[h]);
        }
        push_mlp(&mut arrays, "estimator", &agent.estimator);
        push_norm(&mut arrays, "obs_norm", &agent.obs_norm);
        push_norm(&mut arrays, "privileged_norm", &agent.privileged_norm);
        for (h, name) in VALUE_NORM_NAMES.iter().enumerate() {
            push_norm(&mut arrays, name, &agent.value_norm[h]);
        }
        Checkpoint {
            format_version: FORMAT_VERSION,
            metadata,
            arrays,
        }
    }

    /// Rebuilds the agent for networks of the given sizes; every array must
    /// be present with exactly the expected shape.
    pub fn to_agent(&self, sizes: &NetworkSizes) -> Result<Agent> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut template = Agent::new(sizes, 0.0, &mut rng);
        let expected = Checkpoint::from_agent(&template, self.metadata.clone()).arrays;
        let found: BTreeMap<&str, &NamedArray> =
            self.arrays.iter().map(|a| (a.name.as_str(), a)).collect();
        let mut values = Vec::with_capacity(expected.len());
        for e in &expected {
            let a = found
                .get(e.name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing array `{}`", e.name)))?;
            if a.shape != e.shape || a.values.len() != e.values.len() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for `{}`: config expects {:?}, checkpoint has {:?}",
                    e.name, e.shape, a.shape
                )));
            }
            values.push(a.values.as_slice());
        }
        if found.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} arrays, config expects {}",
                found.len(),
                expected.len()
            )));
        }
        let mut it = values.into_iter();
        let fill_mlp = |mlp: &mut Mlp, it: &mut dyn Iterator<Item = &[f64]>| {
            for k in 0..mlp.num_layers() {
                let (w, b) = mlp.layer_offsets(k);
                let out = mlp.sizes()[k + 1];
                let wv = it.next().unwrap();
                mlp.params[w..b].copy_from_slice(wv);
                let bv = it.next().unwrap();
                mlp.params[b..b + out].copy_from_slice(bv);
            }
        };
        let fill_norm = |n: &mut RunningNorm, it: &mut dyn Iterator<Item = &[f64]>| {
            n.mean = it.next().unwrap().to_vec();
            n.var = it.next().unwrap().to_vec();
            n.count = it.next().unwrap()[0];
        };
        fill_mlp(&mut template.policy, &mut it);
        template.log_std.copy_from_slice(it.next().unwrap());
        for h in 0..2 {
            fill_mlp(&mut template.critics[h], &mut it);
        }
        fill_mlp(&mut template.estimator, &mut it);
        fill_norm(&mut template.obs_norm, &mut it);
        fill_norm(&mut template.privileged_norm, &mut it);
        for h in 0..2 {
            fill_norm(&mut template.value_norm[h], &mut it);
        }
        template.check_finite()?;
        Ok(template)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        // Write-then-rename so an interrupted run never leaves a torn file.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::config::RunConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta() -> CheckpointMeta {
        let run = RunConfig::default();
        let model = run.load_model().unwrap();
        let config = ResolvedConfig::new(run, &model);
        CheckpointMeta {
            seed: 0,
            iteration: 3,
            config_hash: config.hash(),
            config,
        }
    }

    fn small() -> NetworkSizes {
        NetworkSizes {
            policy_hidden: vec![8, 4],
            critic_hidden: vec![8],
            estimator_hidden: vec![6],
        }
    }

    #[test]
    fn round_trip_through_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Agent::new(&small(), -0.4, &mut rng);
        agent.obs_norm.count = 12.0;
        agent.value_norm[1].mean[0] = 3.5;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_agent(&agent, meta()).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().to_agent(&small()).unwrap();
        assert_eq!(back, agent);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = Agent::new(&small(), -0.4, &mut rng);
        let ckpt = Checkpoint::from_agent(&agent, meta());
        let err = ckpt.to_agent(&NetworkSizes::default()).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }
}
