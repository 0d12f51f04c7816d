//! Round checkpoints: `round-NN/forward`, `round-NN/backward` (policy
//! checkpoints) and `round-NN/meta` (JSON with references, optimiser
//! moments, baselines, counters and history).

use super::{Baseline, Optimizers, RoundRecord, TrainError, TrainState};
use crate::policy::{Direction, GrammarPolicy, ReferencePolicy, ROWS};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const META_HEADER: &str = "feedtrans-train v1";

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    ref_forward: Vec<f64>,
    ref_backward: Vec<f64>,
    optimizers: Optimizers,
    baseline_fwd: Baseline,
    baseline_bwd: Baseline,
    rounds: usize,
    sft_epochs: usize,
    rl_epochs: usize,
    history: Vec<RoundRecord>,
}

pub fn round_dir(root: &Path, round: usize) -> PathBuf {
    root.join(format!("round-{round:02}"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| TrainError::Io(e.error))?;
    Ok(())
}

fn reference(direction: Direction, flat: Vec<f64>) -> Result<ReferencePolicy, TrainError> {
    let cols = flat.len() / ROWS;
    let w = Array2::from_shape_vec((ROWS, cols), flat).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    Ok(ReferencePolicy::from_weights(direction, w)?)
}

impl TrainState {
    /// Writes `root/round-NN/` for the current round counter and returns it.
    pub fn save_round(&self, root: &Path) -> Result<PathBuf, TrainError> {
        let dir = round_dir(root, self.rounds);
        self.save_dir(&dir)?;
        Ok(dir)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir)?;
        self.forward.save(&dir.join("forward"))?;
        self.backward.save(&dir.join("backward"))?;
        let meta = Meta {
            format: META_HEADER.to_string(),
            ref_forward: self.ref_forward.weights().iter().copied().collect(),
            ref_backward: self.ref_backward.weights().iter().copied().collect(),
            optimizers: self.optimizers.clone(),
            baseline_fwd: self.baseline_fwd,
            baseline_bwd: self.baseline_bwd,
            rounds: self.rounds,
            sft_epochs: self.sft_epochs,
            rl_epochs: self.rl_epochs,
            history: self.history.clone(),
        };
        write_atomic(&dir.join("meta"), &serde_json::to_vec_pretty(&meta)?)
    }

    pub fn load_dir(dir: &Path) -> Result<Self, TrainError> {
        let forward = GrammarPolicy::load(&dir.join("forward"))?;
        let backward = GrammarPolicy::load(&dir.join("backward"))?;
        let meta: Meta = serde_json::from_slice(&std::fs::read(dir.join("meta"))?)?;
        if meta.format != META_HEADER {
            return Err(TrainError::Checkpoint(format!("unknown format `{}`", meta.format)));
        }
        for (opt, n) in
            [(&meta.optimizers.sft_fwd, forward.num_params()), (&meta.optimizers.sft_bwd, backward.num_params())]
        {
            if opt.m.len() != n || opt.v.len() != n {
                return Err(TrainError::Checkpoint("optimiser moments do not match the policy".into()));
            }
        }
        Ok(TrainState {
            ref_forward: reference(Direction::Forward, meta.ref_forward)?,
            ref_backward: reference(Direction::Backward, meta.ref_backward)?,
            forward,
            backward,
            optimizers: meta.optimizers,
            baseline_fwd: meta.baseline_fwd,
            baseline_bwd: meta.baseline_bwd,
            rounds: meta.rounds,
            sft_epochs: meta.sft_epochs,
            rl_epochs: meta.rl_epochs,
            history: meta.history,
        })
    }
}
