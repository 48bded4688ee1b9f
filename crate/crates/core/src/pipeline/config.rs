//! Flat `key=value` run configuration covering every stage of the pipeline.

use thiserror::Error;

use crate::descriptor::EncodingConfig;
use crate::got::{GotConfig, MatchMode};
use crate::losses::LossWeights;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, found {found:?}")]
    BadLine { line: usize, found: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: cannot parse value for {key}: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// All knobs of data preparation, the model, matching, and training.
///
/// Serializes to one `key=value` line per field (see [`TrainConfig::to_text`])
/// and parses back losslessly; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Seeds sampled per shape.
    pub n_seeds: usize,
    /// Local patch extent in mesh-graph hops.
    pub d_cut: usize,
    /// Ball radius connecting local-graph nodes (unit-ball units).
    pub r_local: f64,
    /// Geodesic radius connecting shape-graph nodes.
    pub r_shape: f64,
    /// Descriptor and node-feature width.
    pub feat_dim: usize,
    /// Positional-encoding frequency scale.
    pub sigma: f64,
    /// Positional-encoding frequency count parameter (`m - 1` frequencies).
    pub m_freqs: usize,
    /// Sinkhorn temperature.
    pub tau: f64,
    pub sinkhorn_iterations: usize,
    /// Outer transport-propagation rounds.
    pub n_got: usize,
    /// Propagation steps per round.
    pub n_gfp: usize,
    /// Triplet margin.
    pub margin: f64,
    /// Soft-weight geodesic radius for the matching loss.
    pub r_d: f64,
    pub lr_initial: f64,
    pub lr_late: f64,
    /// Last epoch (1-based) that still uses `lr_initial`.
    pub lr_switch_epoch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Loss weights `[gamma_d, gamma_m, gamma_r]` through `gamma_switch_epoch`.
    pub gamma_early: [f64; 3],
    /// Loss weights after the switch.
    pub gamma_late: [f64; 3],
    pub gamma_switch_epoch: usize,
    /// Hard-negative ring, in hops from the positive patch.
    pub ring_min_hops: usize,
    pub ring_max_hops: usize,
    /// Checkpoint cadence in epochs (a final checkpoint is always written).
    pub checkpoint_every: usize,
    /// Random per-shape rotations each epoch.
    pub augment_rotations: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_seeds: 200,
            d_cut: 7,
            r_local: 0.1,
            r_shape: 0.35,
            feat_dim: 64,
            sigma: 8.0,
            m_freqs: 9,
            tau: 0.1,
            sinkhorn_iterations: 100,
            n_got: 1,
            n_gfp: 2,
            margin: 0.2,
            r_d: 0.15,
            lr_initial: 0.001,
            lr_late: 0.0001,
            lr_switch_epoch: 30,
            epochs: 60,
            seed: 0,
            gamma_early: [1.0, 0.0, 1.0],
            gamma_late: [0.1, 1.0, 1.0],
            gamma_switch_epoch: 30,
            ring_min_hops: 14,
            ring_max_hops: 28,
            checkpoint_every: 10,
            augment_rotations: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("r_local", self.r_local),
            ("r_shape", self.r_shape),
            ("sigma_minus_one", self.sigma - 1.0),
            ("tau", self.tau),
            ("margin", self.margin),
            ("r_d", self.r_d),
            ("lr_initial", self.lr_initial),
            ("lr_late", self.lr_late),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_seeds == 0 || self.feat_dim < 2 || self.m_freqs < 2 {
            return Err(ConfigError::Invalid("n_seeds, feat_dim, m_freqs too small".into()));
        }
        if self.sinkhorn_iterations == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return Err(ConfigError::Invalid(
                "sinkhorn_iterations, epochs, checkpoint_every must be at least 1".into(),
            ));
        }
        if self.ring_min_hops < 1 || self.ring_min_hops > self.ring_max_hops {
            return Err(ConfigError::Invalid("negative ring needs 1 <= min <= max".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_switch_epoch {
            self.lr_initial
        } else {
            self.lr_late
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights::two_phase(self.gamma_switch_epoch, self.gamma_early, self.gamma_late)
    }

    pub fn encoding(&self) -> EncodingConfig {
        EncodingConfig::new(self.sigma, self.m_freqs)
    }

    pub fn got_config(&self) -> GotConfig {
        GotConfig {
            n_got: self.n_got,
            n_gfp: self.n_gfp,
            sinkhorn_iterations: self.sinkhorn_iterations,
            tau: self.tau,
            match_mode: MatchMode::RowArgmax,
        }
    }

    pub fn to_text(&self) -> String {
        let g = |v: [f64; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        put("n_seeds", self.n_seeds.to_string());
        put("d_cut", self.d_cut.to_string());
        put("r_local", self.r_local.to_string());
        put("r_shape", self.r_shape.to_string());
        put("feat_dim", self.feat_dim.to_string());
        put("sigma", self.sigma.to_string());
        put("m_freqs", self.m_freqs.to_string());
        put("tau", self.tau.to_string());
        put("sinkhorn_iterations", self.sinkhorn_iterations.to_string());
        put("n_got", self.n_got.to_string());
        put("n_gfp", self.n_gfp.to_string());
        put("margin", self.margin.to_string());
        put("r_d", self.r_d.to_string());
        put("lr_initial", self.lr_initial.to_string());
        put("lr_late", self.lr_late.to_string());
        put("lr_switch_epoch", self.lr_switch_epoch.to_string());
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        put("gamma_early", g(self.gamma_early));
        put("gamma_late", g(self.gamma_late));
        put("gamma_switch_epoch", self.gamma_switch_epoch.to_string());
        put("ring_min_hops", self.ring_min_hops.to_string());
        put("ring_max_hops", self.ring_max_hops.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("augment_rotations", self.augment_rotations.to_string());
        out
    }

    /// Parse `key=value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::BadLine { line, found: content.to_string() })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        fn parse_triple(key: &str, value: &str, line: usize) -> Result<[f64; 3], ConfigError> {
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                });
            }
            Ok([
                parse(key, parts[0], line)?,
                parse(key, parts[1], line)?,
                parse(key, parts[2], line)?,
            ])
        }
        match key {
            "n_seeds" => self.n_seeds = parse(key, value, line)?,
            "d_cut" => self.d_cut = parse(key, value, line)?,
            "r_local" => self.r_local = parse(key, value, line)?,
            "r_shape" => self.r_shape = parse(key, value, line)?,
            "feat_dim" => self.feat_dim = parse(key, value, line)?,
            "sigma" => self.sigma = parse(key, value, line)?,
            "m_freqs" => self.m_freqs = parse(key, value, line)?,
            "tau" => self.tau = parse(key, value, line)?,
            "sinkhorn_iterations" => self.sinkhorn_iterations = parse(key, value, line)?,
            "n_got" => self.n_got = parse(key, value, line)?,
            "n_gfp" => self.n_gfp = parse(key, value, line)?,
            "margin" => self.margin = parse(key, value, line)?,
            "r_d" => self.r_d = parse(key, value, line)?,
            "lr_initial" => self.lr_initial = parse(key, value, line)?,
            "lr_late" => self.lr_late = parse(key, value, line)?,
            "lr_switch_epoch" => self.lr_switch_epoch = parse(key, value, line)?,
            "epochs" => self.epochs = parse(key, value, line)?,
            "seed" => self.seed = parse(key, value, line)?,
            "gamma_early" => self.gamma_early = parse_triple(key, value, line)?,
            "gamma_late" => self.gamma_late = parse_triple(key, value, line)?,
            "gamma_switch_epoch" => self.gamma_switch_epoch = parse(key, value, line)?,
            "ring_min_hops" => self.ring_min_hops = parse(key, value, line)?,
            "ring_max_hops" => self.ring_max_hops = parse(key, value, line)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value, line)?,
            "augment_rotations" => self.augment_rotations = parse(key, value, line)?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }
}
