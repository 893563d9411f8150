//! Run configuration: a flat dotted-key TOML file plus CLI flag overrides
//! (flags win). `cmd_fit` echoes the fully resolved configuration back to
//! disk so a run can be reproduced from one file.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sampler::SamplerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
}

/// Everything a fit/summarize/predict run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub sampler: SamplerConfig,
    pub n_draws: usize,
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            schema_path: None,
            out_dir: PathBuf::from("out"),
            sampler: SamplerConfig::default(),
            n_draws: 4000,
            level: 0.95,
        }
    }
}

fn get_f64(v: &toml::Value, key: &str) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            reason: "expected a number".into(),
        }),
    }
}

fn get_usize(v: &toml::Value, key: &str) -> Result<usize, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            reason: "expected a nonnegative integer".into(),
        }),
    }
}

fn get_u64(v: &toml::Value, key: &str) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            reason: "expected a nonnegative integer".into(),
        }),
    }
}

fn get_str(v: &toml::Value, key: &str) -> Result<String, ConfigError> {
    v.as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| ConfigError::BadValue {
            key: key.into(),
            reason: "expected a string".into(),
        })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        config.merge_toml_str(text)?;
        Ok(config)
    }

    /// Applies every key present in the document on top of the current
    /// values, leaving absent keys untouched.
    pub fn merge_toml_str(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| ConfigError::Parse(format!("{e}")))?;
        for (section, value) in &table {
            let sub = value
                .as_table()
                .ok_or_else(|| ConfigError::BadValue {
                    key: section.clone(),
                    reason: "expected a dotted key (section.value)".into(),
                })?;
            for (key, v) in sub {
                let full = format!("{section}.{key}");
                match full.as_str() {
                    "data.path" => self.data_path = Some(PathBuf::from(get_str(v, &full)?)),
                    "data.schema" => self.schema_path = Some(PathBuf::from(get_str(v, &full)?)),
                    "data.bins" => self.sampler.k_bins = get_usize(v, &full)?,
                    "prior.gamma" => self.sampler.prior.gamma = get_f64(v, &full)?,
                    "prior.theta" => self.sampler.prior.theta = get_f64(v, &full)?,
                    "prior.min_node_size" => {
                        self.sampler.prior.min_node_size = get_usize(v, &full)?
                    }
                    "moves.grow" => self.sampler.moves.p_grow = get_f64(v, &full)?,
                    "moves.prune" => self.sampler.moves.p_prune = get_f64(v, &full)?,
                    "moves.change" => self.sampler.moves.p_change = get_f64(v, &full)?,
                    "moves.swap" => self.sampler.moves.p_swap = get_f64(v, &full)?,
                    "moves.adjacent" => self.sampler.moves.p_adjacent = get_f64(v, &full)?,
                    "tempering.chains" => self.sampler.chains = get_usize(v, &full)?,
                    "tempering.t_min" => self.sampler.t_min = get_f64(v, &full)?,
                    "tempering.swap_interval" => {
                        self.sampler.swap_interval = get_usize(v, &full)?
                    }
                    "run.iterations" => self.sampler.iterations = get_usize(v, &full)?,
                    "run.burn_in" => self.sampler.burn_in = get_usize(v, &full)?,
                    "run.thin" => self.sampler.thin = get_usize(v, &full)?,
                    "run.seed" => self.sampler.seed = get_u64(v, &full)?,
                    "run.threads" => self.sampler.threads = get_usize(v, &full)?,
                    "run.diag_interval" => self.sampler.diag_interval = get_usize(v, &full)?,
                    "run.out" => self.out_dir = PathBuf::from(get_str(v, &full)?),
                    "eb.tau_scale" => self.sampler.eb.tau_prior_scale = get_f64(v, &full)?,
                    "eb.length_scale" => self.sampler.eb.length_prior_scale = get_f64(v, &full)?,
                    "posterior.draws" => self.n_draws = get_usize(v, &full)?,
                    "posterior.level" => self.level = get_f64(v, &full)?,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: other.to_string(),
                            reason: "unknown configuration key".into(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializes the fully resolved configuration with flat dotted keys in
    /// a fixed order.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.data_path {
            out.push_str(&format!("data.path = {:?}\n", p.display().to_string()));
        }
        if let Some(p) = &self.schema_path {
            out.push_str(&format!("data.schema = {:?}\n", p.display().to_string()));
        }
        out.push_str(&format!("data.bins = {}\n", self.sampler.k_bins));
        out.push_str(&format!("prior.gamma = {:?}\n", self.sampler.prior.gamma));
        out.push_str(&format!("prior.theta = {:?}\n", self.sampler.prior.theta));
        out.push_str(&format!(
            "prior.min_node_size = {}\n",
            self.sampler.prior.min_node_size
        ));
        out.push_str(&format!("moves.grow = {:?}\n", self.sampler.moves.p_grow));
        out.push_str(&format!("moves.prune = {:?}\n", self.sampler.moves.p_prune));
        out.push_str(&format!(
            "moves.change = {:?}\n",
            self.sampler.moves.p_change
        ));
        out.push_str(&format!("moves.swap = {:?}\n", self.sampler.moves.p_swap));
        out.push_str(&format!(
            "moves.adjacent = {:?}\n",
            self.sampler.moves.p_adjacent
        ));
        out.push_str(&format!("tempering.chains = {}\n", self.sampler.chains));
        out.push_str(&format!("tempering.t_min = {:?}\n", self.sampler.t_min));
        out.push_str(&format!(
            "tempering.swap_interval = {}\n",
            self.sampler.swap_interval
        ));
        out.push_str(&format!("run.iterations = {}\n", self.sampler.iterations));
        out.push_str(&format!("run.burn_in = {}\n", self.sampler.burn_in));
        out.push_str(&format!("run.thin = {}\n", self.sampler.thin));
        out.push_str(&format!("run.seed = {}\n", self.sampler.seed));
        out.push_str(&format!("run.threads = {}\n", self.sampler.threads));
        out.push_str(&format!(
            "run.diag_interval = {}\n",
            self.sampler.diag_interval
        ));
        out.push_str(&format!(
            "run.out = {:?}\n",
            self.out_dir.display().to_string()
        ));
        out.push_str(&format!(
            "eb.tau_scale = {:?}\n",
            self.sampler.eb.tau_prior_scale
        ));
        out.push_str(&format!(
            "eb.length_scale = {:?}\n",
            self.sampler.eb.length_prior_scale
        ));
        out.push_str(&format!("posterior.draws = {}\n", self.n_draws));
        out.push_str(&format!("posterior.level = {:?}\n", self.level));
        out
    }
}
