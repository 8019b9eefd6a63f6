//! Run configuration: defaults, then an optional TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use nightawb_core::env::EnvConfig;
use nightawb_core::image::downsample;
use nightawb_core::sac::TrainerConfig;
use nightawb_core::{Dataset, DatasetEntry, LinearImage, LoadOptions, SgpParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub black_level: f64,
    pub white_point: Option<f64>,
    pub saturation_level: f64,
    /// Area downsampling factor `1/k` applied after loading.
    pub downsample: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            black_level: 0.0,
            white_point: None,
            saturation_level: LoadOptions::default().saturation_level,
            downsample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub size: usize,
    pub noise_sigma: f64,
    pub gray_fraction: f64,
    pub patch_grid: usize,
    pub exposure_peak: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 10,
            size: 128,
            noise_sigma: 0.0,
            gray_fraction: 0.5,
            patch_grid: 16,
            exposure_peak: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// `first-M` or a comma-separated list of image ids.
    pub pool: String,
    pub load: LoadConfig,
    pub sgp: SgpParams,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: None,
            out: None,
            checkpoint: None,
            pool: "first-5".into(),
            load: LoadConfig::default(),
            sgp: SgpParams::default(),
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub pool: Option<String>,
    pub no_filters: bool,
    pub desk_scale: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Some(v) = &o.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &o.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = &o.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        if let Some(v) = &o.pool {
            cfg.pool = v.clone();
        }
        if o.no_filters {
            cfg.sgp.filters_enabled = false;
        }
        if o.desk_scale {
            let d = TrainerConfig::desk_scale();
            cfg.trainer.n_envs = d.n_envs;
            cfg.trainer.total_timesteps = d.total_timesteps;
        }
        // the environment always runs the estimator configured at top level
        cfg.env.sgp = cfg.sgp;
        cfg.trainer.sac.net.hist_dim = cfg.env.histogram.dim();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sgp.validate()?;
        self.env.validate()?;
        self.trainer.validate()?;
        let l = &self.load;
        if !(l.downsample > 0.0 && l.downsample <= 1.0) {
            return Err(CliError::config(format!("load.downsample {} outside (0, 1]", l.downsample)));
        }
        if let Some(path) = &self.dataset {
            if !path.is_dir() {
                return Err(CliError::config(format!("dataset {} is not a directory", path.display())));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the resolved configuration, leaving out the output
    /// directory so reruns into different directories compare equal.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn header(&self) -> String {
        format!("# seed={},config_hash={}", self.seed, self.hash())
    }

    pub fn require_dataset(&self) -> Result<Dataset, CliError> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::config("--dataset is required"))?;
        let ds = Dataset::open(path)?;
        if ds.is_empty() {
            return Err(CliError::data(format!("no PNG images in {}", path.display())));
        }
        Ok(ds)
    }

    pub fn require_out(&self) -> Result<&Path, CliError> {
        let out = self.out.as_deref().ok_or_else(|| CliError::config("--out is required"))?;
        fs::create_dir_all(out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
        Ok(out)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            black_level: self.load.black_level,
            white_point: self.load.white_point,
            bit_depth: None,
            saturation_level: self.load.saturation_level,
        }
    }

    pub fn load_image(&self, entry: &DatasetEntry) -> Result<LinearImage, CliError> {
        let img = entry.load(&self.load_options())?;
        Ok(downsample(&img, self.load.downsample)?)
    }

    /// Curriculum pool entries in the order given.
    pub fn select_pool<'a>(&self, ds: &'a Dataset) -> Result<Vec<&'a DatasetEntry>, CliError> {
        let spec = self.pool.trim();
        if let Some(m) = spec.strip_prefix("first-") {
            let m: usize = m
                .parse()
                .map_err(|_| CliError::config(format!("bad pool {spec:?}")))?;
            if m == 0 || m > ds.len() {
                return Err(CliError::config(format!(
                    "pool {spec:?} needs between 1 and {} images",
                    ds.len()
                )));
            }
            return Ok(ds.entries[..m].iter().collect());
        }
        let ids: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if ids.is_empty() {
            return Err(CliError::config("empty pool"));
        }
        ids.iter()
            .map(|id| {
                ds.find(id)
                    .ok_or_else(|| CliError::config(format!("pool image {id:?} not in dataset")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 5\npool = \"a,b\"\n[sgp]\nn_percent = 2.0\n").unwrap();
        let o = Overrides { config: Some(path.clone()), ..Overrides::default() };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!((c.seed, c.pool.as_str(), c.sgp.n_percent), (5, "a,b", 2.0));
        assert_eq!(c.env.sgp, c.sgp);
        let o = Overrides { config: Some(path), seed: Some(9), pool: Some("first-1".into()), no_filters: true, ..Overrides::default() };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!((c.seed, c.pool.as_str()), (9, "first-1"));
        assert!(!c.env.sgp.filters_enabled);
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = RunConfig::default();
        let b = RunConfig { out: Some("/tmp/x".into()), ..RunConfig::default() };
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn pool_selection() {
        let dir = tempfile::tempdir().unwrap();
        let img = LinearImage::new(2, 2, vec![0.1; 12], 16, 1.0).unwrap();
        for id in ["1", "2", "3", "4", "5", "6", "7"] {
            nightawb_core::image::write_linear_png(&img, dir.path().join(format!("{id}.png"))).unwrap();
        }
        let ds = Dataset::open(dir.path()).unwrap();
        let cfg = RunConfig::default();
        let ids: Vec<&str> = cfg.select_pool(&ds).unwrap().iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3", "4", "5"]);
        let cfg = RunConfig { pool: "7, 2".into(), ..RunConfig::default() };
        let ids: Vec<&str> = cfg.select_pool(&ds).unwrap().iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["7", "2"]);
        for bad in ["first-0", "first-8", "first-x", "9", ""] {
            let cfg = RunConfig { pool: bad.into(), ..RunConfig::default() };
            assert_eq!(cfg.select_pool(&ds).unwrap_err().code, 2, "{bad}");
        }
    }
}
