use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sectionrec_core::pipeline::PipelineConfig;
use sectionrec_core::synth::SynthConfig;

use crate::error::CliError;

/// Input and output locations; relative paths resolve against the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub articles: PathBuf,
    pub categories: PathBuf,
    pub types: PathBuf,
    pub type_universe: Option<PathBuf>,
    /// One title per line; the built-in list when absent.
    pub blacklist: Option<PathBuf>,
    /// Is-a judgements for the threshold sweep.
    pub annotations: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            articles: "data/articles.jsonl".into(),
            categories: "data/categories.tsv".into(),
            types: "data/types.tsv".into(),
            type_universe: Some("data/type_universe.tsv".into()),
            blacklist: None,
            annotations: Some("data/annotations.tsv".into()),
            work_dir: "work".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    /// Id of the top-level category.
    pub root: u64,
    /// Thresholds scored by `prune-graph` when annotations are available.
    pub sweep_thresholds: Vec<f64>,
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            root: 0,
            sweep_thresholds: vec![0.9, 0.92, 0.94, 0.95, 0.96, 0.966, 0.97, 0.98, 0.99],
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// The parts of a run that determine artifact contents.
#[derive(Serialize)]
struct Fingerprinted<'a> {
    root: u64,
    sweep_thresholds: &'a [f64],
    synth: &'a SynthConfig,
    pipeline: &'a PipelineConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        let p = &mut self.pipeline;
        self.synth.seed = seed;
        p.split_seed = seed;
        p.cf_article.seed = seed;
        p.cf_category.seed = seed;
        p.lda.seed = seed;
        p.l2r.seed = seed;
        p.random_seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.pipeline;
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=1.0).contains(&p.threshold) {
            return bad(format!("pipeline.threshold {} must lie in [0, 1]", p.threshold));
        }
        if let Some(t) = self.sweep_thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("sweep threshold {t} must lie in [0, 1]"));
        }
        let sum: f64 = p.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p.split_ratios.iter().any(|r| *r < 0.0) {
            return bad(format!("pipeline.split_ratios {:?} must be non-negative and sum to 1", p.split_ratios));
        }
        if !(p.holdout_fraction > 0.0 && p.holdout_fraction < 1.0) {
            return bad(format!("pipeline.holdout_fraction {} must lie in (0, 1)", p.holdout_fraction));
        }
        if p.k_max == 0 {
            return bad("pipeline.k_max must be at least 1".into());
        }
        for (name, als) in [("cf_article", &p.cf_article), ("cf_category", &p.cf_category)] {
            if als.k == 0 || als.lambda < 0.0 || als.alpha < 0.0 {
                return bad(format!("pipeline.{name}: k must be positive, lambda and alpha non-negative"));
            }
        }
        if p.lda.topics == 0 || p.lda.beta <= 0.0 || p.lda.alpha.is_some_and(|a| a <= 0.0) {
            return bad("pipeline.lda: topics must be positive, alpha and beta strictly positive".into());
        }
        Ok(())
    }

    /// SHA-256 over the seeds and hyperparameters, independent of paths.
    pub fn fingerprint(&self) -> String {
        let view = Fingerprinted {
            root: self.root,
            sweep_thresholds: &self.sweep_thresholds,
            synth: &self.synth,
            pipeline: &self.pipeline,
        };
        let bytes = serde_json::to_vec(&view).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses_and_validates() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
        let config = RunConfig::load(Some(&path)).unwrap();
        config.validate().unwrap();
        assert_eq!(config.synth.leaf_categories, 200);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = toml::from_str::<RunConfig>("[pipeline]\nthreshhold = 0.9\n").unwrap_err();
        assert!(err.to_string().contains("threshhold"));
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut config = RunConfig::default();
        config.override_seed(99);
        let p = &config.pipeline;
        let seeds = [config.synth.seed, p.split_seed, p.cf_article.seed, p.cf_category.seed, p.lda.seed, p.l2r.seed, p.random_seed];
        assert!(seeds.iter().all(|&s| s == 99));
    }

    #[test]
    fn fingerprint_tracks_parameters_not_paths() {
        let base = RunConfig::default();
        let mut moved = base.clone();
        moved.paths.work_dir = "elsewhere".into();
        assert_eq!(base.fingerprint(), moved.fingerprint());
        let mut tuned = base.clone();
        tuned.pipeline.threshold = 0.95;
        assert_ne!(base.fingerprint(), tuned.fingerprint());
        assert_eq!(base.fingerprint().len(), 64);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut config = RunConfig::default();
        config.pipeline.split_ratios = [0.5, 0.5, 0.1];
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
        let mut config = RunConfig::default();
        config.pipeline.threshold = 1.5;
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }
}
