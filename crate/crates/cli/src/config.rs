//! Pipeline configuration: defaults, a TOML file, and command-line overrides,
//! applied in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Keys that would hold credentials. Credentials come from environment
/// variables only, so a config file containing one is rejected.
const SECRET_KEYS: [&str; 4] = ["api_key", "apikey", "token", "secret"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Language code, recorded on corpora and grammar documents.
    pub language: String,
    /// Language name used in the correction instruction.
    pub language_name: String,
    pub paths: Paths,
    pub retrieval: RetrievalConfig,
    pub embedding: EmbeddingConfig,
    pub backend: BackendConfig,
    pub modular: ModularConfig,
    pub glosser: GlosserConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            language: "und".into(),
            language_name: "the target language".into(),
            paths: Paths::default(),
            retrieval: RetrievalConfig::default(),
            embedding: EmbeddingConfig::default(),
            backend: BackendConfig::default(),
            modular: ModularConfig::default(),
            glosser: GlosserConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// File locations. Relative paths in a config file are relative to the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Glossed corpus the baseline glosser is trained on.
    pub train: Option<PathBuf>,
    /// Sentences to gloss, correct and evaluate.
    pub eval: Option<PathBuf>,
    /// Grammar documents (plain text or markdown).
    pub grammar: Vec<PathBuf>,
    /// Initial glosses from elsewhere: a PredictionSet JSON file or
    /// `sentence_id<TAB>gloss` lines. Defaults to the output of `gloss`.
    pub predictions: Option<PathBuf>,
    /// Sentences used as reranker feedback; defaults to `eval`.
    pub feedback: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub normalization_rules: Option<PathBuf>,
    pub instruction: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train: None,
            eval: None,
            grammar: Vec::new(),
            predictions: None,
            feedback: None,
            output_dir: "out".into(),
            cache_dir: "cache".into(),
            normalization_rules: None,
            instruction: None,
            annotations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub n: usize,
    pub chunk_size: usize,
    pub overlap: usize,
    /// Sentences corrected in parallel.
    pub concurrency: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 6, n: 3, chunk_size: 400, overlap: 50, concurrency: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProviderKind {
    Local,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingProviderKind,
    pub model: String,
    /// Output dimension; the provider default when unset.
    pub dim: Option<usize>,
    pub base_url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingProviderKind::Local,
            model: "text-embedding-3-small".into(),
            dim: None,
            base_url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

impl EmbeddingConfig {
    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(match self.provider {
            EmbeddingProviderKind::Local => igt_rag::grammar::LocalHashEmbedder::DEFAULT_DIM,
            EmbeddingProviderKind::Openai => 1536,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Deterministic mock that applies grammar rules found in the prompt.
    Oracle,
    /// Returns the initial gloss unchanged.
    Echo,
    Openai,
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub provider: BackendKind,
    /// Model id; the provider default when unset.
    pub model: Option<String>,
    pub base_url: Option<String>,
    /// Environment variable holding the API key; the provider default when unset.
    pub api_key_env: Option<String>,
    /// Rule table for the oracle backend (JSON list of morpheme/tag/text).
    pub rules: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig { provider: BackendKind::Anthropic, model: None, base_url: None, api_key_env: None, rules: None }
    }
}

impl BackendConfig {
    pub fn model(&self) -> &str {
        self.model.as_deref().unwrap_or(match self.provider {
            BackendKind::Openai => "gpt-4",
            BackendKind::Anthropic => "claude-3-5-sonnet-20240620",
            BackendKind::Oracle | BackendKind::Echo => "mock",
        })
    }

    pub fn base_url(&self) -> &str {
        self.base_url.as_deref().unwrap_or(match self.provider {
            BackendKind::Openai => "https://api.openai.com",
            _ => "https://api.anthropic.com",
        })
    }

    pub fn api_key_env(&self) -> &str {
        self.api_key_env.as_deref().unwrap_or(match self.provider {
            BackendKind::Openai => "OPENAI_API_KEY",
            _ => "ANTHROPIC_API_KEY",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModularConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Alternating-optimization rounds.
    pub rounds: usize,
}

impl Default for ModularConfig {
    fn default() -> Self {
        ModularConfig { alpha: 0.5, learning_rate: 1.0, epochs: 200, seed: 0, rounds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlosserConfig {
    pub smoothing: f64,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for GlosserConfig {
    fn default() -> Self {
        let t = igt_rag::glosser::TrainConfig::default();
        GlosserConfig { smoothing: t.smoothing, dev_fraction: t.dev_fraction, seed: t.seed }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub lowercase_lexical: bool,
    pub strip_lexical_punctuation: bool,
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub language: Option<String>,
    #[arg(long, global = true)]
    pub language_name: Option<String>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long = "eval-corpus", global = true)]
    pub eval: Option<PathBuf>,
    /// Grammar document; repeat for several. Replaces the configured list.
    #[arg(long, global = true)]
    pub grammar: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub feedback: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub normalization_rules: Option<PathBuf>,
    #[arg(long, global = true)]
    pub instruction: Option<PathBuf>,
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub chunk_size: Option<usize>,
    #[arg(long, global = true)]
    pub overlap: Option<usize>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub embedding_provider: Option<EmbeddingProviderKind>,
    #[arg(long, global = true)]
    pub embedding_model: Option<String>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut PipelineConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut c.language, &self.language);
        set(&mut c.language_name, &self.language_name);
        set_opt(&mut c.paths.train, &self.train);
        set_opt(&mut c.paths.eval, &self.eval);
        if !self.grammar.is_empty() {
            c.paths.grammar = self.grammar.clone();
        }
        set_opt(&mut c.paths.predictions, &self.predictions);
        set_opt(&mut c.paths.feedback, &self.feedback);
        set(&mut c.paths.output_dir, &self.output_dir);
        set(&mut c.paths.cache_dir, &self.cache_dir);
        set_opt(&mut c.paths.normalization_rules, &self.normalization_rules);
        set_opt(&mut c.paths.instruction, &self.instruction);
        set_opt(&mut c.paths.annotations, &self.annotations);
        set(&mut c.retrieval.k, &self.k);
        set(&mut c.retrieval.n, &self.n);
        set(&mut c.retrieval.chunk_size, &self.chunk_size);
        set(&mut c.retrieval.overlap, &self.overlap);
        set(&mut c.retrieval.concurrency, &self.concurrency);
        set(&mut c.embedding.provider, &self.embedding_provider);
        set(&mut c.embedding.model, &self.embedding_model);
        set_opt(&mut c.embedding.dim, &self.embedding_dim);
        set(&mut c.backend.provider, &self.backend);
        set_opt(&mut c.backend.model, &self.model);
        set_opt(&mut c.backend.base_url, &self.backend_url);
        set_opt(&mut c.backend.api_key_env, &self.api_key_env);
        set_opt(&mut c.backend.rules, &self.rules);
        set(&mut c.modular.alpha, &self.alpha);
        set(&mut c.modular.learning_rate, &self.learning_rate);
        set(&mut c.modular.epochs, &self.epochs);
        set(&mut c.modular.seed, &self.seed);
        set(&mut c.modular.rounds, &self.rounds);
    }
}

fn find_secret(value: &toml::Value, path: &str) -> Option<String> {
    match value {
        toml::Value::Table(t) => t.iter().find_map(|(k, v)| {
            let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                Some(here)
            } else {
                find_secret(v, &here)
            }
        }),
        _ => None,
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if let Some(key) = find_secret(&value, "") {
            return Err(CliError::Usage(format!(
                "config key `{key}` looks like a credential; API keys are read from the environment variable named by `api_key_env`"
            )));
        }
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks ranges and cross-field constraints.
    pub fn validate(&self) -> Result<(), CliError> {
        let r = &self.retrieval;
        let bad = |m: String| Err(CliError::Usage(m));
        if r.chunk_size == 0 || r.overlap >= r.chunk_size {
            return bad(format!("need 0 <= overlap < chunk_size, got overlap {} and chunk_size {}", r.overlap, r.chunk_size));
        }
        if r.n == 0 || r.n > r.k {
            return bad(format!("need 1 <= n <= k, got n={} k={}", r.n, r.k));
        }
        if r.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.embedding.dim() == 0 {
            return bad("embedding dimension must be positive".into());
        }
        let m = &self.modular;
        if !(m.alpha >= 0.0 && m.alpha.is_finite()) || !(m.learning_rate > 0.0 && m.learning_rate.is_finite()) {
            return bad("alpha must be >= 0 and learning_rate > 0".into());
        }
        if m.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        let g = &self.glosser;
        if g.smoothing.is_nan() || g.smoothing <= 0.0 || !(0.0..1.0).contains(&g.dev_fraction) {
            return bad("glosser smoothing must be > 0 and dev_fraction in [0, 1)".into());
        }
        if self.backend.provider == BackendKind::Oracle && self.backend.rules.is_none() {
            return bad("the oracle backend needs a rules file (backend.rules or --rules)".into());
        }
        Ok(())
    }
}

/// A validated configuration plus the directory its relative paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub base: PathBuf,
    /// Path of the config file, if one was read.
    pub config_file: Option<PathBuf>,
    pub no_cache: bool,
    /// Unix time recorded in manifests; the current time when unset.
    pub timestamp: Option<u64>,
}

impl Pipeline {
    /// Builds the configuration from defaults, `config_file`, then `overrides`.
    /// Override paths are taken relative to the working directory.
    pub fn load(config_file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let cwd = std::env::current_dir().map_err(|e| CliError::io(".", e))?;
        let (mut config, base) = match config_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let config = PipelineConfig::from_toml(&text)?;
                let base = path.parent().map(|p| cwd.join(p)).unwrap_or_else(|| cwd.clone());
                (config, base)
            }
            None => (PipelineConfig::default(), cwd.clone()),
        };
        let mut o = overrides.clone();
        for p in [
            &mut o.train,
            &mut o.eval,
            &mut o.predictions,
            &mut o.feedback,
            &mut o.output_dir,
            &mut o.cache_dir,
            &mut o.normalization_rules,
            &mut o.instruction,
            &mut o.annotations,
            &mut o.rules,
        ]
        .into_iter()
        .flatten()
        {
            *p = cwd.join(&*p);
        }
        for g in &mut o.grammar {
            *g = cwd.join(&*g);
        }
        o.apply(&mut config);
        Pipeline::new(config, base, config_file.map(|p| cwd.join(p)))
    }

    pub fn new(config: PipelineConfig, base: PathBuf, config_file: Option<PathBuf>) -> Result<Self, CliError> {
        config.validate()?;
        Ok(Pipeline { config, base, config_file, no_cache: false, timestamp: None })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.resolve(&self.config.paths.output_dir).join(name)
    }

    /// `p` relative to the base directory when it lies inside it, for
    /// manifests that do not depend on where the run happened.
    pub fn display(&self, p: &Path) -> String {
        p.strip_prefix(&self.base).unwrap_or(p).display().to_string()
    }

    pub fn require(&self, p: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        p.as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| CliError::Usage(format!("no {what} configured (set paths.{what} or pass the flag)")))
    }

    pub fn now(&self) -> u64 {
        self.timestamp.unwrap_or_else(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!((c.retrieval.k, c.retrieval.n, c.retrieval.chunk_size, c.retrieval.overlap), (6, 3, 400, 50));
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c = PipelineConfig::from_toml("[retrieval]\nk = 10\n").unwrap();
        assert_eq!(c.retrieval.k, 10);
        assert_eq!(c.retrieval.n, 3);
    }

    #[test]
    fn flags_override_file() {
        let mut c = PipelineConfig::from_toml("[retrieval]\nk = 10\nn = 2\n").unwrap();
        Overrides { k: Some(8), ..Default::default() }.apply(&mut c);
        assert_eq!((c.retrieval.k, c.retrieval.n), (8, 2));
    }

    #[test]
    fn credentials_in_files_are_rejected() {
        let err = PipelineConfig::from_toml("[backend]\napi_key = \"sk-123\"\n").unwrap_err();
        assert!(err.to_string().contains("backend.api_key"), "{err}");
        assert!(PipelineConfig::from_toml("[backend]\napi_key_env = \"MY_KEY\"\n").is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[retrieval]\ntop_k = 3\n").is_err());
    }

    #[test]
    fn invalid_ranges_fail_validation() {
        let mut c = PipelineConfig { backend: BackendConfig { provider: BackendKind::Echo, ..Default::default() }, ..Default::default() };
        assert!(c.validate().is_ok());
        c.retrieval.n = 7;
        assert!(c.validate().is_err());
        c.retrieval.n = 3;
        c.retrieval.overlap = 400;
        assert!(c.validate().is_err());
        c.retrieval.overlap = 50;
        c.backend.provider = BackendKind::Oracle;
        assert!(c.validate().is_err());
    }
}
