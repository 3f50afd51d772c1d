use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::CliError;
use crate::annotate::AnnotateConfig;
use crate::corpus::{KindAliases, SplitSpec};
use crate::crf::{Optimizer, TrainConfig};
use crate::drc::DrcConfig;
use crate::encoder::{EncoderConfig, Template};
use crate::schema::Schema;

/// Everything a command may need, read from a flat `key = value` file with
/// dotted section keys and then overridden by `--set` flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub schema: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub include_unreviewed: bool,
    pub aliases: KindAliases,
    pub encoder: EncoderConfig,
    pub crf: TrainConfig,
    pub drc: DrcConfig,
    pub annotate: AnnotateConfig,
    pub split: SplitSpec,
    pub grammar: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            schema: None,
            train: None,
            dev: None,
            test: None,
            include_unreviewed: false,
            aliases: KindAliases::new(),
            encoder: EncoderConfig::default(),
            crf: TrainConfig::default(),
            drc: DrcConfig::default(),
            annotate: AnnotateConfig::default(),
            split: SplitSpec::default(),
            grammar: None,
            output_dir: PathBuf::from("."),
        }
    }
}

/// Seed for one named component, derived from the root seed so that adding a
/// component never shifts another's stream.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    let d = Sha256::digest(format!("attrex/{name}/{root}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool, CliError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn optimizer(key: &str, v: &str) -> Result<Optimizer, CliError> {
    match v.to_ascii_lowercase().as_str() {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::Adam),
        _ => Err(CliError::config(format!("{key}: unknown optimizer {v:?}"))),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies a single setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let ep = &mut self.annotate.endpoint;
        match key {
            "seed" => self.seed = num(key, v)?,
            "schema" => self.schema = path(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "corpus.train" => self.train = path(v),
            "corpus.dev" => self.dev = path(v),
            "corpus.test" => self.test = path(v),
            "corpus.include_unreviewed" => self.include_unreviewed = boolean(key, v)?,
            "corpus.grammar" => self.grammar = path(v),
            "encoder.templates" => {
                self.encoder.templates = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        serde_json::from_value::<Template>(s.into())
                            .map_err(|_| CliError::config(format!("{key}: unknown template {s:?}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            "encoder.window" => self.encoder.window = num(key, v)?,
            "encoder.affix_cap" => self.encoder.affix_cap = num(key, v)?,
            "encoder.embeddings" => self.encoder.embeddings = path(v),
            "encoder.hash_dim" => self.encoder.hash_dim = num(key, v)?,
            "crf.epochs" => self.crf.epochs = num(key, v)?,
            "crf.batch_size" => self.crf.batch_size = num(key, v)?,
            "crf.learning_rate" => self.crf.learning_rate = num(key, v)?,
            "crf.l2" => self.crf.l2 = num(key, v)?,
            "crf.optimizer" => self.crf.optimizer = optimizer(key, v)?,
            "drc.hidden" => self.drc.hidden = list(key, v)?,
            "drc.epochs" => self.drc.epochs = num(key, v)?,
            "drc.batch_size" => self.drc.batch_size = num(key, v)?,
            "drc.learning_rate" => self.drc.learning_rate = num(key, v)?,
            "drc.l2" => self.drc.l2 = num(key, v)?,
            "drc.optimizer" => self.drc.optimizer = optimizer(key, v)?,
            "drc.threshold" => self.drc.threshold = num(key, v)?,
            "llm.base_url" => ep.base_url = v.to_string(),
            "llm.model" => ep.model = v.to_string(),
            "llm.timeout_secs" => ep.timeout_secs = num(key, v)?,
            "llm.max_retries" => ep.max_retries = num(key, v)?,
            "llm.backoff_base_secs" => ep.backoff_base_secs = num(key, v)?,
            "llm.max_in_flight" => ep.max_in_flight = num(key, v)?,
            "llm.temperature" => ep.temperature = num(key, v)?,
            "llm.api_key_env" => ep.api_key_env = (!v.is_empty()).then(|| v.to_string()),
            "llm.rounds" => self.annotate.rounds = num(key, v)?,
            "split.train" => self.split.train = num(key, v)?,
            "split.dev" => self.split.dev = num(key, v)?,
            "split.test" => self.split.test = num(key, v)?,
            _ => match key.strip_prefix("alias.") {
                Some(foreign) if !foreign.is_empty() => {
                    self.aliases.insert(foreign.to_string(), v.to_string());
                }
                _ => return Err(CliError::config(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Builds a config from file text plus overrides, then derives the
    /// component seeds from the root seed.
    pub fn build(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut pairs = match file {
            Some(text) => parse_pairs(text)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.crf.seed = sub_seed(cfg.seed, "crf");
        cfg.drc.seed = sub_seed(cfg.seed, "drc");
        cfg.split.seed = sub_seed(cfg.seed, "split");
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.encoder.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.crf.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.drc.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.annotate
            .endpoint
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.annotate.rounds == 0 {
            return Err(CliError::config("llm.rounds must be >= 1"));
        }
        self.split.validate().map_err(|e| CliError::config(e.to_string()))?;
        for (key, p) in [
            ("schema", &self.schema),
            ("corpus.grammar", &self.grammar),
            ("encoder.embeddings", &self.encoder.embeddings),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn corpus_seed(&self) -> u64 {
        sub_seed(self.seed, "corpus")
    }

    pub fn sampler_seed(&self) -> u64 {
        sub_seed(self.seed, "sampler")
    }

    /// The configured schema, or the canonical 17 kinds.
    pub fn load_schema(&self) -> Result<Schema, CliError> {
        match &self.schema {
            None => Ok(Schema::canonical()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                Schema::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Settings as sorted `key = value` pairs, for echoing into reports.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("crf.epochs".into(), self.crf.epochs.to_string());
        m.insert("crf.batch_size".into(), self.crf.batch_size.to_string());
        m.insert("crf.learning_rate".into(), self.crf.learning_rate.to_string());
        m.insert("crf.l2".into(), self.crf.l2.to_string());
        m.insert("drc.threshold".into(), self.drc.threshold.to_string());
        m.insert("encoder.hash_dim".into(), self.encoder.hash_dim.to_string());
        m
    }
}
