use std::path::{Path, PathBuf};

use nasflat::archspace::SearchSpace;
use nasflat::pipeline::TrainConfig;
use nasflat::predictor::PredictorConfig;
use nasflat::sampler::SampleMethod;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub latency: Option<PathBuf>,
    pub archs: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub encoding: Option<PathBuf>,
}

/// One run's full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub space: String,
    pub seed: u64,
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub sampler: SampleMethod,
    pub samples: usize,
    /// Kind label for `--encoding` files (zcp, arch2vec, cate, caz, custom).
    pub encoding_kind: String,
    pub paths: Paths,
}

impl RunConfig {
    pub fn defaults(space: &SearchSpace) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            space: space.space_id.clone(),
            seed: 0,
            predictor: PredictorConfig::for_space(space.kind),
            train: TrainConfig::for_space(space.kind),
            sampler: SampleMethod::Cosine,
            samples: 20,
            encoding_kind: "custom".into(),
            paths: Paths::default(),
        }
    }

    /// Parses a config document: user values are laid over the defaults for
    /// the document's `space`, then checked against the schema. Errors carry
    /// a JSON pointer to the offending field.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let user: Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid JSON: {e}")))?;
        let Value::Object(obj) = &user else {
            return Err(CliError::Usage("config: / must be an object".into()));
        };
        let space_id = match obj.get("space") {
            None => "nb201",
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(CliError::Usage("config: /space must be a string".into())),
        };
        let space = SearchSpace::by_id(space_id)
            .ok_or_else(|| CliError::Usage(format!("config: /space: unknown search space {space_id:?}")))?;
        let mut merged = serde_json::to_value(Self::defaults(&space)).expect("serializable defaults");
        overlay(&mut merged, &user);
        let cfg: RunConfig = serde_path_to_error::deserialize(&merged).map_err(|e| {
            let ptr = pointer(e.path());
            CliError::Usage(format!("config: {ptr}: {}", e.inner()))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "config: /schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.predictor.validate().map_err(|m| CliError::Usage(format!("config: /predictor: {m}")))?;
        self.train.validate().map_err(|m| CliError::Usage(format!("config: /train: {m}")))?;
        if self.samples < 2 {
            return Err(CliError::Usage("config: /samples: need at least 2 target samples".into()));
        }
        if nasflat::archspace::EncodingKind::parse(&self.encoding_kind).is_none() {
            return Err(CliError::Usage(format!(
                "config: /encoding_kind: unknown kind {:?}; valid kinds: zcp, arch2vec, cate, caz, custom",
                self.encoding_kind
            )));
        }
        Ok(())
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::by_id(&self.space).expect("checked at parse time")
    }
}

/// Recursively replaces `base` entries by `user` entries; objects merge,
/// everything else is overwritten.
fn overlay(base: &mut Value, user: &Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, u) => *b = u.clone(),
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
