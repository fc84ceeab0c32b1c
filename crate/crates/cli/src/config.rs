//! Pipeline configuration: key=value config file plus flag overrides.

use crate::{CliError, CliResult};
use harvnet::ingest::{LogFormat, YearMonth};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

/// Parsed key=value config file. Lines are `key = value`; `#` starts a
/// comment; blank lines are ignored.
#[derive(Debug, Default, Clone)]
pub struct KeyValueConfig(HashMap<String, String>);

impl KeyValueConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected `key = value`, got {raw:?}",
                    idx + 1
                ))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text)
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// "auto" or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoOrInt {
    Auto,
    Fixed(usize),
}

impl AutoOrInt {
    pub fn parse(raw: &str, what: &str) -> CliResult<Self> {
        if raw == "auto" {
            return Ok(Self::Auto);
        }
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self::Fixed(n)),
            _ => Err(CliError::Usage(format!(
                "{what} must be \"auto\" or a positive integer, got {raw:?}"
            ))),
        }
    }
}

impl std::fmt::Display for AutoOrInt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Auto => write!(f, "auto"),
            Self::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    ServerUsage,
    Temporal,
}

impl SimilarityKind {
    pub fn parse(raw: &str) -> CliResult<Self> {
        match raw {
            "server-usage" => Ok(Self::ServerUsage),
            "temporal" => Ok(Self::Temporal),
            other => Err(CliError::Usage(format!(
                "similarity must be server-usage or temporal, got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ServerUsage => "server-usage",
            Self::Temporal => "temporal",
        }
    }
}

pub fn parse_format(raw: &str) -> CliResult<LogFormat> {
    raw.parse::<LogFormat>().map_err(CliError::Usage)
}

pub fn parse_month(raw: &str) -> CliResult<YearMonth> {
    raw.parse::<YearMonth>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_f64(raw: &str, what: &str) -> CliResult<f64> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("{what} must be a number, got {raw:?}")))
}

fn parse_usize(raw: &str, what: &str) -> CliResult<usize> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("{what} must be a nonnegative integer, got {raw:?}")))
}

/// Fully resolved pipeline settings: flag, else config-file entry, else
/// default.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub format: LogFormat,
    pub month: YearMonth,
    pub similarity: SimilarityKind,
    pub k: AutoOrInt,
    pub big_k: AutoOrInt,
    pub keywords: Option<PathBuf>,
    pub min_component_size: usize,
    pub lambda_floor: f64,
    pub eig_tol: f64,
    pub out: PathBuf,
    pub dump_matrices: Option<PathBuf>,
}

pub struct RawSettings<'a> {
    pub file: &'a KeyValueConfig,
    pub format: Option<&'a str>,
    pub month: Option<&'a str>,
    pub similarity: Option<&'a str>,
    pub k: Option<&'a str>,
    pub big_k: Option<&'a str>,
    pub keywords: Option<&'a Path>,
    pub min_component_size: Option<usize>,
    pub lambda_floor: Option<f64>,
    pub eig_tol: Option<f64>,
    pub out: Option<&'a Path>,
    pub dump_matrices: Option<&'a Path>,
}

impl RawSettings<'_> {
    pub fn resolve(self) -> CliResult<PipelineSettings> {
        let file = self.file;
        let pick = |flag: Option<&str>, key: &str| -> Option<String> {
            flag.map(str::to_string)
                .or_else(|| file.get(key).map(str::to_string))
        };

        let month = pick(self.month, "month")
            .ok_or_else(|| CliError::Usage("missing required --month (or `month` in config)".into()))?;
        let format = pick(self.format, "format").unwrap_or_else(|| "csv".into());
        let similarity = pick(self.similarity, "similarity").unwrap_or_else(|| "server-usage".into());
        let k = pick(self.k, "k").unwrap_or_else(|| "auto".into());
        let big_k = pick(self.big_k, "K").unwrap_or_else(|| "auto".into());
        let keywords = self
            .keywords
            .map(Path::to_path_buf)
            .or_else(|| file.get("keywords").map(PathBuf::from));
        let min_component_size = match self.min_component_size {
            Some(v) => v,
            None => match file.get("min_component_size") {
                Some(raw) => parse_usize(raw, "min_component_size")?,
                None => 10,
            },
        };
        let lambda_floor = match self.lambda_floor {
            Some(v) => v,
            None => match file.get("lambda_floor") {
                Some(raw) => parse_f64(raw, "lambda_floor")?,
                None => 0.5,
            },
        };
        let eig_tol = match self.eig_tol {
            Some(v) => v,
            None => match file.get("eig_tol") {
                Some(raw) => parse_f64(raw, "eig_tol")?,
                None => 1e-8,
            },
        };
        let out = self
            .out
            .map(Path::to_path_buf)
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let dump_matrices = self
            .dump_matrices
            .map(Path::to_path_buf)
            .or_else(|| file.get("dump_matrices").map(PathBuf::from));

        Ok(PipelineSettings {
            format: parse_format(&format)?,
            month: parse_month(&month)?,
            similarity: SimilarityKind::parse(&similarity)?,
            k: AutoOrInt::parse(&k, "k")?,
            big_k: AutoOrInt::parse(&big_k, "K")?,
            keywords,
            min_component_size,
            lambda_floor,
            eig_tol,
            out,
            dump_matrices,
        })
    }
}
