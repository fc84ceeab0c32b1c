//! Phishing classification by subject keywords.
//!
//! An email counts as phishing when its case-folded subject contains any
//! keyword as a substring. Each harvester's phishing level is the ratio
//! of phishing emails to total emails it sent; harvesters with a level
//! strictly above 0.5 are labeled phishers.

use crate::ingest::EventWindow;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhishingError {
    #[error("keyword list is empty")]
    EmptyKeywords,
    #[error("bin width {0} outside (0, 1]")]
    InvalidBinWidth(f64),
    #[error("no profiles to histogram")]
    EmptyProfiles,
}

/// Threshold above which (strictly) a harvester is labeled a phisher.
pub const PHISHER_LEVEL_THRESHOLD: f64 = 0.5;

/// Nonempty list of lowercase keywords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList(Vec<String>);

impl KeywordList {
    pub fn new(keywords: Vec<String>) -> Result<Self, PhishingError> {
        let keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        if keywords.is_empty() {
            return Err(PhishingError::EmptyKeywords);
        }
        Ok(Self(keywords))
    }

    /// Parses a keyword file: one keyword per line, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, PhishingError> {
        Self::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn keywords(&self) -> &[String] {
        &self.0
    }
}

/// Built-in keyword list; replace it via a keyword file for anything
/// beyond smoke testing.
pub fn default_keywords() -> KeywordList {
    KeywordList::new(
        ["password", "account", "paypal", "chase", "verify", "bank", "suspended"]
            .into_iter()
            .map(String::from)
            .collect(),
    )
    .expect("default list is nonempty")
}

/// True iff the case-folded subject contains any keyword as a substring.
pub fn classify_email(subject: &str, keywords: &KeywordList) -> bool {
    let folded = subject.to_lowercase();
    keywords.0.iter().any(|k| folded.contains(k.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhisherLabel {
    Phisher,
    NonPhisher,
}

/// Per-harvester phishing statistics for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhishingProfile {
    /// Harvester row index in the window.
    pub harvester: usize,
    pub phishing_emails: u64,
    pub total_emails: u64,
    pub phishing_level: f64,
    pub label: PhisherLabel,
}

/// One profile per harvester, in row-index order.
pub fn phishing_profiles(window: &EventWindow, keywords: &KeywordList) -> Vec<PhishingProfile> {
    let m = window.harvester_count();
    let mut phishing = vec![0u64; m];
    let mut total = vec![0u64; m];
    for (h, _, ev) in window.indexed_events() {
        total[h] += 1;
        if classify_email(&ev.subject, keywords) {
            phishing[h] += 1;
        }
    }
    (0..m)
        .map(|h| {
            let level = phishing[h] as f64 / total[h] as f64;
            PhishingProfile {
                harvester: h,
                phishing_emails: phishing[h],
                total_emails: total[h],
                phishing_level: level,
                label: if level > PHISHER_LEVEL_THRESHOLD {
                    PhisherLabel::Phisher
                } else {
                    PhisherLabel::NonPhisher
                },
            }
        })
        .collect()
}

/// Histogram of phishing levels over `[0, 1]`. The final bin is closed
/// so a level of exactly 1 is counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Inclusive-exclusive bounds of bin `i` (last bin closed at 1).
    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.bin_width, ((i + 1) as f64 * self.bin_width).min(1.0))
    }
}

pub fn phishing_level_histogram(
    profiles: &[PhishingProfile],
    bin_width: f64,
) -> Result<Histogram, PhishingError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(PhishingError::InvalidBinWidth(bin_width));
    }
    if profiles.is_empty() {
        return Err(PhishingError::EmptyProfiles);
    }
    let nbins = (1.0 / bin_width).ceil() as usize;
    let mut counts = vec![0u64; nbins];
    for p in profiles {
        let idx = ((p.phishing_level / bin_width).floor() as usize).min(nbins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { bin_width, counts })
}
