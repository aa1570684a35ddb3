//! Rule-based scanning of free-text chest imaging reports.
//!
//! A report is positive when it mentions an ARDS term, or when it carries
//! both a bilaterality term and a non-negated opacity term. An opacity match
//! is negated when a negation term ends within `negation_window` characters
//! before the start of the match.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{Minutes, Modality, RadiologyReport};
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../lexicon/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub opacity: Vec<String>,
    pub bilaterality: Vec<String>,
    pub ards: Vec<String>,
    #[serde(default = "default_negation")]
    pub negation: Vec<String>,
    #[serde(default = "default_window")]
    pub negation_window: usize,
}

fn default_negation() -> Vec<String> {
    vec!["no".to_string()]
}

fn default_window() -> usize {
    40
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_toml(s: &str) -> Result<Lexicon> {
        let lex: Lexicon = toml::from_str(s).map_err(|e| Error::InvalidLexicon(e.to_string()))?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        Lexicon::from_toml(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("opacity", &self.opacity),
            ("bilaterality", &self.bilaterality),
            ("ards", &self.ards),
            ("negation", &self.negation),
        ] {
            if list.is_empty() {
                return Err(Error::InvalidLexicon(format!("`{name}` term list is empty")));
            }
            if list.iter().any(|t| normalize(t).is_empty()) {
                return Err(Error::InvalidLexicon(format!("`{name}` contains a blank term")));
            }
        }
        if self.negation_window == 0 {
            return Err(Error::InvalidLexicon("negation_window must be > 0".into()));
        }
        Ok(())
    }
}

/// Flags detected in a single report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReportScan {
    pub opacity: bool,
    pub bilateral: bool,
    pub ards_term: bool,
}

impl ReportScan {
    pub fn positive(&self) -> bool {
        self.ards_term || (self.opacity && self.bilateral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImagingFinding {
    pub report_time: Minutes,
    pub modality: Modality,
    pub scan: ReportScan,
}

impl ImagingFinding {
    pub fn positive(&self) -> bool {
        self.scan.positive()
    }
}

/// Lowercases and collapses whitespace runs into single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Start/end char offsets of whole-word occurrences of `term` in `text`.
fn find_terms(text: &[char], term: &[char]) -> Vec<(usize, usize)> {
    let mut hits = Vec::new();
    if term.is_empty() || term.len() > text.len() {
        return hits;
    }
    for start in 0..=text.len() - term.len() {
        let end = start + term.len();
        if text[start..end] != *term {
            continue;
        }
        let left_ok = start == 0 || !is_word(text[start - 1]);
        let right_ok = end == text.len() || !is_word(text[end]);
        if left_ok && right_ok {
            hits.push((start, end));
        }
    }
    hits
}

fn chars_of(terms: &[String]) -> Vec<Vec<char>> {
    terms.iter().map(|t| normalize(t).chars().collect()).collect()
}

pub fn scan_report(text: &str, lexicon: &Lexicon) -> ReportScan {
    let norm: Vec<char> = normalize(text).chars().collect();
    let any = |terms: &[String]| chars_of(terms).iter().any(|t| !find_terms(&norm, t).is_empty());

    let negation_ends: Vec<usize> = chars_of(&lexicon.negation)
        .iter()
        .flat_map(|t| find_terms(&norm, t))
        .map(|(_, end)| end)
        .collect();
    let window = lexicon.negation_window;
    let negated = |start: usize| negation_ends.iter().any(|&end| end <= start && start - end <= window);

    let opacity = chars_of(&lexicon.opacity)
        .iter()
        .flat_map(|t| find_terms(&norm, t))
        .any(|(start, _)| !negated(start));

    ReportScan {
        opacity,
        bilateral: any(&lexicon.bilaterality),
        ards_term: any(&lexicon.ards),
    }
}

/// Scans every report and returns the earliest positive finding, regardless
/// of modality.
pub fn first_positive_finding(reports: &[RadiologyReport], lexicon: &Lexicon) -> Option<ImagingFinding> {
    let mut order: Vec<&RadiologyReport> = reports.iter().collect();
    order.sort_by_key(|r| r.time);
    order.into_iter().find_map(|r| {
        let finding = ImagingFinding {
            report_time: r.time,
            modality: r.modality,
            scan: scan_report(&r.text, lexicon),
        };
        finding.positive().then_some(finding)
    })
}
