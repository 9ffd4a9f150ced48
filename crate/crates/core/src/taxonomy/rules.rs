//! Rules file parsing. One rule per line, tab-separated:
//! `priority<TAB>pattern<TAB>case_mode<TAB>boundary<TAB>class`.
//! Lines starting with `#` and blank lines are skipped. UTF-8 only.

use std::path::Path;

use super::{Boundary, CaseMode, KeywordRule, RuleSet, RuleSetError, VulnClass};

#[derive(Debug, thiserror::Error)]
pub enum RulesFileError {
    #[error("line {line}: expected 5 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: bad priority {value:?}")]
    BadPriority { line: usize, value: String },
    #[error("line {line}: bad case mode {value:?} (expected exact|insensitive)")]
    BadCaseMode { line: usize, value: String },
    #[error("line {line}: bad boundary {value:?} (expected whole-token|substring)")]
    BadBoundary { line: usize, value: String },
    #[error("line {line}: unknown class {value:?}")]
    BadClass { line: usize, value: String },
    #[error(transparent)]
    Invalid(#[from] RuleSetError),
    #[error("cannot read rules file: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses rules file text into a validated ruleset.
pub fn parse_rules(text: &str) -> Result<RuleSet, RulesFileError> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(RulesFileError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        let priority: u32 = fields[0].trim().parse().map_err(|_| {
            RulesFileError::BadPriority {
                line,
                value: fields[0].to_string(),
            }
        })?;
        let pattern = fields[1].to_string();
        let case_mode = match fields[2].trim() {
            "exact" => CaseMode::Exact,
            "insensitive" => CaseMode::Insensitive,
            other => {
                return Err(RulesFileError::BadCaseMode {
                    line,
                    value: other.to_string(),
                })
            }
        };
        let boundary = match fields[3].trim() {
            "whole-token" => Boundary::WholeToken,
            "substring" => Boundary::Substring,
            other => {
                return Err(RulesFileError::BadBoundary {
                    line,
                    value: other.to_string(),
                })
            }
        };
        let target: VulnClass = fields[4].trim().parse().map_err(|_| {
            RulesFileError::BadClass {
                line,
                value: fields[4].to_string(),
            }
        })?;
        rules.push(KeywordRule::new(priority, pattern, case_mode, boundary, target));
    }
    Ok(RuleSet::new(rules)?)
}

/// Reads and parses a rules file from disk.
pub fn load_rules_file(path: &Path) -> Result<RuleSet, RulesFileError> {
    let text = std::fs::read_to_string(path)?;
    parse_rules(&text)
}
