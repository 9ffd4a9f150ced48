//! Vulnerability class taxonomy and the keyword rule engine that maps free
//! text onto it.
//!
//! Classification is first-match over a priority-ordered rulebook: each rule
//! is a literal phrase or token with a case mode and a boundary mode. Text
//! that matches no rule falls into [`VulnClass::Other`].

mod rules;

pub use rules::{load_rules_file, parse_rules, RulesFileError};

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Closed set of vulnerability classes. `Other` is the fallback bucket for
/// anything unmatched, including generic arbitrary-code-execution listings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VulnClass {
    Injection,
    BrokenAuthentication,
    CrossSiteRequestForgery,
    ServerSideRequestForgery,
    CrossSiteScripting,
    RemoteCodeExecution,
    RemoteCommandExecution,
    DenialOfService,
    BufferOverflow,
    PrivilegeEscalation,
    ArbitraryFileManipulation,
    DirectoryTraversal,
    Other,
}

impl VulnClass {
    pub const ALL: [VulnClass; 13] = [
        VulnClass::Injection,
        VulnClass::BrokenAuthentication,
        VulnClass::CrossSiteRequestForgery,
        VulnClass::ServerSideRequestForgery,
        VulnClass::CrossSiteScripting,
        VulnClass::RemoteCodeExecution,
        VulnClass::RemoteCommandExecution,
        VulnClass::DenialOfService,
        VulnClass::BufferOverflow,
        VulnClass::PrivilegeEscalation,
        VulnClass::ArbitraryFileManipulation,
        VulnClass::DirectoryTraversal,
        VulnClass::Other,
    ];

    pub const COUNT: usize = Self::ALL.len();

    /// Canonical serialized name, also the sort key for ranking tie-breaks.
    pub fn canonical_name(self) -> &'static str {
        match self {
            VulnClass::Injection => "injection",
            VulnClass::BrokenAuthentication => "broken-authentication",
            VulnClass::CrossSiteRequestForgery => "csrf",
            VulnClass::ServerSideRequestForgery => "ssrf",
            VulnClass::CrossSiteScripting => "xss",
            VulnClass::RemoteCodeExecution => "remote-code-execution",
            VulnClass::RemoteCommandExecution => "remote-command-execution",
            VulnClass::DenialOfService => "denial-of-service",
            VulnClass::BufferOverflow => "buffer-overflow",
            VulnClass::PrivilegeEscalation => "privilege-escalation",
            VulnClass::ArbitraryFileManipulation => "arbitrary-file-manipulation",
            VulnClass::DirectoryTraversal => "directory-traversal",
            VulnClass::Other => "other",
        }
    }

    /// Human-readable label for report output.
    pub fn display_name(self) -> &'static str {
        match self {
            VulnClass::Injection => "Injection",
            VulnClass::BrokenAuthentication => "Broken Authentication",
            VulnClass::CrossSiteRequestForgery => "Cross-Site Request Forgery",
            VulnClass::ServerSideRequestForgery => "Server-Side Request Forgery",
            VulnClass::CrossSiteScripting => "Cross-Site Scripting",
            VulnClass::RemoteCodeExecution => "Remote Code Execution",
            VulnClass::RemoteCommandExecution => "Remote Command Execution",
            VulnClass::DenialOfService => "Denial of Service",
            VulnClass::BufferOverflow => "Buffer Overflow",
            VulnClass::PrivilegeEscalation => "Privilege Escalation",
            VulnClass::ArbitraryFileManipulation => "Arbitrary File Manipulation",
            VulnClass::DirectoryTraversal => "Directory Traversal",
            VulnClass::Other => "Other",
        }
    }

    /// Stable dense index into per-class count arrays.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("member")
    }

    /// All classes ordered by canonical name, the ordering used wherever
    /// classes appear in rendered output.
    pub fn all_by_name() -> [VulnClass; 13] {
        let mut all = Self::ALL;
        all.sort_by_key(|c| c.canonical_name());
        all
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl FromStr for VulnClass {
    type Err = UnknownClassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnClass::ALL
            .iter()
            .copied()
            .find(|c| c.canonical_name() == s)
            .ok_or_else(|| UnknownClassError(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown vulnerability class {0:?}")]
pub struct UnknownClassError(pub String);

impl Serialize for VulnClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for VulnClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Splits on any character that is not a letter, digit, or hyphen. Case is
/// preserved; empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|ch: char| !(ch.is_alphanumeric() || ch == '-'))
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseMode {
    Exact,
    Insensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    WholeToken,
    Substring,
}

/// One entry of the rulebook: a literal pattern bound to a target class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordRule {
    pub priority: u32,
    pub pattern: String,
    pub case_mode: CaseMode,
    pub boundary: Boundary,
    pub target: VulnClass,
    /// Pattern pre-lowered for insensitive matching.
    pattern_folded: String,
}

impl KeywordRule {
    pub fn new(
        priority: u32,
        pattern: impl Into<String>,
        case_mode: CaseMode,
        boundary: Boundary,
        target: VulnClass,
    ) -> KeywordRule {
        let pattern = pattern.into();
        let pattern_folded = pattern.to_lowercase();
        KeywordRule {
            priority,
            pattern,
            case_mode,
            boundary,
            target,
            pattern_folded,
        }
    }

    fn matches(&self, text: &str, text_folded: &str, tokens: &[&str]) -> bool {
        match (self.boundary, self.case_mode) {
            (Boundary::Substring, CaseMode::Exact) => text.contains(&self.pattern),
            (Boundary::Substring, CaseMode::Insensitive) => {
                text_folded.contains(&self.pattern_folded)
            }
            (Boundary::WholeToken, CaseMode::Exact) => {
                tokens.iter().any(|t| *t == self.pattern)
            }
            (Boundary::WholeToken, CaseMode::Insensitive) => tokens
                .iter()
                .any(|t| t.to_lowercase() == self.pattern_folded),
        }
    }
}

/// Outcome of classifying one piece of text. `matched_rule` is present
/// exactly when the class is not `Other`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationResult<'a> {
    pub class: VulnClass,
    pub matched_rule: Option<&'a KeywordRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleSetError {
    #[error("rule {index} has an empty pattern")]
    EmptyPattern { index: usize },
    #[error("duplicate priority {priority}")]
    DuplicatePriority { priority: u32 },
    #[error("rule with priority {priority} targets the fallback class `other`")]
    OtherTarget { priority: u32 },
    #[error("no rule covers class {0}")]
    UncoveredClass(&'static str),
}

/// Priority-ordered set of keyword rules covering every class except `Other`.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<KeywordRule>,
}

impl RuleSet {
    /// Validates and sorts the rules by ascending priority.
    pub fn new(mut rules: Vec<KeywordRule>) -> Result<RuleSet, RuleSetError> {
        for (index, rule) in rules.iter().enumerate() {
            if rule.pattern.is_empty() {
                return Err(RuleSetError::EmptyPattern { index });
            }
            if rule.target == VulnClass::Other {
                return Err(RuleSetError::OtherTarget {
                    priority: rule.priority,
                });
            }
        }
        rules.sort_by_key(|r| r.priority);
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(RuleSetError::DuplicatePriority {
                    priority: pair[0].priority,
                });
            }
        }
        for class in VulnClass::ALL {
            if class != VulnClass::Other && !rules.iter().any(|r| r.target == class) {
                return Err(RuleSetError::UncoveredClass(class.canonical_name()));
            }
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[KeywordRule] {
        &self.rules
    }

    /// First-match classification; `Other` when nothing matches.
    pub fn classify(&self, text: &str) -> ClassificationResult<'_> {
        let text_folded = text.to_lowercase();
        let tokens = tokenize(text);
        for rule in &self.rules {
            if rule.matches(text, &text_folded, &tokens) {
                return ClassificationResult {
                    class: rule.target,
                    matched_rule: Some(rule),
                };
            }
        }
        ClassificationResult {
            class: VulnClass::Other,
            matched_rule: None,
        }
    }

    /// Classifies a batch of titles, in order.
    pub fn classify_batch<S: AsRef<str> + Sync>(&self, titles: &[S]) -> Vec<VulnClass> {
        #[cfg(feature = "parallel")]
        if titles.len() >= CLASSIFY_PAR_MIN {
            return self.classify_batch_par(titles);
        }
        self.classify_batch_seq(titles)
    }

    pub fn classify_batch_seq<S: AsRef<str>>(&self, titles: &[S]) -> Vec<VulnClass> {
        titles
            .iter()
            .map(|t| self.classify(t.as_ref()).class)
            .collect()
    }

    #[cfg(feature = "parallel")]
    pub fn classify_batch_par<S: AsRef<str> + Sync>(&self, titles: &[S]) -> Vec<VulnClass> {
        use rayon::prelude::*;
        titles
            .par_iter()
            .map(|t| self.classify(t.as_ref()).class)
            .collect()
    }
}

/// Below this batch size the rayon dispatch overhead is not worth taking.
#[cfg(feature = "parallel")]
pub(crate) const CLASSIFY_PAR_MIN: usize = 128;

/// The built-in rulebook, embedded from `default.rules`.
pub fn default_ruleset() -> RuleSet {
    static DEFAULT_RULES: &str = include_str!("default.rules");
    parse_rules(DEFAULT_RULES).expect("built-in rulebook is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_non_word_chars() {
        assert_eq!(
            tokenize("SQL Injection in FooCMS 2.1!"),
            vec!["SQL", "Injection", "in", "FooCMS", "2", "1"]
        );
        assert_eq!(tokenize(""), Vec::<&str>::new());
        assert_eq!(tokenize("Cross-Site Scripting"), vec!["Cross-Site", "Scripting"]);
        assert_eq!(tokenize("  ~~!!  "), Vec::<&str>::new());
    }

    #[test]
    fn default_ruleset_contents() {
        let rules = default_ruleset();
        let has = |pattern: &str, target: VulnClass| {
            rules
                .rules()
                .iter()
                .any(|r| r.pattern == pattern && r.target == target)
        };
        assert!(has("sql", VulnClass::Injection));
        assert!(has("injection", VulnClass::Injection));
        assert!(has("path traversal", VulnClass::DirectoryTraversal));
        assert!(has("cross-site scripting", VulnClass::CrossSiteScripting));
        assert!(has("overflow", VulnClass::BufferOverflow));
        assert!(rules.rules().iter().all(|r| r.target != VulnClass::Other));
        // Every class except the fallback is reachable.
        for class in VulnClass::ALL {
            if class != VulnClass::Other {
                assert!(rules.rules().iter().any(|r| r.target == class));
            }
        }
    }

    #[test]
    fn classify_first_match_by_priority() {
        let rules = default_ruleset();
        // Phrase rules outrank the bare "injection" substring.
        let r = rules.classify("Remote Code Execution via SQL Injection");
        assert_eq!(r.class, VulnClass::RemoteCodeExecution);
        assert_eq!(r.matched_rule.unwrap().pattern, "remote code execution");
    }

    #[test]
    fn classify_spec_titles() {
        let rules = default_ruleset();
        assert_eq!(
            rules.classify("WordPress Plugin SQL Injection").class,
            VulnClass::Injection
        );
        assert_eq!(rules.classify("").class, VulnClass::Other);
        assert_eq!(
            rules
                .classify("Persistent Cross-Site Scripting in login form")
                .class,
            VulnClass::CrossSiteScripting
        );
        // Whole-token, case-sensitive "DoS" must not fire inside "Dosbox":
        // tokens are ["Dosbox", "0", "74", ...] and none equals "DoS".
        assert_eq!(
            rules.classify("Dosbox 0.74 release announcement").class,
            VulnClass::Other
        );
    }

    #[test]
    fn other_has_no_matched_rule() {
        let rules = default_ruleset();
        let r = rules.classify("Weekly security digest");
        assert_eq!(r.class, VulnClass::Other);
        assert!(r.matched_rule.is_none());
        let r = rules.classify("Gateway DoS exploit");
        assert!(r.matched_rule.is_some());
    }

    #[test]
    fn case_contracts() {
        let rules = default_ruleset();
        // Insensitive whole token accepts any casing.
        for t in ["xss", "XSS", "Xss"] {
            assert_eq!(
                rules.classify(&format!("Blog comment {t} bug")).class,
                VulnClass::CrossSiteScripting
            );
        }
        // Exact whole token rejects case variants.
        assert_eq!(
            rules.classify("Gateway DoS exploit").class,
            VulnClass::DenialOfService
        );
        assert_eq!(rules.classify("Gateway DOS exploit").class, VulnClass::Other);
        assert_eq!(
            rules.classify("Botnet DDoS toolkit").class,
            VulnClass::DenialOfService
        );
    }

    #[test]
    fn boundary_contracts() {
        let rules = default_ruleset();
        // Whole-token rules never match inside a longer token.
        assert_eq!(rules.classify("crossfire map editor update").class, VulnClass::Other);
        assert_eq!(rules.classify("sqlite schema dump").class, VulnClass::Other);
        // Substring rules do extend across word forms.
        assert_eq!(
            rules.classify("Multiple Injections in admin panel").class,
            VulnClass::Injection
        );
    }

    #[test]
    fn arbitrary_code_execution_falls_through_to_other() {
        let rules = default_ruleset();
        assert_eq!(
            rules.classify("Foo Player Arbitrary Code Execution").class,
            VulnClass::Other
        );
    }

    #[test]
    fn ruleset_rejects_invalid_inputs() {
        let mk = |prio| {
            KeywordRule::new(
                prio,
                "xss",
                CaseMode::Insensitive,
                Boundary::WholeToken,
                VulnClass::CrossSiteScripting,
            )
        };
        assert_eq!(
            RuleSet::new(vec![mk(1), mk(1)]).unwrap_err(),
            RuleSetError::DuplicatePriority { priority: 1 }
        );
        let empty = KeywordRule::new(
            2,
            "",
            CaseMode::Exact,
            Boundary::Substring,
            VulnClass::Injection,
        );
        assert!(matches!(
            RuleSet::new(vec![empty]).unwrap_err(),
            RuleSetError::EmptyPattern { .. }
        ));
        let other = KeywordRule::new(
            3,
            "misc",
            CaseMode::Exact,
            Boundary::Substring,
            VulnClass::Other,
        );
        assert_eq!(
            RuleSet::new(vec![other]).unwrap_err(),
            RuleSetError::OtherTarget { priority: 3 }
        );
        assert_eq!(
            RuleSet::new(vec![mk(1)]).unwrap_err(),
            RuleSetError::UncoveredClass("injection")
        );
    }

    #[test]
    fn class_names_round_trip() {
        for class in VulnClass::ALL {
            let parsed: VulnClass = class.canonical_name().parse().unwrap();
            assert_eq!(parsed, class);
        }
        assert!("bogus".parse::<VulnClass>().is_err());
    }

    #[test]
    fn batch_matches_single() {
        let rules = default_ruleset();
        let titles = vec!["Gateway DoS exploit", "unrelated", "Admin SQL Injection"];
        let batch = rules.classify_batch(&titles);
        let singles: Vec<_> = titles.iter().map(|t| rules.classify(t).class).collect();
        assert_eq!(batch, singles);
    }
}
