//! Keyword vocabulary with tree positions and branch eligibility.
//!
//! The vocabulary is read from a tab-separated descriptor table:
//!
//! ```text
//! external_code <TAB> name <TAB> tree_numbers (';'-separated)
//! ```
//!
//! An optional header line is recognised by the literal first cell
//! `external_code`. Descriptors receive dense [`KeywordId`]s in source order.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Compact handle for one vocabulary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordId(pub u32);

impl KeywordId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for KeywordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    pub id: KeywordId,
    pub external_code: String,
    pub name: String,
    pub tree_numbers: Vec<String>,
}

impl Descriptor {
    /// Top-level branch letters this descriptor is filed under, deduplicated.
    pub fn branches(&self) -> impl Iterator<Item = char> + '_ {
        let mut seen = 0u32;
        self.tree_numbers.iter().filter_map(move |t| {
            let c = t.chars().next()?.to_ascii_uppercase();
            if !c.is_ascii_uppercase() {
                return None;
            }
            let bit = 1u32 << (c as u8 - b'A');
            if seen & bit != 0 {
                return None;
            }
            seen |= bit;
            Some(c)
        })
    }
}

/// Set of allowed top-level branch letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BranchFilter {
    mask: u32,
}

impl BranchFilter {
    /// Letters of the biomedical branches kept by default.
    pub const DEFAULT_BRANCHES: &'static str = "ABCDEFGJLN";

    pub fn empty() -> Self {
        Self { mask: 0 }
    }

    /// Every branch A..Z.
    pub fn all() -> Self {
        Self { mask: (1 << 26) - 1 }
    }

    pub fn from_letters(letters: &str) -> Result<Self, OntologyError> {
        let mut filter = Self::empty();
        for c in letters.chars().filter(|c| !c.is_whitespace() && *c != ',') {
            filter = filter.with(c)?;
        }
        Ok(filter)
    }

    pub fn with(mut self, branch: char) -> Result<Self, OntologyError> {
        let c = branch.to_ascii_uppercase();
        if !c.is_ascii_uppercase() {
            return Err(OntologyError::InvalidBranch(branch));
        }
        self.mask |= 1 << (c as u8 - b'A');
        Ok(self)
    }

    pub fn allows(&self, branch: char) -> bool {
        let c = branch.to_ascii_uppercase();
        c.is_ascii_uppercase() && self.mask & (1 << (c as u8 - b'A')) != 0
    }

    pub fn is_superset_of(&self, other: &BranchFilter) -> bool {
        self.mask & other.mask == other.mask
    }

    pub fn letters(&self) -> String {
        (b'A'..=b'Z')
            .filter(|b| self.mask & (1 << (b - b'A')) != 0)
            .map(char::from)
            .collect()
    }
}

impl Default for BranchFilter {
    fn default() -> Self {
        Self::from_letters(Self::DEFAULT_BRANCHES).expect("default branch letters are valid")
    }
}

impl fmt::Debug for BranchFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BranchFilter({})", self.letters())
    }
}

impl FromStr for BranchFilter {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_letters(s)
    }
}

/// True iff at least one tree number of `descriptor` starts with an allowed
/// branch letter. Descriptors without tree numbers are never eligible.
pub fn is_eligible(descriptor: &Descriptor, filter: &BranchFilter) -> bool {
    descriptor.branches().any(|b| filter.allows(b))
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("duplicate external code {code:?} at line {line}")]
    DuplicateCode { code: String, line: usize },
    #[error("malformed descriptor row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("invalid branch letter {0:?}")]
    InvalidBranch(char),
    #[error("vocabulary exceeds 32-bit id space")]
    TooLarge,
    #[error("I/O error reading descriptor table: {0}")]
    Io(#[from] std::io::Error),
}

/// Immutable vocabulary. Safe to share across threads after load.
#[derive(Debug, Clone, Default)]
pub struct Ontology {
    descriptors: Vec<Descriptor>,
    by_code: HashMap<String, KeywordId>,
}

impl Ontology {
    /// Reads a descriptor table. Blank lines are ignored.
    pub fn load<R: BufRead>(source: R) -> Result<Self, OntologyError> {
        let mut ontology = Ontology::default();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if idx == 0 && cells[0] == "external_code" {
                continue;
            }
            if cells.len() != 3 {
                return Err(OntologyError::MalformedRow {
                    line: line_no,
                    reason: format!("expected 3 tab-separated cells, found {}", cells.len()),
                });
            }
            let code = cells[0].trim();
            if code.is_empty() {
                return Err(OntologyError::MalformedRow {
                    line: line_no,
                    reason: "empty external code".into(),
                });
            }
            let tree_numbers = cells[2]
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect();
            ontology.push(code, cells[1].trim(), tree_numbers, line_no)?;
        }
        Ok(ontology)
    }

    /// Builds an ontology from in-memory rows `(code, name, tree_numbers)`.
    pub fn from_rows<'a, I>(rows: I) -> Result<Self, OntologyError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, Vec<&'a str>)>,
    {
        let mut ontology = Ontology::default();
        for (i, (code, name, trees)) in rows.into_iter().enumerate() {
            ontology.push(code, name, trees.into_iter().map(String::from).collect(), i + 1)?;
        }
        Ok(ontology)
    }

    fn push(
        &mut self,
        code: &str,
        name: &str,
        tree_numbers: Vec<String>,
        line: usize,
    ) -> Result<(), OntologyError> {
        if self.by_code.contains_key(code) {
            return Err(OntologyError::DuplicateCode { code: code.to_string(), line });
        }
        let id = u32::try_from(self.descriptors.len()).map_err(|_| OntologyError::TooLarge)?;
        let id = KeywordId(id);
        self.by_code.insert(code.to_string(), id);
        self.descriptors.push(Descriptor {
            id,
            external_code: code.to_string(),
            name: name.to_string(),
            tree_numbers,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn get(&self, id: KeywordId) -> Option<&Descriptor> {
        self.descriptors.get(id.index())
    }

    pub fn lookup(&self, external_code: &str) -> Option<KeywordId> {
        self.by_code.get(external_code).copied()
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    /// Per-id eligibility mask under `filter`, indexed by `KeywordId::index`.
    pub fn eligibility_mask(&self, filter: &BranchFilter) -> Vec<bool> {
        self.descriptors.iter().map(|d| is_eligible(d, filter)).collect()
    }

    pub fn eligible_count(&self, filter: &BranchFilter) -> usize {
        self.descriptors.iter().filter(|d| is_eligible(d, filter)).count()
    }
}
