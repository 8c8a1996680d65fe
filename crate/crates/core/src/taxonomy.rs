//! The four-level ISIC hierarchy: Section (letter) → Division (2 digits) →
//! Group (3 digits) → Class (4 digits).
//!
//! Codes are kept as strings so leading zeros survive ("0111" is a Class in
//! Division "01"). Division → Section membership is read from an explicit
//! parent column since section letters are not prefixes of digit codes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("malformed ISIC code {0:?}")]
    MalformedCode(String),
    #[error("empty taxonomy")]
    Empty,
    #[error("taxonomy header must be `level,code,parent,description`, found {0:?}")]
    BadHeader(String),
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("row {row}: duplicate code {code}")]
    Duplicate { row: u64, code: String },
    #[error("row {row}: parent {parent} of {code} is not defined")]
    OrphanParent {
        row: u64,
        code: String,
        parent: String,
    },
    #[error("unknown code {0}")]
    UnknownCode(String),
    #[error("code {0} has no division (section-level codes have no digit prefix)")]
    NoDivision(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TaxonomyError {
    fn from(e: csv::Error) -> Self {
        TaxonomyError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Section,
    Division,
    Group,
    Class,
}

impl Level {
    /// The level directly above, `None` for sections.
    pub fn parent(self) -> Option<Level> {
        match self {
            Level::Section => None,
            Level::Division => Some(Level::Section),
            Level::Group => Some(Level::Division),
            Level::Class => Some(Level::Group),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Section => "section",
            Level::Division => "division",
            Level::Group => "group",
            Level::Class => "class",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "section" => Ok(Level::Section),
            "division" => Ok(Level::Division),
            "group" => Ok(Level::Group),
            "class" => Ok(Level::Class),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// A syntactically valid ISIC code. The shape alone fixes the level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IsicCode(String);

impl IsicCode {
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let bytes = text.as_bytes();
        let valid = match bytes.len() {
            1 => bytes[0].is_ascii_uppercase(),
            2..=4 => bytes.iter().all(u8::is_ascii_digit),
            _ => false,
        };
        if valid {
            Ok(IsicCode(text.to_string()))
        } else {
            Err(TaxonomyError::MalformedCode(text.to_string()))
        }
    }

    pub fn level(&self) -> Level {
        match self.0.len() {
            1 => Level::Section,
            2 => Level::Division,
            3 => Level::Group,
            _ => Level::Class,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The Division a Group or Class code belongs to (its first two digits).
    pub fn division(&self) -> Result<IsicCode, TaxonomyError> {
        match self.level() {
            Level::Group | Level::Class => Ok(IsicCode(self.0[..2].to_string())),
            _ => Err(TaxonomyError::NoDivision(self.0.clone())),
        }
    }

    /// Parent implied by the digit prefix; only Groups and Classes have one.
    fn prefix_parent(&self) -> Option<IsicCode> {
        match self.level() {
            Level::Group | Level::Class => Some(IsicCode(self.0[..self.0.len() - 1].to_string())),
            _ => None,
        }
    }
}

/// Free-function form of [`IsicCode::division`].
pub fn division_of(code: &IsicCode) -> Result<IsicCode, TaxonomyError> {
    code.division()
}

impl fmt::Display for IsicCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for IsicCode {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IsicCode::parse(s)
    }
}

impl TryFrom<String> for IsicCode {
    type Error = TaxonomyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        IsicCode::parse(&value)
    }
}

impl From<IsicCode> for String {
    fn from(code: IsicCode) -> Self {
        code.0
    }
}

impl AsRef<str> for IsicCode {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaxonomyNode {
    pub code: IsicCode,
    pub level: Level,
    pub parent: Option<IsicCode>,
    pub description: String,
}

/// A validated, immutable ISIC hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: BTreeMap<IsicCode, TaxonomyNode>,
    children: BTreeMap<IsicCode, Vec<IsicCode>>,
}

const HEADER: [&str; 4] = ["level", "code", "parent", "description"];

/// Parse the taxonomy CSV (`level,code,parent,description`).
///
/// Row numbers in errors are file line numbers, the header being row 1.
pub fn parse_taxonomy(source: &str) -> Result<Taxonomy, TaxonomyError> {
    if source.trim().is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source.as_bytes());
    let header = reader.headers()?.clone();
    let found: Vec<String> = header
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if found != HEADER {
        return Err(TaxonomyError::BadHeader(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }

    let mut nodes: BTreeMap<IsicCode, TaxonomyNode> = BTreeMap::new();
    let mut rows: Vec<(u64, IsicCode)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let row_err = |message: String| TaxonomyError::Row { row, message };

        let level: Level = field(0).parse().map_err(row_err)?;
        let code = IsicCode::parse(field(1)).map_err(|e| row_err(e.to_string()))?;
        if code.level() != level {
            return Err(row_err(format!(
                "code {code} has the shape of a {} but is declared {level}",
                code.level()
            )));
        }
        let parent_text = field(2);
        let parent = match level {
            Level::Section => {
                if !parent_text.is_empty() {
                    return Err(row_err(format!("section {code} must not have a parent")));
                }
                None
            }
            Level::Division => {
                if parent_text.is_empty() {
                    return Err(row_err(format!(
                        "division {code} needs an explicit section parent"
                    )));
                }
                let parent = IsicCode::parse(parent_text).map_err(|e| row_err(e.to_string()))?;
                if parent.level() != Level::Section {
                    return Err(row_err(format!(
                        "parent of division {code} must be a section, got {parent}"
                    )));
                }
                Some(parent)
            }
            Level::Group | Level::Class => {
                let implied = code.prefix_parent().expect("digit code below division");
                if !parent_text.is_empty() && parent_text != implied.as_str() {
                    return Err(row_err(format!(
                        "parent of {code} must be its prefix {implied}, got {parent_text}"
                    )));
                }
                Some(implied)
            }
        };
        let description = field(3).to_string();
        if description.is_empty() {
            return Err(row_err(format!("empty description for {code}")));
        }
        if nodes.contains_key(&code) {
            return Err(TaxonomyError::Duplicate {
                row,
                code: code.to_string(),
            });
        }
        rows.push((row, code.clone()));
        nodes.insert(
            code.clone(),
            TaxonomyNode {
                code,
                level,
                parent,
                description,
            },
        );
    }
    if nodes.is_empty() {
        return Err(TaxonomyError::Empty);
    }

    // Parents are resolved after every row is read, so row order is free.
    let mut children: BTreeMap<IsicCode, Vec<IsicCode>> = BTreeMap::new();
    for (row, code) in &rows {
        let node = &nodes[code];
        if let Some(parent) = &node.parent {
            if !nodes.contains_key(parent) {
                return Err(TaxonomyError::OrphanParent {
                    row: *row,
                    code: code.to_string(),
                    parent: parent.to_string(),
                });
            }
            children
                .entry(parent.clone())
                .or_default()
                .push(code.clone());
        }
    }
    for list in children.values_mut() {
        list.sort();
    }
    Ok(Taxonomy { nodes, children })
}

impl Taxonomy {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, code: &IsicCode) -> Option<&TaxonomyNode> {
        self.nodes.get(code)
    }

    pub fn contains(&self, code: &IsicCode) -> bool {
        self.nodes.contains_key(code)
    }

    fn node(&self, code: &IsicCode) -> Result<&TaxonomyNode, TaxonomyError> {
        self.nodes
            .get(code)
            .ok_or_else(|| TaxonomyError::UnknownCode(code.to_string()))
    }

    /// Ancestor chain from the immediate parent up to the section (root last).
    pub fn ancestors(&self, code: &IsicCode) -> Result<Vec<IsicCode>, TaxonomyError> {
        let mut chain = Vec::new();
        let mut current = self.node(code)?;
        while let Some(parent) = &current.parent {
            chain.push(parent.clone());
            current = self.node(parent)?;
        }
        Ok(chain)
    }

    pub fn describe(&self, code: &IsicCode) -> Result<&str, TaxonomyError> {
        Ok(&self.node(code)?.description)
    }

    /// Children in ascending code order.
    pub fn children(&self, code: &IsicCode) -> &[IsicCode] {
        self.children.get(code).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All nodes in ascending code order.
    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn codes_at(&self, level: Level) -> impl Iterator<Item = &IsicCode> {
        self.nodes
            .values()
            .filter(move |n| n.level == level)
            .map(|n| &n.code)
    }

    /// Serialize back to the CSV format accepted by [`parse_taxonomy`].
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(HEADER).expect("in-memory write");
        for node in self.nodes.values() {
            let parent = node.parent.as_ref().map(IsicCode::as_str).unwrap_or("");
            writer
                .write_record([
                    node.level.as_str(),
                    node.code.as_str(),
                    parent,
                    &node.description,
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE_ONE: &str = "level,code,parent,description\n\
        section,F,,Construction\n\
        division,43,F,Specialized Construction Activities\n\
        group,431,43,Demolition And Site Preparation\n\
        class,4311,431,Demolition\n";

    fn code(s: &str) -> IsicCode {
        IsicCode::parse(s).unwrap()
    }

    #[test]
    fn code_shapes() {
        assert_eq!(code("F").level(), Level::Section);
        assert_eq!(code("43").level(), Level::Division);
        assert_eq!(code("431").level(), Level::Group);
        assert_eq!(code("0111").level(), Level::Class);
        for bad in ["", "f", "FF", "4", "43x1", "43111", "111 ", " 111"] {
            assert!(IsicCode::parse(bad).is_err(), "{bad:?} should be rejected");
        }
        assert_ne!(IsicCode::parse("0111").unwrap().as_str(), "111");
    }

    #[test]
    fn table_one_parses() {
        let tax = parse_taxonomy(TABLE_ONE).unwrap();
        assert_eq!(tax.len(), 4);
        assert_eq!(
            tax.ancestors(&code("4311")).unwrap(),
            vec![code("431"), code("43"), code("F")]
        );
        assert_eq!(
            tax.ancestors(&code("431")).unwrap(),
            vec![code("43"), code("F")]
        );
        assert!(tax.ancestors(&code("F")).unwrap().is_empty());
        assert_eq!(tax.describe(&code("4311")).unwrap(), "Demolition");
        assert_eq!(tax.describe(&code("F")).unwrap(), "Construction");
        assert_eq!(
            tax.describe(&code("9999")),
            Err(TaxonomyError::UnknownCode("9999".into()))
        );
        assert_eq!(tax.children(&code("43")), &[code("431")]);
    }

    #[test]
    fn division_prefix() {
        assert_eq!(division_of(&code("4311")).unwrap(), code("43"));
        assert_eq!(division_of(&code("0111")).unwrap(), code("01"));
        assert_eq!(division_of(&code("431")).unwrap(), code("43"));
        assert!(matches!(
            division_of(&code("F")),
            Err(TaxonomyError::NoDivision(_))
        ));
        assert!(division_of(&code("43")).is_err());
    }

    #[test]
    fn empty_and_header_errors() {
        assert_eq!(parse_taxonomy(""), Err(TaxonomyError::Empty));
        assert_eq!(
            parse_taxonomy("level,code,parent,description\n"),
            Err(TaxonomyError::Empty)
        );
        assert!(matches!(
            parse_taxonomy("a,b\n1,2\n"),
            Err(TaxonomyError::BadHeader(_))
        ));
    }

    #[test]
    fn duplicate_names_code_and_row() {
        let src = format!("{TABLE_ONE}class,4311,431,Demolition again\n");
        let err = parse_taxonomy(&src).unwrap_err();
        assert_eq!(
            err,
            TaxonomyError::Duplicate {
                row: 6,
                code: "4311".into()
            }
        );
        assert!(err.to_string().contains("4311"));
    }

    #[test]
    fn orphan_and_shape_errors() {
        let orphan =
            "level,code,parent,description\nsection,F,,Construction\nclass,4311,431,Demolition\n";
        assert!(matches!(
            parse_taxonomy(orphan),
            Err(TaxonomyError::OrphanParent { row: 3, .. })
        ));
        let shape = "level,code,parent,description\nsection,F,,Construction\ngroup,43,F,Wrong\n";
        assert!(matches!(
            parse_taxonomy(shape),
            Err(TaxonomyError::Row { row: 3, .. })
        ));
        let bad_prefix = "level,code,parent,description\nsection,F,,C\ndivision,43,F,S\ndivision,42,F,T\ngroup,431,42,D\n";
        assert!(matches!(
            parse_taxonomy(bad_prefix),
            Err(TaxonomyError::Row { row: 5, .. })
        ));
    }

    #[test]
    fn level_is_case_insensitive_and_quotes_work() {
        let src = "Level,Code,Parent,Description\nSECTION,C,,Manufacturing\nDivision,10,C,\"Food, beverages\"\n";
        let tax = parse_taxonomy(src).unwrap();
        assert_eq!(tax.describe(&code("10")).unwrap(), "Food, beverages");
    }

    #[test]
    fn roundtrip() {
        let tax = parse_taxonomy(TABLE_ONE).unwrap();
        let again = parse_taxonomy(&tax.to_csv()).unwrap();
        assert_eq!(tax, again);
    }
}
