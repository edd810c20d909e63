use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Exchange,
    Service,
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Exchange => "exchange",
            Category::Service => "service",
            Category::Other => "other",
        }
    }
}

impl FromStr for Category {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exchange" => Ok(Category::Exchange),
            "service" => Ok(Category::Service),
            "other" => Ok(Category::Other),
            _ => Err(TagError::Category(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagTarget {
    Address(String),
    /// Entity referenced by its representative (smallest) address.
    Entity(String),
}

impl fmt::Display for TagTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagTarget::Address(a) => write!(f, "address {a}"),
            TagTarget::Entity(e) => write!(f, "entity {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributionTag {
    pub target: TagTarget,
    pub label: String,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TagReport {
    pub applied: usize,
    pub skipped_unknown: usize,
    pub conflicts: usize,
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("tag CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown target_type `{0}` (expected address or entity)")]
    TargetType(String),
    #[error("unknown category `{0}` (expected exchange, service or other)")]
    Category(String),
}

#[derive(Deserialize)]
struct TagRow {
    target_type: String,
    target: String,
    label: String,
    category: String,
}

/// Reads `target_type,target,label,category` rows (header required).
pub fn read_tags<R: Read>(reader: R) -> Result<Vec<AttributionTag>, TagError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut tags = Vec::new();
    for row in rdr.deserialize::<TagRow>() {
        let row = row?;
        let target = match row.target_type.as_str() {
            "address" => TagTarget::Address(row.target),
            "entity" => TagTarget::Entity(row.target),
            other => return Err(TagError::TargetType(other.to_owned())),
        };
        tags.push(AttributionTag {
            target,
            label: row.label,
            category: row.category.parse()?,
        });
    }
    Ok(tags)
}
