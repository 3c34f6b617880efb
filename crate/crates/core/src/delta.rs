use crate::encoding::{Record, SourceTag};
use crate::error::{Error, Result};

/// A single-row change to one base table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delta {
    Insert(Record),
    Delete(Record),
    Update { old: Record, new: Record },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaKind {
    Insert,
    Delete,
    Update,
}

impl Delta {
    pub fn table(&self) -> SourceTag {
        match self {
            Delta::Insert(r) | Delta::Delete(r) => r.tag(),
            Delta::Update { new, .. } => new.tag(),
        }
    }

    pub fn kind(&self) -> DeltaKind {
        match self {
            Delta::Insert(_) => DeltaKind::Insert,
            Delta::Delete(_) => DeltaKind::Delete,
            Delta::Update { .. } => DeltaKind::Update,
        }
    }

    /// Both images of an update must come from the same table.
    pub fn validate(&self) -> Result<()> {
        if let Delta::Update { old, new } = self {
            if old.tag() != new.tag() {
                return Err(Error::MalformedDelta(format!(
                    "update changes table from {:?} to {:?}",
                    old.tag(),
                    new.tag()
                )));
            }
        }
        Ok(())
    }

    /// Whether an update moves the row to a different index key.
    pub fn changes_key(&self) -> bool {
        match self {
            Delta::Update { old, new } => old.key() != new.key(),
            _ => false,
        }
    }
}
