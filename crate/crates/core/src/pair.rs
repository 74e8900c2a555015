use std::fmt;

use serde::{Deserialize, Serialize};

/// Unordered class pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct ClassPair {
    lo: usize,
    hi: usize,
}

impl ClassPair {
    pub fn new(a: usize, b: usize) -> Self {
        Self { lo: a.min(b), hi: a.max(b) }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn contains(&self, class: usize) -> bool {
        self.lo == class || self.hi == class
    }
}

impl From<(usize, usize)> for ClassPair {
    fn from((a, b): (usize, usize)) -> Self {
        Self::new(a, b)
    }
}

impl From<ClassPair> for (usize, usize) {
    fn from(p: ClassPair) -> Self {
        (p.lo, p.hi)
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}
