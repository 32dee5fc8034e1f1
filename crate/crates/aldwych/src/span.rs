//! Source positions attached to tokens, AST nodes, and diagnostics.

use std::fmt;

/// A half-open byte range in the source, plus the line/column of its start.
/// Lines and columns are 1-based; column counts characters, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub const DUMMY: Span = Span { start: 0, end: 0, line: 0, col: 0 };

    pub fn new(start: usize, end: usize, line: u32, col: u32) -> Self {
        Span { start, end, line, col }
    }

    /// Span covering both `self` and `other`, keeping `self`'s start position.
    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end.max(self.end), ..self }
    }

    pub fn is_dummy(&self) -> bool {
        self.line == 0
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}
