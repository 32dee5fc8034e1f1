//! Token stream produced by the lexer.

use crate::span::Span;
use num_bigint::BigInt;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Lowercase-initial identifier: future names, process names, constants.
    Ident(String),
    /// Capitalized identifier: handle names.
    CapIdent(String),
    /// Integer literal (arbitrary precision, always non-negative here; the
    /// parser folds a preceding unary minus).
    Number(BigInt),
    /// Quoted atom `'...'`, equal to the constant with the same text.
    Atom(String),
    /// `->` or `→`.
    RArrow,
    /// `<-` or `←`.
    LArrow,
    /// A run of consecutive `|` characters with its exact length.
    Bars(u32),
    /// Any single punctuation character: `# ( ) [ ] { } , ; : . ? ^ $ ~ = < > + - * / \ @`
    Punct(char),
    /// End of input.
    End,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) | TokenKind::CapIdent(s) => write!(f, "`{}`", s),
            TokenKind::Number(n) => write!(f, "`{}`", n),
            TokenKind::Atom(s) => write!(f, "`'{}'`", s),
            TokenKind::RArrow => write!(f, "`->`"),
            TokenKind::LArrow => write!(f, "`<-`"),
            TokenKind::Bars(n) => write!(f, "`{}`", "|".repeat(*n as usize)),
            TokenKind::Punct(c) => write!(f, "`{}`", c),
            TokenKind::End => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    /// True when this token starts exactly where `prev` ends, with no
    /// whitespace in between.  Used to tell `f(x)` (a call) from `f (x)`
    /// (juxtaposition).
    pub fn adjacent_to(&self, prev: &Token) -> bool {
        self.span.start == prev.span.end
    }
}
