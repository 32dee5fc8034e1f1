//! The core language: flat guarded rules over single-assignment terms.
//!
//! Everything the desugar pipeline produces lands here.  A core procedure
//! has named inputs and outputs; each rule matches input variables against
//! patterns, may test arithmetic guards, and on commit runs a body of
//! assignments and calls.  There is no implicit recursion, no message
//! syntax, and no handles — objects have become plain streams by now.
//!
//! The text format round-trips through [`CoreProgram::to_text`] and
//! [`parse_core`].  It starts with the `%aldwych-core 1` header and then
//! reads much like stripped-down surface syntax:
//!
//! ```text
//! %aldwych-core 1
//! #merge(in1, in2) -> (out) {
//!   in1 = ?m : ?r || out = m : o%1, merge(r, in2) -> (o%1);
//!   ...
//! }
//! ```
//!
//! In patterns `?x` captures, `^x` captures a slot the rule must write,
//! `?x@(p)` captures while matching, bare lowercase names are constants,
//! and `$` is the end of a stream.  In terms bare lowercase names are
//! variables and constants are quoted.  Generated names contain `%`, which
//! is a letter here but not in surface programs.

pub mod normalize;

use std::fmt;

use num_bigint::BigInt;

use crate::ast::RelOp;
use crate::diag::Diagnostic;
use crate::lexer::{self, Mode};
use crate::span::Span;
use crate::token::{Token, TokenKind};

pub const HEADER: &str = "%aldwych-core 1";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CoreTerm {
    Var(String),
    Const(String),
    Num(BigInt),
    Tuple(String, Vec<CoreTerm>),
    Cons(Box<CoreTerm>, Box<CoreTerm>),
    Nil,
}

impl CoreTerm {
    pub fn cons(head: CoreTerm, tail: CoreTerm) -> CoreTerm {
        CoreTerm::Cons(Box::new(head), Box::new(tail))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CorePat {
    /// `?x` — bind the matched value.
    Capture(String),
    /// `^x` — take the writable slot at this position; the rule writes it.
    ReplySlot(String),
    /// `?x@(p)` — bind the value and keep matching inside it.
    As(String, Box<CorePat>),
    Const(String),
    Num(BigInt),
    Tuple(String, Vec<CorePat>),
    Cons(Box<CorePat>, Box<CorePat>),
    Nil,
}

impl CorePat {
    pub fn cons(head: CorePat, tail: CorePat) -> CorePat {
        CorePat::Cons(Box::new(head), Box::new(tail))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreGuard {
    pub op: RelOp,
    pub lhs: CoreTerm,
    pub rhs: CoreTerm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreStmt {
    /// `x = term` — write a cell; aliasing when the term is a variable.
    Assign { var: String, term: CoreTerm },
    /// `p(ins) -> (outs)` — create a process.
    Call { proc: String, ins: Vec<CoreTerm>, outs: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreRule {
    pub matches: Vec<(String, CorePat)>,
    pub guards: Vec<CoreGuard>,
    pub body: Vec<CoreStmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreProc {
    pub name: String,
    pub ins: Vec<String>,
    pub outs: Vec<String>,
    /// Rule groups; later groups apply only when every rule of each earlier
    /// group has failed.
    pub groups: Vec<Vec<CoreRule>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreProgram {
    pub procs: Vec<CoreProc>,
}

impl CoreProgram {
    pub fn proc(&self, name: &str) -> Option<&CoreProc> {
        self.procs.iter().find(|p| p.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(HEADER);
        s.push('\n');
        for p in &self.procs {
            s.push('\n');
            s.push_str(&p.to_string());
        }
        s
    }
}

// ─────────────────────────────── printing ─────────────────────────────────

impl fmt::Display for CoreTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreTerm::Var(v) => write!(f, "{v}"),
            CoreTerm::Const(c) => write!(f, "'{c}'"),
            CoreTerm::Num(n) => write!(f, "{n}"),
            CoreTerm::Tuple(tag, args) => {
                write!(f, "{tag}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            CoreTerm::Cons(h, t) => {
                if matches!(h.as_ref(), CoreTerm::Cons(..)) {
                    write!(f, "({h}) : {t}")
                } else {
                    write!(f, "{h} : {t}")
                }
            }
            CoreTerm::Nil => write!(f, "$"),
        }
    }
}

impl fmt::Display for CorePat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorePat::Capture(v) => write!(f, "?{v}"),
            CorePat::ReplySlot(v) => write!(f, "^{v}"),
            CorePat::As(v, p) => write!(f, "?{v}@({p})"),
            CorePat::Const(c) => write!(f, "{c}"),
            CorePat::Num(n) => write!(f, "{n}"),
            CorePat::Tuple(tag, args) => {
                write!(f, "{tag}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            CorePat::Cons(h, t) => {
                if matches!(h.as_ref(), CorePat::Cons(..)) {
                    write!(f, "({h}) : {t}")
                } else {
                    write!(f, "{h} : {t}")
                }
            }
            CorePat::Nil => write!(f, "$"),
        }
    }
}

impl fmt::Display for CoreGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            RelOp::Lt => "<",
            RelOp::Gt => ">",
            RelOp::Le => "=<",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "\\=",
        };
        write!(f, "{} {op} {}", self.lhs, self.rhs)
    }
}

impl fmt::Display for CoreStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreStmt::Assign { var, term } => write!(f, "{var} = {term}"),
            CoreStmt::Call { proc, ins, outs } => {
                write!(f, "{proc}(")?;
                for (i, a) in ins.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ") -> (")?;
                for (i, o) in outs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{o}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for CoreRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, p) in &self.matches {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            write!(f, "{v} = {p}")?;
        }
        for g in &self.guards {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            write!(f, "{g}")?;
        }
        if !first {
            write!(f, " ")?;
        }
        write!(f, "||")?;
        for (i, s) in self.body.iter().enumerate() {
            if i == 0 {
                write!(f, " ")?;
            } else {
                write!(f, ", ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl fmt::Display for CoreProc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}(", self.name)?;
        for (i, v) in self.ins.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ") -> (")?;
        for (i, v) in self.outs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        writeln!(f, ") {{")?;
        for (gi, g) in self.groups.iter().enumerate() {
            if gi > 0 {
                writeln!(f, ":")?;
            }
            for r in g {
                writeln!(f, "  {r};")?;
            }
        }
        writeln!(f, "}}")
    }
}

// ─────────────────────────────── parsing ──────────────────────────────────

/// Parse core text, header included.
pub fn parse_core(text: &str) -> Result<CoreProgram, Diagnostic> {
    let rest = text.strip_prefix(HEADER).ok_or_else(|| {
        Diagnostic::error(
            "parse",
            Span::new(0, 0, 1, 1),
            format!("core text must start with `{HEADER}`"),
        )
    })?;
    // Blank out the header so token positions still line up with the file.
    let body = format!("{:width$}{rest}", "", width = HEADER.len());
    let toks = lexer::tokenize_mode(&body, Mode::Core)?;
    CoreParser { toks, pos: 0 }.program()
}

struct CoreParser {
    toks: Vec<Token>,
    pos: usize,
}

impl CoreParser {
    fn kind(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.kind(), TokenKind::Punct(p) if *p == c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.at_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char, ctx: &str) -> Result<(), Diagnostic> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}` {ctx}")))
        }
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::error(
            "parse",
            self.span(),
            format!("expected {what}, found `{}`", self.toks[self.pos].kind),
        )
    }

    fn name(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Ident(s) | TokenKind::CapIdent(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn name_list(&mut self, what: &str) -> Result<Vec<String>, Diagnostic> {
        self.expect_punct('(', "to open the name list")?;
        let mut names = Vec::new();
        if !self.at_punct(')') {
            loop {
                names.push(self.name(what)?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct(')', "to close the name list")?;
        Ok(names)
    }

    fn program(&mut self) -> Result<CoreProgram, Diagnostic> {
        let mut procs = Vec::new();
        while !matches!(self.kind(), TokenKind::End) {
            procs.push(self.proc()?);
        }
        Ok(CoreProgram { procs })
    }

    fn proc(&mut self) -> Result<CoreProc, Diagnostic> {
        self.expect_punct('#', "to start a procedure")?;
        let name = self.name("a procedure name")?;
        let ins = self.name_list("an input name")?;
        if !matches!(self.kind(), TokenKind::RArrow) {
            return Err(self.unexpected("`->` after the inputs"));
        }
        self.bump();
        let outs = self.name_list("an output name")?;
        self.expect_punct('{', "to open the rules")?;
        let mut groups = vec![Vec::new()];
        while !self.at_punct('}') {
            if self.eat_punct(':') {
                groups.push(Vec::new());
                continue;
            }
            let rule = self.rule()?;
            groups.last_mut().unwrap().push(rule);
            self.eat_punct(';');
        }
        self.expect_punct('}', "to close the rules")?;
        Ok(CoreProc { name, ins, outs, groups })
    }

    fn rule(&mut self) -> Result<CoreRule, Diagnostic> {
        let mut rule = CoreRule::default();
        while !matches!(self.kind(), TokenKind::Bars(_)) {
            // `v = pat` is a match unless the `=` belongs to `==` or `=<`.
            let is_match = matches!(self.kind(), TokenKind::Ident(_) | TokenKind::CapIdent(_))
                && matches!(self.toks[self.pos + 1].kind, TokenKind::Punct('='))
                && !matches!(self.toks[self.pos + 2].kind, TokenKind::Punct('=' | '<'));
            if is_match {
                let var = self.name("an input variable")?;
                self.bump();
                let pat = self.pattern()?;
                rule.matches.push((var, pat));
            } else {
                let lhs = self.term()?;
                let op = self.rel_op()?;
                let rhs = self.term()?;
                rule.guards.push(CoreGuard { op, lhs, rhs });
            }
            if !self.eat_punct(',') {
                break;
            }
        }
        if !matches!(self.kind(), TokenKind::Bars(_)) {
            return Err(self.unexpected("`|`"));
        }
        while matches!(self.kind(), TokenKind::Bars(_)) {
            self.bump();
        }
        while !self.at_punct(';') && !self.at_punct('}') && !self.at_punct(':') {
            rule.body.push(self.stmt()?);
            if !self.eat_punct(',') {
                break;
            }
        }
        Ok(rule)
    }

    fn rel_op(&mut self) -> Result<RelOp, Diagnostic> {
        let op = match self.kind() {
            TokenKind::Punct('<') => {
                self.bump();
                RelOp::Lt
            }
            TokenKind::Punct('>') => {
                self.bump();
                if self.eat_punct('=') {
                    RelOp::Ge
                } else {
                    RelOp::Gt
                }
            }
            TokenKind::Punct('=') => {
                self.bump();
                if self.eat_punct('=') {
                    RelOp::Eq
                } else if self.eat_punct('<') {
                    RelOp::Le
                } else {
                    return Err(self.unexpected("`=` or `<` to finish the comparison"));
                }
            }
            TokenKind::Punct('\\') => {
                self.bump();
                self.expect_punct('=', "after `\\`")?;
                RelOp::Ne
            }
            _ => return Err(self.unexpected("a comparison operator")),
        };
        Ok(op)
    }

    fn stmt(&mut self) -> Result<CoreStmt, Diagnostic> {
        // `x = term` assigns; `p(...) -> (...)` calls.
        if matches!(self.kind(), TokenKind::Ident(_) | TokenKind::CapIdent(_))
            && matches!(self.toks[self.pos + 1].kind, TokenKind::Punct('='))
        {
            let var = self.name("a variable")?;
            self.bump();
            let term = self.term()?;
            return Ok(CoreStmt::Assign { var, term });
        }
        let proc = self.name("a statement")?;
        self.expect_punct('(', "to open the call inputs")?;
        let mut ins = Vec::new();
        if !self.at_punct(')') {
            loop {
                ins.push(self.term()?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct(')', "to close the call inputs")?;
        if !matches!(self.kind(), TokenKind::RArrow) {
            return Err(self.unexpected("`->` after the call inputs"));
        }
        self.bump();
        let outs = self.name_list("an output variable")?;
        Ok(CoreStmt::Call { proc, ins, outs })
    }

    fn pattern(&mut self) -> Result<CorePat, Diagnostic> {
        let head = self.pattern_atom()?;
        if self.eat_punct(':') {
            let tail = self.pattern()?;
            Ok(CorePat::cons(head, tail))
        } else {
            Ok(head)
        }
    }

    fn pattern_atom(&mut self) -> Result<CorePat, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Punct('?') => {
                self.bump();
                let v = self.name("a capture name")?;
                if self.at_punct('@') {
                    self.bump();
                    self.expect_punct('(', "after `@`")?;
                    let p = self.pattern()?;
                    self.expect_punct(')', "to close the inner pattern")?;
                    Ok(CorePat::As(v, Box::new(p)))
                } else {
                    Ok(CorePat::Capture(v))
                }
            }
            TokenKind::Punct('^') => {
                self.bump();
                Ok(CorePat::ReplySlot(self.name("a slot name")?))
            }
            TokenKind::Punct('$') => {
                self.bump();
                Ok(CorePat::Nil)
            }
            TokenKind::Punct('(') => {
                self.bump();
                let p = self.pattern()?;
                self.expect_punct(')', "to close the pattern")?;
                Ok(p)
            }
            TokenKind::Punct('-') => {
                self.bump();
                match self.kind().clone() {
                    TokenKind::Number(n) => {
                        self.bump();
                        Ok(CorePat::Num(-n))
                    }
                    _ => Err(self.unexpected("a number after `-`")),
                }
            }
            TokenKind::Number(n) => {
                self.bump();
                Ok(CorePat::Num(n))
            }
            TokenKind::Atom(s) => {
                self.bump();
                Ok(CorePat::Const(s))
            }
            TokenKind::Ident(s) | TokenKind::CapIdent(s) => {
                self.bump();
                if self.at_punct('(') {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(')') {
                        loop {
                            args.push(self.pattern()?);
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                    }
                    self.expect_punct(')', "to close the tuple pattern")?;
                    Ok(CorePat::Tuple(s, args))
                } else {
                    Ok(CorePat::Const(s))
                }
            }
            _ => Err(self.unexpected("a pattern")),
        }
    }

    fn term(&mut self) -> Result<CoreTerm, Diagnostic> {
        let head = self.term_atom()?;
        if self.eat_punct(':') {
            let tail = self.term()?;
            Ok(CoreTerm::cons(head, tail))
        } else {
            Ok(head)
        }
    }

    fn term_atom(&mut self) -> Result<CoreTerm, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Punct('$') => {
                self.bump();
                Ok(CoreTerm::Nil)
            }
            TokenKind::Punct('(') => {
                self.bump();
                let t = self.term()?;
                self.expect_punct(')', "to close the term")?;
                Ok(t)
            }
            TokenKind::Punct('-') => {
                self.bump();
                match self.kind().clone() {
                    TokenKind::Number(n) => {
                        self.bump();
                        Ok(CoreTerm::Num(-n))
                    }
                    _ => Err(self.unexpected("a number after `-`")),
                }
            }
            TokenKind::Number(n) => {
                self.bump();
                Ok(CoreTerm::Num(n))
            }
            TokenKind::Atom(s) => {
                self.bump();
                Ok(CoreTerm::Const(s))
            }
            TokenKind::Ident(s) | TokenKind::CapIdent(s) => {
                self.bump();
                if self.at_punct('(') {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(')') {
                        loop {
                            args.push(self.term()?);
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                    }
                    self.expect_punct(')', "to close the tuple")?;
                    Ok(CoreTerm::Tuple(s, args))
                } else {
                    Ok(CoreTerm::Var(s))
                }
            }
            _ => Err(self.unexpected("a term")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MERGE: &str = "\
%aldwych-core 1

#merge(in1, in2) -> (out) {
  in1 = ?m : ?r || out = m : o%1, merge(r, in2) -> (o%1);
  in2 = ?m : ?r || out = m : o%1, merge(in1, r) -> (o%1);
  in1 = $ || out = in2;
  in2 = $ || out = in1;
}
";

    #[test]
    fn parses_and_reprints_merge() {
        let p = parse_core(MERGE).expect("parse");
        assert_eq!(p.procs.len(), 1);
        let m = &p.procs[0];
        assert_eq!(m.name, "merge");
        assert_eq!(m.ins, vec!["in1", "in2"]);
        assert_eq!(m.groups[0].len(), 4);
        let text = p.to_text();
        let p2 = parse_core(&text).expect("reparse");
        assert_eq!(p, p2);
    }

    #[test]
    fn pattern_forms_round_trip() {
        let src = "\
%aldwych-core 1
#p(u, n) -> (x) {
  u = f(?w, ^r, ?t@(g(?a) : $)), n >= -2 || x = 'stop', q(w, 3 : $) -> (r);
:
  u = $ || x = n;
}
";
        let p = parse_core(src).expect("parse");
        let r = &p.procs[0].groups[0][0];
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.guards.len(), 1);
        match &r.matches[0].1 {
            CorePat::Tuple(tag, args) => {
                assert_eq!(tag, "f");
                assert!(matches!(&args[0], CorePat::Capture(v) if v == "w"));
                assert!(matches!(&args[1], CorePat::ReplySlot(v) if v == "r"));
                assert!(matches!(&args[2], CorePat::As(v, _) if v == "t"));
            }
            other => panic!("expected tuple pattern, got {other:?}"),
        }
        assert_eq!(p.procs[0].groups.len(), 2);
        let p2 = parse_core(&p.to_text()).expect("reparse");
        assert_eq!(p, p2);
    }

    #[test]
    fn header_is_required() {
        let e = parse_core("#p() -> () { || ; }").unwrap_err();
        assert!(e.message.contains("%aldwych-core"));
    }

    #[test]
    fn generated_names_allowed() {
        let src = "%aldwych-core 1\n#p%1(a) -> (b%2) { a = ?x || b%2 = x; }\n";
        let p = parse_core(src).expect("parse");
        assert_eq!(p.procs[0].name, "p%1");
        assert_eq!(p.procs[0].outs[0], "b%2");
    }
}
