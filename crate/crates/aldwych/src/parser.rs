//! Recursive-descent parser for surface programs.
//!
//! Punctuation is tokenized one character at a time, so the multi-character
//! operators (`==`, `>=`, `=<`, `\=`, `<=`) are recognized here, where the
//! grammar context disambiguates them.  Two further context-sensitive rules
//! live in this file:
//!
//! * a name immediately followed by `(` is a call, while a space before the
//!   parenthesis makes it a function-style application; for capitalized
//!   names the call reading additionally requires a matching declaration,
//!   which a cheap pre-scan collects before the real parse;
//! * a bar run may be written with spaces between the bars, so consecutive
//!   bar tokens are merged when a rule commits.

use std::collections::HashSet;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::lexer;
use crate::span::Span;
use crate::token::{Token, TokenKind};

/// Parse a complete surface program.
pub fn parse(text: &str) -> Result<Program, Diagnostic> {
    let tokens = lexer::tokenize(text)?;
    Parser::new(tokens).program()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Declared procedure names; used to tell `F(x)` the call from
    /// `F (x)`-style application when `F` is capitalized.
    procs: HashSet<String>,
}

/// Pattern position: heads of matched terms read bare lowercase names as
/// constants, argument positions read them as captures.
#[derive(Clone, Copy, PartialEq)]
enum PatCtx {
    Top,
    Arg,
}

/// A pattern piece whose meaning may depend on its position in a cons chain.
enum RawPat {
    Bare(Name),
    Done(Pattern),
}

/// Same idea for the pieces of a constructed term.
enum RawTup {
    Bare(Name),
    Done(TupleExpr),
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        let mut procs = HashSet::new();
        for w in toks.windows(2) {
            if matches!(w[0].kind, TokenKind::Punct('#')) {
                match &w[1].kind {
                    TokenKind::Ident(s) | TokenKind::CapIdent(s) => {
                        procs.insert(s.clone());
                    }
                    _ => {}
                }
            }
        }
        Parser { toks, pos: 0, procs }
    }

    // ── token plumbing ─────────────────────────────────────────────────────

    fn t(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn kind(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn nth(&self, n: usize) -> &TokenKind {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn at_end(&self) -> bool {
        matches!(self.kind(), TokenKind::End)
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.kind(), TokenKind::Punct(p) if *p == c)
    }

    fn nth_punct(&self, n: usize, c: char) -> bool {
        matches!(self.nth(n), TokenKind::Punct(p) if *p == c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.at_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char, ctx: &str) -> Result<Span, Diagnostic> {
        if self.at_punct(c) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{c}` {ctx}")))
        }
    }

    /// Is the token at offset `n` flush against the one before it?
    fn adj_at(&self, n: usize) -> bool {
        let i = self.pos + n;
        i > 0 && i < self.toks.len() && self.toks[i].span.start == self.toks[i - 1].span.end
    }

    /// Is the current token flush against the previous one?
    fn adjacent(&self) -> bool {
        self.adj_at(0)
    }

    fn err(&self, span: Span, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error("parse", span, msg)
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        self.err(self.span(), format!("expected {what}, found `{}`", self.t().kind))
    }

    /// A lowercase name.
    fn ident(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        match self.kind().clone() {
            TokenKind::Ident(s) => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// A name of either case, with its kind read off the capitalization.
    fn any_name(&mut self, what: &str) -> Result<Name, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Ident(s) => {
                let sp = self.bump().span;
                Ok(Name::future(s, sp))
            }
            TokenKind::CapIdent(s) => {
                let sp = self.bump().span;
                Ok(Name::handle(s, sp))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    // ── declarations ───────────────────────────────────────────────────────

    fn program(&mut self) -> Result<Program, Diagnostic> {
        let mut decls = Vec::new();
        while !self.at_end() {
            decls.push(self.decl()?);
        }
        Ok(Program { decls })
    }

    fn decl(&mut self) -> Result<Decl, Diagnostic> {
        let start = self.expect_punct('#', "to start a declaration")?;
        let name = self.any_name("a procedure name")?;

        self.expect_punct('(', "after the procedure name")?;
        let mut params = Vec::new();
        if !self.at_punct(')') {
            loop {
                params.push(self.param()?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct(')', "to close the parameter list")?;

        let mut curried = Vec::new();
        while self.eat_punct('[') {
            while !self.at_punct(']') {
                let p = self.param()?;
                if p.default.is_some() {
                    return Err(self.err(p.span, "curried parameters cannot have defaults"));
                }
                curried.push(p);
                self.eat_punct(',');
            }
            self.expect_punct(']', "to close the curried parameters")?;
        }

        let outspec = match self.kind() {
            TokenKind::RArrow => {
                self.bump();
                OutSpec::Named(self.outs_after_arrow()?)
            }
            TokenKind::Punct('<') => OutSpec::AnonValue(self.bump().span),
            TokenKind::Punct('~') => OutSpec::AnonHandle(self.bump().span),
            _ => OutSpec::None,
        };

        let mut init = Vec::new();
        let mut macro_body = None;
        if self.at_punct('=') {
            if self.nth_punct(1, '=') && self.adj_at(1) {
                // `==` introduces a macro body ending at `;`, the next
                // declaration, or the end of the file.
                self.bump();
                self.bump();
                let stmts = self.statement_list()?;
                if !self.eat_punct(';')
                    && !self.at_punct('#')
                    && !matches!(self.kind(), TokenKind::End)
                {
                    return Err(self.unexpected("`;` to end the macro body"));
                }
                macro_body = Some(stmts);
            } else {
                self.bump();
                init = self.statement_list()?;
                if !self.at_punct('{') {
                    return Err(self.unexpected("`{` after the initialization"));
                }
            }
        }

        let mut body = Vec::new();
        if macro_body.is_none() {
            self.expect_punct('{', "to open the procedure body")?;
            body = self.groups()?;
            self.expect_punct('}', "to close the procedure body")?;
        }

        let span = start.to(self.prev_span());
        Ok(Decl { name: name.text, params, curried, outspec, init, macro_body, body, span })
    }

    fn param(&mut self) -> Result<Param, Diagnostic> {
        let name = self.any_name("a parameter name")?;
        let mut default = None;
        if matches!(self.kind(), TokenKind::LArrow) {
            self.bump();
            default = Some(self.expr(false)?);
        }
        let span = name.span.to(self.prev_span());
        Ok(Param { name, default, span })
    }

    fn outs_after_arrow(&mut self) -> Result<Vec<Name>, Diagnostic> {
        if self.eat_punct('(') {
            let mut outs = Vec::new();
            if !self.at_punct(')') {
                loop {
                    outs.push(self.any_name("an output name")?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
            }
            self.expect_punct(')', "to close the outputs")?;
            Ok(outs)
        } else {
            Ok(vec![self.any_name("an output name")?])
        }
    }

    // ── rules ──────────────────────────────────────────────────────────────

    fn groups(&mut self) -> Result<Vec<Group>, Diagnostic> {
        let mut groups = vec![Group { rules: Vec::new() }];
        loop {
            if self.at_punct('}') || self.at_end() {
                break;
            }
            if self.eat_punct(':') {
                groups.push(Group { rules: Vec::new() });
                continue;
            }
            let rule = self.rule()?;
            groups.last_mut().unwrap().rules.push(rule);
        }
        Ok(groups)
    }

    fn rule(&mut self) -> Result<Rule, Diagnostic> {
        let start = self.span();
        let lhs = if matches!(self.kind(), TokenKind::Bars(_)) {
            Vec::new()
        } else {
            self.lhs_items()?
        };
        let bars = self.bar_run()?;
        let rhs = self.statement_list()?;
        let body = if self.eat_punct('{') {
            let groups = self.groups()?;
            self.expect_punct('}', "to close the embedded body")?;
            Some(groups)
        } else {
            None
        };
        let span = start.to(self.prev_span());
        self.eat_punct(';');
        Ok(Rule { lhs, bars, rhs, body, span })
    }

    /// One or more bar tokens; adjacent runs are merged so that `| |` and
    /// `||` commit the same way.
    fn bar_run(&mut self) -> Result<u32, Diagnostic> {
        let mut bars = match self.kind() {
            TokenKind::Bars(n) => {
                let n = *n;
                self.bump();
                n
            }
            _ => return Err(self.unexpected("`|`")),
        };
        while let TokenKind::Bars(n) = self.kind() {
            bars += *n;
            self.bump();
        }
        Ok(bars)
    }

    fn lhs_items(&mut self) -> Result<Vec<LhsItem>, Diagnostic> {
        let mut items = vec![self.lhs_item()?];
        loop {
            if self.eat_punct(',') {
                items.push(self.lhs_item()?);
            } else if matches!(self.kind(), TokenKind::Bars(_)) {
                break;
            } else {
                return Err(self.unexpected("`,` or `|` after the condition"));
            }
        }
        Ok(items)
    }

    fn lhs_item(&mut self) -> Result<LhsItem, Diagnostic> {
        let start = self.span();
        match self.kind().clone() {
            // Nil-name message pattern: `(Val)-` and friends.
            TokenKind::Punct('(') => self.messages(MsgTarget::Bare(start)),
            TokenKind::Punct('?') => {
                self.bump();
                let var = self.any_name("a message variable after `?`")?;
                Ok(LhsItem::RawCapture {
                    target: MsgTarget::Bare(start),
                    var,
                    span: start.to(self.prev_span()),
                })
            }
            TokenKind::Punct('$') => {
                self.bump();
                Ok(LhsItem::Close { target: MsgTarget::Bare(start), span: start })
            }
            TokenKind::Punct('~') => {
                self.bump();
                let target = MsgTarget::SelfRef(start);
                if self.eat_punct('?') {
                    let var = self.any_name("a message variable after `?`")?;
                    Ok(LhsItem::RawCapture { target, var, span: start.to(self.prev_span()) })
                } else if self.eat_punct('$') {
                    Ok(LhsItem::Close { target, span: start.to(self.prev_span()) })
                } else if self.at_punct('.') {
                    self.messages(target)
                } else {
                    Err(self.unexpected("`.`, `?`, or `$` after `~`"))
                }
            }
            TokenKind::Number(_) | TokenKind::Atom(_) => self.guard(),
            TokenKind::CapIdent(s) => {
                if self.nth_punct(1, '?') {
                    let sp = self.bump().span;
                    self.bump();
                    let var = self.any_name("a message variable after `?`")?;
                    Ok(LhsItem::RawCapture {
                        target: MsgTarget::Var(Name::handle(s, sp)),
                        var,
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '$') {
                    let sp = self.bump().span;
                    self.bump();
                    Ok(LhsItem::Close {
                        target: MsgTarget::Var(Name::handle(s, sp)),
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '.') || self.nth_punct(1, '/') {
                    let sp = self.bump().span;
                    self.messages(MsgTarget::Var(Name::handle(s, sp)))
                } else {
                    Err(self.err(start, format!("expected `.`, `?`, or `$` after the handle `{s}`")))
                }
            }
            TokenKind::Ident(s) => {
                // `==` and `=<` are comparisons; a single `=` is a match.
                if self.nth_punct(1, '=')
                    && !(self.nth_punct(2, '=') && self.adj_at(2))
                    && !(self.nth_punct(2, '<') && self.adj_at(2))
                {
                    let var_sp = self.bump().span;
                    self.bump();
                    let pat = self.pattern(PatCtx::Top)?;
                    Ok(LhsItem::Equality {
                        var: Name::future(s, var_sp),
                        pat,
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '.') || self.nth_punct(1, '?') || self.nth_punct(1, '/')
                {
                    self.channel_get()
                } else if self.nth_punct(1, '$') {
                    let sp = self.bump().span;
                    self.bump();
                    Ok(LhsItem::Close {
                        target: MsgTarget::Var(Name::future(s, sp)),
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '(') && self.adj_at(1) {
                    self.messages(MsgTarget::Bare(start))
                } else if self.nth_punct(1, '<')
                    || self.nth_punct(1, '>')
                    || self.nth_punct(1, '\\')
                    || self.nth_punct(1, '=')
                {
                    self.guard()
                } else if self.nth_punct(1, '-') && !matches!(self.nth(2), TokenKind::Bars(_)) {
                    // `x - y ...` wants to be a comparison operand; a `-`
                    // right before the bar is an anonymous return marker.
                    self.guard()
                } else {
                    // Bare message name, optionally with a reply or `-`.
                    self.messages(MsgTarget::Bare(start))
                }
            }
            _ => Err(self.unexpected("a condition")),
        }
    }

    fn guard(&mut self) -> Result<LhsItem, Diagnostic> {
        let start = self.span();
        let lhs = self.arith(false)?;
        let op = self.rel_op()?;
        let rhs = self.arith(false)?;
        Ok(LhsItem::Guard { op, lhs, rhs, span: start.to(self.prev_span()) })
    }

    fn rel_op(&mut self) -> Result<RelOp, Diagnostic> {
        let op = match self.kind() {
            TokenKind::Punct('<') => {
                self.bump();
                RelOp::Lt
            }
            TokenKind::Punct('>') => {
                self.bump();
                if self.at_punct('=') && self.adjacent() {
                    self.bump();
                    RelOp::Ge
                } else {
                    RelOp::Gt
                }
            }
            TokenKind::Punct('=') => {
                self.bump();
                if self.at_punct('=') && self.adjacent() {
                    self.bump();
                    RelOp::Eq
                } else if self.at_punct('<') && self.adjacent() {
                    self.bump();
                    RelOp::Le
                } else {
                    return Err(self.unexpected("`=` or `<` to finish the comparison"));
                }
            }
            TokenKind::Punct('\\') => {
                self.bump();
                if self.at_punct('=') && self.adjacent() {
                    self.bump();
                    RelOp::Ne
                } else {
                    return Err(self.unexpected("`=` after `\\`"));
                }
            }
            _ => return Err(self.unexpected("a comparison operator")),
        };
        Ok(op)
    }

    fn channel_get(&mut self) -> Result<LhsItem, Diagnostic> {
        let start = self.span();
        let chan = match self.kind().clone() {
            TokenKind::Ident(s) => Name::future(s, self.bump().span),
            _ => return Err(self.unexpected("a channel name")),
        };
        let mut items = Vec::new();
        let mut lookahead_at = None;
        loop {
            if self.at_punct('/') {
                if lookahead_at.is_some() {
                    return Err(self.err(self.span(), "only one lookahead split per read chain"));
                }
                self.bump();
                lookahead_at = Some(items.len());
                continue;
            }
            if self.eat_punct('.') {
                items.push(GetItem::Got(self.pattern(PatCtx::Top)?));
            } else if self.eat_punct('?') {
                let name = self.any_name("a capture name after `?`")?;
                if self.at_punct('(') && self.adjacent() {
                    return Err(self.err(
                        self.span(),
                        "`?` captures a whole element; use `.` to match a structured one",
                    ));
                }
                items.push(GetItem::Captured(name));
            } else {
                break;
            }
        }
        if items.is_empty() {
            return Err(self.unexpected("`.` or `?` after the channel name"));
        }
        if let Some(at) = lookahead_at {
            if at >= items.len() {
                return Err(self.err(start, "lookahead split must come before a read"));
            }
        }
        Ok(LhsItem::ChannelGet { chan, items, lookahead_at, span: start.to(self.prev_span()) })
    }

    fn messages(&mut self, target: MsgTarget) -> Result<LhsItem, Diagnostic> {
        let start = target.span();
        let mut items = Vec::new();
        let mut lookahead_at = None;
        // Targeted receives are written `H.msg`; bare ones start at the name.
        let targeted = matches!(target, MsgTarget::Var(_) | MsgTarget::SelfRef(_));
        loop {
            if targeted || !items.is_empty() {
                if self.at_punct('/') {
                    if lookahead_at.is_some() {
                        return Err(self.err(self.span(), "only one lookahead split per read chain"));
                    }
                    self.bump();
                    lookahead_at = Some(items.len());
                }
                if !self.eat_punct('.') {
                    break;
                }
                if self.at_punct('$') {
                    // Destructor form `H.$`: only as the whole item.
                    if !items.is_empty() || lookahead_at.is_some() {
                        return Err(self.err(self.span(), "`$` cannot follow received messages"));
                    }
                    self.bump();
                    return Ok(LhsItem::Close { target, span: start.to(self.prev_span()) });
                }
            }
            items.push(self.msg_pat()?);
            if !self.at_punct('.') && !self.at_punct('/') {
                break;
            }
        }
        if let Some(at) = lookahead_at {
            if at >= items.len() {
                return Err(self.err(start, "lookahead split must come before a message"));
            }
        }
        Ok(LhsItem::Messages { target, items, lookahead_at, span: start.to(self.prev_span()) })
    }

    fn msg_pat(&mut self) -> Result<MsgPat, Diagnostic> {
        let start = self.span();
        let name = if self.at_punct('(') {
            None
        } else {
            Some(self.ident("a message name")?.0)
        };
        let mut args = Vec::new();
        if self.eat_punct('(') {
            if !self.at_punct(')') {
                loop {
                    args.push(self.pattern(PatCtx::Arg)?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
            }
            self.expect_punct(')', "to close the message arguments")?;
        }
        let mut outs = Vec::new();
        if matches!(self.kind(), TokenKind::RArrow) {
            self.bump();
            outs = self.outs_after_arrow()?;
        }
        let mut anon_return = None;
        if self.at_punct('-') && outs.is_empty() {
            anon_return = Some(self.bump().span);
        }
        Ok(MsgPat { name, args, outs, anon_return, span: start.to(self.prev_span()) })
    }

    // ── patterns ───────────────────────────────────────────────────────────

    fn pattern(&mut self, ctx: PatCtx) -> Result<Pattern, Diagnostic> {
        let start = self.span();
        let mut raw = vec![self.pattern_item()?];
        while self.eat_punct(':') {
            raw.push(self.pattern_item()?);
        }
        let n = raw.len();
        let mut pats = Vec::with_capacity(n);
        for (i, r) in raw.into_iter().enumerate() {
            let tail = n > 1 && i == n - 1;
            pats.push(self.classify_pat(r, ctx, tail)?);
        }
        let mut pat = pats.pop().unwrap();
        while let Some(head) = pats.pop() {
            let span = start.to(pat.span());
            pat = Pattern::Cons { head: Box::new(head), tail: Box::new(pat), span };
        }
        Ok(pat)
    }

    fn pattern_item(&mut self) -> Result<RawPat, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Ident(s) => {
                let sp = self.bump().span;
                if self.at_punct('(') && self.adjacent() {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(')') {
                        loop {
                            args.push(self.pattern(PatCtx::Arg)?);
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                    }
                    self.expect_punct(')', "to close the matched term")?;
                    Ok(RawPat::Done(Pattern::Tuple {
                        tag: s,
                        args,
                        span: sp.to(self.prev_span()),
                    }))
                } else {
                    Ok(RawPat::Bare(Name::future(s, sp)))
                }
            }
            TokenKind::CapIdent(s) => {
                let sp = self.bump().span;
                Ok(RawPat::Bare(Name::handle(s, sp)))
            }
            TokenKind::Number(n) => {
                let sp = self.bump().span;
                Ok(RawPat::Done(Pattern::Num(n, sp)))
            }
            TokenKind::Atom(s) => {
                let sp = self.bump().span;
                Ok(RawPat::Done(Pattern::Const(s, sp)))
            }
            TokenKind::Punct('$') => {
                let sp = self.bump().span;
                Ok(RawPat::Done(Pattern::Nil(sp)))
            }
            _ => Err(self.unexpected("a pattern")),
        }
    }

    fn classify_pat(&self, raw: RawPat, ctx: PatCtx, tail: bool) -> Result<Pattern, Diagnostic> {
        match raw {
            RawPat::Done(p) => Ok(p),
            RawPat::Bare(n) => {
                if tail {
                    return Ok(Pattern::Var(n));
                }
                match (ctx, n.kind) {
                    (PatCtx::Top, Kind::Future) => Ok(Pattern::Const(n.text, n.span)),
                    (PatCtx::Top, Kind::Handle) => {
                        Err(self.err(n.span, format!("a handle `{}` cannot head a matched term", n.text)))
                    }
                    (PatCtx::Arg, _) => Ok(Pattern::Var(n)),
                }
            }
        }
    }

    // ── constructed terms (`=` right-hand sides) ───────────────────────────

    fn tuple_expr(&mut self) -> Result<TupleExpr, Diagnostic> {
        let start = self.span();
        let mut raw = vec![self.tuple_item()?];
        while self.eat_punct(':') {
            raw.push(self.tuple_item()?);
        }
        let n = raw.len();
        let mut parts = Vec::with_capacity(n);
        for (i, r) in raw.into_iter().enumerate() {
            let tail = n > 1 && i == n - 1;
            parts.push(self.classify_tup(r, tail)?);
        }
        let mut t = parts.pop().unwrap();
        while let Some(head) = parts.pop() {
            let span = start.to(t.span());
            t = TupleExpr::Cons { head: Box::new(head), tail: Box::new(t), span };
        }
        Ok(t)
    }

    fn tuple_item(&mut self) -> Result<RawTup, Diagnostic> {
        match self.kind().clone() {
            TokenKind::Ident(s) => {
                let sp = self.bump().span;
                if self.at_punct('(') && self.adjacent() {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(')') {
                        loop {
                            args.push(self.expr(false)?);
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                    }
                    self.expect_punct(')', "to close the term")?;
                    Ok(RawTup::Done(TupleExpr::Tuple {
                        tag: s,
                        args,
                        span: sp.to(self.prev_span()),
                    }))
                } else {
                    Ok(RawTup::Bare(Name::future(s, sp)))
                }
            }
            TokenKind::CapIdent(s) => {
                let sp = self.bump().span;
                Ok(RawTup::Bare(Name::handle(s, sp)))
            }
            TokenKind::Number(n) => {
                let sp = self.bump().span;
                Ok(RawTup::Done(TupleExpr::Num(n, sp)))
            }
            TokenKind::Atom(s) => {
                let sp = self.bump().span;
                Ok(RawTup::Done(TupleExpr::Const(s, sp)))
            }
            TokenKind::Punct('$') => {
                let sp = self.bump().span;
                Ok(RawTup::Done(TupleExpr::Nil(sp)))
            }
            _ => Err(self.unexpected("a term")),
        }
    }

    fn classify_tup(&self, raw: RawTup, tail: bool) -> Result<TupleExpr, Diagnostic> {
        match raw {
            RawTup::Done(t) => Ok(t),
            RawTup::Bare(n) => {
                if tail {
                    return Ok(TupleExpr::Var(n));
                }
                match n.kind {
                    Kind::Future => Ok(TupleExpr::Const(n.text, n.span)),
                    Kind::Handle => {
                        Err(self.err(n.span, format!("a handle `{}` cannot head a term", n.text)))
                    }
                }
            }
        }
    }

    /// A single constructed element, as sent by `.T` on a channel.
    fn tuple_single(&mut self) -> Result<TupleExpr, Diagnostic> {
        let raw = self.tuple_item()?;
        self.classify_tup(raw, false)
    }

    // ── statements ─────────────────────────────────────────────────────────

    fn statement_list(&mut self) -> Result<Vec<Statement>, Diagnostic> {
        let mut stmts = Vec::new();
        loop {
            if self.at_punct(';')
                || self.at_punct(':')
                || self.at_punct('}')
                || self.at_punct('{')
                || self.at_end()
            {
                break;
            }
            stmts.push(self.statement()?);
            if self.eat_punct(',') {
                continue;
            }
            // An if-then-else may attach without a comma, as may the `{` of
            // an embedded body (which ends the list).
            if self.at_punct('?') {
                continue;
            }
            break;
        }
        Ok(stmts)
    }

    fn statement(&mut self) -> Result<Statement, Diagnostic> {
        let start = self.span();
        match self.kind().clone() {
            TokenKind::Punct('<') => {
                self.bump();
                if self.at_punct('=') {
                    self.bump();
                    let value = self.expr(false)?;
                    Ok(Statement::Become { value, span: start.to(self.prev_span()) })
                } else if self.eat_punct('(') {
                    let mut names = Vec::new();
                    if !self.at_punct(')') {
                        loop {
                            names.push(self.any_name("a local name")?);
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                    }
                    self.expect_punct(')', "to close the local declaration")?;
                    Ok(Statement::LocalDecl { names, span: start.to(self.prev_span()) })
                } else {
                    Err(self.unexpected("`=` or `(` after `<`"))
                }
            }
            TokenKind::Punct('>') => {
                self.bump();
                let value = if self.at_punct('=') {
                    self.bump();
                    AnonValue::Bind(self.tuple_expr()?)
                } else {
                    AnonValue::Expr(self.expr(false)?)
                };
                Ok(Statement::AnonWrite { value, span: start.to(self.prev_span()) })
            }
            TokenKind::Punct('?') => self.if_then_else(),
            TokenKind::Punct('+') => self.sequence(),
            TokenKind::Punct('~') => {
                self.bump();
                let target = SendTarget::SelfRef(start);
                let msgs = self.send_msgs(true)?;
                Ok(Statement::Send { target, msgs, span: start.to(self.prev_span()) })
            }
            TokenKind::CapIdent(s) => {
                if matches!(self.nth(1), TokenKind::LArrow) {
                    let sp = self.bump().span;
                    self.bump();
                    let expr = self.expr(false)?;
                    Ok(Statement::Alias {
                        var: Name::handle(s, sp),
                        expr,
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '^') {
                    let sp = self.bump().span;
                    self.bump();
                    let var = self.any_name("a captured message variable after `^`")?;
                    Ok(Statement::Relay {
                        target: Name::handle(s, sp),
                        var,
                        span: start.to(self.prev_span()),
                    })
                } else if self.nth_punct(1, '.') {
                    let sp = self.bump().span;
                    let target = SendTarget::Var(Name::handle(s, sp));
                    let msgs = self.send_msgs(false)?;
                    Ok(Statement::Send { target, msgs, span: start.to(self.prev_span()) })
                } else if self.nth_punct(1, '$') {
                    Err(self.err(start, format!("the handle `{s}` cannot be closed here")))
                } else {
                    self.expr_statement()
                }
            }
            TokenKind::Ident(s) => {
                if self.nth_punct(1, '=')
                    && !(self.nth_punct(2, '=') && self.adj_at(2))
                    && !(self.nth_punct(2, '<') && self.adj_at(2))
                {
                    let sp = self.bump().span;
                    self.bump();
                    let term = self.tuple_expr()?;
                    Ok(Statement::Bind {
                        var: Name::future(s, sp),
                        term,
                        span: start.to(self.prev_span()),
                    })
                } else if matches!(self.nth(1), TokenKind::LArrow) {
                    let sp = self.bump().span;
                    self.bump();
                    let expr = self.expr(false)?;
                    Ok(Statement::Alias {
                        var: Name::future(s, sp),
                        expr,
                        span: start.to(self.prev_span()),
                    })
                } else if (self.nth_punct(1, '.') || self.nth_punct(1, '^'))
                    && !(self.nth_punct(1, '(') )
                {
                    self.put(Name::future(s, start))
                } else if self.nth_punct(1, '$') {
                    let sp = self.bump().span;
                    self.bump();
                    Ok(Statement::StreamClose {
                        var: Name::future(s, sp),
                        span: start.to(self.prev_span()),
                    })
                } else {
                    self.expr_statement()
                }
            }
            _ => self.expr_statement(),
        }
    }

    fn put(&mut self, _chan_hint: Name) -> Result<Statement, Diagnostic> {
        let start = self.span();
        let chan = match self.kind().clone() {
            TokenKind::Ident(s) => Name::future(s, self.bump().span),
            _ => return Err(self.unexpected("a channel name")),
        };
        let mut items = Vec::new();
        let mut closed = false;
        loop {
            if self.eat_punct('.') {
                items.push(PutItem::Tup(self.tuple_single()?));
            } else if self.eat_punct('^') {
                items.push(PutItem::Val(self.arith(true)?));
            } else if self.at_punct('$') {
                self.bump();
                closed = true;
                break;
            } else {
                break;
            }
        }
        Ok(Statement::Put { chan, items, closed, span: start.to(self.prev_span()) })
    }

    fn send_msgs(&mut self, bare_first: bool) -> Result<Vec<MsgSend>, Diagnostic> {
        let mut msgs = Vec::new();
        loop {
            if !(bare_first && msgs.is_empty()) {
                self.expect_punct('.', "before the message")?;
            }
            let start = self.span();
            let name = if self.at_punct('(') {
                None
            } else {
                Some(self.ident("a message name")?.0)
            };
            let mut args = Vec::new();
            if self.at_punct('(') && (name.is_none() || self.adjacent()) {
                self.bump();
                if !self.at_punct(')') {
                    loop {
                        args.push(self.expr(false)?);
                        if !self.eat_punct(',') {
                            break;
                        }
                    }
                }
                self.expect_punct(')', "to close the message arguments")?;
            }
            let mut outs = Vec::new();
            if matches!(self.kind(), TokenKind::RArrow) {
                self.bump();
                outs = self.outs_after_arrow()?;
            }
            msgs.push(MsgSend { name, args, outs, span: start.to(self.prev_span()) });
            if !self.at_punct('.') {
                break;
            }
        }
        Ok(msgs)
    }

    fn if_then_else(&mut self) -> Result<Statement, Diagnostic> {
        let start = self.expect_punct('?', "to start the conditional")?;
        let cond = self.expr(true)?;
        self.expect_punct(':', "after the condition")?;
        let then_b = self.branch()?;
        self.eat_punct(';');
        self.expect_punct(':', "before the else branch")?;
        let else_b = self.branch()?;
        Ok(Statement::IfThenElse { cond, then_b, else_b, span: start.to(self.prev_span()) })
    }

    fn branch(&mut self) -> Result<Branch, Diagnostic> {
        let start = self.span();
        let bars = if matches!(self.kind(), TokenKind::Bars(_)) {
            Some(self.bar_run()?)
        } else {
            None
        };
        let stmts = self.statement_list()?;
        Ok(Branch { bars, stmts, span: start.to(self.prev_span()) })
    }

    fn sequence(&mut self) -> Result<Statement, Diagnostic> {
        let start = self.expect_punct('+', "to start the sequence")?;
        let mut locals = Vec::new();
        if self.at_punct('<') && self.nth_punct(1, '(') {
            self.bump();
            self.bump();
            if !self.at_punct(')') {
                loop {
                    locals.push(self.any_name("a local name")?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
            }
            self.expect_punct(')', "to close the local declaration")?;
        }
        let first = self.statement_list()?;
        self.expect_punct(';', "between the sequenced steps")?;
        let second = self.statement_list()?;
        Ok(Statement::Sequence { locals, first, second, span: start.to(self.prev_span()) })
    }

    fn expr_statement(&mut self) -> Result<Statement, Diagnostic> {
        let start = self.span();
        let expr = self.expr(false)?;
        let mut outs = Vec::new();
        if matches!(self.kind(), TokenKind::RArrow) {
            self.bump();
            outs = self.outs_after_arrow()?;
        }
        let span = start.to(self.prev_span());
        match expr {
            Expr::Call { proc, args, named, .. } => Ok(Statement::Call { proc, args, named, outs, span }),
            expr => Ok(Statement::ExprStmt { expr, outs, span }),
        }
    }

    // ── expressions ────────────────────────────────────────────────────────

    fn expr(&mut self, allow_rel: bool) -> Result<Expr, Diagnostic> {
        let start = self.span();
        let lhs = self.arith(false)?;
        if allow_rel {
            let is_rel = matches!(self.kind(), TokenKind::Punct('<' | '>' | '\\'))
                || (self.at_punct('=')
                    && ((self.nth_punct(1, '=') && self.adj_at(1))
                        || (self.nth_punct(1, '<') && self.adj_at(1))));
            if is_rel {
                let op = self.rel_op()?;
                let rhs = self.arith(false)?;
                return Ok(Expr::Rel {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                    span: start.to(self.prev_span()),
                });
            }
        }
        Ok(lhs)
    }

    /// `no_dot` suppresses postfix message chains, for contexts where a
    /// following `.` belongs to the enclosing statement.
    fn arith(&mut self, no_dot: bool) -> Result<Expr, Diagnostic> {
        let start = self.span();
        let mut e = self.term(no_dot)?;
        loop {
            let op = if self.at_punct('+') {
                ArithOp::Add
            } else if self.at_punct('-') {
                ArithOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.term(no_dot)?;
            e = Expr::Arith {
                op,
                lhs: Box::new(e),
                rhs: Box::new(rhs),
                span: start.to(self.prev_span()),
            };
        }
        Ok(e)
    }

    fn term(&mut self, no_dot: bool) -> Result<Expr, Diagnostic> {
        let start = self.span();
        let mut e = self.application(no_dot)?;
        loop {
            let op = if self.at_punct('*') {
                ArithOp::Mul
            } else if self.at_punct('/') {
                ArithOp::Div
            } else {
                break;
            };
            self.bump();
            let rhs = self.application(no_dot)?;
            e = Expr::Arith {
                op,
                lhs: Box::new(e),
                rhs: Box::new(rhs),
                span: start.to(self.prev_span()),
            };
        }
        Ok(e)
    }

    /// Juxtaposition: `Func H` applies the left value to the right one.
    fn application(&mut self, no_dot: bool) -> Result<Expr, Diagnostic> {
        let start = self.span();
        let mut e = self.postfix(no_dot)?;
        while self.starts_primary() {
            let arg = self.postfix(no_dot)?;
            e = Expr::Juxt {
                func: Box::new(e),
                arg: Box::new(arg),
                span: start.to(self.prev_span()),
            };
        }
        Ok(e)
    }

    fn starts_primary(&self) -> bool {
        matches!(
            self.kind(),
            TokenKind::Ident(_)
                | TokenKind::CapIdent(_)
                | TokenKind::Number(_)
                | TokenKind::Atom(_)
                | TokenKind::Punct('(')
        )
    }

    fn postfix(&mut self, no_dot: bool) -> Result<Expr, Diagnostic> {
        let start = self.span();
        let mut e = self.primary()?;
        if no_dot {
            return Ok(e);
        }
        loop {
            if self.at_punct('.') && matches!(self.nth(1), TokenKind::Ident(_) | TokenKind::Punct('(')) {
                let mut chain = Vec::new();
                while self.at_punct('.')
                    && matches!(self.nth(1), TokenKind::Ident(_) | TokenKind::Punct('('))
                {
                    self.bump();
                    chain.push(self.msg_send_e()?);
                }
                e = Expr::DotSend {
                    base: Box::new(e),
                    chain,
                    span: start.to(self.prev_span()),
                };
            } else if self.at_punct('~') && matches!(self.nth(1), TokenKind::Ident(_)) {
                let mut chain = Vec::new();
                while self.at_punct('~') && matches!(self.nth(1), TokenKind::Ident(_)) {
                    self.bump();
                    chain.push(self.msg_send_e()?);
                }
                e = Expr::TildeSend {
                    base: Box::new(e),
                    chain,
                    span: start.to(self.prev_span()),
                };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn msg_send_e(&mut self) -> Result<MsgSendE, Diagnostic> {
        let start = self.span();
        let name = if self.at_punct('(') {
            None
        } else {
            Some(self.ident("a message name")?.0)
        };
        let mut args = Vec::new();
        // Arguments must open flush against the name; a spaced parenthesis
        // belongs to the surrounding application.
        if self.at_punct('(') && (name.is_none() || self.adjacent()) {
            self.bump();
            if !self.at_punct(')') {
                loop {
                    args.push(self.expr(false)?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
            }
            self.expect_punct(')', "to close the message arguments")?;
        }
        Ok(MsgSendE { name, args, span: start.to(self.prev_span()) })
    }

    fn primary(&mut self) -> Result<Expr, Diagnostic> {
        let start = self.span();
        match self.kind().clone() {
            TokenKind::Ident(s) => {
                let sp = self.bump().span;
                if self.at_punct('(') && self.adjacent() {
                    self.call_tail(s, sp)
                } else {
                    Ok(Expr::Var(Name::future(s, sp)))
                }
            }
            TokenKind::CapIdent(s) => {
                let sp = self.bump().span;
                if self.at_punct('(') && self.adjacent() && self.procs.contains(&s) {
                    self.call_tail(s, sp)
                } else {
                    Ok(Expr::Var(Name::handle(s, sp)))
                }
            }
            TokenKind::Number(n) => {
                let sp = self.bump().span;
                Ok(Expr::Num(n, sp))
            }
            TokenKind::Atom(s) => {
                let sp = self.bump().span;
                Ok(Expr::Atom(s, sp))
            }
            TokenKind::Punct('~') => {
                let sp = self.bump().span;
                if matches!(self.kind(), TokenKind::Ident(_)) {
                    let mut chain = Vec::new();
                    loop {
                        chain.push(self.msg_send_e()?);
                        if self.at_punct('~') && matches!(self.nth(1), TokenKind::Ident(_)) {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Ok(Expr::TildeSend {
                        base: Box::new(Expr::SelfRef(sp)),
                        chain,
                        span: start.to(self.prev_span()),
                    })
                } else {
                    Ok(Expr::SelfRef(sp))
                }
            }
            TokenKind::Punct('<') => {
                let sp = self.bump().span;
                Ok(Expr::AnonRec(sp))
            }
            TokenKind::Punct('(') => {
                self.bump();
                let e = self.expr(true)?;
                self.expect_punct(')', "to close the expression")?;
                Ok(e)
            }
            TokenKind::Punct('-') => {
                self.bump();
                let e = self.postfix(false)?;
                match e {
                    Expr::Num(n, sp) => Ok(Expr::Num(-n, start.to(sp))),
                    e => Ok(Expr::Arith {
                        op: ArithOp::Sub,
                        lhs: Box::new(Expr::Num(0.into(), start)),
                        rhs: Box::new(e),
                        span: start.to(self.prev_span()),
                    }),
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn call_tail(&mut self, proc: String, name_span: Span) -> Result<Expr, Diagnostic> {
        self.expect_punct('(', "to open the arguments")?;
        let mut args = Vec::new();
        let mut named = Vec::new();
        if !self.at_punct(')') {
            loop {
                let is_named = matches!(self.kind(), TokenKind::Ident(_) | TokenKind::CapIdent(_))
                    && matches!(self.nth(1), TokenKind::LArrow);
                if is_named {
                    let n = self.any_name("an argument name")?;
                    self.bump();
                    let v = self.expr(false)?;
                    named.push((n.text, v));
                } else {
                    if !named.is_empty() {
                        return Err(self.err(
                            self.span(),
                            "positional arguments cannot follow named ones",
                        ));
                    }
                    args.push(self.expr(false)?);
                }
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct(')', "to close the arguments")?;
        Ok(Expr::Call { proc, args, named, span: name_span.to(self.prev_span()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(src: &str) -> Program {
        match parse(src) {
            Ok(p) => p,
            Err(e) => panic!("parse failed: {} at {}", e.message, e.span),
        }
    }

    fn only_rule(p: &Program) -> &Rule {
        &p.decls[0].body[0].rules[0]
    }

    #[test]
    fn merge_program_shape() {
        let p = parse_ok(
            "#merge(in1, in2)→out {\n\
             in1?m | out^m;\n\
             in2?m | out^m;\n\
             in1$ || out←in2;\n\
             in2$ || out←in1\n\
             }",
        );
        assert_eq!(p.decls.len(), 1);
        let d = &p.decls[0];
        assert_eq!(d.name, "merge");
        assert_eq!(d.params.len(), 2);
        assert_eq!(d.outspec.names().len(), 1);
        assert_eq!(d.body[0].rules.len(), 4);
        assert_eq!(d.body[0].rules[0].bars, 1);
        assert_eq!(d.body[0].rules[2].bars, 2);
        match &d.body[0].rules[2].lhs[0] {
            LhsItem::Close { target: MsgTarget::Var(n), .. } => assert_eq!(n.text, "in1"),
            other => panic!("expected close, got {other:?}"),
        }
    }

    #[test]
    fn spaced_bars_merge_into_one_run() {
        let p = parse_ok("#p(x)→y { x=a | | y←x }");
        assert_eq!(only_rule(&p).bars, 2);
    }

    #[test]
    fn equality_vs_eq_guard() {
        let p = parse_ok("#p(u, v)→y { u=f(w), v==w | y←w }");
        let r = only_rule(&p);
        assert!(matches!(&r.lhs[0], LhsItem::Equality { .. }));
        assert!(matches!(&r.lhs[1], LhsItem::Guard { op: RelOp::Eq, .. }));
    }

    #[test]
    fn le_guard_is_not_an_equality() {
        let p = parse_ok("#p(u)→y { u=<3 | y←u }");
        assert!(matches!(&only_rule(&p).lhs[0], LhsItem::Guard { op: RelOp::Le, .. }));
    }

    #[test]
    fn equality_pattern_contexts() {
        // Bare names are constants at the top, captures inside a term,
        // and a variable in the tail of a list cell.
        let p = parse_ok("#p(u, v)→y { u=stop, v=f(w):r | y←w }");
        let r = only_rule(&p);
        match &r.lhs[0] {
            LhsItem::Equality { pat: Pattern::Const(c, _), .. } => assert_eq!(c, "stop"),
            other => panic!("expected constant match, got {other:?}"),
        }
        match &r.lhs[1] {
            LhsItem::Equality { pat: Pattern::Cons { head, tail, .. }, .. } => {
                match head.as_ref() {
                    Pattern::Tuple { tag, args, .. } => {
                        assert_eq!(tag, "f");
                        assert!(matches!(&args[0], Pattern::Var(n) if n.text == "w"));
                    }
                    other => panic!("expected tuple head, got {other:?}"),
                }
                assert!(matches!(tail.as_ref(), Pattern::Var(n) if n.text == "r"));
            }
            other => panic!("expected cons match, got {other:?}"),
        }
    }

    #[test]
    fn channel_chain_with_lookahead() {
        let p = parse_ok("#p(x)→y { x?a/.b | y←a }");
        match &only_rule(&p).lhs[0] {
            LhsItem::ChannelGet { items, lookahead_at, .. } => {
                assert_eq!(items.len(), 2);
                assert!(matches!(&items[0], GetItem::Captured(n) if n.text == "a"));
                assert!(matches!(&items[1], GetItem::Got(Pattern::Const(c, _)) if c == "b"));
                assert_eq!(*lookahead_at, Some(1));
            }
            other => panic!("expected channel reads, got {other:?}"),
        }
    }

    #[test]
    fn lookahead_before_first_read() {
        let p = parse_ok("#p(x)→y { x/?m | y←m }");
        match &only_rule(&p).lhs[0] {
            LhsItem::ChannelGet { lookahead_at, .. } => assert_eq!(*lookahead_at, Some(0)),
            other => panic!("expected channel reads, got {other:?}"),
        }
    }

    #[test]
    fn handle_message_chain() {
        let p = parse_ok("#p(L)→(H, T) { L.head→H.tail→T | ; }");
        match &only_rule(&p).lhs[0] {
            LhsItem::Messages { target: MsgTarget::Var(n), items, .. } => {
                assert_eq!(n.text, "L");
                assert_eq!(items.len(), 2);
                assert_eq!(items[0].name.as_deref(), Some("head"));
                assert_eq!(items[0].outs[0].text, "H");
                assert_eq!(items[1].outs[0].text, "T");
            }
            other => panic!("expected receives, got {other:?}"),
        }
    }

    #[test]
    fn bare_message_with_anonymous_return() {
        let p = parse_ok("#p(v)→Self { balance-|>v }");
        let r = only_rule(&p);
        match &r.lhs[0] {
            LhsItem::Messages { target: MsgTarget::Bare(_), items, .. } => {
                assert_eq!(items[0].name.as_deref(), Some("balance"));
                assert!(items[0].anon_return.is_some());
            }
            other => panic!("expected bare receive, got {other:?}"),
        }
        assert!(matches!(&r.rhs[0], Statement::AnonWrite { value: AnonValue::Expr(_), .. }));
    }

    #[test]
    fn nil_name_message_pattern() {
        let p = parse_ok("#p(x)→Self { (val)-|>val }");
        match &only_rule(&p).lhs[0] {
            LhsItem::Messages { items, .. } => {
                assert!(items[0].name.is_none());
                assert!(matches!(&items[0].args[0], Pattern::Var(n) if n.text == "val"));
                assert!(items[0].anon_return.is_some());
            }
            other => panic!("expected receive, got {other:?}"),
        }
    }

    #[test]
    fn raw_capture_and_relay() {
        let p = parse_ok("#RoyalElephant(Proxy)~ { ?m | Proxy^m }");
        let r = only_rule(&p);
        assert!(matches!(
            &r.lhs[0],
            LhsItem::RawCapture { target: MsgTarget::Bare(_), var, .. } if var.text == "m"
        ));
        assert!(matches!(
            &r.rhs[0],
            Statement::Relay { target, var, .. } if target.text == "Proxy" && var.text == "m"
        ));
    }

    #[test]
    fn channel_put_chain_and_close() {
        let p = parse_ok("#p(x, c)→(out, count) { x.go | out.b^c.d(a), count^c$, out$ }");
        let r = only_rule(&p);
        match &r.rhs[0] {
            Statement::Put { chan, items, closed, .. } => {
                assert_eq!(chan.text, "out");
                assert_eq!(items.len(), 3);
                assert!(matches!(&items[0], PutItem::Tup(TupleExpr::Const(c, _)) if c == "b"));
                assert!(matches!(&items[1], PutItem::Val(Expr::Var(n)) if n.text == "c"));
                assert!(matches!(&items[2], PutItem::Tup(TupleExpr::Tuple { tag, .. }) if tag == "d"));
                assert!(!closed);
            }
            other => panic!("expected put, got {other:?}"),
        }
        assert!(matches!(&r.rhs[1], Statement::Put { closed: true, .. }));
        assert!(matches!(&r.rhs[2], Statement::StreamClose { var, .. } if var.text == "out"));
    }

    #[test]
    fn call_requires_flush_parenthesis() {
        // `f(1)` is a call; the spaced `f (2)` is a left-nested application.
        let p = parse_ok("#f(x)< { x=a | >f (2) }");
        match &only_rule(&p).rhs[0] {
            Statement::AnonWrite { value: AnonValue::Expr(Expr::Juxt { func, arg, .. }), .. } => {
                assert!(matches!(func.as_ref(), Expr::Var(n) if n.text == "f"));
                assert!(matches!(arg.as_ref(), Expr::Num(n, _) if *n == 2.into()));
            }
            other => panic!("expected an application, got {other:?}"),
        }
        let p = parse_ok("#f(x)< { x=a | >f(2) }");
        match &only_rule(&p).rhs[0] {
            Statement::AnonWrite { value: AnonValue::Expr(Expr::Call { proc, .. }), .. } => {
                assert_eq!(proc, "f");
            }
            other => panic!("expected a call, got {other:?}"),
        }
    }

    #[test]
    fn capitalized_call_needs_declaration() {
        let p = parse_ok("#Box(x)→y { x=a | y←x }\n#p(F, go)→y { go=a | y←Box(1) F(2) }");
        let r = &p.decls[1].body[0].rules[0];
        // `Box(1)` is a declared call; `F(2)` is not, so it reads as the
        // application chain `((Box(1) F) (2))`.
        match &r.rhs[0] {
            Statement::Alias { expr: Expr::Juxt { func, arg, .. }, .. } => {
                match func.as_ref() {
                    Expr::Juxt { func, arg, .. } => {
                        assert!(matches!(func.as_ref(), Expr::Call { proc, .. } if proc == "Box"));
                        assert!(matches!(arg.as_ref(), Expr::Var(n) if n.text == "F"));
                    }
                    other => panic!("expected an inner application, got {other:?}"),
                }
                assert!(matches!(arg.as_ref(), Expr::Num(n, _) if *n == 2.into()));
            }
            other => panic!("expected an application, got {other:?}"),
        }
    }

    #[test]
    fn if_then_else_nests_in_else_branch() {
        let p = parse_ok(
            "#filter(Func, InList)→OutList {\n\
             || ? InList.isempty : empty()→OutList;\n\
                : InList.head→H.tail→T, <(H, T) ? Func H : filter(Func, T).cons(H)→OutList;\n\
                : filter(Func, T)→OutList\n\
             }",
        );
        let r = only_rule(&p);
        assert_eq!(r.bars, 2);
        assert_eq!(r.rhs.len(), 1);
        match &r.rhs[0] {
            Statement::IfThenElse { then_b, else_b, .. } => {
                assert_eq!(then_b.stmts.len(), 1);
                assert_eq!(else_b.stmts.len(), 3);
                assert!(matches!(&else_b.stmts[0], Statement::Send { .. }));
                assert!(matches!(&else_b.stmts[1], Statement::LocalDecl { .. }));
                match &else_b.stmts[2] {
                    Statement::IfThenElse { cond, then_b, else_b, .. } => {
                        assert!(matches!(cond, Expr::Juxt { .. }));
                        assert!(matches!(&then_b.stmts[0], Statement::ExprStmt { .. }));
                        assert!(matches!(&else_b.stmts[0], Statement::Call { .. }));
                    }
                    other => panic!("expected nested conditional, got {other:?}"),
                }
            }
            other => panic!("expected conditional, got {other:?}"),
        }
    }

    #[test]
    fn embedded_body_attaches_to_rule() {
        let p = parse_ok(
            "#delbetween(in)→out {\n\
             in.stop | <(val) { (val)-|>val; : ?m | ; in$ ||| out$ };\n\
             : in?m | out^m;\n\
             in$ || out$\n\
             }",
        );
        let d = &p.decls[0];
        assert_eq!(d.body.len(), 2);
        let r = &d.body[0].rules[0];
        assert!(matches!(&r.rhs[0], Statement::LocalDecl { .. }));
        let body = r.body.as_ref().expect("embedded body");
        assert_eq!(body.len(), 2);
        assert_eq!(body[1].rules[1].bars, 3);
    }

    #[test]
    fn become_and_macro_declarations() {
        let p = parse_ok(
            "#square(x)< == >x*x;\n\
             #filter(Func, InList)~ == <=filter1(InList.isempty, Func, InList);",
        );
        let sq = &p.decls[0];
        assert!(matches!(sq.outspec, OutSpec::AnonValue(_)));
        let body = sq.macro_body.as_ref().expect("macro body");
        assert!(matches!(&body[0], Statement::AnonWrite { .. }));
        let f = &p.decls[1];
        assert!(matches!(f.outspec, OutSpec::AnonHandle(_)));
        let body = f.macro_body.as_ref().expect("macro body");
        match &body[0] {
            Statement::Become { value: Expr::Call { proc, args, .. }, .. } => {
                assert_eq!(proc, "filter1");
                assert_eq!(args.len(), 3);
                assert!(matches!(&args[0], Expr::DotSend { .. }));
            }
            other => panic!("expected become, got {other:?}"),
        }
    }

    #[test]
    fn initialization_and_defaults() {
        let p = parse_ok("#acc(in, total←0)→out = log()→l { in?m | out^m }");
        let d = &p.decls[0];
        assert!(d.params[1].default.is_some());
        assert_eq!(d.init.len(), 1);
        assert!(matches!(&d.init[0], Statement::Call { proc, .. } if proc == "log"));
    }

    #[test]
    fn curried_parameters() {
        let p = parse_ok("#atleast(n)[InList]< { n==0 || <=true() }");
        let d = &p.decls[0];
        assert_eq!(d.params.len(), 1);
        assert_eq!(d.curried.len(), 1);
        assert_eq!(d.curried[0].name.text, "InList");
    }

    #[test]
    fn named_call_arguments() {
        let p = parse_ok(
            "#RoyalElephant(Proxy)~ { ?m | Proxy^m }\n\
             #p(x)→Y { x=a | Y←RoyalElephant(Proxy←FunnyElephant(x)) }",
        );
        match &p.decls[1].body[0].rules[0].rhs[0] {
            Statement::Alias { expr: Expr::Call { proc, args, named, .. }, .. } => {
                assert_eq!(proc, "RoyalElephant");
                assert!(args.is_empty());
                assert_eq!(named[0].0, "Proxy");
            }
            other => panic!("expected aliased call, got {other:?}"),
        }
    }

    #[test]
    fn sends_with_become_to_recursive_self() {
        let p = parse_ok("#p(in)~ { in.cons(h) | <=~cons(h) }");
        match &only_rule(&p).rhs[0] {
            Statement::Become { value: Expr::TildeSend { base, chain, .. }, .. } => {
                assert!(matches!(base.as_ref(), Expr::SelfRef(_)));
                assert_eq!(chain[0].name.as_deref(), Some("cons"));
            }
            other => panic!("expected become, got {other:?}"),
        }
    }

    #[test]
    fn sequence_statement() {
        let p = parse_ok("#p(in)→out { in.go | +<(t) f(in)→t; out^t }");
        match &only_rule(&p).rhs[0] {
            Statement::Sequence { locals, first, second, .. } => {
                assert_eq!(locals[0].text, "t");
                assert_eq!(first.len(), 1);
                assert_eq!(second.len(), 1);
            }
            other => panic!("expected sequence, got {other:?}"),
        }
    }

    #[test]
    fn joint_close_lhs() {
        let p = parse_ok("#c(v)→(Priv, Ord) { Priv$, Ord$ || ; }");
        let r = only_rule(&p);
        assert_eq!(r.lhs.len(), 2);
        assert!(matches!(&r.lhs[0], LhsItem::Close { .. }));
        assert!(matches!(&r.lhs[1], LhsItem::Close { .. }));
        assert!(r.rhs.is_empty());
    }

    #[test]
    fn destructor_lhs() {
        let p = parse_ok("#c(Q)~ { ~.$ || Q.bye(a) }");
        let r = only_rule(&p);
        assert!(matches!(&r.lhs[0], LhsItem::Close { target: MsgTarget::SelfRef(_), .. }));
        match &r.rhs[0] {
            Statement::Send { target: SendTarget::Var(n), msgs, .. } => {
                assert_eq!(n.text, "Q");
                assert_eq!(msgs[0].name.as_deref(), Some("bye"));
            }
            other => panic!("expected send, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_position() {
        let e = parse("#p(x)→y { x=a | y← }").unwrap_err();
        assert!(e.message.contains("expected an expression"));
        assert_eq!(e.span.line, 1);
    }

    #[test]
    fn rejects_unknown_declaration_lead() {
        let e = parse("merge(a, b)→c").unwrap_err();
        assert!(e.message.contains("expected `#`"));
    }
}
