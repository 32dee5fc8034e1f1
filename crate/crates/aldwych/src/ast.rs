//! Surface abstract syntax.
//!
//! The parser builds this tree and the desugar passes rewrite it step by step
//! until only equalities, binds, aliases, calls, and message forms remain; the
//! final pass lowers those to the core representation in [`crate::core`].

use crate::span::Span;
use num_bigint::BigInt;

/// Variable kind, decided by capitalization at parse time.  Generated
/// variables carry an explicit kind, so later passes never re-inspect case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Future,
    Handle,
}

/// A variable occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Name {
    pub text: String,
    pub kind: Kind,
    pub span: Span,
}

impl Name {
    pub fn future(text: impl Into<String>, span: Span) -> Self {
        Name { text: text.into(), kind: Kind::Future, span }
    }

    pub fn handle(text: impl Into<String>, span: Span) -> Self {
        Name { text: text.into(), kind: Kind::Handle, span }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub params: Vec<Param>,
    /// Bracketed curried parameter group, one application step per entry.
    pub curried: Vec<Param>,
    pub outspec: OutSpec,
    /// Statements of an `=` initialization section.
    pub init: Vec<Statement>,
    /// Body of a `==` macro declaration (mutually exclusive with `body`).
    pub macro_body: Option<Vec<Statement>>,
    pub body: Vec<Group>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: Name,
    /// Default value expression (`name←Expr` in the header).
    pub default: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutSpec {
    /// Header had no output arrow at all.
    None,
    /// `→x` or `→(x, y)`.
    Named(Vec<Name>),
    /// `<`: anonymous single value output.
    AnonValue(Span),
    /// `~`: anonymous single handle output.
    AnonHandle(Span),
}

impl OutSpec {
    pub fn names(&self) -> &[Name] {
        match self {
            OutSpec::Named(ns) => ns,
            _ => &[],
        }
    }
}

/// A rule group; groups are separated by `:` ("otherwise") and tried in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: Vec<LhsItem>,
    /// Exact bar count as written; its meaning depends on embedding depth.
    pub bars: u32,
    pub rhs: Vec<Statement>,
    /// Embedded procedure body attached at the end of the rule.
    pub body: Option<Vec<Group>>,
    pub span: Span,
}

// ───────────────────────────── left-hand side ─────────────────────────────

/// Target of a message pattern or close on the left.
#[derive(Debug, Clone, PartialEq)]
pub enum MsgTarget {
    /// No target written: attaches to every output handle (broadcast).
    Bare(Span),
    /// Explicit `~`: the declaration's anonymous handle.
    SelfRef(Span),
    /// Named handle or channel; the name's kind tells which.
    Var(Name),
}

impl MsgTarget {
    pub fn span(&self) -> Span {
        match self {
            MsgTarget::Bare(s) | MsgTarget::SelfRef(s) => *s,
            MsgTarget::Var(n) => n.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LhsItem {
    /// `u = Pattern` — match an input future against a term shape.
    Equality { var: Name, pat: Pattern, span: Span },
    /// Channel reads on a future stream: `in.a`, `in?m`, `x?a/.b`, `in/?m`.
    ChannelGet { chan: Name, items: Vec<GetItem>, lookahead_at: Option<usize>, span: Span },
    /// Message receives on a handle: `H.f(x)→(y,z)`, `inc(x)`, `(Val)-`.
    /// A chain receives several messages in sequence from one stream.
    Messages { target: MsgTarget, items: Vec<MsgPat>, lookahead_at: Option<usize>, span: Span },
    /// `H?m` — capture one raw message for relaying.
    RawCapture { target: MsgTarget, var: Name, span: Span },
    /// `x$`, `H$`, `H.$`, bare `$` — the stream is closed.
    Close { target: MsgTarget, span: Span },
    /// Comparison guard, e.g. `a > b`.
    Guard { op: RelOp, lhs: Expr, rhs: Expr, span: Span },
}

impl LhsItem {
    pub fn span(&self) -> Span {
        match self {
            LhsItem::Equality { span, .. }
            | LhsItem::ChannelGet { span, .. }
            | LhsItem::Messages { span, .. }
            | LhsItem::RawCapture { span, .. }
            | LhsItem::Close { span, .. }
            | LhsItem::Guard { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GetItem {
    /// `.Pattern` — the element must match this shape.
    Got(Pattern),
    /// `?var` — capture the element.
    Captured(Name),
}

/// One message pattern within a receive.
#[derive(Debug, Clone, PartialEq)]
pub struct MsgPat {
    /// `None` is the nil-name message `(args)`.
    pub name: Option<String>,
    pub args: Vec<Pattern>,
    pub outs: Vec<Name>,
    /// `-`: an anonymous return, written later by a `>` statement.
    pub anon_return: Option<Span>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// Bare lowercase name in head position, or a quoted atom.
    Const(String, Span),
    Num(BigInt, Span),
    /// Capture of a fresh future or handle.
    Var(Name),
    Tuple { tag: String, args: Vec<Pattern>, span: Span },
    Cons { head: Box<Pattern>, tail: Box<Pattern>, span: Span },
    /// `$`
    Nil(Span),
    /// Write-capture inside a received message: the rule must bind it.
    /// Generated by handle conversion; not writable in surface programs.
    ReplySlot(Name),
    /// Capture a cell and match its contents (generated for lookahead).
    As { var: Name, pat: Box<Pattern>, span: Span },
}

impl Pattern {
    pub fn span(&self) -> Span {
        match self {
            Pattern::Const(_, s) | Pattern::Num(_, s) | Pattern::Nil(s) => *s,
            Pattern::Var(n) | Pattern::ReplySlot(n) => n.span,
            Pattern::Tuple { span, .. } | Pattern::Cons { span, .. } | Pattern::As { span, .. } => {
                *span
            }
        }
    }
}

// ───────────────────────────── right-hand side ────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    /// `x = TupleExpr` — bind a future to a constant, number, or tuple.
    Bind { var: Name, term: TupleExpr, span: Span },
    /// `x ← Expr` — alias / value assignment (on an input: recursion slot).
    Alias { var: Name, expr: Expr, span: Span },
    /// `p(args) → (outs)` — create a process.
    Call { proc: String, args: Vec<Expr>, named: Vec<(String, Expr)>, outs: Vec<Name>, span: Span },
    /// Message sends to a handle: `Q.bye(a)`, `H.g(c, Q)→S`, `~cons(H)`.
    Send { target: SendTarget, msgs: Vec<MsgSend>, span: Span },
    /// `Proxy^m` — relay a raw captured message.
    Relay { target: Name, var: Name, span: Span },
    /// Channel writes: `out.b^c.d(a)`, `count^num$`.
    Put { chan: Name, items: Vec<PutItem>, closed: bool, span: Span },
    /// `out$`
    StreamClose { var: Name, span: Span },
    /// `<(a, B)` — declare locals for an embedded procedure.
    LocalDecl { names: Vec<Name>, span: Span },
    /// `<=Expr` — write the anonymous output and suppress recursion.
    Become { value: Expr, span: Span },
    /// `>Expr` or `>=TupleExpr` — write the pending anonymous return.
    AnonWrite { value: AnonValue, span: Span },
    /// `?Cond : then : else`
    IfThenElse { cond: Expr, then_b: Branch, else_b: Branch, span: Span },
    /// `+ first ; second`
    Sequence { locals: Vec<Name>, first: Vec<Statement>, second: Vec<Statement>, span: Span },
    /// Any other expression statement, e.g. `filter(F, T).cons(H)→Out`.
    ExprStmt { expr: Expr, outs: Vec<Name>, span: Span },
}

impl Statement {
    pub fn span(&self) -> Span {
        match self {
            Statement::Bind { span, .. }
            | Statement::Alias { span, .. }
            | Statement::Call { span, .. }
            | Statement::Send { span, .. }
            | Statement::Relay { span, .. }
            | Statement::Put { span, .. }
            | Statement::StreamClose { span, .. }
            | Statement::LocalDecl { span, .. }
            | Statement::Become { span, .. }
            | Statement::AnonWrite { span, .. }
            | Statement::IfThenElse { span, .. }
            | Statement::Sequence { span, .. }
            | Statement::ExprStmt { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SendTarget {
    Var(Name),
    /// `~...`: the recursive call's anonymous handle.
    SelfRef(Span),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsgSend {
    pub name: Option<String>,
    pub args: Vec<Expr>,
    pub outs: Vec<Name>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PutItem {
    /// `.T` — send a constant or tuple.
    Tup(TupleExpr),
    /// `^e` — send the value of an expression.
    Val(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnonValue {
    /// `>=T`: bind the return to a constant or tuple.
    Bind(TupleExpr),
    /// `>e`: give the return the value of an expression.
    Expr(Expr),
}

/// Branch of an if-then-else.  An explicit leading bar run overrides the
/// default continuation, with the same meaning bars have in embedded rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub bars: Option<u32>,
    pub stmts: Vec<Statement>,
    pub span: Span,
}

/// Term written on the right of `=`: constructor context, where a bare head
/// name is a constant and arguments are expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum TupleExpr {
    Const(String, Span),
    Num(BigInt, Span),
    Tuple { tag: String, args: Vec<Expr>, span: Span },
    Nil(Span),
    Cons { head: Box<TupleExpr>, tail: Box<TupleExpr>, span: Span },
    /// Variable reference; only produced in cons-tail position.
    Var(Name),
}

impl TupleExpr {
    pub fn span(&self) -> Span {
        match self {
            TupleExpr::Const(_, s) | TupleExpr::Num(_, s) | TupleExpr::Nil(s) => *s,
            TupleExpr::Tuple { span, .. } | TupleExpr::Cons { span, .. } => *span,
            TupleExpr::Var(n) => n.span,
        }
    }
}

// ─────────────────────────────── expressions ──────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(Name),
    Num(BigInt, Span),
    /// Quoted atom used as a value.
    Atom(String, Span),
    /// `~` as a value: the recursive call's anonymous handle.
    SelfRef(Span),
    /// `<` as a value: the recursive call's anonymous value output.
    AnonRec(Span),
    Call { proc: String, args: Vec<Expr>, named: Vec<(String, Expr)>, span: Span },
    /// `base.f(a).g(b)` — all messages to `base`, value is the last reply.
    DotSend { base: Box<Expr>, chain: Vec<MsgSendE>, span: Span },
    /// `base~f~g` — each message goes to the previous reply.
    TildeSend { base: Box<Expr>, chain: Vec<MsgSendE>, span: Span },
    /// `F E` — function-style application: nil-name message with one input.
    Juxt { func: Box<Expr>, arg: Box<Expr>, span: Span },
    Arith { op: ArithOp, lhs: Box<Expr>, rhs: Box<Expr>, span: Span },
    Rel { op: RelOp, lhs: Box<Expr>, rhs: Box<Expr>, span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsgSendE {
    pub name: Option<String>,
    pub args: Vec<Expr>,
    pub span: Span,
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Var(n) => n.span,
            Expr::Num(_, s) | Expr::Atom(_, s) | Expr::SelfRef(s) | Expr::AnonRec(s) => *s,
            Expr::Call { span, .. }
            | Expr::DotSend { span, .. }
            | Expr::TildeSend { span, .. }
            | Expr::Juxt { span, .. }
            | Expr::Arith { span, .. }
            | Expr::Rel { span, .. } => *span,
        }
    }

    /// True for the forms that survive expression expansion.
    pub fn is_atomic(&self) -> bool {
        matches!(self, Expr::Var(_) | Expr::Num(..) | Expr::Atom(..))
    }
}
