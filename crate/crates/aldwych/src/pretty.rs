//! Surface-syntax printer.
//!
//! Prints a [`Program`] back as source text.  For programs straight out of
//! the parser the output re-parses to the same tree, which the round-trip
//! tests rely on.  Trees that have been through desugar passes may contain
//! generated names (with `%`) and pattern forms the surface grammar cannot
//! express; those print in the core flavor (`?x` captures, `^x` reply slots)
//! and are intended for stage dumps, not re-parsing.

use crate::ast::*;

/// Render a whole program.
pub fn program(p: &Program) -> String {
    let mut out = String::new();
    for (i, d) in p.decls.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        decl(&mut out, d);
    }
    out
}

pub fn decl_to_string(d: &Decl) -> String {
    let mut out = String::new();
    decl(&mut out, d);
    out
}

fn decl(out: &mut String, d: &Decl) {
    out.push('#');
    out.push_str(&d.name);
    out.push('(');
    for (i, p) in d.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        param(out, p);
    }
    out.push(')');
    if !d.curried.is_empty() {
        out.push('[');
        for (i, p) in d.curried.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            param(out, p);
        }
        out.push(']');
    }
    match &d.outspec {
        OutSpec::None => {}
        OutSpec::Named(outs) => {
            out.push_str(" -> ");
            out_names(out, outs);
        }
        OutSpec::AnonValue(_) => out.push('<'),
        OutSpec::AnonHandle(_) => out.push('~'),
    }
    if let Some(body) = &d.macro_body {
        out.push_str(" == ");
        statements(out, body);
        out.push_str(";\n");
        return;
    }
    if !d.init.is_empty() {
        out.push_str(" = ");
        statements(out, &d.init);
    }
    out.push_str(" {\n");
    groups(out, &d.body, 1);
    out.push_str("}\n");
}

fn param(out: &mut String, p: &Param) {
    out.push_str(&p.name.text);
    if let Some(d) = &p.default {
        out.push_str(" <- ");
        expr(out, d, 1);
    }
}

fn out_names(out: &mut String, outs: &[Name]) {
    if outs.len() == 1 {
        out.push_str(&outs[0].text);
    } else {
        out.push('(');
        for (i, n) in outs.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&n.text);
        }
        out.push(')');
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn groups(out: &mut String, gs: &[Group], level: usize) {
    for (gi, g) in gs.iter().enumerate() {
        if gi > 0 {
            indent(out, level);
            out.push_str(":\n");
        }
        for r in &g.rules {
            indent(out, level);
            rule(out, r, level);
            out.push_str(";\n");
        }
    }
}

fn rule(out: &mut String, r: &Rule, level: usize) {
    for (i, item) in r.lhs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        lhs_item(out, item);
    }
    if !r.lhs.is_empty() {
        out.push(' ');
    }
    for _ in 0..r.bars {
        out.push('|');
    }
    if !r.rhs.is_empty() {
        out.push(' ');
        statements(out, &r.rhs);
    }
    if let Some(body) = &r.body {
        out.push_str(" {\n");
        groups(out, body, level + 1);
        indent(out, level);
        out.push('}');
    }
}

// ───────────────────────────── left-hand side ─────────────────────────────

fn lhs_item(out: &mut String, item: &LhsItem) {
    match item {
        LhsItem::Equality { var, pat, .. } => {
            out.push_str(&var.text);
            out.push('=');
            pattern(out, pat, PatPos::Top);
        }
        LhsItem::ChannelGet { chan, items, lookahead_at, .. } => {
            out.push_str(&chan.text);
            for (i, it) in items.iter().enumerate() {
                if *lookahead_at == Some(i) {
                    out.push('/');
                }
                match it {
                    GetItem::Got(p) => {
                        out.push('.');
                        pattern(out, p, PatPos::Top);
                    }
                    GetItem::Captured(n) => {
                        out.push('?');
                        out.push_str(&n.text);
                    }
                }
            }
        }
        LhsItem::Messages { target, items, lookahead_at, .. } => {
            let targeted = match target {
                MsgTarget::Bare(_) => false,
                MsgTarget::SelfRef(_) => {
                    out.push('~');
                    true
                }
                MsgTarget::Var(n) => {
                    out.push_str(&n.text);
                    true
                }
            };
            for (i, m) in items.iter().enumerate() {
                if *lookahead_at == Some(i) {
                    out.push('/');
                }
                if targeted || i > 0 {
                    out.push('.');
                }
                msg_pat(out, m);
            }
        }
        LhsItem::RawCapture { target, var, .. } => {
            match target {
                MsgTarget::Bare(_) => {}
                MsgTarget::SelfRef(_) => out.push('~'),
                MsgTarget::Var(n) => out.push_str(&n.text),
            }
            out.push('?');
            out.push_str(&var.text);
        }
        LhsItem::Close { target, .. } => {
            match target {
                MsgTarget::Bare(_) => {}
                MsgTarget::SelfRef(_) => out.push('~'),
                MsgTarget::Var(n) => out.push_str(&n.text),
            }
            out.push('$');
        }
        LhsItem::Guard { op, lhs, rhs, .. } => {
            expr(out, lhs, 1);
            out.push(' ');
            out.push_str(rel_op(*op));
            out.push(' ');
            expr(out, rhs, 1);
        }
    }
}

fn msg_pat(out: &mut String, m: &MsgPat) {
    if let Some(n) = &m.name {
        out.push_str(n);
    }
    if m.name.is_none() || !m.args.is_empty() {
        out.push('(');
        for (i, a) in m.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            pattern(out, a, PatPos::Arg);
        }
        out.push(')');
    }
    if !m.outs.is_empty() {
        out.push_str(" -> ");
        out_names(out, &m.outs);
    }
    if m.anon_return.is_some() {
        out.push('-');
    }
}

/// Position of a pattern decides how bare constants and captures print.
#[derive(Clone, Copy, PartialEq)]
enum PatPos {
    /// Head of a matched term: bare lowercase reads back as a constant.
    Top,
    /// Argument position: bare lowercase reads back as a capture.
    Arg,
    /// Cons tail: bare names read back as captures.
    Tail,
}

fn bare_const_ok(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_lowercase())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

fn pattern(out: &mut String, p: &Pattern, pos: PatPos) {
    match p {
        Pattern::Const(c, _) => {
            if pos == PatPos::Top && bare_const_ok(c) {
                out.push_str(c);
            } else {
                out.push('\'');
                out.push_str(c);
                out.push('\'');
            }
        }
        Pattern::Num(n, _) => out.push_str(&n.to_string()),
        Pattern::Var(n) => {
            // A capture where the grammar reads a constant prints with the
            // explicit core marker.
            if pos == PatPos::Top {
                out.push('?');
            }
            out.push_str(&n.text);
        }
        Pattern::Tuple { tag, args, .. } => {
            out.push_str(tag);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                pattern(out, a, PatPos::Arg);
            }
            out.push(')');
        }
        Pattern::Cons { head, tail, .. } => {
            pattern(out, head, if pos == PatPos::Arg { PatPos::Arg } else { PatPos::Top });
            out.push(':');
            pattern(out, tail, PatPos::Tail);
        }
        Pattern::Nil(_) => out.push('$'),
        Pattern::ReplySlot(n) => {
            out.push('^');
            out.push_str(&n.text);
        }
        Pattern::As { var, pat, .. } => {
            out.push('?');
            out.push_str(&var.text);
            out.push_str("@(");
            pattern(out, pat, PatPos::Top);
            out.push(')');
        }
    }
}

// ───────────────────────────── right-hand side ────────────────────────────

fn statements(out: &mut String, stmts: &[Statement]) {
    for (i, s) in stmts.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        statement(out, s);
    }
}

fn statement(out: &mut String, s: &Statement) {
    match s {
        Statement::Bind { var, term, .. } => {
            out.push_str(&var.text);
            out.push('=');
            tuple_expr(out, term, true);
        }
        Statement::Alias { var, expr: e, .. } => {
            out.push_str(&var.text);
            out.push_str(" <- ");
            expr(out, e, 1);
        }
        Statement::Call { proc, args, named, outs, .. } => {
            call_text(out, proc, args, named);
            if !outs.is_empty() {
                out.push_str(" -> ");
                out_names(out, outs);
            }
        }
        Statement::Send { target, msgs, .. } => {
            let lead_dot = match target {
                SendTarget::Var(n) => {
                    out.push_str(&n.text);
                    true
                }
                SendTarget::SelfRef(_) => {
                    out.push('~');
                    false
                }
            };
            for (i, m) in msgs.iter().enumerate() {
                if lead_dot || i > 0 {
                    out.push('.');
                }
                msg_send(out, m);
            }
        }
        Statement::Relay { target, var, .. } => {
            out.push_str(&target.text);
            out.push('^');
            out.push_str(&var.text);
        }
        Statement::Put { chan, items, closed, .. } => {
            out.push_str(&chan.text);
            for it in items {
                match it {
                    PutItem::Tup(t) => {
                        out.push('.');
                        tuple_expr(out, t, false);
                    }
                    PutItem::Val(e) => {
                        out.push('^');
                        value_no_dot(out, e);
                    }
                }
            }
            if *closed {
                out.push('$');
            }
        }
        Statement::StreamClose { var, .. } => {
            out.push_str(&var.text);
            out.push('$');
        }
        Statement::LocalDecl { names, .. } => {
            out.push_str("<(");
            for (i, n) in names.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&n.text);
            }
            out.push(')');
        }
        Statement::Become { value, .. } => {
            out.push_str("<=");
            expr(out, value, 1);
        }
        Statement::AnonWrite { value, .. } => match value {
            AnonValue::Bind(t) => {
                out.push_str(">=");
                tuple_expr(out, t, true);
            }
            AnonValue::Expr(e) => {
                out.push('>');
                expr(out, e, 1);
            }
        },
        Statement::IfThenElse { cond, then_b, else_b, .. } => {
            out.push_str("? ");
            expr(out, cond, 0);
            out.push_str(" : ");
            branch(out, then_b);
            out.push_str("; : ");
            branch(out, else_b);
        }
        Statement::Sequence { locals, first, second, .. } => {
            out.push('+');
            if !locals.is_empty() {
                out.push_str("<(");
                for (i, n) in locals.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&n.text);
                }
                out.push_str(") ");
            } else {
                out.push(' ');
            }
            statements(out, first);
            out.push_str("; ");
            statements(out, second);
        }
        Statement::ExprStmt { expr: e, outs, .. } => {
            expr(out, e, 1);
            if !outs.is_empty() {
                out.push_str(" -> ");
                out_names(out, outs);
            }
        }
    }
}

fn branch(out: &mut String, b: &Branch) {
    if let Some(bars) = b.bars {
        for _ in 0..bars {
            out.push('|');
        }
        out.push(' ');
    }
    statements(out, &b.stmts);
}

fn msg_send(out: &mut String, m: &MsgSend) {
    if let Some(n) = &m.name {
        out.push_str(n);
    }
    if m.name.is_none() || !m.args.is_empty() {
        out.push('(');
        for (i, a) in m.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            expr(out, a, 1);
        }
        out.push(')');
    }
    if !m.outs.is_empty() {
        out.push_str(" -> ");
        out_names(out, &m.outs);
    }
}

fn call_text(out: &mut String, proc: &str, args: &[Expr], named: &[(String, Expr)]) {
    out.push_str(proc);
    out.push('(');
    let mut first = true;
    for a in args {
        if !first {
            out.push_str(", ");
        }
        first = false;
        expr(out, a, 1);
    }
    for (n, v) in named {
        if !first {
            out.push_str(", ");
        }
        first = false;
        out.push_str(n);
        out.push_str(" <- ");
        expr(out, v, 1);
    }
    out.push(')');
}

fn tuple_expr(out: &mut String, t: &TupleExpr, top: bool) {
    match t {
        TupleExpr::Const(c, _) => {
            if top && bare_const_ok(c) {
                out.push_str(c);
            } else {
                out.push('\'');
                out.push_str(c);
                out.push('\'');
            }
        }
        TupleExpr::Num(n, _) => out.push_str(&n.to_string()),
        TupleExpr::Tuple { tag, args, .. } => {
            out.push_str(tag);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, a, 1);
            }
            out.push(')');
        }
        TupleExpr::Nil(_) => out.push('$'),
        TupleExpr::Cons { head, tail, .. } => {
            tuple_expr(out, head, top);
            out.push(':');
            tuple_expr(out, tail, top);
        }
        TupleExpr::Var(n) => out.push_str(&n.text),
    }
}

// ─────────────────────────────── expressions ──────────────────────────────

fn rel_op(op: RelOp) -> &'static str {
    match op {
        RelOp::Lt => "<",
        RelOp::Gt => ">",
        RelOp::Le => "=<",
        RelOp::Ge => ">=",
        RelOp::Eq => "==",
        RelOp::Ne => "\\=",
    }
}

/// Binding strength of each expression form; higher binds tighter.
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Rel { .. } => 0,
        Expr::Arith { op: ArithOp::Add | ArithOp::Sub, .. } => 1,
        Expr::Arith { op: ArithOp::Mul | ArithOp::Div, .. } => 2,
        Expr::Juxt { .. } => 3,
        Expr::DotSend { .. } | Expr::TildeSend { .. } => 4,
        _ => 5,
    }
}

/// Print `e`, parenthesizing if it binds looser than `min`.
fn expr(out: &mut String, e: &Expr, min: u8) {
    if level(e) < min {
        out.push('(');
        expr_inner(out, e);
        out.push(')');
    } else {
        expr_inner(out, e);
    }
}

fn expr_inner(out: &mut String, e: &Expr) {
    match e {
        Expr::Var(n) => out.push_str(&n.text),
        Expr::Num(n, _) => out.push_str(&n.to_string()),
        Expr::Atom(s, _) => {
            out.push('\'');
            out.push_str(s);
            out.push('\'');
        }
        Expr::SelfRef(_) => out.push('~'),
        Expr::AnonRec(_) => out.push('<'),
        Expr::Call { proc, args, named, .. } => call_text(out, proc, args, named),
        Expr::DotSend { base, chain, .. } => {
            expr(out, base, 5);
            for m in chain {
                out.push('.');
                msg_send_e(out, m);
            }
        }
        Expr::TildeSend { base, chain, .. } => {
            if !matches!(base.as_ref(), Expr::SelfRef(_)) {
                expr(out, base, 5);
            }
            for (i, m) in chain.iter().enumerate() {
                if i > 0 || !matches!(base.as_ref(), Expr::SelfRef(_)) {
                    out.push('~');
                } else {
                    out.push('~');
                }
                msg_send_e(out, m);
            }
        }
        Expr::Juxt { func, arg, .. } => {
            expr(out, func, 3);
            out.push(' ');
            expr(out, arg, 4);
        }
        Expr::Arith { op, lhs, rhs, .. } => {
            let (sym, lvl) = match op {
                ArithOp::Add => ("+", 1),
                ArithOp::Sub => ("-", 1),
                ArithOp::Mul => ("*", 2),
                ArithOp::Div => ("/", 2),
            };
            expr(out, lhs, lvl);
            out.push(' ');
            out.push_str(sym);
            out.push(' ');
            expr(out, rhs, lvl + 1);
        }
        Expr::Rel { op, lhs, rhs, .. } => {
            expr(out, lhs, 1);
            out.push(' ');
            out.push_str(rel_op(*op));
            out.push(' ');
            expr(out, rhs, 1);
        }
    }
}

fn msg_send_e(out: &mut String, m: &MsgSendE) {
    if let Some(n) = &m.name {
        out.push_str(n);
    }
    if m.name.is_none() || !m.args.is_empty() {
        out.push('(');
        for (i, a) in m.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            expr(out, a, 1);
        }
        out.push(')');
    }
}

/// A channel-put value must not contain a bare message chain, since the `.`
/// would read as the next put item; parenthesize when one is reachable.
fn value_no_dot(out: &mut String, e: &Expr) {
    fn reachable_dot(e: &Expr) -> bool {
        match e {
            Expr::DotSend { .. } | Expr::TildeSend { .. } => true,
            Expr::Arith { lhs, rhs, .. } => reachable_dot(lhs) || reachable_dot(rhs),
            Expr::Juxt { func, arg, .. } => reachable_dot(func) || reachable_dot(arg),
            _ => false,
        }
    }
    if reachable_dot(e) {
        out.push('(');
        expr_inner(out, e);
        out.push(')');
    } else {
        expr(out, e, 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn round_trip(src: &str) {
        let p1 = parse(src).expect("first parse");
        let printed = program(&p1);
        let p2 = parse(&printed).unwrap_or_else(|e| {
            panic!("printed text failed to parse: {} at {}\n{printed}", e.message, e.span)
        });
        let printed2 = program(&p2);
        assert_eq!(printed, printed2, "printing is not stable");
    }

    #[test]
    fn round_trips_core_shapes() {
        round_trip(
            "#merge(in1, in2)→out {\n\
             in1?m | out^m;\n\
             in2?m | out^m;\n\
             in1$ || out←in2;\n\
             in2$ || out←in1\n\
             }",
        );
    }

    #[test]
    fn round_trips_messages_and_conditionals() {
        round_trip(
            "#filter(Func, InList)→OutList {\n\
             || ? InList.isempty : empty()→OutList;\n\
                : InList.head→H.tail→T, <(H, T) ? Func H : filter(Func, T).cons(H)→OutList;\n\
                : filter(Func, T)→OutList\n\
             }",
        );
    }

    #[test]
    fn round_trips_embedded_bodies() {
        round_trip(
            "#delbetween(in)→out {\n\
             in.stop | <(val) { (val)-|>val; : ?m | ; in$ ||| out$ };\n\
             : in?m | out^m;\n\
             in$ || out$\n\
             }",
        );
    }

    #[test]
    fn round_trips_puts_guards_and_defaults() {
        round_trip(
            "#c(in, n←0)→(out, count) = log(n)→l {\n\
             in.go, n >= 2 | out.b^n.d(n+1), count^n$, l$;\n\
             in$ || out$, count^0$, l$\n\
             }",
        );
    }

    #[test]
    fn quoted_atom_survives_argument_position() {
        round_trip("#p(H)→y { H.set('red', x) | y←x }");
        let p = parse("#p(H)→y { H.set('red', x) | y←x }").unwrap();
        let printed = program(&p);
        assert!(printed.contains("'red'"), "constant must stay quoted: {printed}");
    }

    #[test]
    fn dotted_value_parenthesized_in_put() {
        use crate::ast::*;
        use crate::span::Span;
        let sp = Span::DUMMY;
        let e = Expr::DotSend {
            base: Box::new(Expr::Var(Name::handle("H", sp))),
            chain: vec![MsgSendE { name: Some("get".into()), args: vec![], span: sp }],
            span: sp,
        };
        let mut s = String::new();
        value_no_dot(&mut s, &e);
        assert_eq!(s, "(H.get)");
    }
}
