//! Macros, argument defaults, and initialization sections.
//!
//! Three closely related conveniences are compiled away here:
//!
//! * A declaration written with `==` is a macro: its body is inlined at
//!   every call site, with arguments evaluated once into fresh variables
//!   and the macro's own locals renamed so they cannot capture anything at
//!   the call site.  Recursive macros are rejected.
//! * Parameters may carry defaults (`total <- 0`), and call sites may pass
//!   arguments by name (`Proxy <- FunnyElephant(x)`).  Every call to a
//!   known procedure is rewritten to plain positional form.  A default may
//!   refer to parameters to its left; the referenced argument is hoisted
//!   into a fresh variable when necessary so it is still evaluated once.
//! * A declaration with an initialization section (`= statements` before
//!   the body) splits in two: a wrapper that runs the initialization and a
//!   worker holding the original rules.  Names the initialization binds
//!   become extra worker parameters.

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::span::Span;

use super::NameGen;

pub fn apply_initialization(p: Program, names: &mut NameGen) -> Result<Program, Diagnostic> {
    // Pull the macros out of the program.
    let mut macros: HashMap<String, (Vec<Param>, Vec<Statement>)> = HashMap::new();
    let mut decls = Vec::new();
    for d in p.decls {
        if let Some(body) = d.macro_body {
            macros.insert(d.name, (d.params, body));
        } else {
            decls.push(d);
        }
    }
    let sigs: HashMap<String, Vec<Param>> =
        decls.iter().map(|d| (d.name.clone(), d.params.clone())).collect();

    let mut ctx = Ctx { macros, sigs, names, stack: Vec::new() };
    for d in &mut decls {
        d.init = ctx.stmts(std::mem::take(&mut d.init))?;
        ctx.groups(&mut d.body)?;
    }

    // Split off initialization sections.
    let mut out = Vec::with_capacity(decls.len());
    for d in decls {
        if d.init.is_empty() {
            out.push(d);
        } else {
            split_init(d, names, &mut out);
        }
    }
    Ok(Program { decls: out })
}

struct Ctx<'a> {
    macros: HashMap<String, (Vec<Param>, Vec<Statement>)>,
    sigs: HashMap<String, Vec<Param>>,
    names: &'a mut NameGen,
    /// Macro names currently being inlined, to catch recursion.
    stack: Vec<String>,
}

impl Ctx<'_> {
    fn groups(&mut self, gs: &mut Vec<Group>) -> Result<(), Diagnostic> {
        for g in gs {
            for r in &mut g.rules {
                r.rhs = self.stmts(std::mem::take(&mut r.rhs))?;
                if let Some(body) = &mut r.body {
                    self.groups(body)?;
                }
            }
        }
        Ok(())
    }

    fn stmts(&mut self, stmts: Vec<Statement>) -> Result<Vec<Statement>, Diagnostic> {
        let mut out = Vec::with_capacity(stmts.len());
        for s in stmts {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn stmt(&mut self, mut s: Statement, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match &mut s {
            // `y <- macro(...)` inlines straight into `y`, with no
            // intermediate variable.
            Statement::Alias { var, expr: Expr::Call { proc, args, named, span }, .. }
                if self.macros.contains_key(proc.as_str()) =>
            {
                for a in args.iter_mut() {
                    self.expr(a, out)?;
                }
                for (_, e) in named.iter_mut() {
                    self.expr(e, out)?;
                }
                let proc = proc.clone();
                let args = std::mem::take(args);
                let named = std::mem::take(named);
                let (target, span) = (var.clone(), *span);
                self.inline_macro(&proc, args, named, target, span, out)?;
                return Ok(());
            }
            Statement::Call { proc, args, named, outs, span } => {
                for a in args.iter_mut() {
                    self.expr(a, out)?;
                }
                for (_, e) in named.iter_mut() {
                    self.expr(e, out)?;
                }
                if self.macros.contains_key(proc.as_str()) {
                    if outs.len() > 1 {
                        return Err(Diagnostic::error(
                            "E0204",
                            *span,
                            "a macro produces a single value",
                        ));
                    }
                    let target = match outs.first() {
                        Some(o) => o.clone(),
                        None => self.names.future("drop"),
                    };
                    let proc = proc.clone();
                    let args = std::mem::take(args);
                    let named = std::mem::take(named);
                    let span = *span;
                    self.inline_macro(&proc, args, named, target, span, out)?;
                    return Ok(());
                }
                self.fix_call(proc, args, named, *span, out)?;
            }
            _ => self.walk_exprs(&mut s, out)?,
        }
        out.push(s);
        Ok(())
    }

    /// Visit every expression nested in a statement, inlining macro calls
    /// and materializing defaults as they are found.
    fn walk_exprs(&mut self, s: &mut Statement, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match s {
            Statement::Bind { term, .. } => self.tuple(term, out),
            Statement::Alias { expr, .. } => self.expr(expr, out),
            Statement::Call { .. } => unreachable!("handled by stmt"),
            Statement::Send { msgs, .. } => {
                for m in msgs {
                    for a in &mut m.args {
                        self.expr(a, out)?;
                    }
                }
                Ok(())
            }
            Statement::Relay { .. }
            | Statement::StreamClose { .. }
            | Statement::LocalDecl { .. } => Ok(()),
            Statement::Put { items, .. } => {
                for it in items {
                    match it {
                        PutItem::Tup(t) => self.tuple(t, out)?,
                        PutItem::Val(e) => self.expr(e, out)?,
                    }
                }
                Ok(())
            }
            Statement::Become { value, .. } => self.expr(value, out),
            Statement::AnonWrite { value, .. } => match value {
                AnonValue::Bind(t) => self.tuple(t, out),
                AnonValue::Expr(e) => self.expr(e, out),
            },
            Statement::IfThenElse { cond, then_b, else_b, .. } => {
                self.expr(cond, out)?;
                then_b.stmts = self.stmts(std::mem::take(&mut then_b.stmts))?;
                else_b.stmts = self.stmts(std::mem::take(&mut else_b.stmts))?;
                Ok(())
            }
            Statement::Sequence { first, second, .. } => {
                *first = self.stmts(std::mem::take(first))?;
                *second = self.stmts(std::mem::take(second))?;
                Ok(())
            }
            Statement::ExprStmt { expr, .. } => self.expr(expr, out),
        }
    }

    fn tuple(&mut self, t: &mut TupleExpr, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        match t {
            TupleExpr::Tuple { args, .. } => {
                for a in args {
                    self.expr(a, out)?;
                }
                Ok(())
            }
            TupleExpr::Cons { head, tail, .. } => {
                self.tuple(head, out)?;
                self.tuple(tail, out)
            }
            _ => Ok(()),
        }
    }

    fn expr(&mut self, e: &mut Expr, out: &mut Vec<Statement>) -> Result<(), Diagnostic> {
        // Children first, so inner macro calls expand before outer ones.
        match e {
            Expr::Var(_)
            | Expr::Num(..)
            | Expr::Atom(..)
            | Expr::SelfRef(_)
            | Expr::AnonRec(_) => {}
            Expr::Call { args, named, .. } => {
                for a in args.iter_mut() {
                    self.expr(a, out)?;
                }
                for (_, v) in named.iter_mut() {
                    self.expr(v, out)?;
                }
            }
            Expr::DotSend { base, chain, .. } | Expr::TildeSend { base, chain, .. } => {
                self.expr(base, out)?;
                for m in chain {
                    for a in &mut m.args {
                        self.expr(a, out)?;
                    }
                }
            }
            Expr::Juxt { func, arg, .. } => {
                self.expr(func, out)?;
                self.expr(arg, out)?;
            }
            Expr::Arith { lhs, rhs, .. } | Expr::Rel { lhs, rhs, .. } => {
                self.expr(lhs, out)?;
                self.expr(rhs, out)?;
            }
        }
        if let Expr::Call { proc, args, named, span } = e {
            if self.macros.contains_key(proc.as_str()) {
                let v = self.names.future("val");
                let proc = proc.clone();
                let args = std::mem::take(args);
                let named = std::mem::take(named);
                let span = *span;
                self.inline_macro(&proc, args, named, v.clone(), span, out)?;
                *e = Expr::Var(v);
            } else {
                self.fix_call(proc, args, named, *span, out)?;
            }
        }
        Ok(())
    }

    /// Resolve positional, named, and defaulted arguments into one plain
    /// positional list.
    fn resolve_args(
        &mut self,
        proc: &str,
        params: &[Param],
        args: Vec<Expr>,
        named: Vec<(String, Expr)>,
        span: Span,
        out: &mut Vec<Statement>,
    ) -> Result<Vec<Expr>, Diagnostic> {
        if args.len() > params.len() {
            return Err(Diagnostic::error(
                "E0205",
                span,
                format!("`{proc}` takes {} argument(s), got {}", params.len(), args.len()),
            ));
        }
        let mut filled: Vec<Option<Expr>> = args.into_iter().map(Some).collect();
        filled.resize(params.len(), None);
        for (name, value) in named {
            let Some(i) = params.iter().position(|p| p.name.text == name) else {
                return Err(Diagnostic::error(
                    "E0206",
                    span,
                    format!("`{proc}` has no parameter named `{name}`"),
                ));
            };
            if filled[i].is_some() {
                return Err(Diagnostic::error(
                    "E0207",
                    span,
                    format!("parameter `{name}` of `{proc}` is given twice"),
                ));
            }
            filled[i] = Some(value);
        }
        // Fill defaults left to right; a default may mention any parameter
        // to its left, whose value is hoisted if it is not a simple name.
        for i in 0..filled.len() {
            if filled[i].is_some() {
                continue;
            }
            let Some(default) = params[i].default.clone() else {
                return Err(Diagnostic::error(
                    "E0208",
                    span,
                    format!("missing argument `{}` of `{proc}`", params[i].name.text),
                ));
            };
            let mut default = default;
            for j in 0..params.len() {
                let pname = &params[j].name.text;
                if !expr_reads(&default, pname) {
                    continue;
                }
                if j >= i {
                    return Err(Diagnostic::error(
                        "E0209",
                        span,
                        format!(
                            "default for `{}` refers to `{pname}`, which has no value yet",
                            params[i].name.text
                        ),
                    ));
                }
                let arg = filled[j].as_mut().expect("left arguments are filled");
                if !arg.is_atomic() {
                    let v = self.names.of_kind(&params[j].name.text, params[j].name.kind);
                    out.push(Statement::Alias {
                        var: v.clone(),
                        expr: std::mem::replace(arg, Expr::Var(v.clone())),
                        span,
                    });
                }
                subst_param(&mut default, pname, filled[j].as_ref().unwrap());
            }
            filled[i] = Some(default);
        }
        Ok(filled.into_iter().map(Option::unwrap).collect())
    }

    fn fix_call(
        &mut self,
        proc: &str,
        args: &mut Vec<Expr>,
        named: &mut Vec<(String, Expr)>,
        span: Span,
        out: &mut Vec<Statement>,
    ) -> Result<(), Diagnostic> {
        let Some(params) = self.sigs.get(proc).cloned() else {
            if !named.is_empty() {
                return Err(Diagnostic::error(
                    "E0210",
                    span,
                    format!("named argument to unknown procedure `{proc}`"),
                ));
            }
            return Ok(());
        };
        if args.len() == params.len() && named.is_empty() {
            return Ok(());
        }
        let a = std::mem::take(args);
        let n = std::mem::take(named);
        *args = self.resolve_args(proc, &params, a, n, span, out)?;
        Ok(())
    }

    fn inline_macro(
        &mut self,
        name: &str,
        args: Vec<Expr>,
        named: Vec<(String, Expr)>,
        target: Name,
        span: Span,
        out: &mut Vec<Statement>,
    ) -> Result<(), Diagnostic> {
        if self.stack.iter().any(|n| n == name) {
            return Err(Diagnostic::error(
                "E0211",
                span,
                format!("macro `{name}` expands itself"),
            ));
        }
        let (params, body) = self.macros[name].clone();
        let args = self.resolve_args(name, &params, args, named, span, out)?;

        let mut body = body;
        // Rename the macro's own bindings so they cannot collide with
        // names at the call site.
        for local in written_names(&body) {
            if params.iter().any(|p| p.name.text == local.text) {
                continue;
            }
            let fresh = self.names.fresh_text(&local.text);
            for s in &mut body {
                rename_var(s, &local.text, &fresh);
            }
        }
        // Arguments are evaluated once, then substituted for parameters.
        for (param, arg) in params.iter().zip(&args) {
            let value = if arg.is_atomic() {
                arg.clone()
            } else {
                let v = self.names.of_kind(&param.name.text, param.name.kind);
                out.push(Statement::Alias { var: v.clone(), expr: arg.clone(), span });
                Expr::Var(v)
            };
            for s in &mut body {
                subst_param_stmt(s, &param.name.text, &value);
            }
        }
        // The macro's result writes go to the call's target.
        for s in &mut body {
            retarget(s, &target);
        }
        self.stack.push(name.to_string());
        let body = self.stmts(body)?;
        self.stack.pop();
        out.extend(body);
        Ok(())
    }
}

/// Redirect anonymous result writes in a macro body to `target`.
fn retarget(s: &mut Statement, target: &Name) {
    match s {
        Statement::AnonWrite { value, span } => {
            *s = match std::mem::replace(value, AnonValue::Expr(Expr::SelfRef(*span))) {
                AnonValue::Bind(t) => Statement::Bind { var: target.clone(), term: t, span: *span },
                AnonValue::Expr(e) => Statement::Alias { var: target.clone(), expr: e, span: *span },
            };
        }
        Statement::Become { value, span } => {
            *s = Statement::Alias {
                var: target.clone(),
                expr: std::mem::replace(value, Expr::SelfRef(*span)),
                span: *span,
            };
        }
        Statement::IfThenElse { then_b, else_b, .. } => {
            for s in then_b.stmts.iter_mut().chain(&mut else_b.stmts) {
                retarget(s, target);
            }
        }
        Statement::Sequence { first, second, .. } => {
            for s in first.iter_mut().chain(second.iter_mut()) {
                retarget(s, target);
            }
        }
        _ => {}
    }
}

fn expr_reads(e: &Expr, name: &str) -> bool {
    let mut found = false;
    super::visit_expr_names(e, &mut |n| {
        if n == name {
            found = true;
        }
    });
    found
}

/// Substitute a parameter name with a value in every read position.
fn subst_param(e: &mut Expr, name: &str, value: &Expr) {
    super::subst_var_expr(e, name, value);
}

fn subst_param_stmt(s: &mut Statement, name: &str, value: &Expr) {
    super::subst_var_stmt(s, name, value);
}

/// Names a statement list binds: assignment targets, call and send
/// outputs, stream writes, and declared locals, in first-written order.
pub fn written_names(stmts: &[Statement]) -> Vec<Name> {
    let mut out: Vec<Name> = Vec::new();
    let push = |n: &Name, out: &mut Vec<Name>| {
        if !out.iter().any(|m| m.text == n.text) {
            out.push(n.clone());
        }
    };
    fn walk(stmts: &[Statement], push: &mut impl FnMut(&Name)) {
        for s in stmts {
            match s {
                Statement::Bind { var, .. } | Statement::Alias { var, .. } => push(var),
                Statement::Call { outs, .. } => outs.iter().for_each(&mut *push),
                Statement::Send { msgs, .. } => {
                    for m in msgs {
                        m.outs.iter().for_each(&mut *push);
                    }
                }
                Statement::Relay { target, .. } => push(target),
                Statement::Put { chan, .. } => push(chan),
                Statement::StreamClose { var, .. } => push(var),
                Statement::LocalDecl { names, .. } => names.iter().for_each(&mut *push),
                Statement::Become { .. } | Statement::AnonWrite { .. } => {}
                Statement::IfThenElse { then_b, else_b, .. } => {
                    walk(&then_b.stmts, push);
                    walk(&else_b.stmts, push);
                }
                Statement::Sequence { locals, first, second, .. } => {
                    locals.iter().for_each(&mut *push);
                    walk(first, push);
                    walk(second, push);
                }
                Statement::ExprStmt { outs, .. } => outs.iter().for_each(&mut *push),
            }
        }
    }
    walk(stmts, &mut |n| push(n, &mut out));
    out
}

/// Rename a variable in both binding and reading positions.
fn rename_var(s: &mut Statement, from: &str, to: &str) {
    let ren = |n: &mut Name| {
        if n.text == from {
            n.text = to.to_string();
        }
    };
    match s {
        Statement::Bind { var, .. } | Statement::Alias { var, .. } => ren(var),
        Statement::Call { outs, .. } => outs.iter_mut().for_each(ren),
        Statement::Send { msgs, .. } => {
            for m in msgs {
                m.outs.iter_mut().for_each(ren);
            }
        }
        Statement::Relay { target, var, .. } => {
            ren(target);
            ren(var);
        }
        Statement::Put { chan, .. } => ren(chan),
        Statement::StreamClose { var, .. } => ren(var),
        Statement::LocalDecl { names, .. } => names.iter_mut().for_each(ren),
        Statement::IfThenElse { then_b, else_b, .. } => {
            for s in then_b.stmts.iter_mut().chain(&mut else_b.stmts) {
                rename_var(s, from, to);
            }
        }
        Statement::Sequence { locals, first, second, .. } => {
            locals.iter_mut().for_each(ren);
            for s in first.iter_mut().chain(second.iter_mut()) {
                rename_var(s, from, to);
            }
        }
        _ => {}
    }
    // Read positions.
    let to_expr = Expr::Var(Name {
        text: to.to_string(),
        kind: Kind::Future,
        span: Span::DUMMY,
    });
    super::subst_var_stmt(s, from, &to_expr);
}

/// Split a declaration with an initialization section into a wrapper that
/// runs the section and a worker holding the rules.
fn split_init(d: Decl, names: &mut NameGen, out: &mut Vec<Decl>) {
    let span = d.span;
    let locals: Vec<Name> = written_names(&d.init)
        .into_iter()
        .filter(|n| {
            !d.params.iter().any(|p| p.name.text == n.text)
                && !d.outspec.names().iter().any(|o| o.text == n.text)
        })
        .collect();

    let worker_name = names.fresh_text(&d.name);
    let mut worker_params = d.params.clone();
    worker_params.extend(
        locals.iter().map(|n| Param { name: n.clone(), default: None, span: n.span }),
    );

    let mut args: Vec<Expr> =
        d.params.iter().map(|p| Expr::Var(p.name.clone())).collect();
    args.extend(locals.iter().map(|n| Expr::Var(n.clone())));

    let mut rhs = d.init;
    let call = Expr::Call { proc: worker_name.clone(), args, named: Vec::new(), span };
    match &d.outspec {
        OutSpec::AnonValue(_) | OutSpec::AnonHandle(_) => {
            rhs.push(Statement::Become { value: call, span });
        }
        OutSpec::Named(ns) => {
            let Expr::Call { proc, args, named, .. } = call else { unreachable!() };
            rhs.push(Statement::Call { proc, args, named, outs: ns.clone(), span });
        }
        OutSpec::None => {
            let Expr::Call { proc, args, named, .. } = call else { unreachable!() };
            rhs.push(Statement::Call { proc, args, named, outs: Vec::new(), span });
        }
    }

    out.push(Decl {
        name: d.name,
        params: d.params,
        curried: Vec::new(),
        outspec: d.outspec.clone(),
        init: Vec::new(),
        macro_body: None,
        body: vec![Group {
            rules: vec![Rule { lhs: Vec::new(), bars: 2, rhs, body: None, span }],
        }],
        span,
    });
    out.push(Decl {
        name: worker_name,
        params: worker_params,
        curried: Vec::new(),
        outspec: d.outspec,
        init: Vec::new(),
        macro_body: None,
        body: d.body,
        span,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str) -> Program {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        apply_initialization(p, &mut names).expect("expand")
    }

    fn run_err(src: &str) -> Diagnostic {
        let p = parse(src).expect("parse");
        let mut names = NameGen::for_program(&p);
        apply_initialization(p, &mut names).expect_err("should fail")
    }

    #[test]
    fn macro_inlined_at_statement_call() {
        let p = run("#square(x) == >x*x\n#use(a)->y { a=go || square(a)->y }");
        assert_eq!(p.decls.len(), 1);
        let rule = &p.decls[0].body[0].rules[0];
        // The macro body lands as an alias to the call's output.
        match &rule.rhs[0] {
            Statement::Alias { var, expr, .. } => {
                assert_eq!(var.text, "y");
                assert!(matches!(expr, Expr::Arith { op: ArithOp::Mul, .. }));
            }
            other => panic!("expected alias, got {other:?}"),
        }
    }

    #[test]
    fn macro_inlined_in_expression_position() {
        let p = run("#double(n) == >n+n\n#use(a)->y { a=go || y <- double(a)*3 }");
        let rule = &p.decls[0].body[0].rules[0];
        assert_eq!(rule.rhs.len(), 2);
        // First the hoisted macro body, then the original alias reading it.
        let v = match &rule.rhs[0] {
            Statement::Alias { var, .. } => var.text.clone(),
            other => panic!("expected alias, got {other:?}"),
        };
        assert!(v.contains('%'));
        match &rule.rhs[1] {
            Statement::Alias { var, expr, .. } => {
                assert_eq!(var.text, "y");
                match expr {
                    Expr::Arith { lhs, .. } => {
                        assert!(matches!(&**lhs, Expr::Var(n) if n.text == v));
                    }
                    other => panic!("expected product, got {other:?}"),
                }
            }
            other => panic!("expected alias, got {other:?}"),
        }
    }

    #[test]
    fn macro_arguments_evaluated_once() {
        let p = run("#twice(n) == >n+n\n#use(a)->y { a=go || y <- twice(a*a) }");
        let rule = &p.decls[0].body[0].rules[0];
        // a*a is bound to a fresh name, which the sum then reads twice.
        match (&rule.rhs[0], &rule.rhs[1]) {
            (
                Statement::Alias { var: v1, expr: Expr::Arith { op: ArithOp::Mul, .. }, .. },
                Statement::Alias { var: v2, expr: Expr::Arith { op: ArithOp::Add, lhs, rhs, .. }, .. },
            ) => {
                assert!(v1.text.contains('%'));
                assert_eq!(v2.text, "y");
                for side in [lhs, rhs] {
                    assert!(matches!(&**side, Expr::Var(n) if n.text == v1.text));
                }
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn recursive_macro_rejected() {
        let d = run_err("#loop(n) == >loop(n)\n#use(a)->y { a=go || y <- loop(a) }");
        assert_eq!(d.code, "E0211");
    }

    #[test]
    fn defaults_fill_missing_arguments() {
        let p = run("#count(in, total<-0)->out { in$ || out<-total }\n\
                     #use(l)->y { l=go || count(l)->y }");
        let rule = &p.decls[1].body[0].rules[0];
        match &rule.rhs[0] {
            Statement::Call { proc, args, .. } => {
                assert_eq!(proc, "count");
                assert_eq!(args.len(), 2);
                assert!(matches!(&args[1], Expr::Num(n, _) if n == &0.into()));
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn named_argument_fills_by_name() {
        let p = run("#pair(a, b<-1)->out { a=go || out<-b }\n\
                     #use(x)->y { x=go || pair(x, b<-5)->y }");
        let rule = &p.decls[1].body[0].rules[0];
        match &rule.rhs[0] {
            Statement::Call { args, named, .. } => {
                assert!(named.is_empty());
                assert!(matches!(&args[1], Expr::Num(n, _) if n == &5.into()));
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn default_may_read_earlier_parameter() {
        let p = run("#grow(n, m<-n*2)->out { n=go || out<-m }\n\
                     #use(x)->y { x=go || grow(x)->y }");
        let rule = &p.decls[1].body[0].rules[0];
        match &rule.rhs[0] {
            Statement::Call { args, .. } => match &args[1] {
                Expr::Arith { op: ArithOp::Mul, lhs, .. } => {
                    assert!(matches!(&**lhs, Expr::Var(n) if n.text == "x"));
                }
                other => panic!("expected product, got {other:?}"),
            },
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn unknown_parameter_name_rejected() {
        let d = run_err("#pair(a, b<-1)->out { a=go || out<-b }\n\
                         #use(x)->y { x=go || pair(x, c<-5)->y }");
        assert_eq!(d.code, "E0206");
    }

    #[test]
    fn init_splits_into_wrapper_and_worker() {
        let p = run("#counter(in)->out = val<-0 {\n  in.inc(x) | val<-val+x;\n  in$ || out<-val;\n}");
        assert_eq!(p.decls.len(), 2);
        let wrapper = &p.decls[0];
        let worker = &p.decls[1];
        assert_eq!(wrapper.name, "counter");
        assert!(worker.name.starts_with("counter%"));
        assert_eq!(worker.params.len(), 2);
        assert_eq!(worker.params[1].name.text, "val");
        assert_eq!(worker.body[0].rules.len(), 2);

        let rule = &wrapper.body[0].rules[0];
        assert!(rule.lhs.is_empty());
        assert_eq!(rule.bars, 2);
        match (&rule.rhs[0], &rule.rhs[1]) {
            (
                Statement::Alias { var, .. },
                Statement::Call { proc, args, outs, .. },
            ) => {
                assert_eq!(var.text, "val");
                assert_eq!(proc, &worker.name);
                assert_eq!(args.len(), 2);
                assert_eq!(outs[0].text, "out");
            }
            other => panic!("unexpected wrapper shape {other:?}"),
        }
    }

    #[test]
    fn pass_is_idempotent() {
        let p = run("#counter(in)->out = val<-0 {\n  in.inc(x) | val<-val+x;\n  in$ || out<-val;\n}");
        let printed = crate::pretty::program(&p);
        let mut names = NameGen::for_program(&p);
        let again = apply_initialization(p, &mut names).expect("expand");
        assert_eq!(crate::pretty::program(&again), printed);
    }
}
