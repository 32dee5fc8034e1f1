//! Printing core programs as flat concurrent-logic clauses.
//!
//! Every core rule is a guarded clause: the header's inputs and outputs
//! become positional head arguments (inputs first), input matches become
//! head patterns, guards go between `:-` and `|`, and the body is a
//! conjunction of calls and `Var = Term` unifications.  Rule groups are
//! separated by the `otherwise.` directive, streams print as lists, and
//! each predicate carries a mode comment marking inputs `+` and outputs
//! `-`.
//!
//! The dialect follows the usual flat committed-choice conventions:
//! variables are capitalised, functors are lower-case (quoted when the
//! original name will not survive that reading), and a match whose whole
//! value is also used elsewhere in the clause is demoted from the head to
//! a passive guard unification so the variable stays available.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use crate::ast::{ArithOp, RelOp};
use crate::core::{CoreGuard, CorePat, CoreProc, CoreProgram, CoreRule, CoreStmt, CoreTerm};
use crate::desugar::expressions::arith_proc;

pub fn emit_logic(p: &CoreProgram) -> String {
    let mut out = String::new();
    for (i, proc) in p.procs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        emit_proc(proc, &mut out);
    }
    out
}

fn emit_proc(proc: &CoreProc, out: &mut String) {
    let _ = write!(out, "% mode: {}(", functor(&proc.name));
    for (i, name) in proc.ins.iter().chain(&proc.outs).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let sign = if i < proc.ins.len() { '+' } else { '-' };
        out.push(sign);
        out.push_str(&logic_var(name));
    }
    out.push_str(")\n");
    for (gi, group) in proc.groups.iter().enumerate() {
        if gi > 0 {
            out.push_str("otherwise.\n");
        }
        for rule in group {
            emit_clause(proc, rule, out);
        }
    }
}

fn emit_clause(proc: &CoreProc, rule: &CoreRule, out: &mut String) {
    let mut vars = VarMap::new();
    let referenced = referenced_vars(rule);

    // Head arguments, one per header name; matches are inlined unless the
    // matched variable itself is needed later.
    let mut guards: Vec<String> = Vec::new();
    let mut head_args: Vec<String> = Vec::new();
    let mut used_match: HashSet<usize> = HashSet::new();
    for name in proc.ins.iter().chain(&proc.outs) {
        let found = rule
            .matches
            .iter()
            .enumerate()
            .find(|(i, (v, _))| v == name && !used_match.contains(i));
        match found {
            Some((i, (v, pat))) if !referenced.contains(v) => {
                used_match.insert(i);
                head_args.push(pat_term(pat, &mut vars, &mut guards));
            }
            Some((i, (v, pat))) => {
                used_match.insert(i);
                let hv = vars.get(v);
                let rendered = pat_term(pat, &mut vars, &mut guards);
                guards.push(format!("{hv} = {rendered}"));
                head_args.push(hv);
            }
            None => head_args.push(vars.get(name)),
        }
    }
    // Anything left over (a second match on the same variable) becomes a
    // further passive guard.
    for (i, (v, pat)) in rule.matches.iter().enumerate() {
        if !used_match.contains(&i) {
            let hv = vars.get(v);
            let rendered = pat_term(pat, &mut vars, &mut guards);
            guards.push(format!("{hv} = {rendered}"));
        }
    }
    for g in &rule.guards {
        guards.push(render_guard(g, &mut vars));
    }

    let goals: Vec<String> = rule.body.iter().map(|s| render_stmt(s, &mut vars)).collect();

    let _ = write!(out, "{}", functor(&proc.name));
    if !head_args.is_empty() {
        let _ = write!(out, "({})", head_args.join(", "));
    }
    if guards.is_empty() && goals.is_empty() {
        out.push_str(".\n");
        return;
    }
    out.push_str(" :- ");
    if !guards.is_empty() {
        out.push_str(&guards.join(", "));
        out.push_str(" | ");
    }
    if goals.is_empty() {
        out.push_str("true");
    } else {
        out.push_str(&goals.join(", "));
    }
    out.push_str(".\n");
}

fn render_stmt(s: &CoreStmt, vars: &mut VarMap) -> String {
    match s {
        CoreStmt::Assign { var, term } => {
            format!("{} = {}", vars.get(var), render_term(term, vars))
        }
        CoreStmt::Call { proc, ins, outs } => {
            let mut args: Vec<String> = ins.iter().map(|t| render_term(t, vars)).collect();
            args.extend(outs.iter().map(|o| vars.get(o)));
            if args.is_empty() {
                functor(proc)
            } else {
                format!("{}({})", functor(proc), args.join(", "))
            }
        }
    }
}

fn render_guard(g: &CoreGuard, vars: &mut VarMap) -> String {
    let op = match g.op {
        RelOp::Lt => "<",
        RelOp::Gt => ">",
        RelOp::Le => "=<",
        RelOp::Ge => ">=",
        RelOp::Eq => "==",
        RelOp::Ne => "\\=",
    };
    format!(
        "{} {} {}",
        guard_operand(&g.lhs, vars),
        op,
        guard_operand(&g.rhs, vars)
    )
}

/// Guard operands print arithmetic infix, the way guard builtins expect.
fn guard_operand(t: &CoreTerm, vars: &mut VarMap) -> String {
    if let CoreTerm::Tuple(tag, args) = t {
        if args.len() == 2 {
            let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
                .into_iter()
                .find(|op| arith_proc(*op) == tag);
            if let Some(op) = op {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "//",
                };
                return format!(
                    "({} {} {})",
                    guard_operand(&args[0], vars),
                    sym,
                    guard_operand(&args[1], vars)
                );
            }
        }
    }
    render_term(t, vars)
}

fn render_term(t: &CoreTerm, vars: &mut VarMap) -> String {
    match t {
        CoreTerm::Var(v) => vars.get(v),
        CoreTerm::Num(n) => n.to_string(),
        CoreTerm::Const(c) => functor(c),
        CoreTerm::Nil => "[]".to_string(),
        CoreTerm::Cons(..) => {
            // Collect the spine so `a : b : $` prints as `[a, b]`.
            let mut heads = Vec::new();
            let mut cur = t;
            while let CoreTerm::Cons(h, rest) = cur {
                heads.push(render_term(h, vars));
                cur = rest;
            }
            match cur {
                CoreTerm::Nil => format!("[{}]", heads.join(", ")),
                tail => format!("[{}|{}]", heads.join(", "), render_term(tail, vars)),
            }
        }
        CoreTerm::Tuple(tag, args) => {
            if args.is_empty() {
                functor(tag)
            } else {
                let args: Vec<String> = args.iter().map(|a| render_term(a, vars)).collect();
                format!("{}({})", functor(tag), args.join(", "))
            }
        }
    }
}

/// A pattern as a head term; captures become variables, and an
/// `As`-capture keeps the variable in place while pushing its shape down
/// into a passive guard.
fn pat_term(p: &CorePat, vars: &mut VarMap, guards: &mut Vec<String>) -> String {
    match p {
        CorePat::Capture(v) | CorePat::ReplySlot(v) => vars.get(v),
        CorePat::As(v, inner) => {
            let hv = vars.get(v);
            let rendered = pat_term(inner, vars, guards);
            guards.push(format!("{hv} = {rendered}"));
            hv
        }
        CorePat::Const(c) => functor(c),
        CorePat::Num(n) => n.to_string(),
        CorePat::Nil => "[]".to_string(),
        CorePat::Cons(..) => {
            let mut heads = Vec::new();
            let mut cur = p;
            while let CorePat::Cons(h, rest) = cur {
                heads.push(pat_term(h, vars, guards));
                cur = rest;
            }
            match cur {
                CorePat::Nil => format!("[{}]", heads.join(", ")),
                tail => format!("[{}|{}]", heads.join(", "), pat_term(tail, vars, guards)),
            }
        }
        CorePat::Tuple(tag, args) => {
            if args.is_empty() {
                functor(tag)
            } else {
                let args: Vec<String> =
                    args.iter().map(|a| pat_term(a, vars, guards)).collect();
                format!("{}({})", functor(tag), args.join(", "))
            }
        }
    }
}

/// The variables a rule needs as whole values outside its head patterns.
fn referenced_vars(rule: &CoreRule) -> HashSet<String> {
    let mut set = HashSet::new();
    for g in &rule.guards {
        term_vars(&g.lhs, &mut set);
        term_vars(&g.rhs, &mut set);
    }
    for s in &rule.body {
        match s {
            CoreStmt::Assign { var, term } => {
                set.insert(var.clone());
                term_vars(term, &mut set);
            }
            CoreStmt::Call { ins, outs, .. } => {
                for t in ins {
                    term_vars(t, &mut set);
                }
                for o in outs {
                    set.insert(o.clone());
                }
            }
        }
    }
    set
}

fn term_vars(t: &CoreTerm, set: &mut HashSet<String>) {
    match t {
        CoreTerm::Var(v) => {
            set.insert(v.clone());
        }
        CoreTerm::Tuple(_, args) => {
            for a in args {
                term_vars(a, set);
            }
        }
        CoreTerm::Cons(h, tl) => {
            term_vars(h, set);
            term_vars(tl, set);
        }
        _ => {}
    }
}

// ───────────────────────────────── names ──────────────────────────────────

/// Per-clause mapping from core names to logic variables, keeping the
/// result collision-free when capitalisation merges two different names.
struct VarMap {
    map: HashMap<String, String>,
    taken: HashSet<String>,
}

impl VarMap {
    fn new() -> Self {
        VarMap { map: HashMap::new(), taken: HashSet::new() }
    }

    fn get(&mut self, name: &str) -> String {
        if let Some(v) = self.map.get(name) {
            return v.clone();
        }
        let base = logic_var(name);
        let mut candidate = base.clone();
        let mut n = 1;
        while self.taken.contains(&candidate) {
            n += 1;
            candidate = format!("{base}{n}");
        }
        self.taken.insert(candidate.clone());
        self.map.insert(name.to_string(), candidate.clone());
        candidate
    }
}

/// Capitalise a core variable for the logic reading; `%` separators in
/// generated names become underscores.
fn logic_var(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c == '%' { '_' } else { c })
        .collect();
    let mut chars = cleaned.chars();
    match chars.next() {
        Some(f) if f.is_ascii_lowercase() => f.to_ascii_uppercase().to_string() + chars.as_str(),
        Some(f) if f.is_ascii_uppercase() => cleaned,
        _ => format!("V{cleaned}"),
    }
}

/// A functor or constant; quoted when the bare spelling would read as
/// something else.
fn functor(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c == '%' { '_' } else { c })
        .collect();
    let bare = cleaned
        .chars()
        .next()
        .map_or(false, |f| f.is_ascii_lowercase())
        && cleaned.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if bare {
        cleaned
    } else {
        format!("'{cleaned}'")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn logic(src: &str) -> String {
        let (core, _) = crate::desugar::expand(parse(src).expect("parse")).expect("expand");
        emit_logic(&core)
    }

    #[test]
    fn clauses_match_inputs_in_the_head_and_unify_outputs() {
        let text = logic(
            "#p (u, v) -> (x, y)
             {
               u=f(w)      || r(u, v, w) -> (y, x);
               u=g(w)      || q(v, w) -> x, y=g(v);
               u=h(w), v=a || x<-w, y=b;
               v=e         || x=k(u, z), s(u) -> (z, y)
             }",
        );
        // Rule 1 uses the matched u whole, so the match drops to a guard.
        assert!(text.contains("p(U, V, X, Y) :- U = f(W) | r(U, V, W, Y, X)."), "{text}");
        assert!(text.contains("p(g(W), V, X, Y) :- q(V, W, X), Y = g(V)."), "{text}");
        assert!(text.contains("p(h(W), a, X, Y) :- X = W, Y = b."), "{text}");
        assert!(text.contains("p(U, e, X, Y) :- X = k(U, Z), s(U, Z, Y)."), "{text}");
        assert!(text.contains("% mode: p(+U, +V, -X, -Y)"), "{text}");
    }

    #[test]
    fn streams_print_as_lists_and_guards_sit_before_the_bar() {
        let text = logic(
            "#ordmerge (in1, in2) ->out
             {
               in1?m1, in2/?m2, m2>=m1 | out^m1;
               in1/?m1, in2?m2, m1>=m2 | out^m2;
               in1$ || out<-in2;
               in2$ || out<-in1
             }",
        );
        // The consumed stream is a head list pattern; the looked-at one
        // stays whole and is inspected passively in the guard.
        assert!(text.contains("ordmerge([M1|"), "{text}");
        assert!(text.contains("M2 >= M1 | "), "{text}");
        assert!(text.contains("= [M2|"), "{text}");
        assert!(text.contains("ordmerge([], In2, Out) :- Out = In2."), "{text}");
        assert!(text.contains("ordmerge(In1, [], Out) :- Out = In1."), "{text}");
    }

    #[test]
    fn otherwise_separates_rule_groups() {
        let text = logic("#max (a, b) ->m { a>=b || m<-a : || m<-b }");
        let lines: Vec<&str> = text.lines().collect();
        let ow = lines.iter().position(|l| *l == "otherwise.").expect("otherwise line");
        assert!(lines[..ow].iter().any(|l| l.contains("A >= B | M = A")), "{text}");
        assert!(lines[ow..].iter().any(|l| l.contains("M = B")), "{text}");
    }

    #[test]
    fn awkward_names_are_quoted_or_mangled() {
        assert_eq!(functor("RoyalElephant"), "'RoyalElephant'");
        assert_eq!(functor("merge%b"), "merge_b");
        assert_eq!(functor("nil%"), "nil_");
        assert_eq!(logic_var("x%1"), "X_1");
        assert_eq!(logic_var("Proxy"), "Proxy");
    }

    #[test]
    fn two_names_never_collapse_into_one_variable() {
        let mut vars = VarMap::new();
        let w_future = vars.get("w");
        let w_handle = vars.get("W");
        assert_ne!(w_future, w_handle);
        // Stable on repeat lookups.
        assert_eq!(vars.get("w"), w_future);
        assert_eq!(vars.get("W"), w_handle);
    }

    #[test]
    fn empty_headers_and_bodies_stay_well_formed() {
        let text = logic("#idle (go) ->() { go=now || ; }");
        assert!(text.contains("idle(now) :- true.") || text.contains("idle(now)."), "{text}");
    }
}
