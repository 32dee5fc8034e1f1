//! Structural normalization of core programs.
//!
//! Two lowerings of the same program can differ in generated variable
//! names, in the order of independent statements, and in how a fan-in of
//! stream writers is associated into binary merges.  [`normalize`] maps all
//! of those to one canonical form, so equivalence is just `==` (or string
//! equality of the printed forms, which makes test failures readable).
//!
//! Canonicalization per rule: merge trees over rule-local intermediates are
//! flattened to one n-ary merge; variables are renamed by traversal order;
//! conjunctive parts (matches, guards, body statements, merge operands) are
//! sorted; renaming and sorting repeat until the result is stable.

use std::collections::{HashMap, HashSet};

use super::{CorePat, CoreProgram, CoreRule, CoreStmt, CoreTerm};

/// Rename tuple tags and constants, e.g. to align differently spelled
/// encodings before comparing.  A target of `"$"` turns a constant into the
/// end-of-stream marker.
pub fn rename_tags(p: &mut CoreProgram, map: &[(&str, &str)]) {
    let find = |s: &str| map.iter().find(|(from, _)| *from == s).map(|(_, to)| to.to_string());
    for proc in &mut p.procs {
        for group in &mut proc.groups {
            for rule in group {
                for (_, pat) in &mut rule.matches {
                    rename_pat(pat, &find);
                }
                for g in &mut rule.guards {
                    rename_term(&mut g.lhs, &find);
                    rename_term(&mut g.rhs, &find);
                }
                for s in &mut rule.body {
                    match s {
                        CoreStmt::Assign { term, .. } => rename_term(term, &find),
                        CoreStmt::Call { ins, .. } => {
                            for t in ins {
                                rename_term(t, &find);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn rename_pat(p: &mut CorePat, find: &impl Fn(&str) -> Option<String>) {
    match p {
        CorePat::Const(c) => {
            if let Some(to) = find(c) {
                *p = if to == "$" { CorePat::Nil } else { CorePat::Const(to) };
            }
        }
        CorePat::Tuple(tag, args) => {
            if let Some(to) = find(tag) {
                *tag = to;
            }
            for a in args {
                rename_pat(a, find);
            }
        }
        CorePat::Cons(h, t) => {
            rename_pat(h, find);
            rename_pat(t, find);
        }
        CorePat::As(_, inner) => rename_pat(inner, find),
        _ => {}
    }
}

fn rename_term(t: &mut CoreTerm, find: &impl Fn(&str) -> Option<String>) {
    match t {
        CoreTerm::Const(c) => {
            if let Some(to) = find(c) {
                *t = if to == "$" { CoreTerm::Nil } else { CoreTerm::Const(to) };
            }
        }
        CoreTerm::Tuple(tag, args) => {
            if let Some(to) = find(tag) {
                *tag = to;
            }
            for a in args {
                rename_term(a, find);
            }
        }
        CoreTerm::Cons(h, t2) => {
            rename_term(h, find);
            rename_term(t2, find);
        }
        _ => {}
    }
}

/// Produce the canonical form of a program.  Procedures keep their order
/// and are renamed positionally, so two programs compare equal exactly when
/// their procedure lists correspond.
pub fn normalize(p: &CoreProgram) -> CoreProgram {
    let mut p = p.clone();

    // The injected binary merge and a surface-declared merge mean the same
    // operation; unify the name before anything else.
    let mut proc_map: HashMap<String, String> = HashMap::new();
    proc_map.insert("merge%b".into(), "merge".into());
    for proc in &mut p.procs {
        if proc.name == "merge%b" {
            proc.name = "merge".into();
        }
    }
    for (i, proc) in p.procs.iter().enumerate() {
        if proc.name != "merge" {
            proc_map.insert(proc.name.clone(), format!("q%{i}"));
        }
    }
    for proc in &mut p.procs {
        if let Some(to) = proc_map.get(&proc.name) {
            proc.name = to.clone();
        }
        for group in &mut proc.groups {
            for rule in group {
                for s in &mut rule.body {
                    if let CoreStmt::Call { proc: target, .. } = s {
                        if let Some(to) = proc_map.get(target) {
                            *target = to.clone();
                        }
                    }
                }
            }
        }
    }

    for proc in &mut p.procs {
        let ins = proc.ins.clone();
        let outs = proc.outs.clone();
        for group in &mut proc.groups {
            for rule in group {
                flatten_merges(rule);
                for _ in 0..3 {
                    rename_rule_vars(rule, &ins, &outs);
                    sort_rule(rule);
                }
                rename_rule_vars(rule, &ins, &outs);
            }
        }
        for (i, v) in proc.ins.iter_mut().enumerate() {
            *v = format!("i%{i}");
        }
        for (i, v) in proc.outs.iter_mut().enumerate() {
            *v = format!("o%{i}");
        }
    }
    p
}

fn is_merge(s: &CoreStmt) -> Option<(Vec<String>, String)> {
    if let CoreStmt::Call { proc, ins, outs } = s {
        if proc == "merge" && outs.len() == 1 {
            let mut vars = Vec::with_capacity(ins.len());
            for t in ins {
                match t {
                    CoreTerm::Var(v) => vars.push(v.clone()),
                    _ => return None,
                }
            }
            return Some((vars, outs[0].clone()));
        }
    }
    None
}

/// Collapse binary merge chains over single-use intermediates into one
/// n-ary merge per fan-in.
fn flatten_merges(rule: &mut CoreRule) {
    // How often each variable is read anywhere in the rule body.
    let mut reads: HashMap<String, usize> = HashMap::new();
    let count_term = |t: &CoreTerm, reads: &mut HashMap<String, usize>| {
        let mut stack = vec![t];
        while let Some(t) = stack.pop() {
            match t {
                CoreTerm::Var(v) => *reads.entry(v.clone()).or_default() += 1,
                CoreTerm::Tuple(_, args) => stack.extend(args.iter()),
                CoreTerm::Cons(h, t2) => {
                    stack.push(h);
                    stack.push(t2);
                }
                _ => {}
            }
        }
    };
    for s in &rule.body {
        match s {
            CoreStmt::Assign { term, .. } => count_term(term, &mut reads),
            CoreStmt::Call { ins, .. } => {
                for t in ins {
                    count_term(t, &mut reads);
                }
            }
        }
    }

    // Index merges by their output variable.
    let mut by_out: HashMap<String, usize> = HashMap::new();
    for (i, s) in rule.body.iter().enumerate() {
        if let Some((_, out)) = is_merge(s) {
            by_out.insert(out, i);
        }
    }

    // A merge is absorbed into the merge reading it when its output is a
    // rule-local intermediate with exactly that one reader.
    let mut absorbed: HashSet<usize> = HashSet::new();
    for (i, s) in rule.body.iter().enumerate() {
        if let Some((ins, _)) = is_merge(s) {
            for v in ins {
                if let Some(&j) = by_out.get(&v) {
                    if j != i && reads.get(&v).copied().unwrap_or(0) == 1 {
                        absorbed.insert(j);
                    }
                }
            }
        }
    }

    let leaves_of = |root: usize| -> Vec<String> {
        let mut leaves = Vec::new();
        let mut stack: Vec<String> = match is_merge(&rule.body[root]) {
            Some((ins, _)) => ins.into_iter().rev().collect(),
            None => return leaves,
        };
        while let Some(v) = stack.pop() {
            match by_out.get(&v) {
                Some(&j) if absorbed.contains(&j) => {
                    if let Some((sub, _)) = is_merge(&rule.body[j]) {
                        for s in sub.into_iter().rev() {
                            stack.push(s);
                        }
                    }
                }
                _ => leaves.push(v),
            }
        }
        leaves
    };

    let mut new_body = Vec::new();
    for (i, s) in rule.body.iter().enumerate() {
        if absorbed.contains(&i) {
            continue;
        }
        match is_merge(s) {
            Some((_, out)) => new_body.push(CoreStmt::Call {
                proc: "merge".into(),
                ins: leaves_of(i).into_iter().map(CoreTerm::Var).collect(),
                outs: vec![out],
            }),
            None => new_body.push(s.clone()),
        }
    }
    rule.body = new_body;
}

/// Rename every variable in the rule: inputs and outputs positionally, the
/// rest in order of first appearance.
fn rename_rule_vars(rule: &mut CoreRule, ins: &[String], outs: &[String]) {
    let mut map: HashMap<String, String> = HashMap::new();
    for (i, v) in ins.iter().enumerate() {
        map.insert(v.clone(), format!("i%{i}"));
    }
    for (i, v) in outs.iter().enumerate() {
        map.insert(v.clone(), format!("o%{i}"));
    }
    let mut next = 0usize;

    fn touch(map: &mut HashMap<String, String>, next: &mut usize, v: &str) -> String {
        if let Some(n) = map.get(v) {
            return n.clone();
        }
        let n = format!("v%{next}");
        *next += 1;
        map.insert(v.to_string(), n.clone());
        n
    }

    fn walk_pat(p: &mut CorePat, map: &mut HashMap<String, String>, next: &mut usize) {
        match p {
            CorePat::Capture(v) | CorePat::ReplySlot(v) => *v = touch(map, next, v),
            CorePat::As(v, inner) => {
                *v = touch(map, next, v);
                walk_pat(inner, map, next);
            }
            CorePat::Tuple(_, args) => {
                for a in args {
                    walk_pat(a, map, next);
                }
            }
            CorePat::Cons(h, t) => {
                walk_pat(h, map, next);
                walk_pat(t, map, next);
            }
            _ => {}
        }
    }

    fn walk_term(t: &mut CoreTerm, map: &mut HashMap<String, String>, next: &mut usize) {
        match t {
            CoreTerm::Var(v) => *v = touch(map, next, v),
            CoreTerm::Tuple(_, args) => {
                for a in args {
                    walk_term(a, map, next);
                }
            }
            CoreTerm::Cons(h, t2) => {
                walk_term(h, map, next);
                walk_term(t2, map, next);
            }
            _ => {}
        }
    }

    for (v, pat) in &mut rule.matches {
        *v = touch(&mut map, &mut next, v);
        walk_pat(pat, &mut map, &mut next);
    }
    for g in &mut rule.guards {
        walk_term(&mut g.lhs, &mut map, &mut next);
        walk_term(&mut g.rhs, &mut map, &mut next);
    }
    for s in &mut rule.body {
        match s {
            CoreStmt::Assign { var, term } => {
                *var = touch(&mut map, &mut next, var);
                walk_term(term, &mut map, &mut next);
            }
            CoreStmt::Call { ins, outs, .. } => {
                for t in ins {
                    walk_term(t, &mut map, &mut next);
                }
                for o in outs {
                    *o = touch(&mut map, &mut next, o);
                }
            }
        }
    }
}

fn sort_rule(rule: &mut CoreRule) {
    rule.matches.sort_by_key(|(v, p)| format!("{v} = {p}"));
    rule.guards.sort_by_key(|g| g.to_string());
    for s in &mut rule.body {
        if let CoreStmt::Call { proc, ins, .. } = s {
            if proc == "merge" {
                ins.sort_by_key(|t| t.to_string());
            }
        }
    }
    rule.body.sort_by_key(stmt_key);
}

fn stmt_key(s: &CoreStmt) -> String {
    match s {
        // Assignments sort before calls, then everything is textual.
        CoreStmt::Assign { .. } => format!("0 {s}"),
        CoreStmt::Call { .. } => format!("1 {s}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::parse_core;

    fn norm(src: &str) -> String {
        normalize(&parse_core(src).expect("parse")).to_text()
    }

    #[test]
    fn alpha_renaming_and_statement_order_wash_out() {
        let a = "\
%aldwych-core 1
#p(u) -> (x) {
  u = f(?w) : ?r || q(w) -> (y), x = y : t, p(r) -> (t);
}
";
        let b = "\
%aldwych-core 1
#p(inp) -> (res) {
  inp = f(?a) : ?rest || p(rest) -> (more), res = b : more, q(a) -> (b);
}
";
        assert_eq!(norm(a), norm(b));
    }

    #[test]
    fn merge_association_washes_out() {
        let a = "\
%aldwych-core 1
#p(u) -> (s) {
  u = 'go' || q(a) -> (), r(b) -> (), t(c) -> (), merge(a, b) -> (m1), merge(m1, c) -> (s);
}
";
        let b = "\
%aldwych-core 1
#p(u) -> (s) {
  u = 'go' || q(a) -> (), r(b) -> (), t(c) -> (), merge(b, c) -> (m2), merge(a, m2) -> (s);
}
";
        assert_eq!(norm(a), norm(b));
    }

    #[test]
    fn injected_merge_name_unifies() {
        let a = "\
%aldwych-core 1
#p(u) -> (s) {
  u = 'go' || merge%b(a, b) -> (s), q() -> (a), q() -> (b);
}
";
        let b = "\
%aldwych-core 1
#p(u) -> (s) {
  u = 'go' || merge(b, a) -> (s), q() -> (a), q() -> (b);
}
";
        assert_eq!(norm(a), norm(b));
    }

    #[test]
    fn different_bodies_stay_different() {
        let a = "\
%aldwych-core 1
#p(u) -> (x) {
  u = ?w || x = w;
}
";
        let b = "\
%aldwych-core 1
#p(u) -> (x) {
  u = ?w || x = f(w);
}
";
        assert_ne!(norm(a), norm(b));
    }

    #[test]
    fn shared_merge_intermediate_is_not_flattened() {
        // The intermediate is read twice, so the tree must stay.
        let src = "\
%aldwych-core 1
#p(u) -> (s, t) {
  u = 'go' || merge(a, b) -> (m), merge(m, c) -> (s), t = m, q() -> (a), q() -> (b), q() -> (c);
}
";
        let n = norm(src);
        assert!(n.matches("merge(").count() == 2, "{n}");
    }

    #[test]
    fn tag_renames_apply() {
        let mut p = parse_core(
            "%aldwych-core 1\n#p(u) -> (x) { u = f(?w) : 'end' || x = f(w); }\n",
        )
        .expect("parse");
        rename_tags(&mut p, &[("f", "cons"), ("end", "$")]);
        let text = p.to_text();
        assert!(text.contains("cons(?w)"), "{text}");
        assert!(text.contains(": $"), "{text}");
        assert!(text.contains("cons(w)"), "{text}");
    }
}
