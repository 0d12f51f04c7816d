//! Coarse baseline rewards used as comparison points for compiler feedback:
//! a boolean compile signal and simplified syntax and dataflow match scores.

use crate::feedback::{omega_cf_from, omega_compiler_from, BackendError, CompileBackend, FeedbackError};
use crate::kwtok::TokenSeq;
use crate::minilang::{parse_surfaces, Block, Expr, ExprKind, Program, Stmt, StmtKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRewards {
    pub compiler_bool: i8,
    pub sm: f64,
    pub dm: f64,
}

fn expr_shape(e: &Expr, out: &mut HashMap<String, usize>) -> String {
    let shape = match &e.kind {
        ExprKind::Int(_) => "int".to_string(),
        ExprKind::Bool(_) => "bool".to_string(),
        ExprKind::Var(_) => "var".to_string(),
        ExprKind::Read => "read".to_string(),
        ExprKind::Call { args, .. } => {
            let a: Vec<String> = args.iter().map(|x| expr_shape(x, out)).collect();
            format!("call({})", a.join(","))
        }
        ExprKind::Unary(op, x) => format!("{op:?}({})", expr_shape(x, out)),
        ExprKind::Binary(op, l, r) => format!("{op:?}({},{})", expr_shape(l, out), expr_shape(r, out)),
    };
    *out.entry(shape.clone()).or_default() += 1;
    shape
}

fn block_shape(b: &Block, out: &mut HashMap<String, usize>) -> String {
    b.stmts.iter().map(|s| stmt_shape(s, out)).collect::<Vec<_>>().join(";")
}

fn stmt_shape(s: &Stmt, out: &mut HashMap<String, usize>) -> String {
    let shape = match &s.kind {
        StmtKind::Decl { value, .. } => format!("decl({})", expr_shape(value, out)),
        StmtKind::Assign { value, .. } => format!("assign({})", expr_shape(value, out)),
        StmtKind::If { cond, then_block, else_block } => {
            let c = expr_shape(cond, out);
            let t = block_shape(then_block, out);
            let e = else_block.as_ref().map(|b| block_shape(b, out)).unwrap_or_default();
            format!("if({c}|{t}|{e})")
        }
        StmtKind::While { cond, body } => format!("while({}|{})", expr_shape(cond, out), block_shape(body, out)),
        StmtKind::Print(e) => format!("print({})", expr_shape(e, out)),
        StmtKind::Pass => "pass".to_string(),
    };
    *out.entry(shape.clone()).or_default() += 1;
    shape
}

/// Multiset of subtree shapes: node kinds and structure with names and
/// literal values erased.
pub fn subtree_shapes(program: &Program) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for f in &program.functions {
        let body = block_shape(&f.body, &mut out);
        let ret = expr_shape(&f.ret, &mut out);
        *out.entry(format!("fn({}|{body}|{ret})", f.params.len())).or_default() += 1;
    }
    block_shape(&program.main, &mut out);
    out
}

struct DefUse {
    defs: HashMap<String, usize>,
    uses: HashMap<String, usize>,
    scopes: Vec<HashMap<String, String>>,
    pairs: BTreeSet<(String, String)>,
}

impl DefUse {
    fn define(&mut self, name: &str, fresh_binding: bool) {
        let k = self.defs.entry(name.to_string()).or_default();
        *k += 1;
        let label = format!("{name}@{k}");
        if fresh_binding {
            self.scopes.last_mut().expect("scope").insert(name.to_string(), label);
        } else if let Some(slot) = self.scopes.iter_mut().rev().find_map(|s| s.get_mut(name)) {
            *slot = label;
        }
    }

    fn expr(&mut self, e: &Expr) {
        e.walk(&mut |x| {
            if let ExprKind::Var(name) = &x.kind {
                let j = self.uses.entry(name.clone()).or_default();
                *j += 1;
                let def = self.scopes.iter().rev().find_map(|s| s.get(name)).cloned().unwrap_or_default();
                self.pairs.insert((def, format!("{name}#{j}")));
            }
        });
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(HashMap::new());
        for s in &b.stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Decl { name, value, .. } => {
                self.expr(value);
                self.define(name, true);
            }
            StmtKind::Assign { name, value } => {
                self.expr(value);
                let known = self.scopes.iter().any(|sc| sc.contains_key(name));
                self.define(name, !known);
            }
            StmtKind::If { cond, then_block, else_block } => {
                self.expr(cond);
                self.block(then_block);
                if let Some(b) = else_block {
                    self.block(b);
                }
            }
            StmtKind::While { cond, body } => {
                self.expr(cond);
                self.block(body);
            }
            StmtKind::Print(e) => self.expr(e),
            StmtKind::Pass => {}
        }
    }
}

/// Pairs of (reaching definition, use) along program order, labelled by
/// per-name occurrence counters.
pub fn def_use_pairs(program: &Program) -> BTreeSet<(String, String)> {
    let mut du =
        DefUse { defs: HashMap::new(), uses: HashMap::new(), scopes: vec![HashMap::new()], pairs: BTreeSet::new() };
    for f in &program.functions {
        du.scopes.push(HashMap::new());
        for p in &f.params {
            du.define(&p.name, true);
        }
        for s in &f.body.stmts {
            du.stmt(s);
        }
        du.expr(&f.ret);
        du.scopes.pop();
    }
    du.block(&program.main);
    du.pairs
}

fn syntax_match(reference: &Program, candidate: &Program) -> f64 {
    let r = subtree_shapes(reference);
    let c = subtree_shapes(candidate);
    let total: usize = r.values().sum();
    if total == 0 {
        return 1.0;
    }
    let hit: usize = r.iter().map(|(k, n)| (*n).min(c.get(k).copied().unwrap_or(0))).sum();
    hit as f64 / total as f64
}

fn dataflow_match(reference: &Program, candidate: &Program) -> f64 {
    let r = def_use_pairs(reference);
    if r.is_empty() {
        return 1.0;
    }
    let c = def_use_pairs(candidate);
    r.intersection(&c).count() as f64 / r.len() as f64
}

pub fn baseline_rewards(
    t: &TokenSeq,
    t_hat: &TokenSeq,
    backend: &CompileBackend,
) -> Result<BaselineRewards, BackendError> {
    let compiles = !t_hat.is_empty() && backend.check(&t_hat.surfaces)?.ok;
    let reference = parse_surfaces(&t.surfaces, t.lang).ok();
    let candidate = parse_surfaces(&t_hat.surfaces, t_hat.lang).ok();
    let (sm, dm) = match (&reference, &candidate) {
        (Some(r), Some(c)) => (syntax_match(r, c), dataflow_match(r, c)),
        _ => (0.0, 0.0),
    };
    Ok(BaselineRewards { compiler_bool: if compiles { 1 } else { -1 }, sm, dm })
}

/// The shipped sweep program (MiniJ): integer reversal with a digit counter.
pub const SAMPLE_PROGRAM: &str = include_str!("../../data/reverse_integer.mj");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub omega_cf: f64,
    pub compiler_bool: i8,
    pub sm: f64,
    pub dm: f64,
}

/// Rewards of the prefixes of length ⌈(i / steps) · |t|⌉ for i = 1..=steps.
pub fn reward_sweep(t: &TokenSeq, steps: usize, backend: &CompileBackend) -> Result<Vec<SweepRow>, FeedbackError> {
    if steps < 2 {
        return Err(FeedbackError::InvalidConfig("a sweep needs at least two steps".into()));
    }
    if t.is_empty() || !backend.check(&t.surfaces)?.ok {
        return Err(FeedbackError::InvalidConfig("reference program does not compile".into()));
    }
    (1..=steps)
        .map(|i| {
            let k = (i * t.len()).div_ceil(steps).max(1);
            let prefix = TokenSeq { ids: t.ids[..k].to_vec(), surfaces: t.surfaces[..k].to_vec(), lang: t.lang };
            let diagnostic = backend.check(&prefix.surfaces)?;
            let omega_cf = omega_cf_from(omega_compiler_from(&diagnostic, k), t.len(), k)?;
            let b = baseline_rewards(t, &prefix, backend)?;
            Ok(SweepRow {
                fraction: i as f64 / steps as f64,
                omega_cf,
                compiler_bool: b.compiler_bool,
                sm: b.sm,
                dm: b.dm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{lex, Lang};

    fn seq(code: &str, lang: Lang) -> TokenSeq {
        let surfaces: Vec<String> = lex(code, lang).unwrap().into_iter().map(|l| l.text).collect();
        TokenSeq { ids: vec![0; surfaces.len()], surfaces, lang }
    }

    #[test]
    fn self_match_is_perfect() {
        let t = seq("int x = read(); int y = x + 1; print(y);", Lang::MiniJ);
        let b = baseline_rewards(&t, &t, &CompileBackend::builtin(Lang::MiniJ)).unwrap();
        assert_eq!(b, BaselineRewards { compiler_bool: 1, sm: 1.0, dm: 1.0 });
    }

    #[test]
    fn partial_matches() {
        let backend = CompileBackend::builtin(Lang::MiniJ);
        let t = seq("int x = read(); int y = x + 1; print(y);", Lang::MiniJ);
        let other = seq("int x = read(); print(x);", Lang::MiniJ);
        let b = baseline_rewards(&t, &other, &backend).unwrap();
        assert!(b.sm > 0.0 && b.sm < 1.0);
        assert!(b.dm < 1.0);
        let broken = seq("int x = read(); print(", Lang::MiniJ);
        let b = baseline_rewards(&t, &broken, &backend).unwrap();
        assert_eq!(b, BaselineRewards { compiler_bool: -1, sm: 0.0, dm: 0.0 });
    }

    #[test]
    fn sweep_ends_at_full_program() {
        let backend = CompileBackend::builtin(Lang::MiniJ);
        let t = seq("print(read() + 1);", Lang::MiniJ);
        let rows = reward_sweep(&t, 4, &backend).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].omega_cf, 2.0);
        assert_eq!(rows[3].compiler_bool, 1);
        assert!(rows[..3].iter().all(|r| r.compiler_bool == -1));
    }
}
