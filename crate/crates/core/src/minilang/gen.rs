//! Seeded random MiniJ programs for corpus synthesis.

use super::ast::*;
use super::render::{render_surfaces, GoldChooser};
use super::{parse_lexemes, Lang};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Rough number of statements across the whole program.
    pub size_budget: usize,
    /// Probability that the program defines at least one function.
    pub function_prob: f64,
    /// Probability that each function contains at least one branch.
    pub branch_prob: f64,
    pub max_params: usize,
    /// Programs longer than this (in lexical tokens) are regenerated.
    pub max_tokens: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { size_budget: 12, function_prob: 0.9, branch_prob: 0.9, max_params: 3, max_tokens: 512 }
    }
}

const FUNCTION_NAMES: &[&str] =
    &["compute", "sum_to", "check", "scale", "count_up", "pick", "limit", "mix", "total_of", "step_by"];
const PARAM_NAMES: &[&str] = &["n", "m", "k", "a", "b"];
const BOOL_PARAM_NAMES: &[&str] = &["flag", "ok"];
const INT_LOCALS: &[&str] = &["acc", "total", "value", "result", "delta", "step", "temp", "count"];
const BOOL_LOCALS: &[&str] = &["done", "small", "even"];
const INPUT_NAMES: &[&str] = &["x", "y", "z"];

/// Generates a program that passes `check`. Deterministic per `(seed, cfg)`.
pub fn gen_program(seed: u64, cfg: &GenConfig) -> Program {
    let mut budget = cfg.size_budget.max(1);
    for attempt in 0u64.. {
        let mut g = Gen::new(ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9))), cfg);
        let program = g.program(budget);
        let toks = render_surfaces(&program, Lang::MiniJ, &mut GoldChooser).expect("generated programs render");
        if toks.len() <= cfg.max_tokens {
            return parse_lexemes(&toks, Lang::MiniJ).expect("generated programs parse");
        }
        if attempt % 4 == 3 {
            budget = (budget * 3 / 4).max(1);
        }
    }
    unreachable!()
}

#[derive(Clone)]
struct Var {
    name: String,
    ty: Type,
    assignable: bool,
}

struct Sig {
    name: String,
    params: Vec<Type>,
    ret: Type,
}

struct Gen<'c> {
    rng: ChaCha8Rng,
    cfg: &'c GenConfig,
    funcs: Vec<Sig>,
    scopes: Vec<Vec<Var>>,
    budget: usize,
    in_function: bool,
    loop_depth: usize,
    counters: usize,
    /// Loop bounds already used in the current function.
    bounds: Vec<String>,
}

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind)
}

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    e(ExprKind::Binary(op, Box::new(l), Box::new(r)))
}

fn st(kind: StmtKind) -> Stmt {
    Stmt { kind, span: Span::default() }
}

fn block(stmts: Vec<Stmt>) -> Block {
    Block { stmts, span: Span::default() }
}

impl<'c> Gen<'c> {
    fn new(rng: ChaCha8Rng, cfg: &'c GenConfig) -> Self {
        Gen {
            rng,
            cfg,
            funcs: Vec::new(),
            scopes: vec![Vec::new()],
            budget: 0,
            in_function: false,
            loop_depth: 0,
            counters: 0,
            bounds: Vec::new(),
        }
    }

    fn visible(&self, ty: Type) -> Vec<Var> {
        self.scopes.iter().flatten().filter(|v| v.ty == ty).cloned().collect()
    }

    fn taken(&self, name: &str) -> bool {
        self.funcs.iter().any(|f| f.name == name) || self.scopes.iter().flatten().any(|v| v.name == name)
    }

    fn fresh(&mut self, pool: &[&str]) -> String {
        let start = self.rng.random_range(0..pool.len());
        for i in 0..pool.len() {
            let name = pool[(start + i) % pool.len()];
            if !self.taken(name) {
                return name.to_string();
            }
        }
        for suffix in 1.. {
            let name = format!("{}{suffix}", pool[start]);
            if !self.taken(&name) {
                return name;
            }
        }
        unreachable!()
    }

    fn bind(&mut self, name: &str, ty: Type, assignable: bool) {
        self.scopes.last_mut().expect("scope").push(Var { name: name.to_string(), ty, assignable });
    }

    fn program(&mut self, budget: usize) -> Program {
        let mut functions = Vec::new();
        let mut spent = 0;
        if self.rng.random_bool(self.cfg.function_prob) {
            let count = self.rng.random_range(1..=(1 + budget / 6).min(3));
            let share = (budget * 2 / 3 / count).max(1);
            for _ in 0..count {
                functions.push(self.function(share));
                spent += share;
            }
        }
        self.budget = budget.saturating_sub(spent);
        let main = self.main();
        Program { functions, main, span: Span::default() }
    }

    fn function(&mut self, budget: usize) -> Function {
        self.in_function = true;
        self.budget = budget;
        self.bounds.clear();
        let name = self.fresh(FUNCTION_NAMES);
        let n_params = self.rng.random_range(1..=self.cfg.max_params.max(1));
        self.scopes = vec![Vec::new()];
        let mut params = Vec::new();
        for i in 0..n_params {
            let ty = if i > 0 && self.rng.random_bool(0.2) { Type::Bool } else { Type::Int };
            let pname = self.fresh(if ty == Type::Int { PARAM_NAMES } else { BOOL_PARAM_NAMES });
            self.bind(&pname, ty, false);
            params.push(Param { name: pname, ty: Some(ty) });
        }
        let ret_ty = if self.rng.random_bool(0.15) { Type::Bool } else { Type::Int };

        let acc = self.fresh(INT_LOCALS);
        let init = self.int_expr(1);
        let mut stmts = vec![st(StmtKind::Decl { ty: Some(Type::Int), name: acc.clone(), value: init })];
        self.bind(&acc, Type::Int, true);
        let forced = self.rng.random_bool(self.cfg.branch_prob);
        let forced_at = if forced { Some(self.rng.random_range(0..=self.budget.min(2))) } else { None };
        let mut i = 0;
        while self.budget > 0 || forced_at.is_some_and(|f| f >= i) {
            let s = if forced_at == Some(i) { self.branch(0) } else { self.stmt(0) };
            stmts.extend(s);
            i += 1;
        }
        let ret = match ret_ty {
            Type::Int => {
                if self.rng.random_bool(0.5) {
                    e(ExprKind::Var(acc))
                } else {
                    let extra = self.int_expr(1);
                    bin(BinOp::Add, e(ExprKind::Var(acc)), extra)
                }
            }
            Type::Bool => {
                let rhs = self.int_expr(0);
                bin(self.relop(), e(ExprKind::Var(acc)), rhs)
            }
        };
        let param_tys = params.iter().map(|p| p.ty.expect("typed")).collect();
        self.funcs.push(Sig { name: name.clone(), params: param_tys, ret: ret_ty });
        self.scopes = vec![Vec::new()];
        self.in_function = false;
        Function { name, params, ret_ty: Some(ret_ty), body: block(stmts), ret, span: Span::default() }
    }

    fn main(&mut self) -> Block {
        self.scopes = vec![Vec::new()];
        let mut stmts = Vec::new();
        let n_inputs = self.rng.random_range(1..=INPUT_NAMES.len());
        for _ in 0..n_inputs {
            let name = self.fresh(INPUT_NAMES);
            stmts.push(st(StmtKind::Decl { ty: Some(Type::Int), name: name.clone(), value: e(ExprKind::Read) }));
            self.bind(&name, Type::Int, true);
        }
        for i in 0..self.funcs.len() {
            let args = self.args(i);
            let call = e(ExprKind::Call { name: self.funcs[i].name.clone(), args });
            match self.funcs[i].ret {
                Type::Int => stmts.push(st(StmtKind::Print(call))),
                Type::Bool => stmts.push(st(StmtKind::If {
                    cond: call,
                    then_block: block(vec![st(StmtKind::Print(e(ExprKind::Int(1))))]),
                    else_block: Some(block(vec![st(StmtKind::Print(e(ExprKind::Int(0))))])),
                })),
            }
        }
        while self.budget > 0 {
            stmts.extend(self.stmt(0));
        }
        if !stmts.iter().any(|s| matches!(s.kind, StmtKind::Print(_))) {
            let v = self.int_expr(1);
            stmts.push(st(StmtKind::Print(v)));
        }
        block(stmts)
    }

    fn args(&mut self, f: usize) -> Vec<Expr> {
        let tys = self.funcs[f].params.clone();
        tys.iter().map(|t| if *t == Type::Int { self.int_expr(1) } else { self.bool_expr() }).collect()
    }

    fn stmt(&mut self, depth: usize) -> Vec<Stmt> {
        self.budget = self.budget.saturating_sub(1);
        let assignable: Vec<Var> = self.visible(Type::Int).into_iter().filter(|v| v.assignable).collect();
        let roll: f64 = self.rng.random();
        if roll < 0.25 && depth < 2 {
            return self.branch(depth);
        }
        if roll < 0.30 && !self.in_function {
            let v = self.int_expr(1);
            return vec![st(StmtKind::Print(v))];
        }
        if roll < 0.55 && !assignable.is_empty() {
            let target = &assignable[self.rng.random_range(0..assignable.len())];
            let value = match self.rng.random_range(0..3) {
                0 => self.int_expr(2),
                _ => {
                    let op = if self.rng.random_bool(0.6) { BinOp::Add } else { BinOp::Sub };
                    let delta = self.int_expr(1);
                    bin(op, e(ExprKind::Var(target.name.clone())), delta)
                }
            };
            return vec![st(StmtKind::Assign { name: target.name.clone(), value })];
        }
        if roll < 0.62 {
            let name = self.fresh(BOOL_LOCALS);
            let value = self.bool_expr();
            self.bind(&name, Type::Bool, false);
            return vec![st(StmtKind::Decl { ty: Some(Type::Bool), name, value })];
        }
        let name = self.fresh(INT_LOCALS);
        let value = self.int_expr(2);
        self.bind(&name, Type::Int, true);
        vec![st(StmtKind::Decl { ty: Some(Type::Int), name, value })]
    }

    fn sub_block(&mut self, depth: usize, min: usize) -> Block {
        self.scopes.push(Vec::new());
        let n = self.rng.random_range(min..=2);
        let stmts = (0..n).flat_map(|_| self.stmt(depth + 1)).collect();
        self.scopes.pop();
        block(stmts)
    }

    /// An `if`, `if`/`else` or counted `while`.
    fn branch(&mut self, depth: usize) -> Vec<Stmt> {
        self.budget = self.budget.saturating_sub(1);
        if self.loop_depth == 0 && self.rng.random_bool(0.35) {
            return self.counted_loop(depth);
        }
        let cond = self.bool_expr();
        let then_block = self.sub_block(depth, 1);
        let else_block = if self.rng.random_bool(0.5) { Some(self.sub_block(depth, 1)) } else { None };
        vec![st(StmtKind::If { cond, then_block, else_block })]
    }

    /// `int i = 0; while (i < bound) { ...; i = i + 1; }` with a fresh,
    /// read-only counter and a bound that is a parameter or a small literal.
    fn counted_loop(&mut self, depth: usize) -> Vec<Stmt> {
        let counter = loop {
            let name = format!("i{}", self.counters);
            self.counters += 1;
            if !self.taken(&name) {
                break name;
            }
        };
        let mut params: Vec<Var> = self.visible(Type::Int).into_iter().filter(|v| !v.assignable).collect();
        // Loops sharing a bound make their basis paths contradict each other.
        if params.iter().any(|v| !self.bounds.contains(&v.name)) {
            params.retain(|v| !self.bounds.contains(&v.name));
        }
        // Inside functions the bound is always an input, so the 0- and
        // 1-iteration paths stay satisfiable for test generation.
        let bound = if self.in_function && !params.is_empty() {
            let name = params[self.rng.random_range(0..params.len())].name.clone();
            self.bounds.push(name.clone());
            e(ExprKind::Var(name))
        } else {
            e(ExprKind::Int(self.rng.random_range(2..=5)))
        };
        self.bind(&counter, Type::Int, false);
        self.loop_depth += 1;
        let mut body = self.sub_block(depth, 1).stmts;
        self.loop_depth -= 1;
        let var = || e(ExprKind::Var(counter.clone()));
        body.push(st(StmtKind::Assign { name: counter.clone(), value: bin(BinOp::Add, var(), e(ExprKind::Int(1))) }));
        let decl = st(StmtKind::Decl { ty: Some(Type::Int), name: counter.clone(), value: e(ExprKind::Int(0)) });
        let lp = st(StmtKind::While { cond: bin(BinOp::Lt, var(), bound), body: block(body) });
        vec![decl, lp]
    }

    fn relop(&mut self) -> BinOp {
        [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne][self.rng.random_range(0..6)]
    }

    fn int_atom(&mut self) -> Expr {
        let vars = self.visible(Type::Int);
        let roll: f64 = self.rng.random();
        if roll < 0.6 && !vars.is_empty() {
            return e(ExprKind::Var(vars[self.rng.random_range(0..vars.len())].name.clone()));
        }
        if roll < 0.68 {
            if let Some(f) = (0..self.funcs.len()).find(|&i| self.funcs[i].ret == Type::Int && self.in_function) {
                let args = self.funcs[f]
                    .params
                    .clone()
                    .into_iter()
                    .map(|t| if t == Type::Int { self.int_atom_no_call() } else { e(ExprKind::Bool(true)) })
                    .collect();
                return e(ExprKind::Call { name: self.funcs[f].name.clone(), args });
            }
        }
        e(ExprKind::Int(self.rng.random_range(0..=9)))
    }

    fn int_atom_no_call(&mut self) -> Expr {
        let vars = self.visible(Type::Int);
        if !vars.is_empty() && self.rng.random_bool(0.7) {
            return e(ExprKind::Var(vars[self.rng.random_range(0..vars.len())].name.clone()));
        }
        e(ExprKind::Int(self.rng.random_range(0..=9)))
    }

    fn int_expr(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.random_bool(0.4) {
            let a = self.int_atom();
            if self.rng.random_bool(0.05) {
                return e(ExprKind::Unary(UnOp::Neg, Box::new(a)));
            }
            return a;
        }
        let roll: f64 = self.rng.random();
        let l = self.int_expr(depth - 1);
        if roll < 0.35 {
            let r = self.int_expr(depth - 1);
            bin(BinOp::Add, l, r)
        } else if roll < 0.65 {
            let r = self.int_expr(depth - 1);
            bin(BinOp::Sub, l, r)
        } else if roll < 0.8 {
            bin(BinOp::Mul, l, e(ExprKind::Int(self.rng.random_range(2..=3))))
        } else if roll < 0.9 {
            bin(BinOp::Div, l, e(ExprKind::Int(self.rng.random_range(2..=9))))
        } else {
            bin(BinOp::Mod, l, e(ExprKind::Int(self.rng.random_range(2..=9))))
        }
    }

    fn comparison(&mut self) -> Expr {
        // Comparisons mostly test a variable so branches depend on inputs.
        let vars = self.visible(Type::Int);
        let l = if !vars.is_empty() {
            let v = e(ExprKind::Var(vars[self.rng.random_range(0..vars.len())].name.clone()));
            if self.rng.random_bool(0.3) {
                let r = self.int_atom_no_call();
                bin(if self.rng.random_bool(0.5) { BinOp::Add } else { BinOp::Mod }, v, r)
            } else {
                v
            }
        } else {
            self.int_expr(1)
        };
        let mut r = self.int_expr(1);
        if self.rng.random_bool(0.6) || r == l {
            r = e(ExprKind::Int(self.rng.random_range(0..=9)));
        }
        bin(self.relop(), l, r)
    }

    fn bool_literal(&mut self) -> Expr {
        let vars = self.visible(Type::Bool);
        let roll: f64 = self.rng.random();
        if roll < 0.15 && !vars.is_empty() {
            return e(ExprKind::Var(vars[self.rng.random_range(0..vars.len())].name.clone()));
        }
        let c = self.comparison();
        if roll > 0.9 {
            return e(ExprKind::Unary(UnOp::Not, Box::new(c)));
        }
        c
    }

    /// Disjunctive normal form, left-associated, so no parentheses are needed.
    fn bool_expr(&mut self) -> Expr {
        let terms = if self.rng.random_bool(0.25) { 2 } else { 1 };
        let mut or: Option<Expr> = None;
        for _ in 0..terms {
            let lits = if self.rng.random_bool(0.3) { 2 } else { 1 };
            let mut and = self.bool_literal();
            for _ in 1..lits {
                let r = self.bool_literal();
                and = bin(BinOp::And, and, r);
            }
            or = Some(match or {
                None => and,
                Some(l) => bin(BinOp::Or, l, and),
            });
        }
        or.expect("at least one term")
    }
}
