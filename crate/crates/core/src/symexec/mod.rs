//! Basis-path unit-test generation for MiniJ functions.
//!
//! A path is chosen by fixing, per branch statement, the direction of its
//! first evaluation. Loops are unrolled at most once. The body of a function
//! is executed symbolically along the path, each parameter standing for an
//! unknown, and the resulting constraints are solved by exhaustive search
//! over a bounded domain.

mod suite;

pub use suite::{
    jaccard_bigrams, match_function, read_suites_jsonl, run_suite, write_suites_jsonl, CaseVerdict, SuiteRun, Verdict,
};

use crate::minilang::{apply_int, call_function_traced, parse_text, Lang, RuntimeError, Value};
use crate::minilang::{BinOp, Block, Expr, ExprKind, Function, Program, StmtKind, Type, UnOp};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::rc::Rc;

pub const DEFAULT_BOUND: i64 = 8;
pub const DEFAULT_TEST_FUEL: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymexecConfig {
    /// Integer parameters range over `[-bound, bound]`.
    pub bound: i64,
    /// Fuel for each concrete execution.
    pub fuel: u64,
}

impl Default for SymexecConfig {
    fn default() -> Self {
        Self { bound: DEFAULT_BOUND, fuel: DEFAULT_TEST_FUEL }
    }
}

/// A symbolic value over the function's parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sym {
    Const(Value),
    Param(usize),
    Unary(UnOp, Rc<Sym>),
    Binary(BinOp, Rc<Sym>, Rc<Sym>),
    Call(String, Vec<Rc<Sym>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// The expression evaluates without error to the given bool.
    Holds(Rc<Sym>, bool),
    /// The expression evaluates without a runtime error.
    Defined(Rc<Sym>),
}

#[derive(Debug, Clone)]
pub struct PathCondition {
    pub function: String,
    pub params: Vec<(String, Type)>,
    pub constraints: Vec<Constraint>,
    /// Branch decisions along the path as `(span.start, taken)`, in the
    /// order a concrete run following the path records them.
    pub decisions: Vec<(usize, bool)>,
    pub ret: Rc<Sym>,
    program: Rc<Program>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub function: String,
    pub args: Vec<Value>,
    pub expected: Value,
    #[serde(default)]
    pub path: Vec<(usize, bool)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteStats {
    pub paths_found: usize,
    pub paths_unsat: usize,
    /// Functions for which no path was satisfiable in the domain.
    pub functions_without_cases: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub source_id: String,
    pub cases: Vec<TestCase>,
    pub stats: SuiteStats,
}

/// Decision count plus one: for structured code without early exits this is
/// E - N + 2 of the statement-level control-flow graph.
pub fn cyclomatic_complexity(function: &Function) -> usize {
    let mut n = 1;
    function.body.walk(&mut |s| {
        if matches!(s.kind, StmtKind::If { .. } | StmtKind::While { .. }) {
            n += 1;
        }
    });
    n
}

/// Each branch statement in pre-order with the directions of its enclosing
/// branches that lead to it.
fn decisions_with_context(block: &Block, context: &mut Vec<(usize, bool)>, out: &mut Vec<(usize, Vec<(usize, bool)>)>) {
    for stmt in &block.stmts {
        let id = stmt.span.start;
        match &stmt.kind {
            StmtKind::If { then_block, else_block, .. } => {
                out.push((id, context.clone()));
                context.push((id, true));
                decisions_with_context(then_block, context, out);
                context.pop();
                if let Some(b) = else_block {
                    context.push((id, false));
                    decisions_with_context(b, context, out);
                    context.pop();
                }
            }
            StmtKind::While { body, .. } => {
                out.push((id, context.clone()));
                context.push((id, true));
                decisions_with_context(body, context, out);
                context.pop();
            }
            _ => {}
        }
    }
}

/// Baseline path (every branch taken, every loop entered once) followed by
/// one path per decision that flips it, with its enclosing branches steered
/// to reach it.
pub fn enumerate_basis_paths(program: &Program, function: &Function) -> Vec<PathCondition> {
    let program = Rc::new(program.clone());
    let mut sites = Vec::new();
    decisions_with_context(&function.body, &mut Vec::new(), &mut sites);
    let mut plans = vec![HashMap::new()];
    for (id, context) in sites {
        let mut plan: HashMap<usize, bool> = context.into_iter().collect();
        plan.insert(id, false);
        plans.push(plan);
    }
    plans.iter().filter_map(|plan| symbolic_path(&program, function, plan)).collect()
}

fn symbolic_path(program: &Rc<Program>, function: &Function, plan: &HashMap<usize, bool>) -> Option<PathCondition> {
    let params: Vec<(String, Type)> =
        function.params.iter().map(|p| (p.name.clone(), p.ty.unwrap_or(Type::Int))).collect();
    let frame = params.iter().enumerate().map(|(i, (n, _))| (n.clone(), Rc::new(Sym::Param(i)))).collect();
    let mut ex = SymExec { plan, constraints: Vec::new(), decisions: Vec::new(), scopes: vec![frame] };
    for stmt in &function.body.stmts {
        ex.stmt(stmt)?;
    }
    let ret = ex.expr(&function.ret)?;
    ex.constraints.push(Constraint::Defined(ret.clone()));
    Some(PathCondition {
        function: function.name.clone(),
        params,
        constraints: ex.constraints,
        decisions: ex.decisions,
        ret,
        program: program.clone(),
    })
}

struct SymExec<'a> {
    plan: &'a HashMap<usize, bool>,
    constraints: Vec<Constraint>,
    decisions: Vec<(usize, bool)>,
    scopes: Vec<HashMap<String, Rc<Sym>>>,
}

impl SymExec<'_> {
    fn block(&mut self, block: &Block) -> Option<()> {
        self.scopes.push(HashMap::new());
        let r = block.stmts.iter().try_for_each(|s| self.stmt(s));
        self.scopes.pop();
        r
    }

    fn branch(&mut self, id: usize, cond: &Expr, taken: bool) -> Option<()> {
        let c = self.expr(cond)?;
        self.constraints.push(Constraint::Holds(c, taken));
        self.decisions.push((id, taken));
        Some(())
    }

    fn stmt(&mut self, stmt: &crate::minilang::Stmt) -> Option<()> {
        let id = stmt.span.start;
        match &stmt.kind {
            StmtKind::Decl { name, value, .. } => {
                let v = self.expr(value)?;
                self.require_defined(&v);
                self.scopes.last_mut()?.insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                let v = self.expr(value)?;
                self.require_defined(&v);
                *self.scopes.iter_mut().rev().find_map(|s| s.get_mut(name))? = v;
            }
            StmtKind::If { cond, then_block, else_block } => {
                let taken = self.plan.get(&id).copied().unwrap_or(true);
                self.branch(id, cond, taken)?;
                match (taken, else_block) {
                    (true, _) => self.block(then_block)?,
                    (false, Some(b)) => self.block(b)?,
                    (false, None) => {}
                }
            }
            StmtKind::While { cond, body } => {
                let once = self.plan.get(&id).copied().unwrap_or(true);
                self.branch(id, cond, once)?;
                if once {
                    self.block(body)?;
                    self.branch(id, cond, false)?;
                }
            }
            StmtKind::Print(e) => {
                let v = self.expr(e)?;
                self.require_defined(&v);
            }
            StmtKind::Pass => {}
        }
        Some(())
    }

    fn require_defined(&mut self, v: &Rc<Sym>) {
        if !matches!(**v, Sym::Const(_) | Sym::Param(_)) {
            self.constraints.push(Constraint::Defined(v.clone()));
        }
    }

    fn expr(&self, e: &Expr) -> Option<Rc<Sym>> {
        Some(Rc::new(match &e.kind {
            ExprKind::Int(v) => Sym::Const(Value::Int(*v)),
            ExprKind::Bool(b) => Sym::Const(Value::Bool(*b)),
            ExprKind::Var(name) => return self.scopes.iter().rev().find_map(|s| s.get(name)).cloned(),
            // Functions cannot read input.
            ExprKind::Read => return None,
            ExprKind::Call { name, args } => {
                Sym::Call(name.clone(), args.iter().map(|a| self.expr(a)).collect::<Option<_>>()?)
            }
            ExprKind::Unary(op, inner) => Sym::Unary(*op, self.expr(inner)?),
            ExprKind::Binary(op, l, r) => Sym::Binary(*op, self.expr(l)?, self.expr(r)?),
        }))
    }
}

/// Evaluates symbolic values for one assignment of the parameters, sharing
/// results between the nodes of the expression graph.
struct Evaluator<'a> {
    program: &'a Program,
    args: &'a [Value],
    fuel: u64,
    memo: HashMap<*const Sym, Result<Value, RuntimeError>>,
}

impl Evaluator<'_> {
    fn eval(&mut self, s: &Rc<Sym>) -> Result<Value, RuntimeError> {
        let key = Rc::as_ptr(s);
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let v = self.compute(s);
        self.memo.insert(key, v.clone());
        v
    }

    fn eval_bool(&mut self, s: &Rc<Sym>) -> Result<bool, RuntimeError> {
        match self.eval(s)? {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(RuntimeError::Type("expected a bool".into())),
        }
    }

    fn eval_int(&mut self, s: &Rc<Sym>) -> Result<i64, RuntimeError> {
        match self.eval(s)? {
            Value::Int(v) => Ok(v),
            Value::Bool(_) => Err(RuntimeError::Type("expected an int".into())),
        }
    }

    fn compute(&mut self, s: &Rc<Sym>) -> Result<Value, RuntimeError> {
        Ok(match &**s {
            Sym::Const(v) => *v,
            Sym::Param(i) => self.args[*i],
            Sym::Unary(UnOp::Neg, x) => Value::Int(self.eval_int(x)?.checked_neg().ok_or(RuntimeError::Overflow)?),
            Sym::Unary(UnOp::Not, x) => Value::Bool(!self.eval_bool(x)?),
            Sym::Binary(BinOp::And, l, r) => Value::Bool(self.eval_bool(l)? && self.eval_bool(r)?),
            Sym::Binary(BinOp::Or, l, r) => Value::Bool(self.eval_bool(l)? || self.eval_bool(r)?),
            Sym::Binary(op, l, r) => {
                let a = self.eval_int(l)?;
                let b = self.eval_int(r)?;
                apply_int(*op, a, b)?
            }
            Sym::Call(name, args) => {
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                call_function_traced(self.program, name, &vals, self.fuel).0?
            }
        })
    }
}

impl PathCondition {
    /// A condition over the given parameters that a MiniJ boolean
    /// expression holds, e.g. `("x + y == 7 && x > y", [x, y])`.
    pub fn from_guard(params: &[(&str, Type)], guard: &str) -> Option<Self> {
        let list: Vec<String> = params.iter().map(|(n, t)| format!("{} {n}", t.keyword())).collect();
        let code = format!("bool guard({}) {{ return {guard}; }} print(0);", list.join(", "));
        let program = parse_text(&code, Lang::MiniJ).ok()?;
        let f = program.functions.first()?;
        let mut cond = enumerate_basis_paths(&program, f).into_iter().next()?;
        cond.constraints.push(Constraint::Holds(cond.ret.clone(), true));
        Some(cond)
    }

    pub fn satisfied_by(&self, args: &[Value], fuel: u64) -> bool {
        let mut ev = Evaluator { program: &self.program, args, fuel, memo: HashMap::new() };
        self.constraints.iter().all(|c| match c {
            Constraint::Holds(s, want) => ev.eval_bool(s).is_ok_and(|b| b == *want),
            Constraint::Defined(s) => ev.eval(s).is_ok(),
        })
    }
}

/// Lexicographically smallest satisfying assignment: the first parameter is
/// most significant, ints ascend from `-bound`, `false` precedes `true`.
pub fn solve_inputs(cond: &PathCondition, bound: i64) -> Option<Vec<Value>> {
    solve_with_fuel(cond, bound, DEFAULT_TEST_FUEL)
}

fn solve_with_fuel(cond: &PathCondition, bound: i64, fuel: u64) -> Option<Vec<Value>> {
    let domains: Vec<Vec<Value>> = cond
        .params
        .iter()
        .map(|(_, t)| match t {
            Type::Int => (-bound..=bound).map(Value::Int).collect(),
            Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        })
        .collect();
    if domains.iter().any(Vec::is_empty) {
        return None;
    }
    let mut idx = vec![0usize; domains.len()];
    loop {
        let args: Vec<Value> = idx.iter().zip(&domains).map(|(&i, d)| d[i]).collect();
        if cond.satisfied_by(&args, fuel) {
            return Some(args);
        }
        // Odometer increment, last parameter fastest.
        let mut k = idx.len();
        loop {
            if k == 0 {
                return None;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// One test case per satisfiable basis path of every function.
pub fn generate_tests(program: &Program, source_id: &str, config: &SymexecConfig) -> TestSuite {
    let mut suite = TestSuite { source_id: source_id.to_string(), ..Default::default() };
    for f in &program.functions {
        let before = suite.cases.len();
        let mut seen_paths = Vec::new();
        for path in enumerate_basis_paths(program, f) {
            suite.stats.paths_found += 1;
            let case = solve_with_fuel(&path, config.bound, config.fuel).and_then(|args| {
                match call_function_traced(program, &f.name, &args, config.fuel) {
                    (Ok(expected), trace) => Some(TestCase { function: f.name.clone(), args, expected, path: trace }),
                    (Err(_), _) => None,
                }
            });
            match case {
                Some(case) if !seen_paths.contains(&case.path) => {
                    seen_paths.push(case.path.clone());
                    suite.cases.push(case);
                }
                _ => suite.stats.paths_unsat += 1,
            }
        }
        if suite.cases.len() == before {
            suite.stats.functions_without_cases.push(f.name.clone());
        }
    }
    suite
}
