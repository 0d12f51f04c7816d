use super::ast::*;
use super::Lang;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn render(self, lang: Lang) -> String {
        match (self, lang) {
            (Value::Int(v), _) => v.to_string(),
            (Value::Bool(b), Lang::MiniJ) => b.to_string(),
            (Value::Bool(true), Lang::MiniP) => "True".into(),
            (Value::Bool(false), Lang::MiniP) => "False".into(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Lang::MiniJ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("read past end of input")]
    ReadPastEnd,
    #[error("input token `{0}` is not an integer")]
    BadInput(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("fuel exhausted")]
    FuelExhausted,
    #[error("type error: {0}")]
    Type(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

impl RuntimeError {
    /// Stable short code, used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::ReadPastEnd => "read-past-end",
            RuntimeError::BadInput(_) => "bad-input",
            RuntimeError::DivisionByZero => "division-by-zero",
            RuntimeError::Overflow => "overflow",
            RuntimeError::FuelExhausted => "fuel-exhausted",
            RuntimeError::Type(_) => "type-error",
            RuntimeError::UnknownFunction(_) => "unknown-function",
            RuntimeError::Arity { .. } => "arity",
            RuntimeError::UnboundVariable(_) => "unbound-variable",
        }
    }
}

type RResult<T> = Result<T, RuntimeError>;

/// Runs the top-level statements and returns everything printed, one line
/// per `print`.
pub fn run_program(program: &Program, lang: Lang, stdin: &str, fuel: u64) -> RResult<String> {
    let mut m = Machine::new(program, fuel);
    m.input = stdin.split_whitespace().map(String::from).collect();
    m.lang = lang;
    let mut scopes = vec![HashMap::new()];
    m.exec_block(&program.main, &mut scopes, false)?;
    Ok(m.output)
}

pub fn call_function(program: &Program, name: &str, args: &[Value], fuel: u64) -> RResult<Value> {
    Machine::new(program, fuel).call(name, args)
}

/// Calls a function and records every branch decision taken, as
/// `(span.start of the if/while, condition value)`, in execution order.
pub fn call_function_traced(
    program: &Program,
    name: &str,
    args: &[Value],
    fuel: u64,
) -> (RResult<Value>, Vec<(usize, bool)>) {
    let mut m = Machine::new(program, fuel);
    m.trace = Some(Vec::new());
    let result = m.call(name, args);
    (result, m.trace.unwrap_or_default())
}

struct Machine<'p> {
    functions: HashMap<&'p str, &'p Function>,
    fuel: u64,
    input: std::collections::VecDeque<String>,
    output: String,
    lang: Lang,
    trace: Option<Vec<(usize, bool)>>,
}

type Scopes = Vec<HashMap<String, Value>>;

impl<'p> Machine<'p> {
    fn new(program: &'p Program, fuel: u64) -> Self {
        Machine {
            functions: program.functions.iter().map(|f| (f.name.as_str(), f)).collect(),
            fuel,
            input: Default::default(),
            output: String::new(),
            lang: Lang::MiniJ,
            trace: None,
        }
    }

    fn tick(&mut self) -> RResult<()> {
        if self.fuel == 0 {
            return Err(RuntimeError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn call(&mut self, name: &str, args: &[Value]) -> RResult<Value> {
        self.tick()?;
        let f = *self.functions.get(name).ok_or_else(|| RuntimeError::UnknownFunction(name.to_string()))?;
        if f.params.len() != args.len() {
            return Err(RuntimeError::Arity { name: name.to_string(), expected: f.params.len(), got: args.len() });
        }
        let frame: HashMap<String, Value> = f.params.iter().map(|p| p.name.clone()).zip(args.iter().copied()).collect();
        let mut scopes = vec![frame];
        self.exec_block(&f.body, &mut scopes, false)?;
        self.eval(&f.ret, &mut scopes)
    }

    fn exec_block(&mut self, block: &Block, scopes: &mut Scopes, push: bool) -> RResult<()> {
        if push {
            scopes.push(HashMap::new());
        }
        let result = block.stmts.iter().try_for_each(|s| self.exec(s, scopes));
        if push {
            scopes.pop();
        }
        result
    }

    fn record(&mut self, id: usize, taken: bool) {
        if let Some(t) = self.trace.as_mut() {
            t.push((id, taken));
        }
    }

    fn exec(&mut self, stmt: &Stmt, scopes: &mut Scopes) -> RResult<()> {
        self.tick()?;
        match &stmt.kind {
            StmtKind::Decl { name, value, .. } => {
                let v = self.eval(value, scopes)?;
                scopes.last_mut().expect("scope").insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                let v = self.eval(value, scopes)?;
                let slot = scopes
                    .iter_mut()
                    .rev()
                    .find_map(|s| s.get_mut(name))
                    .ok_or_else(|| RuntimeError::UnboundVariable(name.clone()))?;
                *slot = v;
            }
            StmtKind::If { cond, then_block, else_block } => {
                let c = self.eval_bool(cond, scopes)?;
                self.record(stmt.span.start, c);
                if c {
                    self.exec_block(then_block, scopes, true)?;
                } else if let Some(b) = else_block {
                    self.exec_block(b, scopes, true)?;
                }
            }
            StmtKind::While { cond, body } => loop {
                let c = self.eval_bool(cond, scopes)?;
                self.record(stmt.span.start, c);
                if !c {
                    break;
                }
                self.tick()?;
                self.exec_block(body, scopes, true)?;
            },
            StmtKind::Print(e) => {
                let v = self.eval(e, scopes)?;
                self.output.push_str(&v.render(self.lang));
                self.output.push('\n');
            }
            StmtKind::Pass => {}
        }
        Ok(())
    }

    fn eval_bool(&mut self, e: &Expr, scopes: &mut Scopes) -> RResult<bool> {
        match self.eval(e, scopes)? {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(RuntimeError::Type("condition is not a bool".into())),
        }
    }

    fn eval_int(&mut self, e: &Expr, scopes: &mut Scopes) -> RResult<i64> {
        match self.eval(e, scopes)? {
            Value::Int(v) => Ok(v),
            Value::Bool(_) => Err(RuntimeError::Type("expected an int".into())),
        }
    }

    fn eval(&mut self, e: &Expr, scopes: &mut Scopes) -> RResult<Value> {
        Ok(match &e.kind {
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Var(name) => scopes
                .iter()
                .rev()
                .find_map(|s| s.get(name).copied())
                .ok_or_else(|| RuntimeError::UnboundVariable(name.clone()))?,
            ExprKind::Read => {
                let tok = self.input.pop_front().ok_or(RuntimeError::ReadPastEnd)?;
                Value::Int(tok.parse().map_err(|_| RuntimeError::BadInput(tok))?)
            }
            ExprKind::Call { name, args } => {
                let vals = args.iter().map(|a| self.eval(a, scopes)).collect::<RResult<Vec<_>>>()?;
                self.call(name, &vals)?
            }
            ExprKind::Unary(UnOp::Neg, inner) => {
                Value::Int(self.eval_int(inner, scopes)?.checked_neg().ok_or(RuntimeError::Overflow)?)
            }
            ExprKind::Unary(UnOp::Not, inner) => Value::Bool(!self.eval_bool(inner, scopes)?),
            ExprKind::Binary(BinOp::And, l, r) => Value::Bool(self.eval_bool(l, scopes)? && self.eval_bool(r, scopes)?),
            ExprKind::Binary(BinOp::Or, l, r) => Value::Bool(self.eval_bool(l, scopes)? || self.eval_bool(r, scopes)?),
            ExprKind::Binary(op, l, r) => {
                let a = self.eval_int(l, scopes)?;
                let b = self.eval_int(r, scopes)?;
                apply_int(*op, a, b)?
            }
        })
    }
}

/// Integer and comparison operators. Division and remainder truncate toward
/// zero in both languages.
pub fn apply_int(op: BinOp, a: i64, b: i64) -> RResult<Value> {
    let arith = |r: Option<i64>| r.map(Value::Int).ok_or(RuntimeError::Overflow);
    match op {
        BinOp::Add => arith(a.checked_add(b)),
        BinOp::Sub => arith(a.checked_sub(b)),
        BinOp::Mul => arith(a.checked_mul(b)),
        BinOp::Div | BinOp::Mod if b == 0 => Err(RuntimeError::DivisionByZero),
        BinOp::Div => arith(a.checked_div(b)),
        BinOp::Mod => arith(a.checked_rem(b)),
        BinOp::Lt => Ok(Value::Bool(a < b)),
        BinOp::Le => Ok(Value::Bool(a <= b)),
        BinOp::Gt => Ok(Value::Bool(a > b)),
        BinOp::Ge => Ok(Value::Bool(a >= b)),
        BinOp::Eq => Ok(Value::Bool(a == b)),
        BinOp::Ne => Ok(Value::Bool(a != b)),
        BinOp::And | BinOp::Or => unreachable!("logic operators are handled by the caller"),
    }
}
