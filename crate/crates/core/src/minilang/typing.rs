//! Type inference for untyped (MiniP) programs, used when translating back to
//! MiniJ. Unification over one type variable per binding; anything left
//! unconstrained defaults to `int`.

use super::ast::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type error: {0}")]
pub struct TypeError(pub String);

#[derive(Default)]
struct Unifier {
    parent: Vec<usize>,
    ty: Vec<Option<Type>>,
}

impl Unifier {
    fn fresh(&mut self, ty: Option<Type>) -> usize {
        self.parent.push(self.parent.len());
        self.ty.push(ty);
        self.parent.len() - 1
    }

    fn find(&mut self, v: usize) -> usize {
        let p = self.parent[v];
        if p == v {
            return v;
        }
        let root = self.find(p);
        self.parent[v] = root;
        root
    }

    fn unify(&mut self, a: usize, b: usize) -> Result<(), TypeError> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        let merged = match (self.ty[ra], self.ty[rb]) {
            (Some(x), Some(y)) if x != y => return Err(TypeError(format!("cannot unify {x} with {y}"))),
            (x, y) => x.or(y),
        };
        self.parent[rb] = ra;
        self.ty[ra] = merged;
        Ok(())
    }

    fn require(&mut self, v: usize, ty: Type) -> Result<(), TypeError> {
        let c = self.fresh(Some(ty));
        self.unify(v, c)
    }

    fn resolve(&mut self, v: usize) -> Type {
        let r = self.find(v);
        self.ty[r].unwrap_or(Type::Int)
    }
}

struct FnVars {
    params: Vec<usize>,
    ret: usize,
}

struct Infer {
    u: Unifier,
    functions: HashMap<String, FnVars>,
    /// Type variables of every binding in visiting order: per function its
    /// params, its return and its declarations, then top-level declarations.
    order: Vec<usize>,
}

impl Infer {
    fn block(&mut self, block: &Block, scopes: &mut Vec<HashMap<String, usize>>) -> Result<(), TypeError> {
        scopes.push(HashMap::new());
        for stmt in &block.stmts {
            self.stmt(stmt, scopes)?;
        }
        scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, stmt: &Stmt, scopes: &mut Vec<HashMap<String, usize>>) -> Result<(), TypeError> {
        match &stmt.kind {
            StmtKind::Decl { ty, name, value } => {
                let v = self.expr(value, scopes)?;
                let b = self.u.fresh(*ty);
                self.u.unify(b, v)?;
                self.order.push(b);
                scopes.last_mut().expect("scope").insert(name.clone(), b);
            }
            StmtKind::Assign { name, value } => {
                let v = self.expr(value, scopes)?;
                let b = lookup(scopes, name)?;
                self.u.unify(b, v)?;
            }
            StmtKind::If { cond, then_block, else_block } => {
                let c = self.expr(cond, scopes)?;
                self.u.require(c, Type::Bool)?;
                self.block(then_block, scopes)?;
                if let Some(b) = else_block {
                    self.block(b, scopes)?;
                }
            }
            StmtKind::While { cond, body } => {
                let c = self.expr(cond, scopes)?;
                self.u.require(c, Type::Bool)?;
                self.block(body, scopes)?;
            }
            StmtKind::Print(e) => {
                // MiniJ prints ints only.
                let v = self.expr(e, scopes)?;
                self.u.require(v, Type::Int)?;
            }
            StmtKind::Pass => {}
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr, scopes: &[HashMap<String, usize>]) -> Result<usize, TypeError> {
        Ok(match &e.kind {
            ExprKind::Int(_) | ExprKind::Read => self.u.fresh(Some(Type::Int)),
            ExprKind::Bool(_) => self.u.fresh(Some(Type::Bool)),
            ExprKind::Var(name) => lookup(scopes, name)?,
            ExprKind::Call { name, args } => {
                let (params, ret) = match self.functions.get(name) {
                    Some(f) => (f.params.clone(), f.ret),
                    None => return Err(TypeError(format!("unknown function `{name}`"))),
                };
                if params.len() != args.len() {
                    return Err(TypeError(format!("arity mismatch calling `{name}`")));
                }
                for (p, a) in params.iter().zip(args) {
                    let v = self.expr(a, scopes)?;
                    self.u.unify(*p, v)?;
                }
                ret
            }
            ExprKind::Unary(op, inner) => {
                let ty = if *op == UnOp::Neg { Type::Int } else { Type::Bool };
                let v = self.expr(inner, scopes)?;
                self.u.require(v, ty)?;
                self.u.fresh(Some(ty))
            }
            ExprKind::Binary(op, l, r) => {
                let operand = if op.is_logic() { Type::Bool } else { Type::Int };
                let result = if op.is_arith() { Type::Int } else { Type::Bool };
                let lv = self.expr(l, scopes)?;
                self.u.require(lv, operand)?;
                let rv = self.expr(r, scopes)?;
                self.u.require(rv, operand)?;
                self.u.fresh(Some(result))
            }
        })
    }
}

fn lookup(scopes: &[HashMap<String, usize>], name: &str) -> Result<usize, TypeError> {
    scopes
        .iter()
        .rev()
        .find_map(|s| s.get(name).copied())
        .ok_or_else(|| TypeError(format!("unbound variable `{name}`")))
}

/// Returns a copy of `program` with every binding, parameter and return
/// type filled in. Existing annotations are respected as constraints.
pub fn infer_types(program: &Program) -> Result<Program, TypeError> {
    let mut inf = Infer { u: Unifier::default(), functions: HashMap::new(), order: Vec::new() };
    for f in &program.functions {
        let params: Vec<usize> = f.params.iter().map(|p| inf.u.fresh(p.ty)).collect();
        let ret = inf.u.fresh(f.ret_ty);
        inf.order.extend(&params);
        inf.order.push(ret);
        let mut scopes = vec![f.params.iter().map(|p| p.name.clone()).zip(params.iter().copied()).collect()];
        for stmt in &f.body.stmts {
            inf.stmt(stmt, &mut scopes)?;
        }
        let rv = inf.expr(&f.ret, &scopes)?;
        inf.u.unify(ret, rv)?;
        inf.functions.insert(f.name.clone(), FnVars { params, ret });
    }
    inf.block(&program.main, &mut vec![HashMap::new()])?;

    let mut types = inf.order.clone().into_iter().map(|v| inf.u.resolve(v));
    let mut next = || types.next().expect("one type per binding");
    let mut out = program.clone();
    for f in &mut out.functions {
        for p in &mut f.params {
            p.ty = Some(next());
        }
        f.ret_ty = Some(next());
        fill_block(&mut f.body, &mut next);
    }
    fill_block(&mut out.main, &mut next);
    Ok(out)
}

fn fill_block(block: &mut Block, next: &mut dyn FnMut() -> Type) {
    for stmt in &mut block.stmts {
        match &mut stmt.kind {
            StmtKind::Decl { ty, .. } => *ty = Some(next()),
            StmtKind::If { then_block, else_block, .. } => {
                fill_block(then_block, next);
                if let Some(b) = else_block {
                    fill_block(b, next);
                }
            }
            StmtKind::While { body, .. } => fill_block(body, next),
            _ => {}
        }
    }
}
