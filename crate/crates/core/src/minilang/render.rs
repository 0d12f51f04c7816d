//! Rule-driven rendering of an AST into target-language tokens.
//!
//! Every AST node is one decision: the renderer asks a [`RuleChooser`] which
//! rewrite rule of the node's [`Kind`] to apply, visiting nodes in source
//! pre-order, so the sequence of decision sites depends only on the source
//! tree. Rule 0 is always the faithful rule; the others are plausible slips a
//! translator makes (wrong operator, dropped delimiter, foreign spelling).

use super::ast::*;
use super::{Lang, DEDENT, INDENT, NEW_LINE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    Function,
    Main,
    Decl,
    Assign,
    If,
    IfElse,
    While,
    Print,
    Pass,
    Return,
    IntLit,
    BoolLit,
    Var,
    Call,
    Read,
    Neg,
    Not,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

pub const KINDS: [Kind; 30] = [
    Kind::Function,
    Kind::Main,
    Kind::Decl,
    Kind::Assign,
    Kind::If,
    Kind::IfElse,
    Kind::While,
    Kind::Print,
    Kind::Pass,
    Kind::Return,
    Kind::IntLit,
    Kind::BoolLit,
    Kind::Var,
    Kind::Call,
    Kind::Read,
    Kind::Neg,
    Kind::Not,
    Kind::Add,
    Kind::Sub,
    Kind::Mul,
    Kind::Div,
    Kind::Mod,
    Kind::Lt,
    Kind::Le,
    Kind::Gt,
    Kind::Ge,
    Kind::Eq,
    Kind::Ne,
    Kind::And,
    Kind::Or,
];

/// Decision contexts: the parent node's kind, or the root.
pub const CONTEXT_COUNT: usize = KINDS.len() + 1;
pub const ROOT_CONTEXT: usize = KINDS.len();

impl Kind {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Rule names; index 0 is the faithful rule.
    pub fn rules(self) -> &'static [&'static str] {
        match self {
            Kind::Function => &["gold", "malformed-header"],
            Kind::Main | Kind::Pass | Kind::Var | Kind::Call | Kind::Read => &["gold"],
            Kind::Decl => &["gold", "wrong-decl-form"],
            Kind::Assign => &["gold", "double-equals"],
            Kind::If => &["gold", "negate", "missing-delimiter"],
            Kind::IfElse => &["gold", "swap-branches", "missing-else-delimiter"],
            Kind::While => &["gold", "as-if"],
            Kind::Print => &["gold", "bare"],
            Kind::Return => &["gold", "bare"],
            Kind::IntLit => &["gold", "successor"],
            Kind::BoolLit => &["gold", "wrong-case"],
            Kind::Neg => &["gold", "drop"],
            Kind::Not => &["gold", "drop", "foreign"],
            Kind::Add => &["add", "sub"],
            Kind::Sub => &["sub", "add"],
            Kind::Mul => &["mul", "add"],
            Kind::Div => &["div", "foreign"],
            Kind::Mod => &["mod", "div"],
            Kind::Lt => &["lt", "le"],
            Kind::Le => &["le", "lt"],
            Kind::Gt => &["gt", "ge"],
            Kind::Ge => &["ge", "gt"],
            Kind::Eq => &["eq", "ne", "assign"],
            Kind::Ne => &["ne", "eq"],
            Kind::And => &["and", "or", "foreign"],
            Kind::Or => &["or", "and", "foreign"],
        }
    }

    pub fn rule_count(self) -> usize {
        self.rules().len()
    }

    pub fn of_binop(op: BinOp) -> Kind {
        match op {
            BinOp::Add => Kind::Add,
            BinOp::Sub => Kind::Sub,
            BinOp::Mul => Kind::Mul,
            BinOp::Div => Kind::Div,
            BinOp::Mod => Kind::Mod,
            BinOp::Lt => Kind::Lt,
            BinOp::Le => Kind::Le,
            BinOp::Gt => Kind::Gt,
            BinOp::Ge => Kind::Ge,
            BinOp::Eq => Kind::Eq,
            BinOp::Ne => Kind::Ne,
            BinOp::And => Kind::And,
            BinOp::Or => Kind::Or,
        }
    }

    pub fn of_expr(e: &Expr) -> Kind {
        match &e.kind {
            ExprKind::Int(_) => Kind::IntLit,
            ExprKind::Bool(_) => Kind::BoolLit,
            ExprKind::Var(_) => Kind::Var,
            ExprKind::Call { .. } => Kind::Call,
            ExprKind::Read => Kind::Read,
            ExprKind::Unary(UnOp::Neg, _) => Kind::Neg,
            ExprKind::Unary(UnOp::Not, _) => Kind::Not,
            ExprKind::Binary(op, _, _) => Kind::of_binop(*op),
        }
    }

    pub fn of_stmt(s: &Stmt) -> Kind {
        match &s.kind {
            StmtKind::Decl { .. } => Kind::Decl,
            StmtKind::Assign { .. } => Kind::Assign,
            StmtKind::If { else_block: None, .. } => Kind::If,
            StmtKind::If { .. } => Kind::IfElse,
            StmtKind::While { .. } => Kind::While,
            StmtKind::Print(_) => Kind::Print,
            StmtKind::Pass => Kind::Pass,
        }
    }
}

/// Picks a rule index in `0..kind.rule_count()` for one decision site.
pub trait RuleChooser {
    fn choose(&mut self, kind: Kind, context: usize) -> usize;
}

/// Always applies the faithful rule.
#[derive(Debug, Default, Clone, Copy)]
pub struct GoldChooser;

impl RuleChooser for GoldChooser {
    fn choose(&mut self, _kind: Kind, _context: usize) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("{target} cannot express {construct}")]
    Unsupported { target: Lang, construct: String },
}

/// Renders with the faithful rules and joins into canonical source text.
pub fn render_program(program: &Program, target: Lang) -> Result<String, RenderError> {
    let toks = render_surfaces(program, target, &mut GoldChooser)?;
    Ok(join_surfaces(&toks, target))
}

/// The reference MiniJ → MiniP translation.
pub fn gold_transpile(program: &Program) -> Result<String, RenderError> {
    render_program(program, Lang::MiniP)
}

pub fn render_surfaces(
    program: &Program,
    target: Lang,
    chooser: &mut dyn RuleChooser,
) -> Result<Vec<String>, RenderError> {
    let mut r = Renderer { target, chooser, out: Vec::new() };
    r.program(program)?;
    Ok(r.out)
}

/// Canonical text for a lexical token sequence: single spaces, no space
/// before `; , ) :` or after `(`, and none between a callee and its `(`.
/// MiniP structure tokens become newlines and two-space indentation.
pub fn join_surfaces(toks: &[String], lang: Lang) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    let mut line_start = true;
    let mut prev: Option<&str> = None;
    for t in toks {
        let t = t.as_str();
        if lang == Lang::MiniP {
            match t {
                NEW_LINE => {
                    out.push('\n');
                    line_start = true;
                    prev = None;
                    continue;
                }
                INDENT => {
                    depth += 1;
                    continue;
                }
                DEDENT => {
                    depth = depth.saturating_sub(1);
                    continue;
                }
                _ => {}
            }
        }
        if line_start {
            out.extend(std::iter::repeat_n(' ', 2 * depth));
            line_start = false;
        } else if let Some(p) = prev {
            let callee = t == "(" && (super::is_word(p) && !is_keyword(p, lang) || p == "print" || p == "read");
            if !(matches!(t, ";" | "," | ")" | ":") || p == "(" || callee) {
                out.push(' ');
            }
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}

fn is_keyword(s: &str, lang: Lang) -> bool {
    lang.keywords().contains(&s)
}

struct Renderer<'c> {
    target: Lang,
    chooser: &'c mut dyn RuleChooser,
    out: Vec<String>,
}

impl Renderer<'_> {
    fn emit(&mut self, t: &str) {
        self.out.push(t.to_string());
    }

    fn is_p(&self) -> bool {
        self.target == Lang::MiniP
    }

    fn choose(&mut self, kind: Kind, ctx: usize) -> usize {
        let c = self.chooser.choose(kind, ctx);
        debug_assert!(c < kind.rule_count());
        c
    }

    /// Runs `f` with a fresh output buffer and returns what it emitted.
    fn capture<T>(
        &mut self,
        f: impl FnOnce(&mut Self) -> Result<T, RenderError>,
    ) -> Result<(Vec<String>, T), RenderError> {
        let saved = std::mem::take(&mut self.out);
        let result = f(self);
        let captured = std::mem::replace(&mut self.out, saved);
        result.map(|v| (captured, v))
    }

    fn program(&mut self, p: &Program) -> Result<(), RenderError> {
        for f in &p.functions {
            self.function(f)?;
        }
        self.choose(Kind::Main, ROOT_CONTEXT);
        let before = self.out.len();
        for s in &p.main.stmts {
            self.stmt(s, Kind::Main.index())?;
        }
        if self.out.len() == before {
            return Err(RenderError::Unsupported { target: self.target, construct: "an empty program".into() });
        }
        Ok(())
    }

    fn function(&mut self, f: &Function) -> Result<(), RenderError> {
        let c = self.choose(Kind::Function, ROOT_CONTEXT);
        let ctx = Kind::Function.index();
        if self.is_p() {
            self.emit("def");
            self.emit(&f.name);
            self.emit("(");
            for (i, p) in f.params.iter().enumerate() {
                if i > 0 {
                    self.emit(",");
                }
                self.emit(&p.name);
            }
            self.emit(")");
            if c == 0 {
                self.emit(":");
            }
            self.emit(NEW_LINE);
            self.emit(INDENT);
        } else {
            if c == 0 {
                self.emit(f.ret_ty.unwrap_or(Type::Int).keyword());
            }
            self.emit(&f.name);
            self.emit("(");
            for (i, p) in f.params.iter().enumerate() {
                if i > 0 {
                    self.emit(",");
                }
                self.emit(p.ty.unwrap_or(Type::Int).keyword());
                self.emit(&p.name);
            }
            self.emit(")");
            self.emit("{");
        }
        for s in &f.body.stmts {
            self.stmt(s, ctx)?;
        }
        let r = self.choose(Kind::Return, ctx);
        self.emit("return");
        let (toks, _) = self.expr(&f.ret, false, Kind::Return.index())?;
        if r == 0 {
            self.out.extend(toks);
        }
        if self.is_p() {
            self.emit(NEW_LINE);
            self.emit(DEDENT);
        } else {
            self.emit(";");
            self.emit("}");
        }
        Ok(())
    }

    fn terminate(&mut self) {
        self.emit(if self.is_p() { NEW_LINE } else { ";" });
    }

    fn block(&mut self, b: &Block, ctx: usize) -> Result<Vec<String>, RenderError> {
        let (body, _) = self.capture(|me| b.stmts.iter().try_for_each(|s| me.stmt(s, ctx)))?;
        let mut out = Vec::with_capacity(body.len() + 4);
        if self.is_p() {
            out.push(NEW_LINE.to_string());
            out.push(INDENT.to_string());
            if body.is_empty() {
                out.push("pass".to_string());
                out.push(NEW_LINE.to_string());
            }
            out.extend(body);
            out.push(DEDENT.to_string());
        } else {
            out.push("{".to_string());
            out.extend(body);
            out.push("}".to_string());
        }
        Ok(out)
    }

    fn stmt(&mut self, s: &Stmt, ctx: usize) -> Result<(), RenderError> {
        let kind = Kind::of_stmt(s);
        let c = self.choose(kind, ctx);
        let me = kind.index();
        match &s.kind {
            StmtKind::Decl { ty, name, value } => {
                let ty = ty.unwrap_or(Type::Int).keyword();
                if (c == 0) != self.is_p() {
                    self.emit(ty);
                }
                self.emit(name);
                self.emit("=");
                self.expr_into(value, false, me)?;
                self.terminate();
            }
            StmtKind::Assign { name, value } => {
                self.emit(name);
                self.emit(if c == 0 { "=" } else { "==" });
                self.expr_into(value, false, me)?;
                self.terminate();
            }
            StmtKind::If { cond, then_block, else_block } => {
                let negate = kind == Kind::If && c == 1;
                let (cond_toks, _) = self.expr(cond, negate, me)?;
                let then_toks = self.block(then_block, me)?;
                let else_toks = match else_block {
                    Some(b) => Some(self.block(b, me)?),
                    None => None,
                };
                let (first, second) = match else_toks {
                    Some(e) if c == 1 => (e, Some(then_toks)),
                    other => (then_toks, other),
                };
                let drop_cond_delim = kind == Kind::If && c == 2;
                self.emit("if");
                self.header(cond_toks, !drop_cond_delim);
                self.out.extend(first);
                if let Some(second) = second {
                    let drop_else = c == 2;
                    if self.is_p() {
                        self.emit("else");
                        if !drop_else {
                            self.emit(":");
                        }
                    } else if !drop_else {
                        self.emit("else");
                    }
                    self.out.extend(second);
                }
            }
            StmtKind::While { cond, body } => {
                let (cond_toks, _) = self.expr(cond, false, me)?;
                let body_toks = self.block(body, me)?;
                self.emit(if c == 0 { "while" } else { "if" });
                self.header(cond_toks, true);
                self.out.extend(body_toks);
            }
            StmtKind::Print(e) => {
                self.emit("print");
                if c == 0 {
                    self.emit("(");
                }
                self.expr_into(e, false, me)?;
                if c == 0 {
                    self.emit(")");
                }
                self.terminate();
            }
            StmtKind::Pass => {
                if self.is_p() {
                    self.emit("pass");
                    self.emit(NEW_LINE);
                }
            }
        }
        Ok(())
    }

    /// Emits a condition with its delimiters: `cond :` or `( cond )`.
    fn header(&mut self, cond: Vec<String>, closing: bool) {
        if self.is_p() {
            self.out.extend(cond);
            if closing {
                self.emit(":");
            }
        } else {
            self.emit("(");
            self.out.extend(cond);
            if closing {
                self.emit(")");
            }
        }
    }

    fn expr_into(&mut self, e: &Expr, neg: bool, ctx: usize) -> Result<(), RenderError> {
        let (toks, _) = self.expr(e, neg, ctx)?;
        self.out.extend(toks);
        Ok(())
    }

    /// Renders an expression, negated when `neg`, and returns its tokens with
    /// the precedence of the emitted top-level construct.
    fn expr(&mut self, e: &Expr, neg: bool, ctx: usize) -> Result<(Vec<String>, u8), RenderError> {
        let kind = Kind::of_expr(e);
        let c = self.choose(kind, ctx);
        let me = kind.index();
        let p = self.is_p();
        let s = |x: &str| x.to_string();
        let not_kw = if p { "not" } else { "!" };
        let negate_atom = |toks: Vec<String>| -> (Vec<String>, u8) {
            if neg {
                let mut v = vec![s(not_kw)];
                v.extend(toks);
                (v, NOT_PRECEDENCE)
            } else {
                (toks, ATOM_PRECEDENCE)
            }
        };
        Ok(match &e.kind {
            ExprKind::Int(v) => {
                let v = if c == 1 { v.saturating_add(1) } else { *v };
                if v < 0 {
                    (vec![s("-"), v.unsigned_abs().to_string()], NEG_PRECEDENCE)
                } else {
                    (vec![v.to_string()], ATOM_PRECEDENCE)
                }
            }
            ExprKind::Bool(b) => {
                let b = *b != neg;
                let text = match (b, p == (c == 0)) {
                    (true, true) => "True",
                    (false, true) => "False",
                    (true, false) => "true",
                    (false, false) => "false",
                };
                (vec![s(text)], ATOM_PRECEDENCE)
            }
            ExprKind::Var(name) => negate_atom(vec![name.clone()]),
            ExprKind::Read => (vec![s("read"), s("("), s(")")], ATOM_PRECEDENCE),
            ExprKind::Call { name, args } => {
                let mut v = vec![name.clone(), s("(")];
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        v.push(s(","));
                    }
                    v.extend(self.expr(a, false, me)?.0);
                }
                v.push(s(")"));
                negate_atom(v)
            }
            ExprKind::Unary(UnOp::Neg, inner) => {
                let (t, ip) = self.expr(inner, false, me)?;
                if c == 1 {
                    (t, ip)
                } else {
                    let mut v = vec![s("-")];
                    v.extend(self.wrap(t, ip, ip < NEG_PRECEDENCE)?);
                    (v, NEG_PRECEDENCE)
                }
            }
            ExprKind::Unary(UnOp::Not, inner) => {
                let foreign = if p { "!" } else { "not" };
                let spelled = match c {
                    0 if !neg => Some(not_kw),
                    1 if neg => Some(not_kw),
                    2 => Some(foreign),
                    _ => None,
                };
                let (t, ip) = self.expr(inner, false, me)?;
                match spelled {
                    Some(kw) => {
                        let mut v = vec![s(kw)];
                        v.extend(self.wrap(t, ip, ip < NOT_PRECEDENCE)?);
                        (v, NOT_PRECEDENCE)
                    }
                    None => (t, ip),
                }
            }
            ExprKind::Binary(op, l, r) => {
                let (mut emitted, foreign) = emitted_op(*op, c);
                let child_neg = neg && emitted.is_logic();
                if neg {
                    emitted = negate_op(emitted);
                }
                let prec = emitted.precedence();
                let (lt, lp) = self.expr(l, child_neg, me)?;
                let (rt, rp) = self.expr(r, child_neg, me)?;
                let mut v = self.wrap(lt, lp, lp < prec)?;
                v.push(s(op_text(emitted, foreign, self.target)));
                v.extend(self.wrap(rt, rp, rp <= prec)?);
                (v, prec)
            }
        })
    }

    fn wrap(&self, toks: Vec<String>, prec: u8, needed: bool) -> Result<Vec<String>, RenderError> {
        if !needed {
            return Ok(toks);
        }
        if !self.is_p() && prec <= BinOp::Lt.precedence() {
            // MiniJ has no parentheses around boolean expressions; integer
            // subexpressions always bind tighter than any boolean operator.
            return Err(RenderError::Unsupported {
                target: self.target,
                construct: "a parenthesized boolean expression".into(),
            });
        }
        let mut v = Vec::with_capacity(toks.len() + 2);
        v.push("(".to_string());
        v.extend(toks);
        v.push(")".to_string());
        Ok(v)
    }
}

/// The operator a rule emits, and whether it is spelled the other
/// language's way (or, for `eq`'s third rule, as `=`).
fn emitted_op(op: BinOp, rule: usize) -> (BinOp, bool) {
    use BinOp::*;
    if rule == 0 {
        return (op, false);
    }
    match (op, rule) {
        (Add, _) => (Sub, false),
        (Sub, _) => (Add, false),
        (Mul, _) => (Add, false),
        (Div, _) => (Div, true),
        (Mod, _) => (Div, false),
        (Lt, _) => (Le, false),
        (Le, _) => (Lt, false),
        (Gt, _) => (Ge, false),
        (Ge, _) => (Gt, false),
        (Eq, 1) => (Ne, false),
        (Eq, _) => (Eq, true),
        (Ne, _) => (Eq, false),
        (And, 1) => (Or, false),
        (And, _) => (And, true),
        (Or, 1) => (And, false),
        (Or, _) => (Or, true),
    }
}

/// Logical complement used when rendering a negated condition: complements
/// comparisons and applies De Morgan to `and`/`or`.
fn negate_op(op: BinOp) -> BinOp {
    use BinOp::*;
    match op {
        Lt => Ge,
        Ge => Lt,
        Le => Gt,
        Gt => Le,
        Eq => Ne,
        Ne => Eq,
        And => Or,
        Or => And,
        arith => arith,
    }
}

fn op_text(op: BinOp, foreign: bool, target: Lang) -> &'static str {
    let lang = if foreign { target.other() } else { target };
    match (op, lang) {
        (BinOp::Eq, _) if foreign => "=",
        (BinOp::Div, Lang::MiniJ) => "/",
        (BinOp::Div, Lang::MiniP) => "//",
        (BinOp::And, Lang::MiniJ) => "&&",
        (BinOp::And, Lang::MiniP) => "and",
        (BinOp::Or, Lang::MiniJ) => "||",
        (BinOp::Or, Lang::MiniP) => "or",
        (BinOp::Add, _) => "+",
        (BinOp::Sub, _) => "-",
        (BinOp::Mul, _) => "*",
        (BinOp::Mod, _) => "%",
        (cmp, _) => cmp.relop_text(),
    }
}
