//! Recursive-descent parsers for both languages.
//!
//! Both parsers are built so that the first token they reject is exactly the
//! first token after which no valid completion exists. For MiniJ this means
//! name resolution and typing happen while parsing: every expression is
//! parsed against the type its context demands, and boolean expressions have
//! no parentheses, so a single token of lookahead always decides between a
//! boolean atom and an integer comparison.

use super::ast::*;
use super::lexer::{classify, lex, LexKind};
use super::{group_pieces, Lang, DEDENT, INDENT, NEW_LINE};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (token {})", index + 1)]
pub struct ParseError {
    /// 0-based index of the rejected token; equals the input length when the
    /// input ended while more tokens were required.
    pub index: usize,
    pub message: String,
}

type PResult<T> = Result<T, ParseError>;

/// Parses lexical tokens (keywords, operators, whole identifiers).
pub fn parse_lexemes(tokens: &[String], lang: Lang) -> PResult<Program> {
    let mut p = Parser::new(tokens, lang);
    match lang {
        Lang::MiniJ => p.program_j(),
        Lang::MiniP => p.program_p(),
    }
}

/// Parses subword pieces; errors index the pieces.
pub fn parse_surfaces(surfaces: &[String], lang: Lang) -> PResult<Program> {
    let (lexemes, first_piece) = group_pieces(surfaces);
    parse_lexemes(&lexemes, lang).map_err(|mut e| {
        e.index = first_piece.get(e.index).copied().unwrap_or(surfaces.len());
        e
    })
}

pub fn parse_text(code: &str, lang: Lang) -> PResult<Program> {
    let lexemes = lex(code, lang).map_err(|e| ParseError { index: e.token_position - 1, message: e.message })?;
    let texts: Vec<String> = lexemes.into_iter().map(|l| l.text).collect();
    parse_lexemes(&texts, lang)
}

#[derive(Clone)]
struct Sig {
    params: Vec<Option<Type>>,
    ret: Option<Type>,
}

struct Parser<'a> {
    toks: &'a [String],
    kinds: Vec<LexKind>,
    pos: usize,
    functions: HashMap<String, Sig>,
    /// Innermost scope last. MiniP bindings carry no type.
    scopes: Vec<HashMap<String, Option<Type>>>,
    in_function: bool,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [String], lang: Lang) -> Self {
        let kinds = toks.iter().map(|t| classify(t, lang)).collect();
        Parser { toks, kinds, pos: 0, functions: HashMap::new(), scopes: vec![HashMap::new()], in_function: false }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn peek_kind(&self) -> Option<LexKind> {
        self.kinds.get(self.pos).copied()
    }

    fn at(&self, s: &str) -> bool {
        self.peek() == Some(s)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { index: self.pos, message: message.into() })
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => format!("`{t}`"),
            None => "end of input".to_string(),
        }
    }

    fn expect(&mut self, s: &str) -> PResult<usize> {
        if self.at(s) {
            self.pos += 1;
            Ok(self.pos)
        } else {
            self.err(format!("expected `{s}`, found {}", self.found()))
        }
    }

    /// 1-based index of the most recently consumed token.
    fn last(&self) -> usize {
        self.pos
    }

    fn next_start(&self) -> usize {
        self.pos + 1
    }

    fn lookup_var(&self, name: &str) -> Option<Option<Type>> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Option<Type>) {
        self.scopes.last_mut().expect("scope").insert(name.to_string(), ty);
    }

    /// Consumes an identifier that introduces a new name.
    fn fresh_name(&mut self, what: &str) -> PResult<String> {
        if self.peek_kind() != Some(LexKind::Ident) {
            return self.err(format!("expected {what} name, found {}", self.found()));
        }
        let name = self.toks[self.pos].clone();
        if self.functions.contains_key(&name) {
            return self.err(format!("`{name}` is already a function"));
        }
        if self.lookup_var(&name).is_some() {
            return self.err(format!("`{name}` is already declared"));
        }
        self.pos += 1;
        Ok(name)
    }

    fn peek_type(&self) -> Option<Type> {
        match self.peek() {
            Some("int") => Some(Type::Int),
            Some("bool") => Some(Type::Bool),
            _ => None,
        }
    }

    fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        let span = Span::new(l.span.start, r.span.end);
        Expr { kind: ExprKind::Binary(op, Box::new(l), Box::new(r)), span }
    }

    // ---------------------------------------------------------------- MiniJ

    fn program_j(&mut self) -> PResult<Program> {
        let mut functions = Vec::new();
        let mut stmts: Vec<Stmt> = Vec::new();
        loop {
            if self.peek().is_none() {
                if stmts.is_empty() {
                    return self.err("expected a statement");
                }
                break;
            }
            if stmts.is_empty() {
                if let Some(ty) = self.peek_type() {
                    let start = self.next_start();
                    self.pos += 1;
                    let name = self.fresh_name("variable or function")?;
                    if self.at("(") {
                        functions.push(self.function_j(ty, name, start)?);
                    } else if self.at("=") {
                        stmts.push(self.decl_rest_j(ty, name, start)?);
                    } else {
                        return self.err(format!("expected `(` or `=`, found {}", self.found()));
                    }
                    continue;
                }
            }
            stmts.push(self.stmt_j()?);
        }
        let main_span = Span::new(stmts[0].span.start, self.last());
        Ok(Program { functions, main: Block { stmts, span: main_span }, span: Span::new(1, self.toks.len()) })
    }

    fn function_j(&mut self, ret_ty: Type, name: String, start: usize) -> PResult<Function> {
        self.expect("(")?;
        let mut params: Vec<Param> = Vec::new();
        self.scopes.push(HashMap::new());
        if !self.at(")") {
            loop {
                let Some(ty) = self.peek_type() else {
                    return self.err(format!("expected parameter type, found {}", self.found()));
                };
                self.pos += 1;
                if self.peek() == Some(name.as_str()) {
                    return self.err(format!("parameter shadows function `{name}`"));
                }
                let pname = self.fresh_name("parameter")?;
                self.declare(&pname, Some(ty));
                params.push(Param { name: pname, ty: Some(ty) });
                if self.at(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        let body_start = self.expect("{")?;
        self.in_function = true;
        let mut stmts = Vec::new();
        while !self.at("return") {
            if self.at("}") {
                return self.err("expected `return` before `}`");
            }
            stmts.push(self.stmt_j()?);
        }
        self.pos += 1;
        let ret = self.expr_j(ret_ty)?;
        self.expect(";")?;
        let end = self.expect("}")?;
        self.in_function = false;
        self.scopes.pop();
        self.functions.insert(name.clone(), Sig { params: params.iter().map(|p| p.ty).collect(), ret: Some(ret_ty) });
        Ok(Function {
            name,
            params,
            ret_ty: Some(ret_ty),
            body: Block { stmts, span: Span::new(body_start, end) },
            ret,
            span: Span::new(start, end),
        })
    }

    fn decl_rest_j(&mut self, ty: Type, name: String, start: usize) -> PResult<Stmt> {
        self.expect("=")?;
        let value = self.expr_j(ty)?;
        let end = self.expect(";")?;
        self.declare(&name, Some(ty));
        Ok(Stmt { kind: StmtKind::Decl { ty: Some(ty), name, value }, span: Span::new(start, end) })
    }

    fn stmt_j(&mut self) -> PResult<Stmt> {
        let start = self.next_start();
        if let Some(ty) = self.peek_type() {
            self.pos += 1;
            let name = self.fresh_name("variable")?;
            return self.decl_rest_j(ty, name, start);
        }
        match self.peek() {
            Some("if") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expr_j(Type::Bool)?;
                self.expect(")")?;
                let then_block = self.block_j()?;
                let else_block = if self.at("else") {
                    self.pos += 1;
                    Some(self.block_j()?)
                } else {
                    None
                };
                Ok(Stmt { kind: StmtKind::If { cond, then_block, else_block }, span: Span::new(start, self.last()) })
            }
            Some("while") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expr_j(Type::Bool)?;
                self.expect(")")?;
                let body = self.block_j()?;
                Ok(Stmt { kind: StmtKind::While { cond, body }, span: Span::new(start, self.last()) })
            }
            Some("print") => {
                if self.in_function {
                    return self.err("`print` is only allowed at top level");
                }
                self.pos += 1;
                self.expect("(")?;
                let e = self.expr_j(Type::Int)?;
                self.expect(")")?;
                let end = self.expect(";")?;
                Ok(Stmt { kind: StmtKind::Print(e), span: Span::new(start, end) })
            }
            Some(t) if self.peek_kind() == Some(LexKind::Ident) => {
                let Some(Some(ty)) = self.lookup_var(t) else {
                    if self.functions.contains_key(t) {
                        return self.err(format!("cannot assign to function `{t}`"));
                    }
                    return self.err(format!("unknown variable `{t}`"));
                };
                let name = t.to_string();
                self.pos += 1;
                self.expect("=")?;
                let value = self.expr_j(ty)?;
                let end = self.expect(";")?;
                Ok(Stmt { kind: StmtKind::Assign { name, value }, span: Span::new(start, end) })
            }
            _ => self.err(format!("expected a statement, found {}", self.found())),
        }
    }

    fn block_j(&mut self) -> PResult<Block> {
        let start = self.expect("{")?;
        self.scopes.push(HashMap::new());
        let mut stmts = Vec::new();
        while !self.at("}") {
            stmts.push(self.stmt_j()?);
        }
        let end = self.expect("}")?;
        self.scopes.pop();
        Ok(Block { stmts, span: Span::new(start, end) })
    }

    fn expr_j(&mut self, ty: Type) -> PResult<Expr> {
        match ty {
            Type::Int => self.int_sum(),
            Type::Bool => self.bool_or(),
        }
    }

    fn int_sum(&mut self) -> PResult<Expr> {
        let mut e = self.int_term()?;
        loop {
            let op = match self.peek() {
                Some("+") => BinOp::Add,
                Some("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.pos += 1;
            let r = self.int_term()?;
            e = Self::binary(op, e, r);
        }
    }

    fn int_term(&mut self) -> PResult<Expr> {
        let mut e = self.int_unary()?;
        loop {
            let op = match self.peek() {
                Some("*") => BinOp::Mul,
                Some("/") => BinOp::Div,
                Some("%") => BinOp::Mod,
                _ => return Ok(e),
            };
            self.pos += 1;
            let r = self.int_unary()?;
            e = Self::binary(op, e, r);
        }
    }

    fn int_unary(&mut self) -> PResult<Expr> {
        if self.at("-") {
            let start = self.next_start();
            self.pos += 1;
            let inner = self.int_unary()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)), span });
        }
        self.int_atom()
    }

    fn int_atom(&mut self) -> PResult<Expr> {
        let start = self.next_start();
        match (self.peek(), self.peek_kind()) {
            (Some(t), Some(LexKind::Int)) => {
                let v = t.parse().expect("classified as int");
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Int(v), span: Span::new(start, start) })
            }
            (Some("read"), _) => self.read_call(),
            (Some("("), _) => {
                self.pos += 1;
                let inner = self.int_sum()?;
                let end = self.expect(")")?;
                Ok(Expr { span: Span::new(start, end), ..inner })
            }
            (Some(t), Some(LexKind::Ident)) => match self.lookup_var(t) {
                Some(Some(Type::Int)) => {
                    self.pos += 1;
                    Ok(Expr { kind: ExprKind::Var(t.to_string()), span: Span::new(start, start) })
                }
                Some(_) => self.err(format!("`{t}` is not an int")),
                None => match self.functions.get(t).map(|s| s.ret) {
                    Some(Some(Type::Int)) => self.call(),
                    Some(_) => self.err(format!("function `{t}` does not return int")),
                    None => self.err(format!("unknown name `{t}`")),
                },
            },
            _ => self.err(format!("expected an int expression, found {}", self.found())),
        }
    }

    fn read_call(&mut self) -> PResult<Expr> {
        if self.in_function {
            return self.err("`read` is only allowed at top level");
        }
        let start = self.next_start();
        self.pos += 1;
        self.expect("(")?;
        let end = self.expect(")")?;
        Ok(Expr { kind: ExprKind::Read, span: Span::new(start, end) })
    }

    /// Parses `NAME ( args )` for a known function, checking arity and, in
    /// MiniJ, argument types.
    fn call(&mut self) -> PResult<Expr> {
        let start = self.next_start();
        let name = self.toks[self.pos].clone();
        let sig = self.functions[&name].clone();
        self.pos += 1;
        self.expect("(")?;
        let mut args = Vec::new();
        for (i, pty) in sig.params.iter().enumerate() {
            if i > 0 {
                self.expect(",")?;
            }
            let arg = match pty {
                Some(ty) => self.expr_j(*ty)?,
                None => self.expr_p()?,
            };
            args.push(arg);
        }
        if sig.params.is_empty() || !self.at(",") {
            let end = self.expect(")")?;
            return Ok(Expr { kind: ExprKind::Call { name, args }, span: Span::new(start, end) });
        }
        self.err(format!("too many arguments to `{name}`"))
    }

    fn bool_or(&mut self) -> PResult<Expr> {
        let mut e = self.bool_and()?;
        while self.at("||") {
            self.pos += 1;
            let r = self.bool_and()?;
            e = Self::binary(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn bool_and(&mut self) -> PResult<Expr> {
        let mut e = self.bool_not()?;
        while self.at("&&") {
            self.pos += 1;
            let r = self.bool_not()?;
            e = Self::binary(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn bool_not(&mut self) -> PResult<Expr> {
        if self.at("!") {
            let start = self.next_start();
            self.pos += 1;
            let inner = self.bool_not()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(inner)), span });
        }
        self.bool_atom()
    }

    fn bool_atom(&mut self) -> PResult<Expr> {
        let start = self.next_start();
        match (self.peek(), self.peek_kind()) {
            (Some(b @ ("true" | "false")), _) => {
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Bool(b == "true"), span: Span::new(start, start) })
            }
            (Some(t), Some(LexKind::Ident)) => match self.lookup_var(t) {
                Some(Some(Type::Bool)) => {
                    self.pos += 1;
                    Ok(Expr { kind: ExprKind::Var(t.to_string()), span: Span::new(start, start) })
                }
                Some(_) => self.comparison(),
                None => match self.functions.get(t).map(|s| s.ret) {
                    Some(Some(Type::Bool)) => self.call(),
                    Some(_) => self.comparison(),
                    None => self.err(format!("unknown name `{t}`")),
                },
            },
            (Some("-" | "(" | "read"), _) | (_, Some(LexKind::Int)) => self.comparison(),
            _ => self.err(format!("expected a boolean expression, found {}", self.found())),
        }
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let l = self.int_sum()?;
        let Some(op) = self.peek().and_then(BinOp::from_relop) else {
            return self.err(format!("expected a comparison operator, found {}", self.found()));
        };
        self.pos += 1;
        let r = self.int_sum()?;
        Ok(Self::binary(op, l, r))
    }

    // ---------------------------------------------------------------- MiniP

    fn program_p(&mut self) -> PResult<Program> {
        let mut functions = Vec::new();
        let mut stmts: Vec<Stmt> = Vec::new();
        loop {
            match self.peek() {
                None if stmts.is_empty() => return self.err("expected a statement"),
                None => break,
                Some("def") if stmts.is_empty() => functions.push(self.function_p()?),
                _ => stmts.push(self.stmt_p()?),
            }
        }
        let main_span = Span::new(stmts[0].span.start, self.last());
        Ok(Program { functions, main: Block { stmts, span: main_span }, span: Span::new(1, self.toks.len()) })
    }

    fn function_p(&mut self) -> PResult<Function> {
        let start = self.expect("def")?;
        let name = self.fresh_name("function")?;
        self.expect("(")?;
        self.scopes.push(HashMap::new());
        let mut params: Vec<Param> = Vec::new();
        if !self.at(")") {
            loop {
                if self.peek() == Some(name.as_str()) {
                    return self.err(format!("parameter shadows function `{name}`"));
                }
                let pname = self.fresh_name("parameter")?;
                self.declare(&pname, None);
                params.push(Param { name: pname, ty: None });
                if self.at(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.expect(":")?;
        self.expect(NEW_LINE)?;
        let body_start = self.expect(INDENT)?;
        self.in_function = true;
        let mut stmts = Vec::new();
        while !self.at("return") {
            if self.at(DEDENT) {
                return self.err("expected `return` before end of function");
            }
            stmts.push(self.stmt_p()?);
        }
        self.pos += 1;
        let ret = self.expr_p()?;
        self.expect(NEW_LINE)?;
        let end = self.expect(DEDENT)?;
        self.in_function = false;
        self.scopes.pop();
        self.functions.insert(name.clone(), Sig { params: vec![None; params.len()], ret: None });
        Ok(Function {
            name,
            params,
            ret_ty: None,
            body: Block { stmts, span: Span::new(body_start, end) },
            ret,
            span: Span::new(start, end),
        })
    }

    fn stmt_p(&mut self) -> PResult<Stmt> {
        let start = self.next_start();
        match self.peek() {
            Some("if") => {
                self.pos += 1;
                let cond = self.expr_p()?;
                self.expect(":")?;
                let then_block = self.block_p()?;
                let else_block = if self.at("else") {
                    self.pos += 1;
                    self.expect(":")?;
                    Some(self.block_p()?)
                } else {
                    None
                };
                Ok(Stmt { kind: StmtKind::If { cond, then_block, else_block }, span: Span::new(start, self.last()) })
            }
            Some("while") => {
                self.pos += 1;
                let cond = self.expr_p()?;
                self.expect(":")?;
                let body = self.block_p()?;
                Ok(Stmt { kind: StmtKind::While { cond, body }, span: Span::new(start, self.last()) })
            }
            Some("print") => {
                if self.in_function {
                    return self.err("`print` is only allowed at top level");
                }
                self.pos += 1;
                self.expect("(")?;
                let e = self.expr_p()?;
                self.expect(")")?;
                let end = self.expect(NEW_LINE)?;
                Ok(Stmt { kind: StmtKind::Print(e), span: Span::new(start, end) })
            }
            Some("pass") => {
                self.pos += 1;
                let end = self.expect(NEW_LINE)?;
                Ok(Stmt { kind: StmtKind::Pass, span: Span::new(start, end) })
            }
            Some(t) if self.peek_kind() == Some(LexKind::Ident) => {
                if self.functions.contains_key(t) {
                    return self.err(format!("cannot assign to function `{t}`"));
                }
                let name = t.to_string();
                let known = self.lookup_var(t).is_some();
                self.pos += 1;
                self.expect("=")?;
                let value = self.expr_p()?;
                let end = self.expect(NEW_LINE)?;
                let kind = if known {
                    StmtKind::Assign { name, value }
                } else {
                    self.declare(&name, None);
                    StmtKind::Decl { ty: None, name, value }
                };
                Ok(Stmt { kind, span: Span::new(start, end) })
            }
            _ => self.err(format!("expected a statement, found {}", self.found())),
        }
    }

    fn block_p(&mut self) -> PResult<Block> {
        let start = self.expect(NEW_LINE)?;
        self.expect(INDENT)?;
        self.scopes.push(HashMap::new());
        let mut stmts = vec![self.stmt_p()?];
        while !self.at(DEDENT) {
            stmts.push(self.stmt_p()?);
        }
        let end = self.expect(DEDENT)?;
        self.scopes.pop();
        Ok(Block { stmts, span: Span::new(start, end) })
    }

    fn expr_p(&mut self) -> PResult<Expr> {
        let mut e = self.p_and()?;
        while self.at("or") {
            self.pos += 1;
            let r = self.p_and()?;
            e = Self::binary(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn p_and(&mut self) -> PResult<Expr> {
        let mut e = self.p_not()?;
        while self.at("and") {
            self.pos += 1;
            let r = self.p_not()?;
            e = Self::binary(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn p_not(&mut self) -> PResult<Expr> {
        if self.at("not") {
            let start = self.next_start();
            self.pos += 1;
            let inner = self.p_not()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(inner)), span });
        }
        let l = self.p_sum()?;
        match self.peek().and_then(BinOp::from_relop) {
            Some(op) => {
                self.pos += 1;
                let r = self.p_sum()?;
                Ok(Self::binary(op, l, r))
            }
            None => Ok(l),
        }
    }

    fn p_sum(&mut self) -> PResult<Expr> {
        let mut e = self.p_term()?;
        loop {
            let op = match self.peek() {
                Some("+") => BinOp::Add,
                Some("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.pos += 1;
            let r = self.p_term()?;
            e = Self::binary(op, e, r);
        }
    }

    fn p_term(&mut self) -> PResult<Expr> {
        let mut e = self.p_unary()?;
        loop {
            let op = match self.peek() {
                Some("*") => BinOp::Mul,
                Some("//") => BinOp::Div,
                Some("%") => BinOp::Mod,
                _ => return Ok(e),
            };
            self.pos += 1;
            let r = self.p_unary()?;
            e = Self::binary(op, e, r);
        }
    }

    fn p_unary(&mut self) -> PResult<Expr> {
        let start = self.next_start();
        if self.at("-") {
            self.pos += 1;
            let inner = self.p_unary()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)), span });
        }
        match (self.peek(), self.peek_kind()) {
            (Some(t), Some(LexKind::Int)) => {
                let v = t.parse().expect("classified as int");
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Int(v), span: Span::new(start, start) })
            }
            (Some(b @ ("True" | "False")), _) => {
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Bool(b == "True"), span: Span::new(start, start) })
            }
            (Some("read"), _) => self.read_call(),
            (Some("("), _) => {
                self.pos += 1;
                let inner = self.expr_p()?;
                let end = self.expect(")")?;
                Ok(Expr { span: Span::new(start, end), ..inner })
            }
            (Some(t), Some(LexKind::Ident)) => {
                if self.lookup_var(t).is_some() {
                    self.pos += 1;
                    Ok(Expr { kind: ExprKind::Var(t.to_string()), span: Span::new(start, start) })
                } else if self.functions.contains_key(t) {
                    self.call()
                } else {
                    self.err(format!("unknown name `{t}`"))
                }
            }
            _ => self.err(format!("expected an expression, found {}", self.found())),
        }
    }
}
