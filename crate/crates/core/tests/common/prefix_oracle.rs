//! Brute-force viable-prefix oracle for MiniJ.
//!
//! A continuation-passing backtracking recognizer explores every
//! derivation. In prefix mode, running out of input anywhere counts as
//! success, so `viable(p)` holds iff some completion of `p` is a valid
//! program. The first error position is the length of the shortest
//! non-viable prefix. It shares no code with the crate's parser.

use feedtrans_core::minilang::{MINIJ_KEYWORDS, MINIJ_OPS};

#[derive(Clone, Copy, PartialEq, Debug)]
enum Ty {
    Int,
    Bool,
}

#[derive(Clone, Default)]
struct Env {
    scopes: Vec<Vec<(String, Ty)>>,
    funcs: Vec<(String, Vec<Ty>, Ty)>,
    in_fn: bool,
}

impl Env {
    fn var(&self, name: &str) -> Option<Ty> {
        self.scopes.iter().rev().flat_map(|s| s.iter()).find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn func(&self, name: &str) -> Option<(Vec<Ty>, Ty)> {
        self.funcs.iter().find(|(n, _, _)| n == name).map(|(_, p, r)| (p.clone(), *r))
    }

    fn fresh(&self, name: &str) -> bool {
        is_ident(name) && self.var(name).is_none() && self.func(name).is_none()
    }

    fn with_var(&self, name: &str, ty: Ty) -> Env {
        let mut e = self.clone();
        e.scopes.last_mut().expect("scope").push((name.to_string(), ty));
        e
    }

    fn pushed(&self) -> Env {
        let mut e = self.clone();
        e.scopes.push(Vec::new());
        e
    }

    fn popped(&self) -> Env {
        let mut e = self.clone();
        e.scopes.pop();
        e
    }
}

fn is_ident(t: &str) -> bool {
    let mut cs = t.chars();
    let head = matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
    head && cs.all(|c| c.is_ascii_alphanumeric() || c == '_') && !MINIJ_KEYWORDS.contains(&t)
}

fn is_int(t: &str) -> bool {
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) && t.parse::<i64>().is_ok()
}

fn type_kw(t: &str) -> Option<Ty> {
    match t {
        "int" => Some(Ty::Int),
        "bool" => Some(Ty::Bool),
        _ => None,
    }
}

type K<'a> = &'a mut dyn FnMut(usize, &Env) -> bool;

struct Rec<'t> {
    toks: &'t [String],
    /// Whole-program mode: running out of input fails.
    full: bool,
}

impl Rec<'_> {
    /// The token at `p`, or `Err(verdict)` at end of input.
    fn tok(&self, p: usize) -> Result<&str, bool> {
        self.toks.get(p).map(String::as_str).ok_or(!self.full)
    }

    fn lit(&self, p: usize, s: &str, e: &Env, k: K) -> bool {
        match self.tok(p) {
            Err(v) => v,
            Ok(t) => t == s && k(p + 1, e),
        }
    }

    fn program(&self, p: usize, e: &Env) -> bool {
        self.function(p, e, &mut |p, e| self.program(p, e)) || self.stmt(p, e, &mut |p, e| self.stmts(p, e))
    }

    fn stmts(&self, p: usize, e: &Env) -> bool {
        p == self.toks.len() || self.stmt(p, e, &mut |p, e| self.stmts(p, e))
    }

    fn function(&self, p: usize, e: &Env, k: K) -> bool {
        let ret = match self.tok(p) {
            Err(v) => return v,
            Ok(t) => match type_kw(t) {
                Some(ty) => ty,
                None => return false,
            },
        };
        let name = match self.tok(p + 1) {
            Err(v) => return v,
            Ok(t) if e.fresh(t) => t.to_string(),
            Ok(_) => return false,
        };
        let inner = {
            let mut i = e.pushed();
            i.in_fn = true;
            i
        };
        self.lit(p + 2, "(", &inner, &mut |p, env| {
            self.params(p, env, &name, Vec::new(), &mut |p, env, params| {
                self.lit(p, ")", env, &mut |p, env| {
                    self.lit(p, "{", env, &mut |p, env| {
                        self.body(p, env, ret, &mut |p, _| {
                            let mut out = e.clone();
                            out.funcs.push((name.clone(), params.clone(), ret));
                            k(p, &out)
                        })
                    })
                })
            })
        })
    }

    fn params(
        &self,
        p: usize,
        e: &Env,
        fname: &str,
        acc: Vec<Ty>,
        k: &mut dyn FnMut(usize, &Env, &Vec<Ty>) -> bool,
    ) -> bool {
        // Empty list, or one more parameter when the list is empty or after a comma.
        if acc.is_empty() && k(p, e, &acc) {
            return true;
        }
        let ty = match self.tok(p) {
            Err(v) => return v,
            Ok(t) => match type_kw(t) {
                Some(ty) => ty,
                None => return false,
            },
        };
        let pname = match self.tok(p + 1) {
            Err(v) => return v,
            Ok(t) if t != fname && e.fresh(t) => t,
            Ok(_) => return false,
        };
        let env = e.with_var(pname, ty);
        let mut acc = acc;
        acc.push(ty);
        if k(p + 2, &env, &acc) {
            return true;
        }
        match self.tok(p + 2) {
            Err(v) => v,
            Ok(",") => self.params_after_comma(p + 3, &env, fname, acc, k),
            Ok(_) => false,
        }
    }

    fn params_after_comma(
        &self,
        p: usize,
        e: &Env,
        fname: &str,
        acc: Vec<Ty>,
        k: &mut dyn FnMut(usize, &Env, &Vec<Ty>) -> bool,
    ) -> bool {
        // A parameter is required here; reuse `params` with a non-empty
        // accumulator so the empty alternative is not offered.
        debug_assert!(!acc.is_empty());
        self.params(p, e, fname, acc, k)
    }

    fn body(&self, p: usize, e: &Env, ret: Ty, k: K) -> bool {
        match self.tok(p) {
            Err(v) => v,
            Ok("return") => {
                self.expr(p + 1, e, ret, &mut |p, e| self.lit(p, ";", e, &mut |p, e| self.lit(p, "}", e, k)))
            }
            Ok(_) => self.stmt(p, e, &mut |p, e| self.body(p, e, ret, k)),
        }
    }

    fn block(&self, p: usize, e: &Env, k: K) -> bool {
        self.lit(p, "{", &e.pushed(), &mut |p, e| self.block_items(p, e, k))
    }

    fn block_items(&self, p: usize, e: &Env, k: K) -> bool {
        match self.tok(p) {
            Err(v) => v,
            Ok("}") => k(p + 1, &e.popped()),
            Ok(_) => self.stmt(p, e, &mut |p, e| self.block_items(p, e, k)),
        }
    }

    fn stmt(&self, p: usize, e: &Env, k: K) -> bool {
        let t = match self.tok(p) {
            Err(v) => return v,
            Ok(t) => t,
        };
        if let Some(ty) = type_kw(t) {
            let name = match self.tok(p + 1) {
                Err(v) => return v,
                Ok(n) if e.fresh(n) => n.to_string(),
                Ok(_) => return false,
            };
            return self.lit(p + 2, "=", e, &mut |p, env| {
                self.expr(p, env, ty, &mut |p, env| self.lit(p, ";", &env.with_var(&name, ty), k))
            });
        }
        match t {
            "if" => self.lit(p + 1, "(", e, &mut |p, e| {
                self.expr(p, e, Ty::Bool, &mut |p, e| {
                    self.lit(p, ")", e, &mut |p, e| {
                        self.block(p, e, &mut |p, e| {
                            if k(p, e) {
                                return true;
                            }
                            self.lit(p, "else", e, &mut |p, e| self.block(p, e, k))
                        })
                    })
                })
            }),
            "while" => self.lit(p + 1, "(", e, &mut |p, e| {
                self.expr(p, e, Ty::Bool, &mut |p, e| self.lit(p, ")", e, &mut |p, e| self.block(p, e, k)))
            }),
            "print" if !e.in_fn => self.lit(p + 1, "(", e, &mut |p, e| {
                self.expr(p, e, Ty::Int, &mut |p, e| self.lit(p, ")", e, &mut |p, e| self.lit(p, ";", e, k)))
            }),
            _ => match e.var(t) {
                Some(ty) => {
                    self.lit(p + 1, "=", e, &mut |p, e| self.expr(p, e, ty, &mut |p, e| self.lit(p, ";", e, k)))
                }
                None => false,
            },
        }
    }

    fn expr(&self, p: usize, e: &Env, ty: Ty, k: K) -> bool {
        match ty {
            Ty::Int => self.sum(p, e, k),
            Ty::Bool => self.or(p, e, k),
        }
    }

    fn sum(&self, p: usize, e: &Env, k: K) -> bool {
        self.term(p, e, &mut |p, e| self.sum_tail(p, e, k))
    }

    fn sum_tail(&self, p: usize, e: &Env, k: K) -> bool {
        if k(p, e) {
            return true;
        }
        match self.tok(p) {
            Err(v) => v,
            Ok("+" | "-") => self.term(p + 1, e, &mut |p, e| self.sum_tail(p, e, k)),
            Ok(_) => false,
        }
    }

    fn term(&self, p: usize, e: &Env, k: K) -> bool {
        self.unary(p, e, &mut |p, e| self.term_tail(p, e, k))
    }

    fn term_tail(&self, p: usize, e: &Env, k: K) -> bool {
        if k(p, e) {
            return true;
        }
        match self.tok(p) {
            Err(v) => v,
            Ok("*" | "/" | "%") => self.unary(p + 1, e, &mut |p, e| self.term_tail(p, e, k)),
            Ok(_) => false,
        }
    }

    fn unary(&self, p: usize, e: &Env, k: K) -> bool {
        match self.tok(p) {
            Err(v) => v,
            Ok("-") => self.unary(p + 1, e, k),
            Ok(_) => self.atom(p, e, k),
        }
    }

    fn atom(&self, p: usize, e: &Env, k: K) -> bool {
        let t = match self.tok(p) {
            Err(v) => return v,
            Ok(t) => t,
        };
        if is_int(t) {
            return k(p + 1, e);
        }
        match t {
            "read" if !e.in_fn => self.lit(p + 1, "(", e, &mut |p, e| self.lit(p, ")", e, k)),
            "(" => self.sum(p + 1, e, &mut |p, e| self.lit(p, ")", e, k)),
            _ if e.var(t) == Some(Ty::Int) => k(p + 1, e),
            _ => match e.func(t) {
                Some((params, Ty::Int)) => self.call(p, e, &params, k),
                _ => false,
            },
        }
    }

    fn call(&self, p: usize, e: &Env, params: &[Ty], k: K) -> bool {
        self.lit(p + 1, "(", e, &mut |p, e| self.args(p, e, params, 0, k))
    }

    fn args(&self, p: usize, e: &Env, params: &[Ty], i: usize, k: K) -> bool {
        if i == params.len() {
            return self.lit(p, ")", e, k);
        }
        if i == 0 {
            return self.expr(p, e, params[0], &mut |p, e| self.args(p, e, params, 1, k));
        }
        self.lit(p, ",", e, &mut |p, e| self.expr(p, e, params[i], &mut |p, e| self.args(p, e, params, i + 1, k)))
    }

    fn or(&self, p: usize, e: &Env, k: K) -> bool {
        self.and(p, e, &mut |p, e| self.or_tail(p, e, k))
    }

    fn or_tail(&self, p: usize, e: &Env, k: K) -> bool {
        if k(p, e) {
            return true;
        }
        match self.tok(p) {
            Err(v) => v,
            Ok("||") => self.and(p + 1, e, &mut |p, e| self.or_tail(p, e, k)),
            Ok(_) => false,
        }
    }

    fn and(&self, p: usize, e: &Env, k: K) -> bool {
        self.not(p, e, &mut |p, e| self.and_tail(p, e, k))
    }

    fn and_tail(&self, p: usize, e: &Env, k: K) -> bool {
        if k(p, e) {
            return true;
        }
        match self.tok(p) {
            Err(v) => v,
            Ok("&&") => self.not(p + 1, e, &mut |p, e| self.and_tail(p, e, k)),
            Ok(_) => false,
        }
    }

    fn not(&self, p: usize, e: &Env, k: K) -> bool {
        match self.tok(p) {
            Err(v) => v,
            Ok("!") => self.not(p + 1, e, k),
            Ok(_) => self.bool_atom(p, e, k),
        }
    }

    fn bool_atom(&self, p: usize, e: &Env, k: K) -> bool {
        let t = match self.tok(p) {
            Err(v) => return v,
            Ok(t) => t,
        };
        match t {
            "true" | "false" => k(p + 1, e),
            _ if e.var(t) == Some(Ty::Bool) => k(p + 1, e),
            _ => match e.func(t) {
                Some((params, Ty::Bool)) => self.call(p, e, &params, k),
                _ => self.comparison(p, e, k),
            },
        }
    }

    fn comparison(&self, p: usize, e: &Env, k: K) -> bool {
        self.sum(p, e, &mut |p, e| match self.tok(p) {
            Err(v) => v,
            Ok("<" | "<=" | ">" | ">=" | "==" | "!=") => self.sum(p + 1, e, k),
            Ok(_) => false,
        })
    }
}

fn top_env() -> Env {
    Env { scopes: vec![Vec::new()], ..Env::default() }
}

/// True iff some completion of `prefix` is a valid MiniJ program.
pub fn viable(prefix: &[String]) -> bool {
    Rec { toks: prefix, full: false }.program(0, &top_env())
}

pub fn valid(tokens: &[String]) -> bool {
    !tokens.is_empty() && Rec { toks: tokens, full: true }.program(0, &top_env())
}

/// `None` for a valid program, otherwise the 1-based position of the first
/// token after which no completion exists (the last token when the whole
/// sequence is a viable but incomplete prefix).
pub fn first_error(tokens: &[String]) -> Option<usize> {
    if valid(tokens) {
        return None;
    }
    Some((1..=tokens.len()).find(|&k| !viable(&tokens[..k])).unwrap_or(tokens.len()))
}

/// Every lexical token MiniJ knows, for mutation.
pub fn terminals() -> Vec<&'static str> {
    MINIJ_KEYWORDS.iter().chain(MINIJ_OPS).copied().collect()
}

/// Runs `f` on a thread with a large stack; the recognizer recurses once
/// per continuation.
pub fn with_big_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new().stack_size(256 << 20).spawn(f).expect("spawn").join().expect("oracle thread")
}
