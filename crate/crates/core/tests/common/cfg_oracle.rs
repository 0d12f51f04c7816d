//! Cyclomatic complexity by building the statement-level control-flow
//! graph explicitly and counting `E - N + 2`.

use feedtrans_core::minilang::{Block, Function, StmtKind};

#[derive(Default)]
pub struct Cfg {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Cfg {
    fn node(&mut self) -> usize {
        self.nodes += 1;
        self.nodes - 1
    }

    fn link(&mut self, from: &[usize], to: usize) {
        self.edges.extend(from.iter().map(|&f| (f, to)));
    }

    /// Wires `block` after `preds` and returns its dangling exits.
    fn block(&mut self, block: &Block, preds: Vec<usize>) -> Vec<usize> {
        let mut exits = preds;
        for stmt in &block.stmts {
            exits = match &stmt.kind {
                StmtKind::If { then_block, else_block, .. } => {
                    let d = self.node();
                    self.link(&exits, d);
                    let mut out = self.block(then_block, vec![d]);
                    match else_block {
                        Some(b) => out.extend(self.block(b, vec![d])),
                        None => out.push(d),
                    }
                    let join = self.node();
                    self.link(&out, join);
                    vec![join]
                }
                StmtKind::While { body, .. } => {
                    let head = self.node();
                    self.link(&exits, head);
                    let back = self.block(body, vec![head]);
                    self.link(&back, head);
                    vec![head]
                }
                _ => {
                    let n = self.node();
                    self.link(&exits, n);
                    vec![n]
                }
            };
        }
        exits
    }

    pub fn of_function(f: &Function) -> Cfg {
        let mut g = Cfg::default();
        let entry = g.node();
        let exits = g.block(&f.body, vec![entry]);
        let ret = g.node();
        g.link(&exits, ret);
        g
    }

    pub fn complexity(&self) -> usize {
        self.edges.len() + 2 - self.nodes
    }
}
