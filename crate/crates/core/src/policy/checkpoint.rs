//! Plain-text policy checkpoints. Floats use Rust's shortest round-trip
//! formatting, so save then load is exact.

use super::{rule_table_hash, Direction, GrammarPolicy, LoraAdapter, PolicyError, ROWS};
use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_HEADER: &str = "feedtrans-policy v1";

fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    out.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), PolicyError> {
        self.lines.next().map(|(i, l)| (i + 1, l)).ok_or_else(|| bad("unexpected end of file"))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, PolicyError> {
        let (no, line) = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(&format!("line {no}: expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f64>, PolicyError> {
        let dims = self.keyed(name)?;
        let [r, c] = dims[..] else { return Err(bad(&format!("`{name}` needs two dimensions"))) };
        let (r, c): (usize, usize) =
            (r.parse().map_err(|_| bad("bad row count"))?, c.parse().map_err(|_| bad("bad column count"))?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (no, line) = self.next()?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(&format!("line {no}: bad number")))?;
            if row.len() != c {
                return Err(bad(&format!("line {no}: expected {c} values")));
            }
            data.extend(row);
        }
        Array2::from_shape_vec((r, c), data).map_err(|e| bad(&e.to_string()))
    }
}

fn bad(msg: &str) -> PolicyError {
    PolicyError::Checkpoint(msg.to_string())
}

impl GrammarPolicy {
    pub fn to_checkpoint_string(&self) -> String {
        let mut out =
            format!("{CHECKPOINT_HEADER}\ndirection {}\nrule-table {}\n", self.direction.as_str(), rule_table_hash());
        write_matrix(&mut out, "base", &self.base);
        match &self.lora {
            None => out.push_str("lora none\n"),
            Some(l) => {
                out.push_str(&format!("lora {} {:?}\n", l.rank, l.alpha));
                write_matrix(&mut out, "a", &l.a);
                write_matrix(&mut out, "b", &l.b);
            }
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, PolicyError> {
        let mut r = Reader { lines: text.lines().enumerate() };
        if r.next()?.1 != CHECKPOINT_HEADER {
            return Err(bad("unknown header"));
        }
        let direction = match r.keyed("direction")?[..] {
            ["forward"] => Direction::Forward,
            ["backward"] => Direction::Backward,
            _ => return Err(bad("unknown direction")),
        };
        let hash = r.keyed("rule-table")?;
        if hash != [rule_table_hash().as_str()] {
            return Err(bad("rule table hash mismatch"));
        }
        let base = r.matrix("base")?;
        if base.dim() != (ROWS, super::rule_total()) {
            return Err(bad("base matrix has the wrong shape"));
        }
        let lora = match r.keyed("lora")?[..] {
            ["none"] => None,
            [rank, alpha] => {
                let rank: usize = rank.parse().map_err(|_| bad("bad rank"))?;
                let alpha: f64 = alpha.parse().map_err(|_| bad("bad alpha"))?;
                let a = r.matrix("a")?;
                let b = r.matrix("b")?;
                if a.dim() != (base.nrows(), rank) || b.dim() != (rank, base.ncols()) {
                    return Err(bad("adapter shapes do not match"));
                }
                Some(LoraAdapter { a, b, rank, alpha })
            }
            _ => return Err(bad("bad lora line")),
        };
        Ok(GrammarPolicy { direction, base, lora })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_checkpoint_string().as_bytes())?;
        tmp.persist(path).map_err(|e| PolicyError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

/// SHA-256 of the checkpoint text.
pub fn checkpoint_hash(policy: &GrammarPolicy) -> String {
    hex::encode(Sha256::digest(policy.to_checkpoint_string().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::CorruptConfig;

    #[test]
    fn round_trip_is_exact() {
        let p = GrammarPolicy::uniform(Direction::Backward).corrupted(&CorruptConfig::default(), 3).unwrap();
        let back = GrammarPolicy::from_checkpoint_str(&p.to_checkpoint_string()).unwrap();
        assert_eq!(back, p);
        let w = p.apply_lora(4, 8.0, 1).unwrap();
        let back = GrammarPolicy::from_checkpoint_str(&w.to_checkpoint_string()).unwrap();
        assert_eq!(back, w);
        assert_eq!(checkpoint_hash(&back), checkpoint_hash(&w));
    }

    #[test]
    fn rejects_other_rule_tables() {
        let text = GrammarPolicy::uniform(Direction::Forward).to_checkpoint_string();
        let tampered = text.replace(&rule_table_hash(), "00");
        assert!(GrammarPolicy::from_checkpoint_str(&tampered).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fwd.ckpt");
        let p = GrammarPolicy::faithful(Direction::Forward, 2.5);
        p.save(&path).unwrap();
        assert_eq!(GrammarPolicy::load(&path).unwrap(), p);
    }
}
