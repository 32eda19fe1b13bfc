//! Text checkpoints of named tensors plus a free-form metadata block.
//!
//! ```text
//! edgesched-params 1
//! meta <key> <value ...>
//! tensors <count>
//! tensor <name> <rows> <cols> <values ...>
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::textio::{expect_header, push_f64s, Lines};

const MAGIC: &str = "edgesched-params";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(char::is_whitespace) && !value.contains('\n'));
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Metadata value that must be present.
    pub fn require(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::config(format!("checkpoint.{key}"), "missing from checkpoint metadata"))
    }

    pub fn push_params(&mut self, prefix: &str, params: &ParamSet) {
        for (n, t) in params.names().iter().zip(params.tensors()) {
            self.tensors.push((format!("{prefix}/{n}"), t.clone()));
        }
    }

    /// Overwrites `params` with the tensors stored under `prefix`, checking
    /// names and shapes.
    pub fn restore_params(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        let stored: Vec<&(String, Tensor)> = self
            .tensors
            .iter()
            .filter(|(n, _)| n.strip_prefix(prefix).is_some_and(|r| r.starts_with('/')))
            .collect();
        if stored.len() != params.len() {
            return Err(Error::DimensionMismatch {
                what: format!("tensor count under `{prefix}`"),
                expected: params.len(),
                found: stored.len(),
            });
        }
        let names = params.names().to_vec();
        for (i, ((name, t), want)) in stored.into_iter().zip(&names).enumerate() {
            if name[prefix.len() + 1..] != *want {
                return Err(Error::config(
                    format!("checkpoint.{name}"),
                    format!("expected tensor `{prefix}/{want}`"),
                ));
            }
            let p = params.get_mut(i);
            if p.shape() != t.shape() {
                return Err(Error::DimensionMismatch {
                    what: format!("tensor `{name}` ({}x{} vs {}x{})", p.rows, p.cols, t.rows, t.cols),
                    expected: p.len(),
                    found: t.len(),
                });
            }
            p.data.copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        let _ = writeln!(s, "tensors {}", self.tensors.len());
        for (n, t) in &self.tensors {
            let _ = write!(s, "tensor {n} {} {}", t.rows, t.cols);
            push_f64s(&mut s, &t.data);
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut lines = Lines::new(src);
        expect_header(&mut lines, MAGIC, VERSION)?;
        let mut ck = Checkpoint::new();
        let count = loop {
            let line = lines.expect("`meta` or `tensors`")?;
            let mut f = line.fields();
            match f.word("record kind")? {
                "meta" => {
                    let key = f.word("meta key")?.to_string();
                    let value = f.rest().join(" ");
                    ck.meta.push((key, value));
                }
                "tensors" => {
                    let n = f.usize("tensor count")?;
                    f.finish()?;
                    break n;
                }
                other => return Err(line.error(format!("expected `meta` or `tensors`, found `{other}`"))),
            }
        };
        for _ in 0..count {
            let line = lines.expect("`tensor` line")?;
            let mut f = line.fields();
            f.keyword("tensor")?;
            let name = f.word("tensor name")?.to_string();
            let rows = f.usize("rows")?;
            let cols = f.usize("cols")?;
            let data = f.f64s(rows * cols, "tensor value")?;
            f.finish()?;
            ck.tensors.push((name, Tensor { rows, cols, data }));
        }
        let line = lines.expect("`end`")?;
        if line.text.trim() != "end" {
            return Err(line.error("expected `end` after the declared tensors"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
