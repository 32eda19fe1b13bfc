//! Line-oriented text records shared by the trace, demo and checkpoint
//! formats. Floats are written with Rust's shortest round-trip formatting,
//! so reloading reproduces every value bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub fn push_f64s(out: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(out, " {v:?}");
    }
}

pub fn push_bools(out: &mut String, values: &[bool]) {
    out.push(' ');
    out.extend(values.iter().map(|&b| if b { '1' } else { '0' }));
}

/// Cursor over the lines of a document, tracking byte offsets for errors.
pub struct Lines<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub fn new(src: &'a str) -> Self {
        Lines { src, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    /// Next non-empty line, or a parse error at end of input naming `what`.
    pub fn expect(&mut self, what: &str) -> Result<Line<'a>> {
        self.next().ok_or_else(|| Error::Parse {
            offset: self.src.len(),
            reason: format!("unexpected end of input, expected {what}"),
        })
    }

    pub fn at_end(&mut self) -> bool {
        let rest = &self.src[self.pos..];
        rest.trim().is_empty()
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = Line<'a>;

    fn next(&mut self) -> Option<Line<'a>> {
        while self.pos < self.src.len() {
            let rest = &self.src[self.pos..];
            let len = rest.find('\n').map_or(rest.len(), |i| i + 1);
            let offset = self.pos;
            self.pos += len;
            let text = rest[..len].trim_end_matches(['\n', '\r']);
            if !text.trim().is_empty() {
                return Some(Line { offset, text });
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Line<'a> {
    pub offset: usize,
    pub text: &'a str,
}

impl<'a> Line<'a> {
    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset,
            reason: reason.into(),
        }
    }

    pub fn fields(&self) -> Fields<'a> {
        Fields {
            line: *self,
            iter: self.text.split_ascii_whitespace(),
        }
    }
}

pub struct Fields<'a> {
    line: Line<'a>,
    iter: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Fields<'a> {
    pub fn word(&mut self, what: &str) -> Result<&'a str> {
        self.iter.next().ok_or_else(|| self.line.error(format!("missing {what}")))
    }

    pub fn keyword(&mut self, expected: &str) -> Result<()> {
        let w = self.word(expected)?;
        if w != expected {
            return Err(self.line.error(format!("expected `{expected}`, found `{w}`")));
        }
        Ok(())
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.line.error(format!("invalid float `{w}` for {what}")))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.line.error(format!("invalid integer `{w}` for {what}")))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.line.error(format!("invalid integer `{w}` for {what}")))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }

    pub fn bools(&mut self, n: usize, what: &str) -> Result<Vec<bool>> {
        let w = self.word(what)?;
        if w.len() != n {
            return Err(self.line.error(format!("{what}: expected {n} flags, found {}", w.len())));
        }
        w.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(self.line.error(format!("{what}: invalid flag `{c}`"))),
            })
            .collect()
    }

    pub fn rest(&mut self) -> Vec<&'a str> {
        self.iter.by_ref().collect()
    }

    pub fn finish(mut self) -> Result<()> {
        match self.iter.next() {
            None => Ok(()),
            Some(w) => Err(self.line.error(format!("unexpected trailing field `{w}`"))),
        }
    }
}

/// Checks a `<magic> <version>` header line.
pub fn expect_header(lines: &mut Lines<'_>, magic: &str, version: u32) -> Result<()> {
    let line = lines.expect("header")?;
    let mut f = line.fields();
    let found_magic = f.word("format name")?;
    let found_version = f.word("format version")?;
    let expected = format!("{magic} {version}");
    let found = format!("{found_magic} {found_version}");
    if found != expected {
        return Err(Error::Incompatible { expected, found });
    }
    Ok(())
}
