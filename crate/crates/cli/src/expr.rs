//! Function and space expressions accepted on the command line.
//!
//! ```text
//! FN    := affine:A,B | pl:PATH | sqrt:N | sq:N | log1p:N | id
//! SPACE := lattice(n,R) | csv(PATH) | product(SPACE,...) | transform(SPACE,FN) | log1p(SPACE)
//! ```

use std::fmt;
use std::path::Path;

use coarse_forge::flatten::FlatteningSchedule;
use coarse_forge::{MetricSpace, PiecewiseLinearFn};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Zero-based character offset into the expression.
    pub pos: usize,
    pub reason: String,
}

impl ParseError {
    fn new(pos: usize, reason: impl Into<String>) -> Self {
        Self { pos, reason: reason.into() }
    }

    fn shifted(mut self, by: usize) -> Self {
        self.pos += by;
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at position {}: {}", self.pos, self.reason)
    }
}

impl std::error::Error for ParseError {}

fn number(s: &str, pos: usize) -> Result<f64, ParseError> {
    let t = s.trim();
    let lead = s.len() - s.trim_start().len();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseError::new(pos + lead, format!("expected a number, found {t:?}")))
}

fn node_count(s: &str, pos: usize) -> Result<usize, ParseError> {
    let t = s.trim();
    match t.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(ParseError::new(pos, format!("expected a positive node count, found {t:?}"))),
    }
}

/// Reads a function from JSON: either a bare function or a schedule, whose `c` is used.
pub fn load_function(path: &Path) -> Result<PiecewiseLinearFn, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    if let Ok(f) = serde_json::from_str::<PiecewiseLinearFn>(&text) {
        return Ok(f);
    }
    FlatteningSchedule::from_json(&text)
        .map(|s| s.c().clone())
        .map_err(|e| format!("{} is neither a function nor a schedule: {e}", path.display()))
}

pub fn parse_fn(expr: &str) -> Result<PiecewiseLinearFn, ParseError> {
    let trimmed = expr.trim();
    let lead = expr.len() - expr.trim_start().len();
    if trimmed == "id" {
        return Ok(PiecewiseLinearFn::identity());
    }
    let Some(colon) = trimmed.find(':') else {
        return Err(ParseError::new(lead, format!("unknown function {trimmed:?}; expected affine:, pl:, sqrt:, sq:, log1p: or id")));
    };
    let (head, body) = (&trimmed[..colon], &trimmed[colon + 1..]);
    let at = lead + colon + 1;
    let build_err = |e: coarse_forge::Error| ParseError::new(at, e.to_string());
    match head {
        "affine" => {
            let Some(comma) = body.find(',') else {
                return Err(ParseError::new(at + body.len(), "affine needs two numbers A,B"));
            };
            let a = number(&body[..comma], at)?;
            let b = number(&body[comma + 1..], at + comma + 1)?;
            PiecewiseLinearFn::affine(a, b).map_err(build_err)
        }
        "pl" => {
            if body.trim().is_empty() {
                return Err(ParseError::new(at, "pl needs a path"));
            }
            load_function(Path::new(body.trim())).map_err(|e| ParseError::new(at, e))
        }
        "sqrt" => PiecewiseLinearFn::chordal(node_count(body, at)?, f64::sqrt).map_err(build_err),
        "sq" => PiecewiseLinearFn::chordal(node_count(body, at)?, |x| x * x).map_err(build_err),
        "log1p" => PiecewiseLinearFn::chordal(node_count(body, at)?, f64::ln_1p).map_err(build_err),
        other => Err(ParseError::new(lead, format!("unknown function kind {other:?}"))),
    }
}

struct SpaceParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> SpaceParser<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(0, char::len_utf8);
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(ParseError::new(self.pos, format!("expected {c:?}")))
        }
    }

    fn ident(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
        self.pos += len;
        &self.src[start..start + len]
    }

    /// Raw text up to the `)` closing the current call, which is consumed.
    fn raw_until_close(&mut self) -> Result<(usize, &'a str), ParseError> {
        let start = self.pos;
        let mut depth = 0usize;
        for (i, c) in self.src[start..].char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => {
                    self.pos = start + i + 1;
                    return Ok((start, &self.src[start..start + i]));
                }
                ')' => depth -= 1,
                _ => {}
            }
        }
        Err(ParseError::new(self.src.len(), "missing ')'"))
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest.find(|c: char| !(c.is_ascii_digit() || c == '-')).unwrap_or(rest.len());
        self.pos += len;
        rest[..len].parse().map_err(|_| ParseError::new(start, "expected an integer"))
    }

    fn space(&mut self) -> Result<MetricSpace, ParseError> {
        let start = { self.skip_ws(); self.pos };
        let name = self.ident();
        self.expect('(')?;
        let space_err = |e: coarse_forge::Error| ParseError::new(start, e.to_string());
        let space = match name {
            "lattice" => {
                let n = self.integer()?;
                self.expect(',')?;
                let r = self.integer()?;
                self.expect(')')?;
                if n < 1 {
                    return Err(ParseError::new(start, "lattice dimension must be positive"));
                }
                MetricSpace::lattice(n as usize, r).map_err(space_err)?
            }
            "csv" => {
                let (at, path) = self.raw_until_close()?;
                let e = coarse_forge::ExplicitSpace::from_csv_path(path.trim()).map_err(|e| ParseError::new(at, e.to_string()))?;
                MetricSpace::Explicit(e)
            }
            "product" => {
                let mut factors = vec![self.space()?];
                loop {
                    self.skip_ws();
                    if self.src[self.pos..].starts_with(',') {
                        self.pos += 1;
                        factors.push(self.space()?);
                    } else {
                        break;
                    }
                }
                self.expect(')')?;
                MetricSpace::sup_product(factors).map_err(space_err)?
            }
            "transform" => {
                let base = self.space()?;
                self.expect(',')?;
                let (at, body) = self.raw_until_close()?;
                let f = parse_fn(body).map_err(|e| e.shifted(at))?;
                MetricSpace::transformed(base, f)
            }
            "log1p" => {
                let base = self.space()?;
                self.expect(')')?;
                MetricSpace::log_transformed(base)
            }
            "" => return Err(ParseError::new(start, "expected a space")),
            other => {
                return Err(ParseError::new(
                    start,
                    format!("unknown space {other:?}; expected lattice, csv, product, transform or log1p"),
                ))
            }
        };
        Ok(space)
    }
}

pub fn parse_space(expr: &str) -> Result<MetricSpace, ParseError> {
    let mut p = SpaceParser { src: expr, pos: 0 };
    let space = p.space()?;
    p.skip_ws();
    if p.pos != expr.len() {
        return Err(ParseError::new(p.pos, "unexpected trailing input"));
    }
    Ok(space)
}
