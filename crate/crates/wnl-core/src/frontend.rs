//! Text frontend: expression grammar, problem-file format, printers and the
//! bundled example systems.
//!
//! Expression grammar:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := integer | identifier | 'D' | '(' expr ')'
//! ```
//!
//! Jet variables are written `u1`, `u2_x`, `u1_3x`; declared parameter names
//! are ordinary identifiers. `D` is the right-acting derivative and is legal
//! only inside operator matrix entries, which are polynomials in `D` with
//! coefficient expressions written to the left of each power. Products that
//! would commute `D` past a field-dependent factor are rejected rather than
//! silently reassociated, and so is division by anything containing `D`.
//!
//! Problem files are line oriented: a `[system]` section with `components`
//! and optional `parameters`, then one `[operator.NAME]` section per
//! operator with `local.<i>.<j>` entries, an optional rational coupling
//! matrix `tail.c` (rows split by `;`, entries by `,`) and tail vectors
//! `tail.w.<i>.<alpha>`. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::calculus::{FlowResult, LocalMatrix, LocalOp};
use crate::distform::{DistBracket, DistKernel};
use crate::jet::JetExpression;
use crate::multivector::CanonicalThreeVector;
use crate::op::WeaklyNonlocalOperator;
use crate::opform::SchoutenBracket;
use crate::poly::{Point, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrontendError {
    /// Lexical or grammatical error; line is 0 for standalone snippets.
    Parse { line: usize, message: String },
    /// Structurally well-formed input that violates a semantic rule.
    Validation { message: String },
}

impl fmt::Display for FrontendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrontendError::Parse { line: 0, message } => write!(f, "{}", message),
            FrontendError::Parse { line, message } => write!(f, "line {}: {}", line, message),
            FrontendError::Validation { message } => write!(f, "{}", message),
        }
    }
}

impl std::error::Error for FrontendError {}

fn parse_err(message: String) -> FrontendError {
    FrontendError::Parse { line: 0, message }
}

fn validation(message: String) -> FrontendError {
    FrontendError::Validation { message }
}

/// The `[system]` header: component count and declared parameter names.
/// Doubles as the symbol table for parsing and printing expressions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemDecl {
    pub components: u16,
    pub parameters: Vec<String>,
}

impl SystemDecl {
    pub fn new(components: u16) -> SystemDecl {
        SystemDecl { components, parameters: Vec::new() }
    }

    pub fn with_parameters(components: u16, parameters: Vec<String>) -> SystemDecl {
        SystemDecl { components, parameters }
    }

    fn parameter_index(&self, name: &str) -> Option<u16> {
        self.parameters.iter().position(|p| p == name).map(|i| i as u16)
    }

    fn parameter_name(&self, index: u16) -> String {
        self.parameters
            .get(index as usize)
            .cloned()
            .unwrap_or_else(|| format!("p{}", index))
    }
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    At,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, FrontendError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: BigInt = src[start..i].parse().expect("digit run parses");
                toks.push((Tok::Int(n), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(src[start..i].to_string()), start));
            }
            b'+' => {
                toks.push((Tok::Plus, start));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, start));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, start));
                i += 1;
            }
            b'/' => {
                toks.push((Tok::Slash, start));
                i += 1;
            }
            b'^' => {
                toks.push((Tok::Caret, start));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, start));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, start));
                i += 1;
            }
            b'@' => {
                toks.push((Tok::At, start));
                i += 1;
            }
            _ => {
                return Err(parse_err(format!(
                    "unexpected character `{}` at position {}",
                    &src[start..start + 1],
                    start
                )))
            }
        }
    }
    Ok(toks)
}

/// Interpret an identifier as a jet variable: `u<k>`, `u<k>_x`, `u<k>_<n>x`.
fn jet_ident(name: &str) -> Option<(u16, u16)> {
    let rest = name.strip_prefix('u')?;
    let (comp_str, order) = match rest.split_once('_') {
        None => (rest, 0),
        Some((c, "x")) => (c, 1),
        Some((c, suffix)) => {
            let digits = suffix.strip_suffix('x')?;
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            (c, digits.parse().ok()?)
        }
    };
    if comp_str.is_empty() || !comp_str.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let comp: u16 = comp_str.parse().ok()?;
    if comp == 0 {
        return None;
    }
    Some((comp, order))
}

fn point_ident(name: &str) -> Option<Point> {
    match name {
        "x" => Some(Point::X),
        "y" => Some(Point::Y),
        "z" => Some(Point::Z),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Parser

/// A parsed value: polynomial in the right-acting derivative, index = power.
/// Plain expressions are the degree-zero case.
type Entry = Vec<JetExpression>;

fn entry_degree(e: &Entry) -> usize {
    e.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
}

fn scalar(e: &Entry) -> Option<&JetExpression> {
    (entry_degree(e) == 0).then(|| &e[0])
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    sys: &'a SystemDecl,
    allow_d: bool,
    pointed: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(t, _)| t.clone());
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|&(_, p)| p).unwrap_or(usize::MAX)
    }

    fn fail(&self, message: impl Into<String>) -> FrontendError {
        let message = message.into();
        match self.toks.get(self.i) {
            Some(&(_, p)) => parse_err(format!("{} at position {}", message, p)),
            None => parse_err(format!("{} at end of input", message)),
        }
    }

    fn expr(&mut self) -> Result<Entry, FrontendError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    let rhs = self.term()?;
                    acc = entry_add(acc, rhs, false);
                }
                Some(Tok::Minus) => {
                    self.next();
                    let rhs = self.term()?;
                    acc = entry_add(acc, rhs, true);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Entry, FrontendError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    let pos = self.pos();
                    self.next();
                    let rhs = self.unary()?;
                    acc = entry_mul(acc, rhs, pos)?;
                }
                Some(Tok::Slash) => {
                    let pos = self.pos();
                    self.next();
                    let rhs = self.unary()?;
                    acc = entry_div(acc, rhs, pos)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Entry, FrontendError> {
        if self.peek() == Some(&Tok::Minus) {
            self.next();
            let v = self.unary()?;
            return Ok(v.into_iter().map(|c| -&c).collect());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Entry, FrontendError> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        let pos = self.pos();
        self.next();
        let negative = if self.peek() == Some(&Tok::Minus) {
            self.next();
            true
        } else {
            false
        };
        let n = match self.next() {
            Some(Tok::Int(n)) => n,
            _ => return Err(parse_err(format!("expected integer exponent after ^ at position {}", pos))),
        };
        let mag: i32 = n
            .try_into()
            .map_err(|_| parse_err(format!("exponent out of range at position {}", pos)))?;
        let exp = if negative { -mag } else { mag };
        if let Some(s) = scalar(&base) {
            if s.is_zero() && exp < 0 {
                return Err(parse_err(format!("zero raised to a negative power at position {}", pos)));
            }
            return Ok(vec![s.pow(exp)]);
        }
        // Operator base: only a bare D may be exponentiated.
        let is_bare_d = base.len() == 2 && base[0].is_zero() && base[1].is_one();
        if !is_bare_d {
            return Err(parse_err(format!(
                "only D itself may be raised to a power at position {}",
                pos
            )));
        }
        if exp < 0 {
            return Err(parse_err(format!("D cannot have a negative exponent at position {}", pos)));
        }
        let mut v = vec![JetExpression::zero(); exp as usize + 1];
        v[exp as usize] = JetExpression::one();
        Ok(v)
    }

    fn atom(&mut self) -> Result<Entry, FrontendError> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(vec![JetExpression::constant(BigRational::from_integer(n))]),
            Some(Tok::Ident(name)) => {
                if name == "D" {
                    if !self.allow_d {
                        return Err(parse_err(
                            "D is only legal inside operator matrix entries".to_string(),
                        ));
                    }
                    return Ok(vec![JetExpression::zero(), JetExpression::one()]);
                }
                if let Some((comp, order)) = jet_ident(&name) {
                    if comp > self.sys.components {
                        return Err(parse_err(format!(
                            "component u{} exceeds the declared {} components",
                            comp, self.sys.components
                        )));
                    }
                    let var = if self.pointed && self.peek() == Some(&Tok::At) {
                        self.next();
                        let pt = match self.next() {
                            Some(Tok::Ident(p)) => point_ident(&p)
                                .ok_or_else(|| parse_err(format!("unknown point `{}`", p)))?,
                            _ => return Err(parse_err("expected a point name after @".to_string())),
                        };
                        Var::pointed(pt, comp, order)
                    } else {
                        Var::jet(comp, order)
                    };
                    return Ok(vec![JetExpression::var(var)]);
                }
                if let Some(idx) = self.sys.parameter_index(&name) {
                    return Ok(vec![JetExpression::var(Var::param(idx))]);
                }
                Err(parse_err(format!("unknown identifier `{}`", name)))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(parse_err("missing closing parenthesis".to_string())),
                }
            }
            Some(t) => Err(parse_err(format!("unexpected token {:?}", t))),
            None => Err(parse_err("unexpected end of input".to_string())),
        }
    }
}

fn entry_add(mut a: Entry, b: Entry, subtract: bool) -> Entry {
    if b.len() > a.len() {
        a.resize(b.len(), JetExpression::zero());
    }
    for (k, c) in b.into_iter().enumerate() {
        a[k] = if subtract { &a[k] - &c } else { &a[k] + &c };
    }
    a
}

fn entry_mul(a: Entry, b: Entry, pos: usize) -> Result<Entry, FrontendError> {
    if entry_degree(&a) > 0 {
        let s = scalar(&b).ok_or_else(|| {
            parse_err(format!(
                "operator products must keep D rightmost (use D^k) at position {}",
                pos
            ))
        })?;
        if s.vars().iter().any(|v| v.is_jet() || v.is_pointed()) {
            return Err(parse_err(format!(
                "a field-dependent factor cannot multiply D from the right; \
                 write coefficients to the left at position {}",
                pos
            )));
        }
        return Ok(a.iter().map(|c| c * s).collect());
    }
    let s = a[0].clone();
    Ok(b.iter().map(|c| &s * c).collect())
}

fn entry_div(a: Entry, b: Entry, pos: usize) -> Result<Entry, FrontendError> {
    let s = scalar(&b)
        .ok_or_else(|| parse_err(format!("cannot divide by an expression containing D at position {}", pos)))?;
    if s.is_zero() {
        return Err(parse_err(format!("division by zero at position {}", pos)));
    }
    let inv = s.inverse();
    Ok(a.iter().map(|c| c * &inv).collect())
}

fn parse_entry_with(
    src: &str,
    sys: &SystemDecl,
    allow_d: bool,
    pointed: bool,
) -> Result<Entry, FrontendError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(parse_err("empty expression".to_string()));
    }
    let mut p = Parser { toks, i: 0, sys, allow_d, pointed };
    let v = p.expr()?;
    if p.i < p.toks.len() {
        return Err(p.fail("trailing input"));
    }
    Ok(v)
}

/// Parse a plain expression: no `D`, no point tags.
pub fn parse_expression(src: &str, sys: &SystemDecl) -> Result<JetExpression, FrontendError> {
    let v = parse_entry_with(src, sys, false, false)?;
    Ok(v.into_iter().next().expect("degree-zero entry"))
}

/// Parse an expression that may carry point tags (`u1_x@y`), as emitted by
/// the distribution-engine reports.
pub fn parse_pointed_expression(
    src: &str,
    sys: &SystemDecl,
) -> Result<JetExpression, FrontendError> {
    let v = parse_entry_with(src, sys, false, true)?;
    Ok(v.into_iter().next().expect("degree-zero entry"))
}

/// Parse one operator matrix entry: a polynomial in `D`.
pub fn parse_operator_entry(src: &str, sys: &SystemDecl) -> Result<LocalOp, FrontendError> {
    let v = parse_entry_with(src, sys, true, false)?;
    Ok(LocalOp::new(v))
}

// ---------------------------------------------------------------------------
// Printers (inverse of the grammar above; parse(print(e)) == e)

fn rational_str(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn var_str(v: Var, sys: &SystemDecl) -> String {
    if let Some(i) = v.param_index() {
        return sys.parameter_name(i);
    }
    if v.is_coord() {
        return v.point().expect("coord has a point").name().to_string();
    }
    let (c, o) = v.jet_key().expect("jet-like variable");
    let mut s = format!("u{}", c);
    match o {
        0 => {}
        1 => s.push_str("_x"),
        k => s.push_str(&format!("_{}x", k)),
    }
    if let Some(p) = v.point() {
        s.push('@');
        s.push_str(p.name());
    }
    s
}

fn monomial_str(factors: &[(Var, u32)], sys: &SystemDecl) -> String {
    factors
        .iter()
        .map(|&(v, e)| {
            if e == 1 {
                var_str(v, sys)
            } else {
                format!("{}^{}", var_str(v, sys), e)
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

fn poly_str(p: &crate::poly::Poly, sys: &SystemDecl) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (idx, (m, c)) in p.terms().iter().enumerate() {
        let neg = c.is_negative();
        let abs = if neg { -c } else { c.clone() };
        if idx == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mono = m.factors();
        if mono.is_empty() {
            out.push_str(&rational_str(&abs));
        } else if abs.is_one() {
            out.push_str(&monomial_str(mono, sys));
        } else {
            out.push_str(&rational_str(&abs));
            out.push('*');
            out.push_str(&monomial_str(mono, sys));
        }
    }
    out
}

pub fn print_expression(e: &JetExpression, sys: &SystemDecl) -> String {
    let num = poly_str(e.numerator(), sys);
    if e.denominator().is_one() {
        num
    } else {
        format!("({})/({})", num, poly_str(e.denominator(), sys))
    }
}

pub fn print_operator_entry(op: &LocalOp, sys: &SystemDecl) -> String {
    let degree = match op.degree() {
        None => return "0".to_string(),
        Some(d) => d,
    };
    let mut pieces = Vec::new();
    for k in (0..=degree).rev() {
        let c = op.coeff(k);
        if c.is_zero() {
            continue;
        }
        let d = match k {
            0 => String::new(),
            1 => "D".to_string(),
            k => format!("D^{}", k),
        };
        if d.is_empty() {
            pieces.push(print_expression(&c, sys));
        } else if c.is_one() {
            pieces.push(d);
        } else {
            pieces.push(format!("({})*{}", print_expression(&c, sys), d));
        }
    }
    pieces.join(" + ")
}

// ---------------------------------------------------------------------------
// Problem files

#[derive(Debug, Clone)]
pub struct NamedOperator {
    pub name: String,
    pub operator: WeaklyNonlocalOperator,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub system: SystemDecl,
    pub operators: Vec<NamedOperator>,
}

impl Problem {
    pub fn operator(&self, name: &str) -> Option<&WeaklyNonlocalOperator> {
        self.operators.iter().find(|o| o.name == name).map(|o| &o.operator)
    }

    pub fn operator_names(&self) -> Vec<&str> {
        self.operators.iter().map(|o| o.name.as_str()).collect()
    }
}

fn ident_ok(name: &str) -> bool {
    let mut bytes = name.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

struct RawOperator {
    name: String,
    line: usize,
    entries: BTreeMap<(u16, u16), (String, usize)>,
    c_rows: Option<(String, usize)>,
    w_entries: BTreeMap<(u16, usize), (String, usize)>,
}

pub fn parse_problem(src: &str) -> Result<Problem, FrontendError> {
    enum Section {
        None,
        System,
        Operator(usize),
    }
    let mut section = Section::None;
    let mut components: Option<(u16, usize)> = None;
    let mut parameters: Vec<String> = Vec::new();
    let mut raw_ops: Vec<RawOperator> = Vec::new();

    let at = |line: usize, message: String| FrontendError::Parse { line, message };

    for (idx, raw_line) in src.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw_line.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw_line.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| at(lineno, "unterminated section header".to_string()))?
                .trim();
            if inner == "system" {
                section = Section::System;
            } else if let Some(name) = inner.strip_prefix("operator.") {
                if !ident_ok(name) {
                    return Err(at(lineno, format!("bad operator name `{}`", name)));
                }
                if raw_ops.iter().any(|o| o.name == name) {
                    return Err(at(lineno, format!("duplicate operator `{}`", name)));
                }
                raw_ops.push(RawOperator {
                    name: name.to_string(),
                    line: lineno,
                    entries: BTreeMap::new(),
                    c_rows: None,
                    w_entries: BTreeMap::new(),
                });
                section = Section::Operator(raw_ops.len() - 1);
            } else {
                return Err(at(lineno, format!("unknown section `[{}]`", inner)));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(lineno, "expected `key = value`".to_string()))?;
        let key = key.trim();
        let value = value.trim();
        match section {
            Section::None => {
                return Err(at(lineno, "content before the first section header".to_string()))
            }
            Section::System => match key {
                "components" => {
                    if components.is_some() {
                        return Err(at(lineno, "duplicate `components`".to_string()));
                    }
                    let n: u16 = value
                        .parse()
                        .map_err(|_| at(lineno, format!("bad component count `{}`", value)))?;
                    if n == 0 {
                        return Err(at(lineno, "component count must be positive".to_string()));
                    }
                    components = Some((n, lineno));
                }
                "parameters" => {
                    for piece in value.split(',') {
                        let name = piece.trim();
                        if name.is_empty() {
                            continue;
                        }
                        if !ident_ok(name)
                            || name == "D"
                            || point_ident(name).is_some()
                            || jet_ident(name).is_some()
                        {
                            return Err(at(lineno, format!("reserved or malformed parameter name `{}`", name)));
                        }
                        if parameters.iter().any(|p| p == name) {
                            return Err(at(lineno, format!("duplicate parameter `{}`", name)));
                        }
                        parameters.push(name.to_string());
                    }
                }
                other => return Err(at(lineno, format!("unknown system key `{}`", other))),
            },
            Section::Operator(op_idx) => {
                let op = &mut raw_ops[op_idx];
                let parts: Vec<&str> = key.split('.').collect();
                match parts.as_slice() {
                    ["local", i, j] => {
                        let i: u16 = i
                            .parse()
                            .map_err(|_| at(lineno, format!("bad row index `{}`", i)))?;
                        let j: u16 = j
                            .parse()
                            .map_err(|_| at(lineno, format!("bad column index `{}`", j)))?;
                        if op.entries.insert((i, j), (value.to_string(), lineno)).is_some() {
                            return Err(at(lineno, format!("duplicate entry local.{}.{}", i, j)));
                        }
                    }
                    ["tail", "c"] => {
                        if op.c_rows.is_some() {
                            return Err(at(lineno, "duplicate tail.c".to_string()));
                        }
                        op.c_rows = Some((value.to_string(), lineno));
                    }
                    ["tail", "w", i, alpha] => {
                        let i: u16 = i
                            .parse()
                            .map_err(|_| at(lineno, format!("bad component index `{}`", i)))?;
                        let alpha: usize = alpha
                            .parse()
                            .map_err(|_| at(lineno, format!("bad tail column index `{}`", alpha)))?;
                        if op
                            .w_entries
                            .insert((i, alpha), (value.to_string(), lineno))
                            .is_some()
                        {
                            return Err(at(lineno, format!("duplicate entry tail.w.{}.{}", i, alpha)));
                        }
                    }
                    _ => return Err(at(lineno, format!("unknown operator key `{}`", key))),
                }
            }
        }
    }

    let (n, _) = components
        .ok_or_else(|| validation("missing [system] components declaration".to_string()))?;
    let sys = SystemDecl { components: n, parameters };

    let mut operators = Vec::new();
    for raw in raw_ops {
        let op = build_operator(raw, &sys)?;
        operators.push(op);
    }
    Ok(Problem { system: sys, operators })
}

fn build_operator(raw: RawOperator, sys: &SystemDecl) -> Result<NamedOperator, FrontendError> {
    let n = sys.components;
    let relocate = |e: FrontendError, line: usize| match e {
        FrontendError::Parse { line: 0, message } => FrontendError::Parse { line, message },
        other => other,
    };
    let mut local = LocalMatrix::zero(n as usize);
    for (&(i, j), (text, line)) in &raw.entries {
        if i == 0 || i > n || j == 0 || j > n {
            return Err(FrontendError::Parse {
                line: *line,
                message: format!("entry local.{}.{} outside the {}x{} matrix", i, j, n, n),
            });
        }
        let entry = parse_operator_entry(text, sys).map_err(|e| relocate(e, *line))?;
        local.set_entry(i as usize - 1, j as usize - 1, entry);
    }

    let mut c: Vec<Vec<JetExpression>> = Vec::new();
    if let Some((text, line)) = &raw.c_rows {
        for row_text in text.split(';') {
            let mut row = Vec::new();
            for cell in row_text.split(',') {
                let e = parse_expression(cell.trim(), sys).map_err(|e| relocate(e, *line))?;
                if e.as_rational().is_none() {
                    return Err(FrontendError::Parse {
                        line: *line,
                        message: "tail.c entries must be rational constants".to_string(),
                    });
                }
                row.push(e);
            }
            c.push(row);
        }
        let t = c.len();
        if c.iter().any(|row| row.len() != t) {
            return Err(FrontendError::Parse {
                line: *line,
                message: "tail.c must be a square matrix".to_string(),
            });
        }
    }
    let t = c.len();

    if t == 0 && !raw.w_entries.is_empty() {
        let line = raw.w_entries.values().next().map(|&(_, l)| l).unwrap_or(raw.line);
        return Err(FrontendError::Parse {
            line,
            message: "tail.w entries require a tail.c coupling matrix".to_string(),
        });
    }
    let mut w = vec![vec![JetExpression::zero(); n as usize]; t];
    for (&(i, alpha), (text, line)) in &raw.w_entries {
        if i == 0 || i > n || alpha == 0 || alpha > t {
            return Err(FrontendError::Parse {
                line: *line,
                message: format!(
                    "tail.w.{}.{} outside {} components / {} tail columns",
                    i, alpha, n, t
                ),
            });
        }
        w[alpha - 1][i as usize - 1] =
            parse_expression(text, sys).map_err(|e| relocate(e, *line))?;
    }

    let operator = if t == 0 {
        WeaklyNonlocalOperator::local_only(&raw.name, local)
    } else {
        WeaklyNonlocalOperator::new(&raw.name, local, c, w)
    }
    .map_err(|e| validation(format!("operator {}: {}", raw.name, e)))?;
    Ok(NamedOperator { name: raw.name, operator })
}

// ---------------------------------------------------------------------------
// Bundled examples

pub const EXAMPLES: &[(&str, &str)] = &[
    ("mkdv", include_str!("examples/mkdv.wnl")),
    ("heisenberg", include_str!("examples/heisenberg.wnl")),
    ("wdvv", include_str!("examples/wdvv.wnl")),
];

pub fn bundled_example(name: &str) -> Option<&'static str> {
    EXAMPLES.iter().find(|(n, _)| *n == name).map(|&(_, src)| src)
}

// ---------------------------------------------------------------------------
// Verdict reports

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LocalTerm {
    pub i: u16,
    pub j: u16,
    pub k: u16,
    pub m: u16,
    pub n: u16,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SingleTerm {
    pub a: u8,
    pub column: usize,
    pub j: u16,
    pub h: u16,
    pub i: u16,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DoubleTerm {
    pub a: u8,
    pub b: u8,
    pub alpha: usize,
    pub beta: usize,
    pub i: u16,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct OpReport {
    pub engine: String,
    pub verdict: String,
    pub local_terms: Vec<LocalTerm>,
    pub single_nonlocal_terms: Vec<SingleTerm>,
    pub double_nonlocal_terms: Vec<DoubleTerm>,
    pub timing_ms: u64,
}

pub fn op_report(bracket: &SchoutenBracket, sys: &SystemDecl, timing_ms: u64) -> OpReport {
    let cv = &bracket.canonical;
    OpReport {
        engine: "op".to_string(),
        verdict: if cv.is_zero() { "zero" } else { "nonzero" }.to_string(),
        local_terms: cv
            .local
            .iter()
            .map(|(&(i, j, k, m, n), c)| LocalTerm {
                i,
                j,
                k,
                m,
                n,
                coeff: print_expression(c, sys),
            })
            .collect(),
        single_nonlocal_terms: cv
            .single
            .iter()
            .map(|(&(a, column, j, h, i), c)| SingleTerm {
                a,
                column,
                j,
                h,
                i,
                coeff: print_expression(c, sys),
            })
            .collect(),
        double_nonlocal_terms: cv
            .double
            .iter()
            .map(|(&(a, b, alpha, beta, i), c)| DoubleTerm {
                a,
                b,
                alpha,
                beta,
                i,
                coeff: print_expression(c, sys),
            })
            .collect(),
        timing_ms,
    }
}

/// Kernel-basis term families: two deltas rooted at x (the local family,
/// reported through the delta orders m and n), one step with one delta,
/// and two steps. Kernel strings use the same notation the engine prints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DistLocalTerm {
    pub i: u16,
    pub j: u16,
    pub k: u16,
    pub m: u16,
    pub n: u16,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DistSingleTerm {
    pub i: u16,
    pub j: u16,
    pub k: u16,
    pub nu: String,
    pub delta: String,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DistDoubleTerm {
    pub i: u16,
    pub j: u16,
    pub k: u16,
    pub nu1: String,
    pub nu2: String,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DistReport {
    pub engine: String,
    pub verdict: String,
    pub local_terms: Vec<DistLocalTerm>,
    pub single_nonlocal_terms: Vec<DistSingleTerm>,
    pub double_nonlocal_terms: Vec<DistDoubleTerm>,
    pub timing_ms: u64,
}

pub fn dist_report(bracket: &DistBracket, sys: &SystemDecl, timing_ms: u64) -> DistReport {
    let mut local_terms = Vec::new();
    let mut single = Vec::new();
    let mut double = Vec::new();
    for (&(i, j, k, k1, k2), c) in &bracket.terms {
        let coeff = print_expression(c, sys);
        match (k1, k2) {
            (DistKernel::Nu { .. }, DistKernel::Nu { .. }) => double.push(DistDoubleTerm {
                i,
                j,
                k,
                nu1: k1.to_string(),
                nu2: k2.to_string(),
                coeff,
            }),
            (DistKernel::Nu { .. }, DistKernel::Delta { .. }) => single.push(DistSingleTerm {
                i,
                j,
                k,
                nu: k1.to_string(),
                delta: k2.to_string(),
                coeff,
            }),
            (
                DistKernel::Delta { lo: Point::X, hi: Point::Y, order: m },
                DistKernel::Delta { lo: Point::X, hi: Point::Z, order: n },
            ) => local_terms.push(DistLocalTerm { i, j, k, m, n, coeff }),
            // storage sorts the pair and canonical delta-delta terms are
            // rooted at x, so nothing else can reach a report
            _ => unreachable!("non-canonical kernel pair in a canonical bracket"),
        }
    }
    DistReport {
        engine: "dist".to_string(),
        verdict: if bracket.is_zero() { "zero" } else { "nonzero" }.to_string(),
        local_terms,
        single_nonlocal_terms: single,
        double_nonlocal_terms: double,
        timing_ms,
    }
}

/// Text rendering of a canonical kernel-form bracket; one line per term,
/// same coefficient strings as the JSON report.
pub fn render_dist(bracket: &DistBracket, sys: &SystemDecl) -> String {
    if bracket.is_zero() {
        return "0\n".to_string();
    }
    let mut out = String::new();
    for (&(i, j, k, k1, k2), c) in &bracket.terms {
        out.push_str(&format!(
            "({},{},{}) {}*{}: {}\n",
            i,
            j,
            k,
            k1,
            k2,
            print_expression(c, sys)
        ));
    }
    out
}

/// Text rendering of a canonical three-vector; one line per term, same
/// coefficient strings as the JSON report.
pub fn render_canonical(cv: &CanonicalThreeVector, sys: &SystemDecl) -> String {
    if cv.is_zero() {
        return "0\n".to_string();
    }
    let mut out = String::new();
    for (&(i, j, k, m, n), c) in &cv.local {
        out.push_str(&format!(
            "local i={} j={} k={} m={} n={}: {}\n",
            i,
            j,
            k,
            m,
            n,
            print_expression(c, sys)
        ));
    }
    for (&(a, column, j, h, i), c) in &cv.single {
        out.push_str(&format!(
            "single a={} col={} j={} h={} i={}: {}\n",
            a,
            column,
            j,
            h,
            i,
            print_expression(c, sys)
        ));
    }
    for (&(a, b, alpha, beta, i), c) in &cv.double {
        out.push_str(&format!(
            "double a={} b={} alpha={} beta={} i={}: {}\n",
            a,
            b,
            alpha,
            beta,
            i,
            print_expression(c, sys)
        ));
    }
    out
}

/// Text rendering of a Hamiltonian flow, one `u<i>_t = ...` line per
/// component; unresolved tail contributions stay as explicit Dxinv terms.
pub fn render_flow(flow: &FlowResult, sys: &SystemDecl) -> String {
    let mut out = String::new();
    for (idx, comp) in flow.components.iter().enumerate() {
        out.push_str(&format!("u{}_t = {}", idx + 1, print_expression(&comp.local, sys)));
        for (outer, integrand) in &comp.nonlocal {
            out.push_str(&format!(
                " + ({})*Dxinv({})",
                print_expression(outer, sys),
                print_expression(integrand, sys)
            ));
        }
        out.push('\n');
    }
    out
}
