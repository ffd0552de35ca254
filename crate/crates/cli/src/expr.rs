//! Surface syntax for elements and pattern matrices.
//!
//! Elements:
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := scalar | 'id' | 'e[' nat '](' nat ',' nat ')' | '(' expr ')'
//! scalar := ['-'] nat ['/' nat]
//! ```
//! Pattern matrices use the same `expr`/`term` layers with the atoms
//! `Id`, `z`, `y<k>`, `E(r,c)`, `fam(a,b,c,d,s)`, `df(f1,…)` and `af(f1,…)`.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use locmat::minf::{self, AffineFamily, PatternMatrix};
use locmat::{Element, FieldSpec, Scalar, SiteShape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Eval(#[from] locmat::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprAst {
    Scalar { num: BigInt, den: BigInt },
    Id,
    Unit { site: usize, p: usize, q: usize },
    Sum(Box<ExprAst>, Box<ExprAst>),
    Difference(Box<ExprAst>, Box<ExprAst>),
    Product(Box<ExprAst>, Box<ExprAst>),
    ScalarMultiple(Box<ExprAst>, Box<ExprAst>),
    Group(Box<ExprAst>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Nat(BigInt),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str, line: usize, column: usize) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let (mut ln, mut col) = (line, column);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (ln, col);
        if c == '\n' {
            ln += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let s: String = chars[i..]
                .iter()
                .take_while(|c| c.is_ascii_digit())
                .collect();
            i += s.len();
            col += s.len();
            let v = s.parse::<BigInt>().expect("digits");
            out.push(Token {
                tok: Tok::Nat(v),
                line: tl,
                column: tc,
            });
        } else if c.is_ascii_alphabetic() {
            let s: String = chars[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            i += s.len();
            col += s.len();
            out.push(Token {
                tok: Tok::Ident(s),
                line: tl,
                column: tc,
            });
        } else if "+-*/()[],".contains(c) {
            i += 1;
            col += 1;
            out.push(Token {
                tok: Tok::Sym(c),
                line: tl,
                column: tc,
            });
        } else {
            return Err(SyntaxError {
                line: tl,
                column: tc,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    out.push(Token {
        tok: Tok::End,
        line: ln,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str, line: usize, column: usize) -> Result<Self, SyntaxError> {
        Ok(Parser {
            toks: lex(text, line, column)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        let t = &self.toks[self.pos];
        SyntaxError {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn nat(&mut self) -> Result<BigInt, SyntaxError> {
        match self.peek().clone() {
            Tok::Nat(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.error("expected a natural number")),
        }
    }

    fn small_nat(&mut self) -> Result<usize, SyntaxError> {
        let v = self.nat()?;
        v.to_usize().ok_or_else(|| self.error("number too large"))
    }

    fn int(&mut self) -> Result<i64, SyntaxError> {
        let neg = *self.peek() == Tok::Sym('-');
        if neg {
            self.bump();
        }
        let v = self.nat()?;
        let v = if neg { -v } else { v };
        v.to_i64().ok_or_else(|| self.error("number too large"))
    }

    fn at_scalar(&self) -> bool {
        matches!(self.peek(), Tok::Nat(_))
            || (*self.peek() == Tok::Sym('-') && matches!(self.peek_at(1), Tok::Nat(_)))
    }

    fn scalar(&mut self) -> Result<(BigInt, BigInt), SyntaxError> {
        let neg = *self.peek() == Tok::Sym('-');
        if neg {
            self.bump();
        }
        let num = self.nat()?;
        let den = if *self.peek() == Tok::Sym('/') {
            self.bump();
            let d = self.nat()?;
            if d.is_zero() {
                return Err(self.error("zero denominator"));
            }
            d
        } else {
            BigInt::one()
        };
        Ok((if neg { -num } else { num }, den))
    }

    fn finish(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::End => Ok(()),
            _ => Err(self.error("unexpected trailing input")),
        }
    }

    fn expr(&mut self) -> Result<ExprAst, SyntaxError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Sym('+') => {
                    self.bump();
                    acc = ExprAst::Sum(Box::new(acc), Box::new(self.term()?));
                }
                Tok::Sym('-') => {
                    self.bump();
                    acc = ExprAst::Difference(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst, SyntaxError> {
        let mut acc = self.factor()?;
        while *self.peek() == Tok::Sym('*') {
            self.bump();
            let rhs = self.factor()?;
            acc = if matches!(acc, ExprAst::Scalar { .. }) {
                ExprAst::ScalarMultiple(Box::new(acc), Box::new(rhs))
            } else {
                ExprAst::Product(Box::new(acc), Box::new(rhs))
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<ExprAst, SyntaxError> {
        if self.at_scalar() {
            let (num, den) = self.scalar()?;
            return Ok(ExprAst::Scalar { num, den });
        }
        match self.peek().clone() {
            Tok::Sym('(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect_sym(')')?;
                Ok(ExprAst::Group(Box::new(inner)))
            }
            Tok::Ident(name) if name == "id" => {
                self.bump();
                Ok(ExprAst::Id)
            }
            Tok::Ident(name) if name == "e" => {
                self.bump();
                self.expect_sym('[')?;
                let site = self.small_nat()?;
                self.expect_sym(']')?;
                self.expect_sym('(')?;
                let p = self.small_nat()?;
                self.expect_sym(',')?;
                let q = self.small_nat()?;
                self.expect_sym(')')?;
                Ok(ExprAst::Unit { site, p, q })
            }
            _ => Err(self.error("expected a scalar, 'id', 'e[i](p,q)' or '('")),
        }
    }
}

/// Parses `text`, reporting positions relative to `line`/`column`.
pub fn parse_element_at(text: &str, line: usize, column: usize) -> Result<ExprAst, SyntaxError> {
    let mut p = Parser::new(text, line, column)?;
    let ast = p.expr()?;
    p.finish()?;
    Ok(ast)
}

pub fn parse_element(text: &str) -> Result<ExprAst, SyntaxError> {
    parse_element_at(text, 1, 1)
}

pub fn eval_ast(
    ast: &ExprAst,
    field: FieldSpec,
    shape: &SiteShape,
) -> Result<Element, locmat::Error> {
    Ok(match ast {
        ExprAst::Scalar { num, den } => Element::scalar(field, shape, field.from_ratio(num, den)?),
        ExprAst::Id => Element::one(field, shape),
        ExprAst::Unit { site, p, q } => Element::unit(field, shape, *site, *p, *q)?,
        ExprAst::Sum(a, b) => eval_ast(a, field, shape)?.add(&eval_ast(b, field, shape)?)?,
        ExprAst::Difference(a, b) => eval_ast(a, field, shape)?.sub(&eval_ast(b, field, shape)?)?,
        ExprAst::Product(a, b) | ExprAst::ScalarMultiple(a, b) => {
            eval_ast(a, field, shape)?.mul(&eval_ast(b, field, shape)?)?
        }
        ExprAst::Group(a) => eval_ast(a, field, shape)?,
    })
}

pub fn parse_and_eval(
    text: &str,
    field: FieldSpec,
    shape: &SiteShape,
) -> Result<Element, ExprError> {
    parse_and_eval_at(text, 1, 1, field, shape)
}

pub fn parse_and_eval_at(
    text: &str,
    line: usize,
    column: usize,
    field: FieldSpec,
    shape: &SiteShape,
) -> Result<Element, ExprError> {
    Ok(eval_ast(
        &parse_element_at(text, line, column)?,
        field,
        shape,
    )?)
}

struct PatternParser {
    inner: Parser,
    field: FieldSpec,
}

impl PatternParser {
    fn scalar(&mut self) -> Result<Scalar, ExprError> {
        let (n, d) = self.inner.scalar()?;
        Ok(self.field.from_ratio(&n, &d)?)
    }

    fn expr(&mut self) -> Result<PatternMatrix, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.inner.peek() {
                Tok::Sym('+') => {
                    self.inner.bump();
                    acc = acc.add(&self.term()?)?;
                }
                Tok::Sym('-') => {
                    self.inner.bump();
                    acc = acc.sub(&self.term()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<PatternMatrix, ExprError> {
        let mut acc = self.factor()?;
        while *self.inner.peek() == Tok::Sym('*') {
            self.inner.bump();
            let rhs = self.factor()?;
            acc = match acc {
                Factor::Scalar(s) => match rhs {
                    Factor::Scalar(t) => Factor::Scalar(&s * &t),
                    Factor::Matrix(m) => Factor::Matrix(m.scale(&s)),
                },
                Factor::Matrix(m) => Factor::Matrix(match rhs {
                    Factor::Scalar(t) => m.scale(&t),
                    Factor::Matrix(r) => minf::pattern_mul(&m, &r)?,
                }),
            };
        }
        Ok(match acc {
            Factor::Scalar(s) => PatternMatrix::identity(self.field).scale(&s),
            Factor::Matrix(m) => m,
        })
    }

    fn args(&mut self) -> Result<Vec<Scalar>, ExprError> {
        self.inner.expect_sym('(')?;
        let mut out = Vec::new();
        if *self.inner.peek() != Tok::Sym(')') {
            out.push(self.scalar()?);
            while *self.inner.peek() == Tok::Sym(',') {
                self.inner.bump();
                out.push(self.scalar()?);
            }
        }
        self.inner.expect_sym(')')?;
        Ok(out)
    }

    fn factor(&mut self) -> Result<Factor, ExprError> {
        if self.inner.at_scalar() {
            return Ok(Factor::Scalar(self.scalar()?));
        }
        let field = self.field;
        let name = match self.inner.peek().clone() {
            Tok::Sym('(') => {
                self.inner.bump();
                let m = self.expr()?;
                self.inner.expect_sym(')')?;
                return Ok(Factor::Matrix(m));
            }
            Tok::Ident(name) => name,
            _ => {
                return Err(self
                    .inner
                    .error("expected a scalar, a pattern atom or '('")
                    .into())
            }
        };
        let at = self.inner.pos;
        self.inner.bump();
        let m = match name.as_str() {
            "Id" => PatternMatrix::identity(field),
            "z" => minf::build_z_minf(field),
            "y" => {
                let k = self.inner.small_nat()?;
                minf::build_yk_minf(field, k)?
            }
            "E" => {
                self.inner.expect_sym('(')?;
                let r = self.inner.small_nat()?;
                self.inner.expect_sym(',')?;
                let c = self.inner.small_nat()?;
                self.inner.expect_sym(')')?;
                PatternMatrix::unit(field, r, c)?
            }
            "fam" => {
                self.inner.expect_sym('(')?;
                let mut v = Vec::new();
                for k in 0..5 {
                    if k > 0 {
                        self.inner.expect_sym(',')?;
                    }
                    v.push(self.inner.int()?);
                }
                self.inner.expect_sym(')')?;
                if v[0] < 0 || v[2] < 0 || v[4] < 0 {
                    self.inner.pos = at;
                    return Err(self
                        .inner
                        .error("slopes and start must be nonnegative")
                        .into());
                }
                let fam =
                    AffineFamily::new(v[0] as usize, v[1], v[2] as usize, v[3], v[4] as usize)?;
                PatternMatrix::family(field, field.one(), fam)?
            }
            "df" => {
                let f = self.args()?;
                minf::build_df(field, &f)?
            }
            "af" => {
                let f = self.args()?;
                minf::build_af(field, &f)?
            }
            _ => {
                self.inner.pos = at;
                return Err(self
                    .inner
                    .error(format!("unknown pattern atom '{name}'"))
                    .into());
            }
        };
        Ok(Factor::Matrix(m))
    }
}

enum Factor {
    Scalar(Scalar),
    Matrix(PatternMatrix),
}

pub fn parse_pattern(text: &str, field: FieldSpec) -> Result<PatternMatrix, ExprError> {
    let mut p = PatternParser {
        inner: Parser::new(text, 1, 1)?,
        field,
    };
    let m = p.expr()?;
    p.inner.finish()?;
    Ok(m)
}
