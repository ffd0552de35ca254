//! Infinite matrices over `M∞(F)`: finitary matrices plus finitely many
//! affine shifted diagonals `Σ_{i≥i0} c·e_{αi+β, γi+δ}`.
//!
//! Products of two affine diagonals match `γ1·s + δ1 = α2·t + β2`, a linear
//! Diophantine equation whose nonnegative solutions form an arithmetic
//! progression, so the class is closed under multiplication.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};

/// Finitely many nonzero entries indexed from 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinitaryMatrix {
    field: FieldSpec,
    entries: BTreeMap<(usize, usize), Scalar>,
}

impl FinitaryMatrix {
    pub fn zero(field: FieldSpec) -> Self {
        FinitaryMatrix {
            field,
            entries: BTreeMap::new(),
        }
    }

    pub fn unit(field: FieldSpec, row: usize, col: usize) -> Result<Self> {
        let mut m = Self::zero(field);
        m.add_entry(row, col, &field.one())?;
        Ok(m)
    }

    pub fn from_entries(
        field: FieldSpec,
        entries: impl IntoIterator<Item = ((usize, usize), Scalar)>,
    ) -> Result<Self> {
        let mut m = Self::zero(field);
        for ((r, c), v) in entries {
            if v.field() != field {
                return Err(Error::FieldMismatch);
            }
            m.add_entry(r, c, &v)?;
        }
        Ok(m)
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), Scalar> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Scalar {
        self.entries
            .get(&(row, col))
            .cloned()
            .unwrap_or_else(|| self.field.zero())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn add_entry(&mut self, row: usize, col: usize, v: &Scalar) -> Result<()> {
        if row == 0 || col == 0 {
            return Err(Error::InvalidFamily(format!(
                "entry ({row},{col}) is not indexed from 1"
            )));
        }
        add_into(&mut self.entries, (row, col), v);
        Ok(())
    }

    /// Largest row or column index carrying an entry.
    pub fn extent(&self) -> usize {
        self.entries
            .keys()
            .map(|&(r, c)| r.max(c))
            .max()
            .unwrap_or(0)
    }

    pub fn to_pattern(&self) -> PatternMatrix {
        PatternMatrix {
            field: self.field,
            finitary: self.entries.clone(),
            families: Vec::new(),
        }
    }
}

fn add_into(map: &mut BTreeMap<(usize, usize), Scalar>, key: (usize, usize), v: &Scalar) {
    if v.is_zero() {
        return;
    }
    match map.get_mut(&key) {
        Some(slot) => {
            *slot = &*slot + v;
            if slot.is_zero() {
                map.remove(&key);
            }
        }
        None => {
            map.insert(key, v.clone());
        }
    }
}

/// Index set `{(α·i + β, γ·i + δ) : i ≥ start}` with `α, γ ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffineFamily {
    pub row_step: usize,
    pub row_offset: i64,
    pub col_step: usize,
    pub col_offset: i64,
    pub start: usize,
}

impl AffineFamily {
    /// Both index maps must be strictly increasing (a zero slope is either a
    /// finitary entry or a non-injective map) and stay positive from `start`.
    pub fn new(
        row_step: usize,
        row_offset: i64,
        col_step: usize,
        col_offset: i64,
        start: usize,
    ) -> Result<Self> {
        if row_step == 0 || col_step == 0 {
            return Err(Error::InvalidFamily(
                "row and column slopes must be at least 1".into(),
            ));
        }
        if start == 0 {
            return Err(Error::InvalidFamily(
                "start index must be at least 1".into(),
            ));
        }
        let f = AffineFamily {
            row_step,
            row_offset,
            col_step,
            col_offset,
            start,
        };
        let (r, c) = f.raw_entry(start);
        if r < 1 || c < 1 {
            return Err(Error::InvalidFamily(format!(
                "first entry ({r},{c}) leaves the index set"
            )));
        }
        Ok(f)
    }

    fn raw_entry(&self, i: usize) -> (i64, i64) {
        (
            self.row_step as i64 * i as i64 + self.row_offset,
            self.col_step as i64 * i as i64 + self.col_offset,
        )
    }

    pub fn entry(&self, i: usize) -> (usize, usize) {
        let (r, c) = self.raw_entry(i);
        (r as usize, c as usize)
    }

    /// Index `i >= start` with `row(i) == row`, if any.
    fn index_of_row(&self, row: usize) -> Option<usize> {
        let d = row as i64 - self.row_offset;
        let a = self.row_step as i64;
        (d % a == 0 && d / a >= self.start as i64).then(|| (d / a) as usize)
    }

    fn index_of_col(&self, col: usize) -> Option<usize> {
        let d = col as i64 - self.col_offset;
        let g = self.col_step as i64;
        (d % g == 0 && d / g >= self.start as i64).then(|| (d / g) as usize)
    }

    /// Same index set re-parametrized to start at 1.
    fn anchored(&self) -> Ray {
        let (r, c) = self.entry(self.start);
        Ray {
            row_step: self.row_step,
            col_step: self.col_step,
            row0: r,
            col0: c,
        }
    }
}

/// Coefficients along a family: constant, or `f(i)` on `start ≤ i < start + len`
/// and zero beyond.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoefficientRule {
    Constant(Scalar),
    Prefix(Vec<Scalar>),
}

/// Internal normal form of a constant-coefficient family: entries
/// `(row0 + row_step·t, col0 + col_step·t)` for `t ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Ray {
    row_step: usize,
    col_step: usize,
    row0: usize,
    col0: usize,
}

impl Ray {
    fn entry(&self, t: usize) -> (usize, usize) {
        (self.row0 + self.row_step * t, self.col0 + self.col_step * t)
    }

    fn family(&self) -> AffineFamily {
        AffineFamily {
            row_step: self.row_step,
            row_offset: self.row0 as i64 - self.row_step as i64,
            col_step: self.col_step,
            col_offset: self.col0 as i64 - self.col_step as i64,
            start: 1,
        }
    }

    /// The progression this ray lies on, extended back as far as rows allow,
    /// together with the ray's position along it.
    fn line(&self) -> (Line, usize) {
        let t = (self.row0 - 1) / self.row_step;
        let line = Line {
            row_step: self.row_step,
            col_step: self.col_step,
            row_base: self.row0 - t * self.row_step,
            col_base: self.col0 as i64 - (t * self.col_step) as i64,
        };
        (line, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Line {
    row_step: usize,
    col_step: usize,
    row_base: usize,
    col_base: i64,
}

impl Line {
    fn entry(&self, t: usize) -> (i64, i64) {
        (
            (self.row_base + self.row_step * t) as i64,
            self.col_base + (self.col_step * t) as i64,
        )
    }

    fn ray(&self, t: usize) -> Ray {
        let (r, c) = self.entry(t);
        Ray {
            row_step: self.row_step,
            col_step: self.col_step,
            row0: r as usize,
            col0: c as usize,
        }
    }

    /// Position of `(row, col)` on the line, if it lies on it.
    fn position(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.row_base || !(row - self.row_base).is_multiple_of(self.row_step) {
            return None;
        }
        let t = (row - self.row_base) / self.row_step;
        (self.entry(t).1 == col as i64).then_some(t)
    }

    /// First position whose column is at least 1.
    fn first_valid(&self) -> usize {
        if self.col_base >= 1 {
            0
        } else {
            let need = 1 - self.col_base;
            Integer::div_ceil(&need, &(self.col_step as i64)) as usize
        }
    }
}

/// A finitary matrix plus finitely many constant-coefficient affine families,
/// kept in normal form: every family is re-parametrized to start at 1,
/// families on one progression are merged at the latest start, the finitary
/// part never meets a family past its start, and each family starts right
/// after the last position whose entry differs from its coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternMatrix {
    field: FieldSpec,
    finitary: BTreeMap<(usize, usize), Scalar>,
    families: Vec<(Scalar, AffineFamily)>,
}

impl PatternMatrix {
    pub fn zero(field: FieldSpec) -> Self {
        PatternMatrix {
            field,
            finitary: BTreeMap::new(),
            families: Vec::new(),
        }
    }

    pub fn from_parts(
        field: FieldSpec,
        finitary: &FinitaryMatrix,
        families: Vec<(CoefficientRule, AffineFamily)>,
    ) -> Result<Self> {
        if finitary.field() != field {
            return Err(Error::FieldMismatch);
        }
        let mut fin = finitary.entries.clone();
        let mut rays = Vec::new();
        for (rule, fam) in families {
            match rule {
                CoefficientRule::Constant(c) => {
                    if c.field() != field {
                        return Err(Error::FieldMismatch);
                    }
                    rays.push((c, fam.anchored()));
                }
                CoefficientRule::Prefix(values) => {
                    for (k, v) in values.iter().enumerate() {
                        if v.field() != field {
                            return Err(Error::FieldMismatch);
                        }
                        add_into(&mut fin, fam.entry(fam.start + k), v);
                    }
                }
            }
        }
        Ok(normalize(field, fin, rays))
    }

    /// `c · Σ_{i ≥ start} e_{row(i), col(i)}`.
    pub fn family(field: FieldSpec, c: Scalar, fam: AffineFamily) -> Result<Self> {
        Self::from_parts(
            field,
            &FinitaryMatrix::zero(field),
            vec![(CoefficientRule::Constant(c), fam)],
        )
    }

    pub fn identity(field: FieldSpec) -> Self {
        Self::family(
            field,
            field.one(),
            AffineFamily::new(1, 0, 1, 0, 1).expect("valid"),
        )
        .expect("valid")
    }

    pub fn unit(field: FieldSpec, row: usize, col: usize) -> Result<Self> {
        Ok(FinitaryMatrix::unit(field, row, col)?.to_pattern())
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn finitary_part(&self) -> FinitaryMatrix {
        FinitaryMatrix {
            field: self.field,
            entries: self.finitary.clone(),
        }
    }

    pub fn families(&self) -> &[(Scalar, AffineFamily)] {
        &self.families
    }

    pub fn is_zero(&self) -> bool {
        self.finitary.is_empty() && self.families.is_empty()
    }

    pub fn is_finitary(&self) -> bool {
        self.families.is_empty()
    }

    /// The finitary matrix, if there are no infinite families.
    pub fn to_finitary(&self) -> Result<FinitaryMatrix> {
        if !self.is_finitary() {
            return Err(Error::NotFinitaryResult);
        }
        Ok(self.finitary_part())
    }

    fn rays(&self) -> impl Iterator<Item = (&Scalar, Ray)> {
        self.families.iter().map(|(c, f)| (c, f.anchored()))
    }

    fn check(&self, other: &PatternMatrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &PatternMatrix) -> Result<PatternMatrix> {
        self.check(other)?;
        let mut fin = self.finitary.clone();
        for (k, v) in &other.finitary {
            add_into(&mut fin, *k, v);
        }
        let rays = self
            .rays()
            .chain(other.rays())
            .map(|(c, r)| (c.clone(), r))
            .collect();
        Ok(normalize(self.field, fin, rays))
    }

    pub fn scale(&self, s: &Scalar) -> PatternMatrix {
        let fin = self.finitary.iter().map(|(k, v)| (*k, v * s)).collect();
        let rays = self.rays().map(|(c, r)| (c * s, r)).collect();
        normalize(self.field, fin, rays)
    }

    pub fn sub(&self, other: &PatternMatrix) -> Result<PatternMatrix> {
        self.add(&other.scale(&-self.field.one()))
    }

    /// Entry `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> Scalar {
        let mut v = self
            .finitary
            .get(&(row, col))
            .cloned()
            .unwrap_or_else(|| self.field.zero());
        for (c, f) in &self.families {
            if let Some(i) = f.index_of_row(row) {
                if f.entry(i).1 == col {
                    v = &v + c;
                }
            }
        }
        v
    }

    /// The top-left `n × n` block.
    pub fn to_window(&self, n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.field, n, n);
        for (&(r, c), v) in &self.finitary {
            if r <= n && c <= n {
                m.add_at(r - 1, c - 1, v);
            }
        }
        for (coef, f) in &self.families {
            for i in f.start.. {
                let (r, c) = f.entry(i);
                if r > n || c > n {
                    break;
                }
                m.add_at(r - 1, c - 1, coef);
            }
        }
        m
    }

    /// Largest `|col - row|` over the first entries of the families and over
    /// the finitary part; the window comparison margin.
    pub fn max_shift(&self) -> usize {
        let fin = self.finitary.keys().map(|&(r, c)| r.abs_diff(c));
        let fam = self.families.iter().map(|(_, f)| {
            let (r, c) = f.entry(f.start);
            r.abs_diff(c)
        });
        fin.chain(fam).max().unwrap_or(0)
    }
}

fn normalize(
    field: FieldSpec,
    mut fin: BTreeMap<(usize, usize), Scalar>,
    rays: Vec<(Scalar, Ray)>,
) -> PatternMatrix {
    fin.retain(|_, v| !v.is_zero());
    // Merge rays on a common progression at the latest position.
    let mut lines: BTreeMap<Line, Vec<(usize, Scalar)>> = BTreeMap::new();
    for (c, ray) in rays {
        if c.is_zero() {
            continue;
        }
        let (line, t) = ray.line();
        lines.entry(line).or_default().push((t, c));
    }
    let mut merged: Vec<(Line, usize, Scalar)> = Vec::new();
    for (line, members) in lines {
        let top = members.iter().map(|(t, _)| *t).max().expect("nonempty");
        let mut sum = field.zero();
        for (t, c) in members {
            for s in t..top {
                let (r, col) = line.entry(s);
                add_into(&mut fin, (r as usize, col as usize), &c);
            }
            sum = &sum + &c;
        }
        if !sum.is_zero() {
            merged.push((line, top, sum));
        }
    }
    // Push each family past the finitary entries on its line, then pull it
    // back over entries equal to its coefficient. Pushing one family can only
    // add entries below the current largest finitary row, so this settles.
    for _ in 0..=merged.len() + 1 {
        let mut changed = false;
        for (line, top, c) in merged.iter_mut() {
            let last = fin
                .keys()
                .filter_map(|&(r, col)| line.position(r, col))
                .filter(|&t| t >= *top)
                .max();
            if let Some(last) = last {
                for s in *top..=last {
                    let (r, col) = line.entry(s);
                    add_into(&mut fin, (r as usize, col as usize), c);
                }
                *top = last + 1;
                changed = true;
            }
            let floor = line.first_valid();
            while *top > floor {
                let (r, col) = line.entry(*top - 1);
                let key = (r as usize, col as usize);
                if fin.get(&key) != Some(c) {
                    break;
                }
                fin.remove(&key);
                *top -= 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut families: Vec<(Scalar, AffineFamily)> = merged
        .into_iter()
        .map(|(line, top, c)| (c, line.ray(top).family()))
        .collect();
    families.sort_by_key(|a| a.1);
    PatternMatrix {
        field,
        finitary: fin,
        families,
    }
}

/// Exact product. Every family is a constant-coefficient progression, so each
/// family-by-family term is again a progression (or empty).
pub fn pattern_mul(x: &PatternMatrix, y: &PatternMatrix) -> Result<PatternMatrix> {
    x.check(y)?;
    let field = x.field;
    let mut fin: BTreeMap<(usize, usize), Scalar> = BTreeMap::new();
    let mut rays: Vec<(Scalar, Ray)> = Vec::new();

    // Finitary times finitary, grouped by the shared index.
    let mut y_by_row: BTreeMap<usize, Vec<(usize, &Scalar)>> = BTreeMap::new();
    for (&(r, c), v) in &y.finitary {
        y_by_row.entry(r).or_default().push((c, v));
    }
    for (&(a, b), u) in &x.finitary {
        if let Some(row) = y_by_row.get(&b) {
            for &(d, v) in row {
                add_into(&mut fin, (a, d), &(u * v));
            }
        }
    }
    for (c, f) in &y.families {
        for (&(a, b), u) in &x.finitary {
            if let Some(i) = f.index_of_row(b) {
                add_into(&mut fin, (a, f.entry(i).1), &(u * c));
            }
        }
    }
    for (c, f) in &x.families {
        for (&(b, d), v) in &y.finitary {
            if let Some(i) = f.index_of_col(b) {
                add_into(&mut fin, (f.entry(i).0, d), &(c * v));
            }
        }
    }
    for (c1, f1) in &x.families {
        for (c2, f2) in &y.families {
            if let Some(ray) = match_rays(&f1.anchored(), &f2.anchored()) {
                rays.push((c1 * c2, ray));
            }
        }
    }
    Ok(normalize(field, fin, rays))
}

/// Solve `col0₁ + γ₁·s = row0₂ + α₂·t` over `s, t ≥ 0`.
fn match_rays(r1: &Ray, r2: &Ray) -> Option<Ray> {
    let g1 = r1.col_step as i64;
    let a2 = r2.row_step as i64;
    let rhs = r2.row0 as i64 - r1.col0 as i64;
    let ext = g1.extended_gcd(&a2);
    let g = ext.gcd;
    if rhs % g != 0 {
        return None;
    }
    // g1·x + a2·y = g, so s0 = x·rhs/g, t0 = -y·rhs/g is one solution.
    let k = rhs / g;
    let (s0, t0) = (ext.x as i128 * k as i128, -(ext.y as i128) * k as i128);
    let (ds, dt) = ((a2 / g) as i128, (g1 / g) as i128);
    // s = s0 + ds·m ≥ 0 and t = t0 + dt·m ≥ 0.
    let m_min = ceil_div(-s0, ds).max(ceil_div(-t0, dt));
    let s = (s0 + ds * m_min) as usize;
    let t = (t0 + dt * m_min) as usize;
    Some(Ray {
        row_step: r1.row_step * ds as usize,
        col_step: r2.col_step * dt as usize,
        row0: r1.entry(s).0,
        col0: r2.entry(t).1,
    })
}

fn ceil_div(a: i128, b: i128) -> i128 {
    Integer::div_ceil(&a, &b)
}

pub fn pattern_commutator(x: &PatternMatrix, y: &PatternMatrix) -> Result<PatternMatrix> {
    pattern_mul(x, y)?.sub(&pattern_mul(y, x)?)
}

/// `[m, x]` for finitary `x`; families only ever meet `x` in finitely many
/// places, so the result is finitary.
pub fn ad_apply(m: &PatternMatrix, x: &FinitaryMatrix) -> Result<FinitaryMatrix> {
    pattern_commutator(m, &x.to_pattern())?.to_finitary()
}

/// `z = Σ_{i≥1} e_{2i, 2i+2}`.
pub fn build_z_minf(field: FieldSpec) -> PatternMatrix {
    PatternMatrix::family(
        field,
        field.one(),
        AffineFamily::new(2, 0, 2, 2, 1).expect("valid"),
    )
    .expect("valid")
}

/// `y_k = Σ_{i≥1} e_{2i, 2i+2k-1}`.
pub fn build_yk_minf(field: FieldSpec, k: usize) -> Result<PatternMatrix> {
    if k == 0 {
        return Err(Error::InvalidFamily("k must be at least 1".into()));
    }
    PatternMatrix::family(
        field,
        field.one(),
        AffineFamily::new(2, 0, 2, 2 * k as i64 - 1, 1)?,
    )
}

/// `d_f = diag(0, f(1), f(2), …)` with `f` zero past the given prefix.
pub fn build_df(field: FieldSpec, f: &[Scalar]) -> Result<PatternMatrix> {
    PatternMatrix::from_parts(
        field,
        &FinitaryMatrix::zero(field),
        vec![(
            CoefficientRule::Prefix(f.to_vec()),
            AffineFamily::new(1, 1, 1, 1, 1)?,
        )],
    )
}

/// The nilpotent part `Σ f(i)·e_{2i-1, 2i}` of `a_f`.
pub fn build_nf(field: FieldSpec, f: &[Scalar]) -> Result<PatternMatrix> {
    PatternMatrix::from_parts(
        field,
        &FinitaryMatrix::zero(field),
        vec![(
            CoefficientRule::Prefix(f.to_vec()),
            AffineFamily::new(2, -1, 2, 0, 1)?,
        )],
    )
}

/// `a_f = Id + Σ f(i)·e_{2i-1, 2i}`.
pub fn build_af(field: FieldSpec, f: &[Scalar]) -> Result<PatternMatrix> {
    PatternMatrix::identity(field).add(&build_nf(field, f)?)
}

/// `a_f⁻¹ · x · a_f` using `a_f⁻¹ = Id - n_f`.
pub fn conjugate_by_af(
    field: FieldSpec,
    f: &[Scalar],
    x: &FinitaryMatrix,
) -> Result<FinitaryMatrix> {
    let n = build_nf(field, f)?;
    let a = PatternMatrix::identity(field).add(&n)?;
    let a_inv = PatternMatrix::identity(field).sub(&n)?;
    pattern_mul(&pattern_mul(&a_inv, &x.to_pattern())?, &a)?.to_finitary()
}

fn write_term(f: &mut fmt::Formatter<'_>, first: bool, c: &Scalar, body: &str) -> fmt::Result {
    let neg = c.is_negative();
    let abs = c.abs();
    let text = if abs.is_one() && !(first && neg) {
        body.to_string()
    } else {
        format!("{abs}*{body}")
    };
    match (first, neg) {
        (true, false) => write!(f, "{text}"),
        (true, true) => write!(f, "-{text}"),
        (false, false) => write!(f, " + {text}"),
        (false, true) => write!(f, " - {text}"),
    }
}

impl fmt::Display for AffineFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fam({},{},{},{},{})",
            self.row_step, self.row_offset, self.col_step, self.col_offset, self.start
        )
    }
}

impl fmt::Display for PatternMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(r, c), v) in &self.finitary {
            write_term(f, first, v, &format!("E({r},{c})"))?;
            first = false;
        }
        for (c, fam) in &self.families {
            write_term(f, first, c, &fam.to_string())?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Display for FinitaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_pattern().fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: FieldSpec = FieldSpec::Rationals;

    fn s(v: i64) -> Scalar {
        Q.from_i64(v)
    }

    fn unit(r: usize, c: usize) -> PatternMatrix {
        PatternMatrix::unit(Q, r, c).unwrap()
    }

    /// Dense product inside the window where truncation cannot matter.
    fn window_agrees(x: &PatternMatrix, y: &PatternMatrix, n: usize) -> bool {
        let margin = x.max_shift().max(y.max_shift());
        let m = n - margin;
        let dense = &x.to_window(n) * &y.to_window(n);
        let exact = pattern_mul(x, y).unwrap().to_window(n);
        (0..m).all(|r| (0..m).all(|c| dense.get(r, c) == exact.get(r, c)))
    }

    #[test]
    fn identity_is_neutral() {
        let x = build_z_minf(Q).add(&unit(3, 1)).unwrap();
        let id = PatternMatrix::identity(Q);
        assert_eq!(pattern_mul(&id, &x).unwrap(), x);
        assert_eq!(pattern_mul(&x, &id).unwrap(), x);
    }

    #[test]
    fn z_squared() {
        let z = build_z_minf(Q);
        let expected =
            PatternMatrix::family(Q, s(1), AffineFamily::new(2, 0, 2, 4, 1).unwrap()).unwrap();
        assert_eq!(pattern_mul(&z, &z).unwrap(), expected);
        assert!(window_agrees(&z, &z, 40));
    }

    #[test]
    fn ladder() {
        let z = build_z_minf(Q);
        for k in 1..=6 {
            let yk = build_yk_minf(Q, k).unwrap();
            assert_eq!(
                pattern_commutator(&z, &yk).unwrap(),
                build_yk_minf(Q, k + 1).unwrap()
            );
        }
        assert_eq!(build_yk_minf(Q, 1).unwrap().to_string(), "fam(2,0,2,1,1)");
    }

    #[test]
    fn nilpotent_part_squares_to_zero() {
        let f = vec![s(1), s(-2), s(3)];
        let n = build_nf(Q, &f).unwrap();
        assert!(pattern_mul(&n, &n).unwrap().is_zero());
        let a = build_af(Q, &f).unwrap();
        let a_inv = PatternMatrix::identity(Q).sub(&n).unwrap();
        assert_eq!(pattern_mul(&a, &a_inv).unwrap(), PatternMatrix::identity(Q));
        // Constant coefficients keep the parity obstruction.
        let fam =
            PatternMatrix::family(Q, s(1), AffineFamily::new(2, -1, 2, 0, 1).unwrap()).unwrap();
        assert!(pattern_mul(&fam, &fam).unwrap().is_zero());
    }

    #[test]
    fn diagonal_brackets() {
        let df = build_df(Q, &[s(2), s(5)]).unwrap();
        let dg = build_df(Q, &[s(7), s(0), s(1)]).unwrap();
        assert!(pattern_commutator(&df, &dg).unwrap().is_zero());
        assert_eq!(
            pattern_commutator(&df, &unit(1, 2)).unwrap(),
            unit(1, 2).scale(&s(-2))
        );
        let e22 = FinitaryMatrix::unit(Q, 2, 2).unwrap();
        assert!(ad_apply(&df, &e22).unwrap().is_zero());
        assert!(build_df(Q, &[s(0), s(0)]).unwrap().is_zero());
    }

    #[test]
    fn ad_z_matches_window() {
        let z = build_z_minf(Q);
        let x = FinitaryMatrix::unit(Q, 2, 1).unwrap();
        let got = ad_apply(&z, &x).unwrap();
        let dense = z.to_window(30).commutator(&x.to_pattern().to_window(30));
        assert_eq!(got.to_pattern().to_window(30), dense);
        assert!(got.is_zero());
        let x = FinitaryMatrix::unit(Q, 4, 2).unwrap();
        assert_eq!(ad_apply(&z, &x).unwrap().to_string(), "E(2,2) - E(4,4)");
    }

    #[test]
    fn af_conjugation_identity() {
        let f = vec![s(3), s(-1), s(4)];
        for i in 1..=5 {
            let x = FinitaryMatrix::unit(Q, 1, 2 * i - 1).unwrap();
            let fi = f.get(i - 1).cloned().unwrap_or_else(|| s(0));
            let expected = x.to_pattern().add(&unit(1, 2 * i).scale(&fi)).unwrap();
            assert_eq!(conjugate_by_af(Q, &f, &x).unwrap().to_pattern(), expected);
        }
        let x = FinitaryMatrix::unit(Q, 4, 7).unwrap();
        assert_eq!(conjugate_by_af(Q, &[], &x).unwrap(), x);
    }

    #[test]
    fn normalization_is_canonical() {
        // Two rays on one line merge, and a finitary hole pushes the start.
        let a = PatternMatrix::family(Q, s(1), AffineFamily::new(1, 0, 1, 1, 1).unwrap()).unwrap();
        let b = PatternMatrix::family(Q, s(1), AffineFamily::new(1, 0, 1, 1, 3).unwrap()).unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.families().len(), 1);
        let holed = a.sub(&unit(5, 6)).unwrap();
        let alt = PatternMatrix::family(Q, s(1), AffineFamily::new(1, 0, 1, 1, 6).unwrap())
            .unwrap()
            .add(&unit(1, 2))
            .unwrap()
            .add(&unit(2, 3))
            .unwrap()
            .add(&unit(3, 4))
            .unwrap()
            .add(&unit(4, 5))
            .unwrap();
        assert_eq!(holed, alt);
        let reparam =
            PatternMatrix::family(Q, s(1), AffineFamily::new(1, 1, 1, 2, 1).unwrap()).unwrap();
        assert_eq!(reparam.add(&unit(1, 2)).unwrap(), a);
        assert!(a.sub(&a).unwrap().is_zero());
    }

    #[test]
    fn invalid_families() {
        assert!(AffineFamily::new(0, 1, 1, 0, 1).is_err());
        assert!(AffineFamily::new(1, -1, 1, 0, 1).is_err());
        assert!(AffineFamily::new(1, 0, 1, 0, 0).is_err());
    }

    #[test]
    fn gf5_window_products() {
        let f5 = FieldSpec::Prime(5);
        let x = PatternMatrix::family(
            f5,
            f5.from_i64(3),
            AffineFamily::new(3, 1, 2, 0, 1).unwrap(),
        )
        .unwrap()
        .add(&PatternMatrix::unit(f5, 2, 5).unwrap())
        .unwrap();
        let y = PatternMatrix::family(
            f5,
            f5.from_i64(2),
            AffineFamily::new(2, 0, 3, -1, 1).unwrap(),
        )
        .unwrap();
        let xy = pattern_mul(&x, &y).unwrap();
        assert!(!xy.is_finitary());
        let n = 40;
        let dense = &x.to_window(n) * &y.to_window(n);
        // Columns of x grow slower than rows, so compare on the top rows only.
        let w = xy.to_window(n);
        for r in 0..10 {
            for c in 0..n {
                assert_eq!(dense.get(r, c), w.get(r, c), "({r},{c})");
            }
        }
    }
}
