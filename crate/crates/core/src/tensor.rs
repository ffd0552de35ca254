//! Finitely supported elements of the infinite tensor product of matrix
//! algebras `A = A_1 ⊗ A_2 ⊗ ⋯`, `A_i = M_{n_i}(F)`.
//!
//! Elements are stored in a canonical monomial basis. At every site the
//! complement of the scalars is spanned by the matrix units `e_pq` with
//! `(p,q) != (1,1)`, and `e_11` is rewritten as `1 - Σ_{p≥2} e_pp`. A monomial
//! is therefore a finite map from sites to non-`(1,1)` labels, and sums of
//! distinct monomials are linearly independent, so equality of elements is
//! equality of their term maps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};

/// Sizes of the tensor factors: a default size with finitely many exceptions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SiteShape {
    default: usize,
    exceptions: BTreeMap<usize, usize>,
}

impl SiteShape {
    pub fn uniform(default: usize) -> Result<Self> {
        if default < 2 {
            return Err(Error::InvalidShape(format!(
                "default size {default} must be at least 2"
            )));
        }
        Ok(SiteShape {
            default,
            exceptions: BTreeMap::new(),
        })
    }

    pub fn with_exception(mut self, site: usize, size: usize) -> Result<Self> {
        if site == 0 {
            return Err(Error::InvalidShape("sites are numbered from 1".into()));
        }
        if size < 2 {
            return Err(Error::InvalidShape(format!(
                "site {site} has size {size}, must be at least 2"
            )));
        }
        if size == self.default {
            self.exceptions.remove(&site);
        } else {
            self.exceptions.insert(site, size);
        }
        Ok(self)
    }

    pub fn size(&self, site: usize) -> usize {
        *self.exceptions.get(&site).unwrap_or(&self.default)
    }

    pub fn default_size(&self) -> usize {
        self.default
    }

    pub fn exceptions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.exceptions.iter().map(|(&s, &n)| (s, n))
    }

    /// Every site beyond this one has the default size.
    pub fn last_exception(&self) -> usize {
        self.exceptions.keys().next_back().copied().unwrap_or(0)
    }
}

impl fmt::Display for SiteShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "default={}", self.default)?;
        for (s, n) in &self.exceptions {
            write!(f, ",{s}={n}")?;
        }
        Ok(())
    }
}

/// A matrix-unit label `(p, q)`, 1-based.
pub type Label = (usize, usize);

/// A canonical basis monomial: sites in ascending order, no `(1,1)` labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(usize, Label)>);

impl Monomial {
    pub fn unit() -> Self {
        Monomial(Vec::new())
    }

    /// Builds a canonical monomial. Panics on unsorted sites or `(1,1)`
    /// labels; use [`Element::from_raw`] for arbitrary input.
    pub fn from_entries(entries: Vec<(usize, Label)>) -> Self {
        assert!(
            entries.windows(2).all(|w| w[0].0 < w[1].0),
            "sites must ascend"
        );
        assert!(
            entries.iter().all(|&(_, l)| l != (1, 1)),
            "(1,1) is not canonical"
        );
        Monomial(entries)
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[(usize, Label)] {
        &self.0
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&(s, _)| s)
    }

    pub fn label_at(&self, site: usize) -> Option<Label> {
        self.0
            .binary_search_by_key(&site, |&(s, _)| s)
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "id");
        }
        for (k, (site, (p, q))) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            write!(f, "e[{site}]({p},{q})")?;
        }
        Ok(())
    }
}

type Terms = BTreeMap<Monomial, Scalar>;

fn add_term(terms: &mut Terms, m: Monomial, c: Scalar) {
    if c.is_zero() {
        return;
    }
    match terms.entry(m) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            let s = o.get() + &c;
            if s.is_zero() {
                o.remove();
            } else {
                *o.get_mut() = s;
            }
        }
    }
}

/// Adds `c * Π entries` to `terms`, expanding every `(1,1)` label through
/// `e_11 = 1 - Σ_{p≥2} e_pp`. Entries must have ascending, distinct sites.
fn add_expanded(terms: &mut Terms, shape: &SiteShape, entries: &[(usize, Label)], c: &Scalar) {
    match entries.iter().position(|&(_, l)| l == (1, 1)) {
        None => add_term(terms, Monomial(entries.to_vec()), c.clone()),
        Some(j) => {
            let site = entries[j].0;
            let mut rest: Vec<(usize, Label)> = entries.to_vec();
            rest.remove(j);
            add_expanded(terms, shape, &rest, c);
            let neg = -c;
            for p in 2..=shape.size(site) {
                let mut with = entries.to_vec();
                with[j] = (site, (p, p));
                add_expanded(terms, shape, &with, &neg);
            }
        }
    }
}

/// Product of two monomials as a raw entry list (may contain `(1,1)`), or
/// `None` when some site's matrix units annihilate.
fn raw_product(a: &Monomial, b: &Monomial) -> Option<Vec<(usize, Label)>> {
    let (x, y) = (&a.0, &b.0);
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        let (sa, (p, q)) = x[i];
        let (sb, (r, s)) = y[j];
        if sa < sb {
            out.push(x[i]);
            i += 1;
        } else if sb < sa {
            out.push(y[j]);
            j += 1;
        } else {
            if q != r {
                return None;
            }
            out.push((sa, (p, s)));
            i += 1;
            j += 1;
        }
    }
    out.extend_from_slice(&x[i..]);
    out.extend_from_slice(&y[j..]);
    Some(out)
}

/// A finitely supported element of the tensor product, in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Element {
    field: FieldSpec,
    shape: SiteShape,
    terms: Terms,
}

impl Element {
    pub fn zero(field: FieldSpec, shape: &SiteShape) -> Self {
        Element {
            field,
            shape: shape.clone(),
            terms: Terms::new(),
        }
    }

    pub fn scalar(field: FieldSpec, shape: &SiteShape, c: Scalar) -> Self {
        let mut terms = Terms::new();
        add_term(&mut terms, Monomial::unit(), c);
        Element {
            field,
            shape: shape.clone(),
            terms,
        }
    }

    pub fn one(field: FieldSpec, shape: &SiteShape) -> Self {
        Self::scalar(field, shape, field.one())
    }

    /// The matrix unit `e_pq(site)`.
    pub fn unit(
        field: FieldSpec,
        shape: &SiteShape,
        site: usize,
        p: usize,
        q: usize,
    ) -> Result<Self> {
        Self::from_raw(field, shape, vec![(vec![(site, (p, q))], field.one())])
    }

    /// Canonicalizes a list of raw monomials. Each monomial is a list of
    /// `(site, (p, q))` factors; repeated sites compose left to right and
    /// `(1,1)` labels are rewritten away.
    pub fn from_raw(
        field: FieldSpec,
        shape: &SiteShape,
        raw: Vec<(Vec<(usize, Label)>, Scalar)>,
    ) -> Result<Self> {
        let mut terms = Terms::new();
        for (factors, c) in raw {
            if c.field() != field {
                return Err(Error::FieldMismatch);
            }
            let mut by_site: BTreeMap<usize, Option<Label>> = BTreeMap::new();
            for (site, (p, q)) in factors {
                let n = shape.size(site);
                if site == 0 || p == 0 || q == 0 || p > n || q > n {
                    return Err(Error::IndexOutOfRange {
                        site,
                        p,
                        q,
                        size: n,
                    });
                }
                let slot = by_site.entry(site).or_insert(Some((p, p)));
                *slot = match *slot {
                    Some((a, b)) if b == p => Some((a, q)),
                    _ => None,
                };
            }
            let entries: Option<Vec<(usize, Label)>> = by_site
                .into_iter()
                .map(|(s, l)| l.map(|l| (s, l)))
                .collect();
            if let Some(entries) = entries {
                add_expanded(&mut terms, shape, &entries, &c);
            }
        }
        Ok(Element {
            field,
            shape: shape.clone(),
            terms,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn shape(&self) -> &SiteShape {
        &self.shape
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> Scalar {
        self.terms
            .get(m)
            .cloned()
            .unwrap_or_else(|| self.field.zero())
    }

    /// Coefficient of the unit, i.e. the `F·1` component.
    pub fn unit_component(&self) -> Scalar {
        self.coefficient(&Monomial::unit())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.unit_component().is_one()
    }

    /// Sites carrying a non-identity factor in some term.
    pub fn support(&self) -> BTreeSet<usize> {
        self.terms.keys().flat_map(|m| m.sites()).collect()
    }

    /// The element with its `F·1` component removed.
    pub fn without_unit(&self) -> Element {
        let mut e = self.clone();
        e.terms.remove(&Monomial::unit());
        e
    }

    /// The first nonzero coefficient in canonical monomial order.
    pub fn leading_coefficient(&self) -> Option<&Scalar> {
        self.terms.values().next()
    }

    pub fn compatible(&self, other: &Element) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch);
        }
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Element) -> Result<Element> {
        self.compatible(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            add_term(&mut terms, m.clone(), c.clone());
        }
        Ok(Element {
            terms,
            ..self.clone_empty()
        })
    }

    pub fn sub(&self, other: &Element) -> Result<Element> {
        self.add(&-other)
    }

    pub fn scale(&self, c: &Scalar) -> Element {
        if c.is_zero() {
            return self.clone_empty();
        }
        Element {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
            ..self.clone_empty()
        }
    }

    pub fn mul(&self, other: &Element) -> Result<Element> {
        self.compatible(other)?;
        // Large operands multiply faster as Kronecker matrices on the joint support.
        let sites: Vec<usize> = self.support().union(&other.support()).copied().collect();
        let dim: usize = sites.iter().map(|&s| self.shape.size(s)).product();
        let dense_cost = dim.saturating_mul(dim).saturating_mul(dim);
        if dense_cost
            < self
                .num_terms()
                .saturating_mul(other.num_terms())
                .saturating_mul(16)
        {
            let prod = &self.dense_expand(&sites)? * &other.dense_expand(&sites)?;
            return Ok(Element::from_dense(self.field, &self.shape, &sites, &prod));
        }
        let mut terms = Terms::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some(raw) = raw_product(ma, mb) {
                    add_expanded(&mut terms, &self.shape, &raw, &(ca * cb));
                }
            }
        }
        Ok(Element {
            terms,
            ..self.clone_empty()
        })
    }

    /// `[x, y] = xy - yx`.
    pub fn commutator(&self, other: &Element) -> Result<Element> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    fn clone_empty(&self) -> Element {
        Element {
            field: self.field,
            shape: self.shape.clone(),
            terms: Terms::new(),
        }
    }

    fn check_sorted_sites(sites: &[usize]) {
        assert!(
            sites.windows(2).all(|w| w[0] < w[1]),
            "site list must ascend"
        );
    }

    /// Kronecker representation on `⊗_{i∈sites} M_{n_i}`, first site outermost.
    pub fn dense_expand(&self, sites: &[usize]) -> Result<DenseMatrix> {
        Self::check_sorted_sites(sites);
        let support = self.support();
        if !support.iter().all(|s| sites.binary_search(s).is_ok()) {
            return Err(Error::SupportNotContained {
                support: support.into_iter().collect(),
                sites: sites.to_vec(),
            });
        }
        let sizes: Vec<usize> = sites.iter().map(|&s| self.shape.size(s)).collect();
        let dim: usize = sizes.iter().product();
        let mut out = DenseMatrix::zeros(self.field, dim, dim);
        for (m, c) in &self.terms {
            let mut cells = vec![(0usize, 0usize)];
            for (&site, &n) in sites.iter().zip(&sizes) {
                cells = match m.label_at(site) {
                    Some((p, q)) => cells
                        .iter()
                        .map(|&(r, k)| (r * n + p - 1, k * n + q - 1))
                        .collect(),
                    None => cells
                        .iter()
                        .flat_map(|&(r, k)| (0..n).map(move |t| (r * n + t, k * n + t)))
                        .collect(),
                };
            }
            for (r, k) in cells {
                out.add_at(r, k, c);
            }
        }
        Ok(out)
    }

    /// Inverse of [`Element::dense_expand`]: reads a matrix on
    /// `⊗_{i∈sites} M_{n_i}` back into canonical form.
    pub fn from_dense(
        field: FieldSpec,
        shape: &SiteShape,
        sites: &[usize],
        m: &DenseMatrix,
    ) -> Self {
        Self::check_sorted_sites(sites);
        let sizes: Vec<usize> = sites.iter().map(|&s| shape.size(s)).collect();
        let dim: usize = sizes.iter().product();
        assert_eq!(
            (m.rows(), m.cols()),
            (dim, dim),
            "matrix does not match sites"
        );
        // Tensor of per-site labels l = p*n + q (0-based), slot 0 = (1,1).
        let mut strides = vec![1usize; sites.len()];
        for k in (0..sites.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1] * sizes[k + 1];
        }
        let mut tensor = vec![field.zero(); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                let v = m.get(r, c);
                if v.is_zero() {
                    continue;
                }
                let (mut rr, mut cc, mut idx) = (r, c, 0);
                for k in (0..sites.len()).rev() {
                    let n = sizes[k];
                    idx += ((rr % n) * n + cc % n) * strides[k];
                    rr /= n;
                    cc /= n;
                }
                tensor[idx] = v.clone();
            }
        }
        // c11·e11 + Σ c_pp·e_pp = c11·1 + Σ (c_pp - c11)·e_pp at each site.
        for k in 0..sites.len() {
            let n = sizes[k];
            for idx in 0..tensor.len() {
                if !(idx / strides[k]).is_multiple_of(n * n) || tensor[idx].is_zero() {
                    continue;
                }
                let c = tensor[idx].clone();
                for p in 1..n {
                    let j = idx + (p * n + p) * strides[k];
                    tensor[j] = &tensor[j] - &c;
                }
            }
        }
        let mut terms = Terms::new();
        for (idx, v) in tensor.into_iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let mut entries = Vec::new();
            for k in 0..sites.len() {
                let n = sizes[k];
                let l = (idx / strides[k]) % (n * n);
                if l != 0 {
                    entries.push((sites[k], (l / n + 1, l % n + 1)));
                }
            }
            terms.insert(Monomial(entries), v);
        }
        Element {
            field,
            shape: shape.clone(),
            terms,
        }
    }

    /// Two-sided inverse, computed densely over the element's own support.
    pub fn invert(&self) -> Result<Element> {
        let sites: Vec<usize> = self.support().into_iter().collect();
        if sites.is_empty() {
            let c = self.unit_component().inv().ok_or(Error::NotInvertible)?;
            return Ok(Element::scalar(self.field, &self.shape, c));
        }
        let inv = self
            .dense_expand(&sites)?
            .inverse()
            .ok_or(Error::NotInvertible)?;
        Ok(Element::from_dense(self.field, &self.shape, &sites, &inv))
    }

    /// `a⁻¹ · x · a`.
    pub fn conjugate(a: &Element, x: &Element) -> Result<Element> {
        a.compatible(x)?;
        let inv = a.invert()?;
        let sites: Vec<usize> = a.support().union(&x.support()).copied().collect();
        let dim: usize = sites.iter().map(|&s| a.shape.size(s)).product();
        let sparse_cost = inv
            .num_terms()
            .saturating_mul(x.num_terms())
            .saturating_mul(a.num_terms().max(1));
        let dense_cost = dim
            .saturating_mul(dim)
            .saturating_mul(dim)
            .saturating_mul(2);
        if dense_cost < sparse_cost {
            let (ai, xx, aa) = (
                inv.dense_expand(&sites)?,
                x.dense_expand(&sites)?,
                a.dense_expand(&sites)?,
            );
            let prod = &(&ai * &xx) * &aa;
            Ok(Element::from_dense(a.field, &a.shape, &sites, &prod))
        } else {
            inv.mul(x)?.mul(a)
        }
    }

    /// Whether `x` commutes with every matrix unit at `site`.
    pub fn centralizer_check(&self, site: usize) -> bool {
        let n = self.shape.size(site);
        (1..=n).all(|p| {
            (1..=n).all(|q| {
                let g = Element::unit(self.field, &self.shape, site, p, q).expect("label in range");
                g.commutator(self).expect("compatible").is_zero()
            })
        })
    }

    /// For `x` in the centralizer of `A_site`, the tensor complement of `x`
    /// (canonical terms already avoid the site).
    pub fn factor_site(&self, site: usize) -> Result<Element> {
        if !self.centralizer_check(site) {
            return Err(Error::NotInCentralizer(site));
        }
        debug_assert!(!self.support().contains(&site));
        Ok(self.clone())
    }

    /// `e·u·e` for an idempotent `e`.
    pub fn peirce_project(u: &Element, e: &Element) -> Result<Element> {
        u.compatible(e)?;
        if e.mul(e)? != *e {
            return Err(Error::NotIdempotent);
        }
        e.mul(u)?.mul(e)
    }

    /// Normalized trace `τ`, with `τ(1) = 1`.
    pub fn normalized_trace(&self) -> Result<Scalar> {
        for s in self.support() {
            let n = self.shape.size(s);
            if self.field.divides(n) {
                return Err(Error::CharacteristicDividesSize { site: s, size: n });
            }
        }
        let mut acc = self.field.zero();
        'terms: for (m, c) in &self.terms {
            let mut v = c.clone();
            for &(site, (p, q)) in m.entries() {
                if p != q {
                    continue 'terms;
                }
                let n = self.field.from_i64(self.shape.size(site) as i64);
                v = &v * &n.inv().expect("checked above");
            }
            acc = &acc + &v;
        }
        Ok(acc)
    }

    /// Translates every site index by `offset`.
    pub fn shift(&self, offset: i64) -> Result<Element> {
        let mut terms = Terms::new();
        for (m, c) in &self.terms {
            let mut entries = Vec::with_capacity(m.len());
            for &(site, (p, q)) in m.entries() {
                let target = site as i64 + offset;
                if target < 1 {
                    return Err(Error::ShiftOutOfRange { site, offset });
                }
                let target = target as usize;
                let n = self.shape.size(target);
                if p > n || q > n {
                    return Err(Error::ShapeMismatchAtShiftedSite {
                        site: target,
                        p,
                        q,
                        size: n,
                    });
                }
                entries.push((target, (p, q)));
            }
            terms.insert(Monomial(entries), c.clone());
        }
        Ok(Element {
            terms,
            ..self.clone_empty()
        })
    }
}

impl Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        Element {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
            ..self.clone_empty()
        }
    }
}

impl Add for &Element {
    type Output = Element;
    fn add(self, rhs: &Element) -> Element {
        Element::add(self, rhs).expect("incompatible elements")
    }
}

impl Sub for &Element {
    type Output = Element;
    fn sub(self, rhs: &Element) -> Element {
        Element::sub(self, rhs).expect("incompatible elements")
    }
}

impl Mul for &Element {
    type Output = Element;
    fn mul(self, rhs: &Element) -> Element {
        Element::mul(self, rhs).expect("incompatible elements")
    }
}

/// Canonical printing: terms in monomial order, coefficient 1 suppressed.
impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            let body = if m.is_unit() {
                abs.to_string()
            } else if abs.is_one() && !(k == 0 && neg) {
                m.to_string()
            } else {
                format!("{abs}*{m}")
            };
            match (k, neg) {
                (0, false) => write!(f, "{body}")?,
                (0, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, " + {body}")?,
                (_, true) => write!(f, " - {body}")?,
            }
        }
        Ok(())
    }
}
