//! Derivations of the tensor product given by sparse systems of inner
//! derivations: `d = Σ_{S∈P} ad(a_S)` where every site meets only finitely
//! many members. Infinite systems are presented by shift-families, the
//! translates of one finitely supported template along the site axis.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::tensor::{Element, Label, Monomial, SiteShape};

/// A linear map `A_(finite) → A` that can be evaluated on elements.
pub trait LinearMap {
    fn field(&self) -> FieldSpec;
    fn shape(&self) -> &SiteShape;
    fn apply(&self, x: &Element) -> Result<Element>;
}

/// A finite member `(S, a_S)` of a sparse system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteMember {
    pub sites: BTreeSet<usize>,
    pub element: Element,
}

/// Members `shift(template, i - 1)` for every `i >= start`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftFamily {
    template: Element,
    start: usize,
    window: usize,
}

impl ShiftFamily {
    pub fn new(template: Element, start: usize) -> Result<Self> {
        if start == 0 {
            return Err(Error::InvalidSystem(
                "family start must be at least 1".into(),
            ));
        }
        let window = template.support().into_iter().next_back().unwrap_or(1);
        let shape = template.shape().clone();
        // Sizes are eventually constant, so checking shifts up to the last
        // exception covers every member.
        let last_shift = (start - 1).max(shape.last_exception());
        for (m, _) in template.terms() {
            for &(site, (p, q)) in m.entries() {
                for s in (start - 1)..=last_shift {
                    let n = shape.size(site + s);
                    if p > n || q > n {
                        return Err(Error::ShapeMismatchAtShiftedSite {
                            site: site + s,
                            p,
                            q,
                            size: n,
                        });
                    }
                }
            }
        }
        Ok(ShiftFamily {
            template,
            start,
            window,
        })
    }

    pub fn template(&self) -> &Element {
        &self.template
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Largest template site; member `i` lives on `[i, i + window - 1]`.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn member(&self, i: usize) -> Element {
        self.template
            .shift(i as i64 - 1)
            .expect("family labels were validated at construction")
    }

    fn member_sites(&self, i: usize) -> BTreeSet<usize> {
        (i..i + self.window).collect()
    }

    /// Member indices whose window meets `targets`.
    pub fn indices_meeting(&self, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &t in targets {
            let lo = self.start.max((t + 1).saturating_sub(self.window)).max(1);
            out.extend(lo..=t);
        }
        out
    }
}

/// A sparse system: finitely many explicit members plus shift-families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseSystem {
    field: FieldSpec,
    shape: SiteShape,
    finite: Vec<FiniteMember>,
    families: Vec<ShiftFamily>,
}

impl SparseSystem {
    pub fn new(field: FieldSpec, shape: &SiteShape) -> Self {
        SparseSystem {
            field,
            shape: shape.clone(),
            finite: Vec::new(),
            families: Vec::new(),
        }
    }

    fn check(&self, e: &Element) -> Result<()> {
        if e.field() != self.field {
            return Err(Error::FieldMismatch);
        }
        if *e.shape() != self.shape {
            return Err(Error::ShapeMismatch);
        }
        Ok(())
    }

    pub fn with_member(mut self, sites: BTreeSet<usize>, element: Element) -> Result<Self> {
        self.push_member(sites, element)?;
        Ok(self)
    }

    pub fn push_member(&mut self, sites: BTreeSet<usize>, element: Element) -> Result<()> {
        self.check(&element)?;
        if sites.is_empty() || sites.contains(&0) {
            return Err(Error::InvalidSystem(
                "member sites must be a nonempty set of positive sites".into(),
            ));
        }
        if !element.support().is_subset(&sites) {
            return Err(Error::InvalidSystem(format!(
                "member element {element} is not supported in {sites:?}"
            )));
        }
        self.finite.push(FiniteMember { sites, element });
        Ok(())
    }

    pub fn with_family(mut self, template: Element, start: usize) -> Result<Self> {
        self.push_family(template, start)?;
        Ok(self)
    }

    pub fn push_family(&mut self, template: Element, start: usize) -> Result<()> {
        self.check(&template)?;
        self.families.push(ShiftFamily::new(template, start)?);
        Ok(())
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn shape(&self) -> &SiteShape {
        &self.shape
    }

    pub fn finite(&self) -> &[FiniteMember] {
        &self.finite
    }

    pub fn families(&self) -> &[ShiftFamily] {
        &self.families
    }

    pub fn is_empty(&self) -> bool {
        self.finite.is_empty() && self.families.is_empty()
    }

    /// Every member whose site set meets `targets`; always a finite list.
    pub fn members_intersecting(
        &self,
        targets: &BTreeSet<usize>,
    ) -> Vec<(BTreeSet<usize>, Element)> {
        let mut out: Vec<(BTreeSet<usize>, Element)> = self
            .finite
            .iter()
            .filter(|m| !m.sites.is_disjoint(targets))
            .map(|m| (m.sites.clone(), m.element.clone()))
            .collect();
        for fam in &self.families {
            for i in fam.indices_meeting(targets) {
                out.push((fam.member_sites(i), fam.member(i)));
            }
        }
        out
    }

    /// Normal form used for syntactic comparison:
    /// unit components dropped (they act as zero), templates anchored at
    /// site 1, all families merged into one starting at the latest start with
    /// the earlier members moved to the finite part, finite members merged by
    /// site set, and finite members that extend the family downwards absorbed.
    pub fn simplify(&self) -> SparseSystem {
        let mut families: Vec<ShiftFamily> = Vec::new();
        let mut finite: BTreeMap<BTreeSet<usize>, Element> = BTreeMap::new();
        let zero = Element::zero(self.field, &self.shape);
        let add_finite =
            |sites: BTreeSet<usize>,
             e: Element,
             finite: &mut BTreeMap<BTreeSet<usize>, Element>| {
                let slot = finite.entry(sites).or_insert_with(|| zero.clone());
                *slot = &*slot + &e.without_unit();
            };
        for m in &self.finite {
            add_finite(m.sites.clone(), m.element.clone(), &mut finite);
        }
        for f in &self.families {
            if let Some(f) = anchored(f.template.without_unit(), f.start) {
                families.push(f);
            }
        }
        let merged = if families.is_empty() {
            None
        } else {
            let top = families.iter().map(|f| f.start).max().expect("nonempty");
            let mut sum = zero.clone();
            for f in &families {
                for i in f.start..top {
                    add_finite(f.member_sites(i), f.member(i), &mut finite);
                }
                sum = &sum + &f.template;
            }
            anchored(sum, top)
        };
        let mut merged = merged;
        if let Some(fam) = merged.as_mut() {
            while fam.start > 1 {
                let prev = fam.start - 1;
                let sites = fam.member_sites(prev);
                match finite.get(&sites) {
                    Some(e) if *e == fam.member(prev) => {
                        finite.remove(&sites);
                        fam.start = prev;
                    }
                    _ => break,
                }
            }
        }
        SparseSystem {
            field: self.field,
            shape: self.shape.clone(),
            finite: finite
                .into_iter()
                .filter(|(_, e)| !e.is_zero())
                .map(|(sites, element)| FiniteMember { sites, element })
                .collect(),
            families: merged.into_iter().collect(),
        }
    }
}

/// Re-expresses a family so that its template touches site 1.
fn anchored(template: Element, start: usize) -> Option<ShiftFamily> {
    if template.is_zero() {
        return None;
    }
    let first = template.support().into_iter().next()?;
    let template = template
        .shift(1 - first as i64)
        .expect("shifting towards site 1");
    Some(ShiftFamily::new(template, start + first - 1).expect("anchoring keeps members"))
}

/// A derivation: inner, or a sparse-system sum of inner derivations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Derivation {
    Inner(Element),
    SparseSum(SparseSystem),
}

impl Derivation {
    pub fn to_system(&self) -> SparseSystem {
        match self {
            Derivation::SparseSum(s) => s.clone(),
            Derivation::Inner(a) => {
                let mut s = SparseSystem::new(a.field(), a.shape());
                let support = a.support();
                if !support.is_empty() {
                    s.push_member(support, a.clone())
                        .expect("support is a valid site set");
                }
                s
            }
        }
    }

    /// Syntactic normal form (see [`SparseSystem::simplify`]).
    pub fn simplify(&self) -> Derivation {
        match self {
            Derivation::Inner(a) => Derivation::Inner(a.without_unit()),
            Derivation::SparseSum(s) => Derivation::SparseSum(s.simplify()),
        }
    }
}

impl LinearMap for Derivation {
    fn field(&self) -> FieldSpec {
        match self {
            Derivation::Inner(a) => a.field(),
            Derivation::SparseSum(s) => s.field,
        }
    }

    fn shape(&self) -> &SiteShape {
        match self {
            Derivation::Inner(a) => a.shape(),
            Derivation::SparseSum(s) => &s.shape,
        }
    }

    fn apply(&self, x: &Element) -> Result<Element> {
        match self {
            Derivation::Inner(a) => a.commutator(x),
            Derivation::SparseSum(s) => {
                let mut acc = Element::zero(s.field, &s.shape);
                acc.compatible(x)?;
                for (_, a) in s.members_intersecting(&x.support()) {
                    acc = &acc + &a.commutator(x)?;
                }
                Ok(acc)
            }
        }
    }
}

/// Whether `d(xy) = d(x)y + x d(y)` holds exactly.
pub fn leibniz_check<M: LinearMap + ?Sized>(d: &M, x: &Element, y: &Element) -> bool {
    let check = || -> Result<bool> {
        let lhs = d.apply(&x.mul(y)?)?;
        let rhs = d.apply(x)?.mul(y)?.add(&x.mul(&d.apply(y)?)?)?;
        Ok(lhs == rhs)
    };
    check().unwrap_or(false)
}

/// All matrix units `e_pq(site)`, including `(1,1)`.
pub fn site_generators(field: FieldSpec, shape: &SiteShape, site: usize) -> Vec<(Label, Element)> {
    let n = shape.size(site);
    let mut out = Vec::with_capacity(n * n);
    for p in 1..=n {
        for q in 1..=n {
            out.push((
                (p, q),
                Element::unit(field, shape, site, p, q).expect("label in range"),
            ));
        }
    }
    out
}

/// Flattened matrix unit `E_{K,L} = ⊗_{i∈S} e_{k_i l_i}(i)`.
fn flat_unit(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    row: &[usize],
    col: &[usize],
) -> Element {
    let factors = sites
        .iter()
        .zip(row.iter().zip(col))
        .map(|(&s, (&p, &q))| (s, (p, q)))
        .collect();
    Element::from_raw(field, shape, vec![(factors, field.one())]).expect("labels in range")
}

/// All multi-indices `K` with `1 <= k_i <= n_i`.
fn multi_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (1..=n).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// Finds `b` with `d(x) = [b, x]` for every `x ∈ A_S`, via
/// `b = Σ_K d(E_{K1}) E_{1K}` over the flattened matrix units of `A_S`.
pub fn inner_solve_local<M: LinearMap + ?Sized>(d: &M, sites: &BTreeSet<usize>) -> Result<Element> {
    if sites.is_empty() {
        return Err(Error::InvalidSystem(
            "inner_solve_local needs a nonempty site set".into(),
        ));
    }
    let (field, shape) = (d.field(), d.shape().clone());
    let sites: Vec<usize> = sites.iter().copied().collect();
    let sizes: Vec<usize> = sites.iter().map(|&s| shape.size(s)).collect();
    let ones = vec![1; sites.len()];
    let mut b = Element::zero(field, &shape);
    for k in multi_indices(&sizes) {
        let ek1 = flat_unit(field, &shape, &sites, &k, &ones);
        let e1k = flat_unit(field, &shape, &sites, &ones, &k);
        b = &b + &d.apply(&ek1)?.mul(&e1k)?;
    }
    for &s in &sites {
        for ((p, q), g) in site_generators(field, &shape, s) {
            if d.apply(&g)? != b.commutator(&g)? {
                return Err(Error::NotADerivation(format!(
                    "no inner derivation matches on e[{s}]({p},{q})"
                )));
            }
        }
    }
    Ok(b)
}

/// Whether `d1` and `d2` agree on every generator of `A_(1..N)`.
pub fn equal_on_truncation<A: LinearMap + ?Sized, B: LinearMap + ?Sized>(
    d1: &A,
    d2: &B,
    level: usize,
) -> bool {
    (1..=level).all(|site| {
        site_generators(d1.field(), d1.shape(), site)
            .into_iter()
            .all(|(_, g)| match (d1.apply(&g), d2.apply(&g)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            })
    })
}

/// Coefficients of a derivation against the topological basis `{ad(e)}`,
/// `e` ranging over canonical non-unit monomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisExpansion {
    /// Summed coefficients of the finite part.
    pub finite: Vec<(Monomial, Scalar)>,
    /// Per-family template coefficients; member `i` contributes the same
    /// coefficients on the template monomials shifted by `i - 1`.
    pub families: Vec<FamilyExpansion>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyExpansion {
    pub start: usize,
    pub window: usize,
    pub template: Vec<(Monomial, Scalar)>,
}

/// Basis coefficients of `ad(a)`: the canonical terms of `a` without its unit
/// component.
pub fn expand_element(a: &Element) -> Vec<(Monomial, Scalar)> {
    a.terms()
        .filter(|(m, _)| !m.is_unit())
        .map(|(m, c)| (m.clone(), c.clone()))
        .collect()
}

fn shift_monomial(m: &Monomial, offset: usize) -> Monomial {
    Monomial::from_entries(m.entries().iter().map(|&(s, l)| (s + offset, l)).collect())
}

impl BasisExpansion {
    pub fn is_empty(&self) -> bool {
        self.finite.is_empty() && self.families.iter().all(|f| f.template.is_empty())
    }

    /// Combined coefficients of all members lying inside `[1, level]`.
    pub fn truncated(&self, level: usize) -> BTreeMap<Monomial, Scalar> {
        let mut acc: BTreeMap<Monomial, Scalar> = BTreeMap::new();
        let mut add = |m: Monomial, c: &Scalar| {
            let e = acc.entry(m).or_insert_with(|| c.field().zero());
            *e = &*e + c;
        };
        for (m, c) in &self.finite {
            if m.sites().all(|s| s <= level) {
                add(m.clone(), c);
            }
        }
        for f in &self.families {
            let mut i = f.start;
            while i + f.window - 1 <= level {
                for (m, c) in &f.template {
                    add(shift_monomial(m, i - 1), c);
                }
                i += 1;
            }
        }
        acc.retain(|_, c| !c.is_zero());
        acc
    }
}

pub fn expand_basis(system: &SparseSystem) -> BasisExpansion {
    let mut finite: BTreeMap<Monomial, Scalar> = BTreeMap::new();
    for m in &system.finite {
        for (mono, c) in expand_element(&m.element) {
            let e = finite.entry(mono).or_insert_with(|| system.field.zero());
            *e = &*e + &c;
        }
    }
    finite.retain(|_, c| !c.is_zero());
    BasisExpansion {
        finite: finite.into_iter().collect(),
        families: system
            .families
            .iter()
            .map(|f| FamilyExpansion {
                start: f.start,
                window: f.window,
                template: expand_element(&f.template),
            })
            .collect(),
    }
}

/// `[d1, d2]`, computed memberwise: pairs of members with disjoint supports
/// commute, and family-by-family pairs reduce to finitely many relative
/// offsets, each producing a new family.
pub fn derivation_commutator(d1: &Derivation, d2: &Derivation) -> Result<Derivation> {
    if let (Derivation::Inner(a), Derivation::Inner(b)) = (d1, d2) {
        return Ok(Derivation::Inner(a.commutator(b)?));
    }
    let (s1, s2) = (d1.to_system(), d2.to_system());
    if s1.field != s2.field {
        return Err(Error::FieldMismatch);
    }
    if s1.shape != s2.shape {
        return Err(Error::ShapeMismatch);
    }
    let mut out = SparseSystem::new(s1.field, &s1.shape);
    let push = |sites: BTreeSet<usize>, e: Element, out: &mut SparseSystem| -> Result<()> {
        if !e.is_zero() {
            out.push_member(sites, e)?;
        }
        Ok(())
    };
    for m1 in &s1.finite {
        for m2 in &s2.finite {
            if !m1.sites.is_disjoint(&m2.sites) {
                let sites = m1.sites.union(&m2.sites).copied().collect();
                push(sites, m1.element.commutator(&m2.element)?, &mut out)?;
            }
        }
        for f2 in &s2.families {
            for j in f2.indices_meeting(&m1.sites) {
                let sites = m1.sites.union(&f2.member_sites(j)).copied().collect();
                push(sites, m1.element.commutator(&f2.member(j))?, &mut out)?;
            }
        }
    }
    for f1 in &s1.families {
        for m2 in &s2.finite {
            for i in f1.indices_meeting(&m2.sites) {
                let sites = f1.member_sites(i).union(&m2.sites).copied().collect();
                push(sites, f1.member(i).commutator(&m2.element)?, &mut out)?;
            }
        }
        for f2 in &s2.families {
            // Member i of f1 and member j = i + d of f2 overlap iff
            // -(w2 - 1) <= d <= w1 - 1.
            for d in 0..f1.window {
                let t = f1.template.commutator(&f2.template.shift(d as i64)?)?;
                if !t.is_zero() {
                    let start = f1.start.max(f2.start.saturating_sub(d)).max(1);
                    out.families.push(ShiftFamily::new(t, start)?);
                }
            }
            for d in 1..f2.window {
                let t = f1.template.shift(d as i64)?.commutator(&f2.template)?;
                if !t.is_zero() {
                    let start = f2.start.max(f1.start.saturating_sub(d)).max(1);
                    out.families.push(ShiftFamily::new(t, start)?);
                }
            }
        }
    }
    Ok(Derivation::SparseSum(out.simplify()))
}

/// A derivation presented by its values on the matrix-unit generators of
/// `A_(1..level)`, extended by the Leibniz rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorImages {
    field: FieldSpec,
    shape: SiteShape,
    level: usize,
    images: BTreeMap<(usize, Label), Element>,
}

impl GeneratorImages {
    /// Images must be given for every `e_pq(i)`, `(p,q) != (1,1)`,
    /// `1 <= i <= level`; an explicit `(1,1)` image is allowed and checked by
    /// [`GeneratorImages::validate`].
    pub fn new(
        field: FieldSpec,
        shape: &SiteShape,
        level: usize,
        images: impl IntoIterator<Item = ((usize, Label), Element)>,
    ) -> Result<Self> {
        let images: BTreeMap<(usize, Label), Element> = images.into_iter().collect();
        for (&(site, (p, q)), e) in &images {
            let n = shape.size(site);
            if site == 0 || site > level || p == 0 || q == 0 || p > n || q > n {
                return Err(Error::IndexOutOfRange {
                    site,
                    p,
                    q,
                    size: n,
                });
            }
            if e.field() != field {
                return Err(Error::FieldMismatch);
            }
            if e.shape() != shape {
                return Err(Error::ShapeMismatch);
            }
        }
        for site in 1..=level {
            let n = shape.size(site);
            for p in 1..=n {
                for q in 1..=n {
                    if (p, q) != (1, 1) && !images.contains_key(&(site, (p, q))) {
                        return Err(Error::NotADerivation(format!(
                            "missing image of e[{site}]({p},{q})"
                        )));
                    }
                }
            }
        }
        Ok(GeneratorImages {
            field,
            shape: shape.clone(),
            level,
            images,
        })
    }

    /// Samples `d` on the generators of `A_(1..level)`.
    pub fn from_map<M: LinearMap + ?Sized>(d: &M, level: usize) -> Result<Self> {
        let mut images = BTreeMap::new();
        for site in 1..=level {
            for ((p, q), g) in site_generators(d.field(), d.shape(), site) {
                if (p, q) != (1, 1) {
                    images.insert((site, (p, q)), d.apply(&g)?);
                }
            }
        }
        Self::new(d.field(), d.shape(), level, images)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn images(&self) -> impl Iterator<Item = (&(usize, Label), &Element)> {
        self.images.iter()
    }

    /// `d(e_pq(site))`; the `(1,1)` image defaults to `-Σ_{p≥2} d(e_pp)`.
    pub fn image(&self, site: usize, p: usize, q: usize) -> Element {
        if let Some(e) = self.images.get(&(site, (p, q))) {
            return e.clone();
        }
        assert_eq!((p, q), (1, 1), "image of e[{site}]({p},{q}) missing");
        self.derived_e11(site)
    }

    fn derived_e11(&self, site: usize) -> Element {
        let mut acc = Element::zero(self.field, &self.shape);
        for p in 2..=self.shape.size(site) {
            acc = &acc - &self.images[&(site, (p, p))];
        }
        acc
    }

    /// Checks that the images respect every defining relation of
    /// `A_(1..level)`: matrix-unit products, `d(1) = 0`, and commutation of
    /// distinct sites.
    pub fn validate(&self) -> Result<()> {
        let (f, sh) = (self.field, &self.shape);
        for site in 1..=self.level {
            if let Some(given) = self.images.get(&(site, (1, 1))) {
                if *given != self.derived_e11(site) {
                    return Err(Error::NotADerivation(format!("d(1) != 0 at site {site}")));
                }
            }
            let gens = site_generators(f, sh, site);
            for ((p, q), g) in &gens {
                let dg = self.image(site, *p, *q);
                for ((r, s), h) in &gens {
                    let lhs = &(&dg * h) + &(g * &self.image(site, *r, *s));
                    let rhs = if q == r {
                        self.image(site, *p, *s)
                    } else {
                        Element::zero(f, sh)
                    };
                    if lhs != rhs {
                        return Err(Error::NotADerivation(format!(
                            "Leibniz rule fails on e[{site}]({p},{q})·e[{site}]({r},{s})"
                        )));
                    }
                }
            }
        }
        for i in 1..=self.level {
            for j in i + 1..=self.level {
                for ((p, q), g) in site_generators(f, sh, i)
                    .into_iter()
                    .filter(|(l, _)| *l != (1, 1))
                {
                    for ((r, s), h) in site_generators(f, sh, j)
                        .into_iter()
                        .filter(|(l, _)| *l != (1, 1))
                    {
                        let (dg, dh) = (self.image(i, p, q), self.image(j, r, s));
                        let gh = &(&dg * &h) + &(&g * &dh);
                        let hg = &(&dh * &g) + &(&h * &dg);
                        if gh != hg {
                            return Err(Error::NotADerivation(format!(
                                "images of e[{i}]({p},{q}) and e[{j}]({r},{s}) break commutation"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl LinearMap for GeneratorImages {
    fn field(&self) -> FieldSpec {
        self.field
    }

    fn shape(&self) -> &SiteShape {
        &self.shape
    }

    fn apply(&self, x: &Element) -> Result<Element> {
        if x.support().iter().any(|&s| s > self.level) {
            return Err(Error::SupportExceedsSource(x.to_string()));
        }
        let (f, sh) = (self.field, &self.shape);
        let mut acc = Element::zero(f, sh);
        for (m, c) in x.terms() {
            let factors: Vec<Element> = m
                .entries()
                .iter()
                .map(|&(s, (p, q))| Element::unit(f, sh, s, p, q).expect("canonical label"))
                .collect();
            for (j, &(s, (p, q))) in m.entries().iter().enumerate() {
                let mut term = Element::scalar(f, sh, c.clone());
                for g in &factors[..j] {
                    term = &term * g;
                }
                term = &term * &self.image(s, p, q);
                for g in &factors[j + 1..] {
                    term = &term * g;
                }
                acc = &acc + &term;
            }
        }
        Ok(acc)
    }
}

/// `d - Σ ad(a_j)` for the terms peeled so far.
struct Residual<'a> {
    base: &'a GeneratorImages,
    peeled: &'a [Element],
}

impl LinearMap for Residual<'_> {
    fn field(&self) -> FieldSpec {
        self.base.field
    }

    fn shape(&self) -> &SiteShape {
        &self.base.shape
    }

    fn apply(&self, x: &Element) -> Result<Element> {
        let mut acc = self.base.apply(x)?;
        for a in self.peeled {
            acc = acc.sub(&a.commutator(x)?)?;
        }
        Ok(acc)
    }
}

/// One inner term `ad(a_k)` split off at step `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeeledTerm {
    pub step: usize,
    pub sites: BTreeSet<usize>,
    pub element: Element,
}

/// Writes `d` on `A_(1..level)` as `Σ_k ad(a_k)`: step `k` solves for the
/// residual on `A_k` alone, and because the residual already vanishes on
/// `A_1 ⊗ ⋯ ⊗ A_(k-1)`, the solution centralizes that subalgebra.
/// Steps with a trivial solution are omitted.
pub fn peel_derivation(d: &GeneratorImages) -> Result<Vec<PeeledTerm>> {
    d.validate()?;
    let mut peeled: Vec<Element> = Vec::new();
    let mut out = Vec::new();
    for k in 1..=d.level {
        let residual = Residual {
            base: d,
            peeled: &peeled,
        };
        let b = inner_solve_local(&residual, &BTreeSet::from([k]))?.without_unit();
        if b.is_zero() {
            continue;
        }
        for s in 1..k {
            if !b.centralizer_check(s) {
                return Err(Error::NotADerivation(format!(
                    "step {k} term fails to centralize site {s}"
                )));
            }
        }
        out.push(PeeledTerm {
            step: k,
            sites: b.support(),
            element: b.clone(),
        });
        peeled.push(b);
    }
    let residual = Residual {
        base: d,
        peeled: &peeled,
    };
    for site in 1..=d.level {
        for ((p, q), g) in site_generators(d.field, &d.shape, site) {
            if !residual.apply(&g)?.is_zero() {
                return Err(Error::NotADerivation(format!(
                    "residual survives on e[{site}]({p},{q})"
                )));
            }
        }
    }
    Ok(out)
}

/// `z = Σ_{i≥1} ad(e_12(i) e_11(i+1))`.
pub fn build_z(field: FieldSpec, shape: &SiteShape) -> Result<Derivation> {
    let t = Element::from_raw(
        field,
        shape,
        vec![(vec![(1, (1, 2)), (2, (1, 1))], field.one())],
    )?;
    Ok(Derivation::SparseSum(
        SparseSystem::new(field, shape).with_family(t, 1)?,
    ))
}

/// `y_k = Σ_{i≥1} ad(e_12(i) e_12(i+1) ⋯ e_12(i+k-1))`.
pub fn build_yk(field: FieldSpec, shape: &SiteShape, k: usize) -> Result<Derivation> {
    if k == 0 {
        return Err(Error::InvalidSystem("y_k needs k >= 1".into()));
    }
    Ok(Derivation::SparseSum(
        SparseSystem::new(field, shape).with_family(e12_chain(field, shape, 1, k)?, 1)?,
    ))
}

/// `e_12(from) e_12(from+1) ⋯ e_12(from+len-1)`.
pub fn e12_chain(field: FieldSpec, shape: &SiteShape, from: usize, len: usize) -> Result<Element> {
    let factors = (from..from + len).map(|s| (s, (1, 2))).collect();
    Element::from_raw(field, shape, vec![(factors, field.one())])
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: FieldSpec = FieldSpec::Rationals;

    fn sh() -> SiteShape {
        SiteShape::uniform(2).unwrap()
    }

    fn e(site: usize, p: usize, q: usize) -> Element {
        Element::unit(Q, &sh(), site, p, q).unwrap()
    }

    fn one() -> Element {
        Element::one(Q, &sh())
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn system(d: &Derivation) -> &SparseSystem {
        match d {
            Derivation::SparseSum(s) => s,
            Derivation::Inner(_) => panic!("expected a sparse sum"),
        }
    }

    #[test]
    fn members_intersecting_examples() {
        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let m = system(&y1).members_intersecting(&set(&[3]));
        assert_eq!(m, vec![(set(&[3]), e(3, 1, 2))]);

        let z = build_z(Q, &sh()).unwrap();
        let m = system(&z).members_intersecting(&set(&[2]));
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].0, set(&[1, 2]));
        assert_eq!(m[1].0, set(&[2, 3]));

        let s = SparseSystem::new(Q, &sh())
            .with_member(set(&[5]), e(5, 1, 2))
            .unwrap();
        assert!(s.members_intersecting(&set(&[1])).is_empty());

        let m = system(&z).members_intersecting(&set(&[1]));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn apply_examples() {
        let z = build_z(Q, &sh()).unwrap();
        assert!(z.apply(&one()).unwrap().is_zero());
        assert_eq!(z.apply(&e(2, 1, 2)).unwrap(), &e(1, 1, 2) * &e(2, 1, 2));
        let inner = Derivation::Inner(e(1, 1, 2));
        assert_eq!(
            inner.apply(&e(1, 2, 1)).unwrap(),
            &one() - &e(1, 2, 2).scale(&Q.from_i64(2))
        );
        let y1 = build_yk(Q, &sh(), 1).unwrap();
        assert_eq!(
            y1.apply(&e(2, 2, 1)).unwrap(),
            &one() - &e(2, 2, 2).scale(&Q.from_i64(2))
        );
    }

    #[test]
    fn inner_derivation_in_char_two() {
        let f = FieldSpec::Prime(2);
        let d = Derivation::Inner(Element::unit(f, &sh(), 1, 1, 2).unwrap());
        let x = Element::unit(f, &sh(), 1, 2, 1).unwrap();
        assert!(d.apply(&x).unwrap().is_one());
    }

    struct LeftMultiply(Element);

    impl LinearMap for LeftMultiply {
        fn field(&self) -> FieldSpec {
            self.0.field()
        }
        fn shape(&self) -> &SiteShape {
            self.0.shape()
        }
        fn apply(&self, x: &Element) -> Result<Element> {
            self.0.mul(x)
        }
    }

    #[test]
    fn leibniz_examples() {
        let inner = Derivation::Inner(&e(1, 1, 2) + &e(2, 2, 1));
        assert!(leibniz_check(&inner, &e(1, 2, 1), &e(2, 1, 2)));
        let z = build_z(Q, &sh()).unwrap();
        assert!(leibniz_check(&z, &e(2, 1, 2), &e(2, 2, 1)));
        let shim = LeftMultiply(e(1, 1, 2));
        assert!(!leibniz_check(&shim, &e(1, 2, 1), &e(1, 2, 1)));
        assert!(inner_solve_local(&shim, &set(&[1])).is_err());
    }

    #[test]
    fn inner_solve_examples() {
        let d = Derivation::Inner(e(1, 1, 2));
        assert_eq!(inner_solve_local(&d, &set(&[1])).unwrap(), e(1, 1, 2));

        let zero = Derivation::SparseSum(SparseSystem::new(Q, &sh()));
        assert!(inner_solve_local(&zero, &set(&[1, 2])).unwrap().is_zero());

        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let b = inner_solve_local(&y1, &set(&[1, 2])).unwrap();
        let target = &e(1, 1, 2) + &e(2, 1, 2);
        for s in [1, 2] {
            for (_, g) in site_generators(Q, &sh(), s) {
                assert_eq!(b.commutator(&g).unwrap(), target.commutator(&g).unwrap());
            }
        }
    }

    #[test]
    fn expand_basis_examples() {
        let s = SparseSystem::new(Q, &sh())
            .with_member(set(&[1]), one())
            .unwrap();
        assert!(expand_basis(&s).is_empty());

        let s = SparseSystem::new(Q, &sh())
            .with_member(set(&[1]), e(1, 1, 2))
            .unwrap();
        let ex = expand_basis(&s);
        assert_eq!(
            ex.finite,
            vec![(Monomial::from_entries(vec![(1, (1, 2))]), Q.one())]
        );

        let a = &e(1, 1, 1) * &e(2, 1, 2);
        let s = SparseSystem::new(Q, &sh())
            .with_member(set(&[1, 2]), a)
            .unwrap();
        let ex = expand_basis(&s);
        assert_eq!(
            ex.finite,
            vec![
                (
                    Monomial::from_entries(vec![(1, (2, 2)), (2, (1, 2))]),
                    Q.from_i64(-1)
                ),
                (Monomial::from_entries(vec![(2, (1, 2))]), Q.one()),
            ]
        );
    }

    #[test]
    fn commutator_of_z_and_y1_is_y2() {
        let z = build_z(Q, &sh()).unwrap();
        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let y2 = build_yk(Q, &sh(), 2).unwrap();
        let c = derivation_commutator(&z, &y1).unwrap();
        assert_eq!(c, y2.simplify());
        assert!(equal_on_truncation(&c, &y2, 8));
    }

    #[test]
    fn commutator_inner_and_self() {
        let (a, b) = (e(1, 1, 2), e(1, 2, 1));
        let c = derivation_commutator(&Derivation::Inner(a.clone()), &Derivation::Inner(b.clone()))
            .unwrap();
        assert_eq!(c, Derivation::Inner(a.commutator(&b).unwrap()));
        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let c = derivation_commutator(&y1, &y1).unwrap();
        assert!(system(&c).is_empty());
    }

    #[test]
    fn truncation_distinguishes_y1_and_y2() {
        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let y2 = build_yk(Q, &sh(), 2).unwrap();
        assert!(equal_on_truncation(&y1, &y1, 6));
        assert!(!equal_on_truncation(&y1, &y2, 2));
        assert_ne!(
            y1.apply(&e(1, 2, 1)).unwrap(),
            y2.apply(&e(1, 2, 1)).unwrap()
        );
    }

    #[test]
    fn peel_examples() {
        let d = Derivation::Inner(e(1, 1, 2));
        let terms = peel_derivation(&GeneratorImages::from_map(&d, 1).unwrap()).unwrap();
        assert_eq!(terms.len(), 1);
        for (_, g) in site_generators(Q, &sh(), 1) {
            assert_eq!(
                terms[0].element.commutator(&g).unwrap(),
                d.apply(&g).unwrap()
            );
        }

        let zero = Derivation::SparseSum(SparseSystem::new(Q, &sh()));
        assert!(
            peel_derivation(&GeneratorImages::from_map(&zero, 3).unwrap())
                .unwrap()
                .is_empty()
        );

        let y1 = build_yk(Q, &sh(), 1).unwrap();
        let terms = peel_derivation(&GeneratorImages::from_map(&y1, 3).unwrap()).unwrap();
        assert_eq!(terms.len(), 3);
        for (k, t) in terms.iter().enumerate() {
            assert_eq!(t.step, k + 1);
            for s in 1..=3 {
                for (_, g) in site_generators(Q, &sh(), s) {
                    assert_eq!(
                        t.element.commutator(&g).unwrap(),
                        e(k + 1, 1, 2).commutator(&g).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn peel_rejects_non_derivation() {
        let bad = GeneratorImages::from_map(&LeftMultiply(e(1, 1, 2)), 1).unwrap();
        assert!(matches!(
            peel_derivation(&bad),
            Err(Error::NotADerivation(_))
        ));
    }

    #[test]
    fn builders() {
        let y3 = build_yk(Q, &sh(), 3).unwrap();
        assert_eq!(
            system(&y3).families()[0].template().support(),
            set(&[1, 2, 3])
        );
        assert!(build_yk(Q, &sh(), 0).is_err());
    }

    #[test]
    fn simplify_merges_families_and_absorbs_prefix() {
        let t = e(1, 1, 2);
        let a = SparseSystem::new(Q, &sh())
            .with_family(t.clone(), 1)
            .unwrap();
        let b = SparseSystem::new(Q, &sh())
            .with_family(t.clone(), 3)
            .unwrap()
            .with_member(set(&[1]), e(1, 1, 2))
            .unwrap()
            .with_member(set(&[2]), e(2, 1, 2))
            .unwrap();
        assert_eq!(a.simplify(), b.simplify());
        let c = SparseSystem::new(Q, &sh())
            .with_family(e(2, 1, 2), 1)
            .unwrap();
        assert_eq!(
            c.simplify(),
            SparseSystem::new(Q, &sh()).with_family(t, 2).unwrap()
        );
    }
}
