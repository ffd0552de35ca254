//! Unital endomorphisms of truncations `A_(1..N) → A`, the Skolem–Noether
//! conjugator solver, factorization into products of conjugations, and the
//! integrability profile of conjugator sequences.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::derivations::e12_chain;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::tensor::{Element, Label, SiteShape};

/// A unital homomorphism of `A_(1..level)` given by the images of the matrix
/// units `e_pq(i)`, `(p,q) != (1,1)`; `φ(e_11(i)) = 1 - Σ_{p≥2} φ(e_pp(i))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitalEndo {
    field: FieldSpec,
    shape: SiteShape,
    level: usize,
    images: BTreeMap<(usize, Label), Element>,
}

fn labels(n: usize) -> impl Iterator<Item = Label> {
    (1..=n).flat_map(move |p| (1..=n).map(move |q| (p, q)))
}

impl UnitalEndo {
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
            for (p, q) in labels(shape.size(site)) {
                if (p, q) != (1, 1) && !images.contains_key(&(site, (p, q))) {
                    return Err(Error::InvalidEndomorphism(format!(
                        "missing image of e[{site}]({p},{q})"
                    )));
                }
            }
        }
        Ok(UnitalEndo {
            field,
            shape: shape.clone(),
            level,
            images,
        })
    }

    pub fn identity(field: FieldSpec, shape: &SiteShape, level: usize) -> Self {
        let mut images = BTreeMap::new();
        for site in 1..=level {
            for (p, q) in labels(shape.size(site)).filter(|&l| l != (1, 1)) {
                images.insert(
                    (site, (p, q)),
                    Element::unit(field, shape, site, p, q).expect("in range"),
                );
            }
        }
        UnitalEndo {
            field,
            shape: shape.clone(),
            level,
            images,
        }
    }

    /// `conj(c_1) ∘ conj(c_2) ∘ ⋯ ∘ conj(c_r)` on `A_(1..level)`, where
    /// `conj(c)(x) = c⁻¹ x c`. Computed densely as a single conjugation by
    /// `c_r ⋯ c_1`.
    pub fn from_conjugators(
        field: FieldSpec,
        shape: &SiteShape,
        conjugators: &[Element],
        level: usize,
    ) -> Result<Self> {
        let mut sites: BTreeSet<usize> = (1..=level).collect();
        for c in conjugators {
            if c.field() != field {
                return Err(Error::FieldMismatch);
            }
            sites.extend(c.support());
        }
        let sites: Vec<usize> = sites.into_iter().collect();
        let dim: usize = sites.iter().map(|&s| shape.size(s)).product();
        let mut total = DenseMatrix::identity(field, dim);
        for c in conjugators {
            total = &c.dense_expand(&sites)? * &total;
        }
        let inv = total.inverse().ok_or(Error::NotInvertible)?;
        let mut images = BTreeMap::new();
        for site in 1..=level {
            for (p, q) in labels(shape.size(site)).filter(|&l| l != (1, 1)) {
                let g = Element::unit(field, shape, site, p, q)?.dense_expand(&sites)?;
                let img = &(&inv * &g) * &total;
                images.insert(
                    (site, (p, q)),
                    Element::from_dense(field, shape, &sites, &img),
                );
            }
        }
        Self::new(field, shape, level, images)
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn shape(&self) -> &SiteShape {
        &self.shape
    }

    /// Source truncation level `N`.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Smallest `M >= N` with every image supported in `[1, M]`.
    pub fn target_level(&self) -> usize {
        self.images
            .values()
            .flat_map(|e| e.support().into_iter().next_back())
            .max()
            .unwrap_or(0)
            .max(self.level)
    }

    pub fn images(&self) -> impl Iterator<Item = (&(usize, Label), &Element)> {
        self.images.iter()
    }

    pub fn image(&self, site: usize, p: usize, q: usize) -> Element {
        if let Some(e) = self.images.get(&(site, (p, q))) {
            return e.clone();
        }
        assert_eq!((p, q), (1, 1), "image of e[{site}]({p},{q}) missing");
        let mut acc = Element::one(self.field, &self.shape);
        for r in 2..=self.shape.size(site) {
            acc = &acc - &self.images[&(site, (r, r))];
        }
        acc
    }

    fn site_images(&self, site: usize) -> Vec<(Label, Element)> {
        labels(self.shape.size(site))
            .map(|(p, q)| ((p, q), self.image(site, p, q)))
            .collect()
    }
}

/// Checks every defining relation exactly; reports the first violation.
pub fn validate_endo(phi: &UnitalEndo) -> Result<()> {
    let sh = &phi.shape;
    for site in 1..=phi.level {
        if let Some(given) = phi.images.get(&(site, (1, 1))) {
            let derived = {
                let mut acc = Element::one(phi.field, sh);
                for r in 2..=sh.size(site) {
                    acc = &acc - &phi.images[&(site, (r, r))];
                }
                acc
            };
            if *given != derived {
                return Err(Error::InvalidEndomorphism(format!(
                    "images of the diagonal units at site {site} do not sum to 1"
                )));
            }
        }
    }
    let support: Vec<usize> = phi
        .images
        .values()
        .flat_map(Element::support)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dim: usize = support.iter().map(|&s| sh.size(s)).product();
    if dim <= DENSE_VALIDATION_DIM {
        let mut dense = BTreeMap::new();
        for site in 1..=phi.level {
            for ((p, q), img) in phi.site_images(site) {
                dense.insert((site, (p, q)), img.dense_expand(&support)?);
            }
        }
        let zero = DenseMatrix::zeros(phi.field, dim, dim);
        check_relations(phi, |s, l| dense[&(s, l)].clone(), |a, b| Ok(a * b), zero)
    } else {
        let zero = Element::zero(phi.field, sh);
        check_relations(phi, |s, (p, q)| phi.image(s, p, q), |a, b| a.mul(b), zero)
    }
}

/// Largest joint support dimension for which relations are checked on
/// Kronecker matrices rather than on elements.
const DENSE_VALIDATION_DIM: usize = 256;

fn check_relations<T: PartialEq + Clone>(
    phi: &UnitalEndo,
    image: impl Fn(usize, Label) -> T,
    mul: impl Fn(&T, &T) -> Result<T>,
    zero: T,
) -> Result<()> {
    let sh = &phi.shape;
    for site in 1..=phi.level {
        let n = sh.size(site);
        let imgs: Vec<(Label, T)> = labels(n).map(|l| (l, image(site, l))).collect();
        for ((p, q), a) in &imgs {
            for ((r, s), b) in &imgs {
                let expected = if q == r {
                    image(site, (*p, *s))
                } else {
                    zero.clone()
                };
                if mul(a, b)? != expected {
                    return Err(Error::InvalidEndomorphism(format!(
                        "φ(e[{site}]({p},{q}))·φ(e[{site}]({r},{s})) breaks the matrix-unit relation"
                    )));
                }
            }
        }
    }
    // Each M_n is generated by the units e(p,p+1) and e(p+1,p), so commuting
    // on those is enough.
    let generators = |site: usize| -> Vec<(Label, T)> {
        (1..sh.size(site))
            .flat_map(|p| [(p, p + 1), (p + 1, p)])
            .map(|l| (l, image(site, l)))
            .collect()
    };
    for i in 1..=phi.level {
        for j in i + 1..=phi.level {
            for ((p, q), a) in generators(i) {
                for ((r, s), b) in generators(j) {
                    if mul(&a, &b)? != mul(&b, &a)? {
                        return Err(Error::InvalidEndomorphism(format!(
                            "images of e[{i}]({p},{q}) and e[{j}]({r},{s}) do not commute"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// The multiplicative-linear extension of the generator images.
pub fn apply_endo(phi: &UnitalEndo, x: &Element) -> Result<Element> {
    if x.field() != phi.field {
        return Err(Error::FieldMismatch);
    }
    if x.support().iter().any(|&s| s > phi.level) {
        return Err(Error::SupportExceedsSource(x.to_string()));
    }
    let mut acc = Element::zero(phi.field, &phi.shape);
    for (m, c) in x.terms() {
        let mut term = Element::scalar(phi.field, &phi.shape, c.clone());
        for &(site, (p, q)) in m.entries() {
            term = term.mul(&phi.image(site, p, q))?;
        }
        acc = &acc + &term;
    }
    Ok(acc)
}

/// Order in which the conjugator solver tries elements of the solution space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateOrder {
    /// The pairing element first (always invertible), then the sweep.
    PairingFirst,
    /// Basis vectors, small integer combinations, then seeded random draws.
    SweepOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub seed: u64,
    pub order: CandidateOrder,
    pub budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            order: CandidateOrder::PairingFirst,
            budget: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(seed: u64) -> Self {
        SolverConfig {
            seed,
            ..Self::default()
        }
    }
}

/// Dense data of one Skolem–Noether problem on `A_T`.
struct Intertwining {
    field: FieldSpec,
    /// `E_{K1}` for every flattened index `K` of `A_S`.
    col_units: Vec<DenseMatrix>,
    /// `φ(E_{1K})`.
    row_images: Vec<DenseMatrix>,
    /// Diagonal positions of `E_11`.
    e11_rows: Vec<usize>,
    /// Independent rows of `φ(E_11)`.
    image_rows: Vec<usize>,
    /// `(g, φ(g))` for every matrix unit `g` of `A_S`.
    checks: Vec<(DenseMatrix, DenseMatrix)>,
}

impl Intertwining {
    /// `Σ_K E_{K1} W φ(E_{1K})` for `W = Σ c·e_{rs}`.
    fn intertwiner(&self, w: &[(usize, usize, Scalar)]) -> DenseMatrix {
        let m = self.col_units[0].rows();
        let mut out = DenseMatrix::zeros(self.field, m, m);
        for (ek1, img) in self.col_units.iter().zip(&self.row_images) {
            for (r, s, c) in w {
                for i in 0..m {
                    let a = ek1.get(i, *r);
                    if a.is_zero() {
                        continue;
                    }
                    let a = a * c;
                    for j in 0..m {
                        let b = img.get(*s, j);
                        if !b.is_zero() {
                            out.add_at(i, j, &(&a * b));
                        }
                    }
                }
            }
        }
        out
    }

    fn basis(&self) -> Vec<(usize, usize)> {
        self.e11_rows
            .iter()
            .flat_map(|&r| self.image_rows.iter().map(move |&s| (r, s)))
            .collect()
    }

    fn verifies(&self, a: &DenseMatrix) -> bool {
        self.checks.iter().all(|(g, img)| (g * a) == (a * img))
    }
}

fn flat_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
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

/// Dense images over `ambient` for every matrix unit of the sites in `sites`.
fn dense_site_images(
    phi: &UnitalEndo,
    sites: &[usize],
    ambient: &[usize],
) -> Result<BTreeMap<(usize, Label), DenseMatrix>> {
    let mut out = BTreeMap::new();
    for &s in sites {
        for ((p, q), img) in phi.site_images(s) {
            out.insert((s, (p, q)), img.dense_expand(ambient)?);
        }
    }
    Ok(out)
}

fn check_dense_relations(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    images: &BTreeMap<(usize, Label), DenseMatrix>,
    dim: usize,
) -> Result<()> {
    for &s in sites {
        let n = shape.size(s);
        let mut diag = DenseMatrix::zeros(field, dim, dim);
        for p in 1..=n {
            diag = &diag + &images[&(s, (p, p))];
        }
        if diag != DenseMatrix::identity(field, dim) {
            return Err(Error::InvalidRestriction(format!(
                "diagonal images at site {s} do not sum to 1"
            )));
        }
        for (p, q) in labels(n) {
            for (r, t) in labels(n) {
                let prod = &images[&(s, (p, q))] * &images[&(s, (r, t))];
                let ok = if q == r {
                    prod == images[&(s, (p, t))]
                } else {
                    prod.is_zero()
                };
                if !ok {
                    return Err(Error::InvalidRestriction(format!(
                        "images of e[{s}]({p},{q}) and e[{s}]({r},{t}) break the matrix-unit relation"
                    )));
                }
            }
        }
    }
    for (i, &s) in sites.iter().enumerate() {
        for &t in &sites[i + 1..] {
            for a in labels(shape.size(s)) {
                for b in labels(shape.size(t)) {
                    let (x, y) = (&images[&(s, a)], &images[&(t, b)]);
                    if x * y != y * x {
                        return Err(Error::InvalidRestriction(format!(
                            "images of sites {s} and {t} do not commute"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn build_intertwining(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    ambient: &[usize],
    images: &BTreeMap<(usize, Label), DenseMatrix>,
) -> Result<Intertwining> {
    let dim: usize = ambient.iter().map(|&s| shape.size(s)).product();
    check_dense_relations(field, shape, sites, images, dim)?;
    let sizes: Vec<usize> = sites.iter().map(|&s| shape.size(s)).collect();
    let ones = vec![1; sites.len()];
    let flat_unit = |row: &[usize], col: &[usize]| -> Result<DenseMatrix> {
        let factors = sites
            .iter()
            .zip(row.iter().zip(col))
            .map(|(&s, (&p, &q))| (s, (p, q)))
            .collect();
        Element::from_raw(field, shape, vec![(factors, field.one())])?.dense_expand(ambient)
    };
    let flat_image = |row: &[usize], col: &[usize]| -> DenseMatrix {
        sites
            .iter()
            .zip(row.iter().zip(col))
            .fold(DenseMatrix::identity(field, dim), |acc, (&s, (&p, &q))| {
                &acc * &images[&(s, (p, q))]
            })
    };
    let indices = flat_indices(&sizes);
    let mut col_units = Vec::with_capacity(indices.len());
    let mut row_images = Vec::with_capacity(indices.len());
    for k in &indices {
        col_units.push(flat_unit(k, &ones)?);
        row_images.push(flat_image(&ones, k));
    }
    let e11 = flat_unit(&ones, &ones)?;
    let e11_rows = (0..dim).filter(|&r| !e11.get(r, r).is_zero()).collect();
    let image_rows = flat_image(&ones, &ones).transpose().rref().1;
    let mut checks = Vec::new();
    for &s in sites {
        for (p, q) in labels(shape.size(s)) {
            let g = Element::unit(field, shape, s, p, q)?.dense_expand(ambient)?;
            checks.push((g, images[&(s, (p, q))].clone()));
        }
    }
    Ok(Intertwining {
        field,
        col_units,
        row_images,
        e11_rows,
        image_rows,
        checks,
    })
}

/// A basis of `{a ∈ A_T : x a = a φ(x) for all x ∈ A_S}`, built from the
/// intertwiners `Σ_K E_{K1} e_{rs} φ(E_{1K})`.
pub fn intertwiner_basis(
    phi: &UnitalEndo,
    sites: &BTreeSet<usize>,
    ambient: &BTreeSet<usize>,
) -> Result<Vec<Element>> {
    let (s, t) = restriction_sites(phi, sites, ambient)?;
    let images = dense_site_images(phi, &s, &t)?;
    let tw = build_intertwining(phi.field, &phi.shape, &s, &t, &images)?;
    Ok(tw
        .basis()
        .into_iter()
        .map(|(r, c)| {
            let m = tw.intertwiner(&[(r, c, phi.field.one())]);
            Element::from_dense(phi.field, &phi.shape, &t, &m)
        })
        .collect())
}

/// The same space by plain elimination: one unknown per canonical
/// coordinate of `A_T`, one equation per coordinate of `g a - a φ(g)`.
/// Exponential in `|T|`; meant for small checks.
pub fn intertwiner_space_by_elimination(
    phi: &UnitalEndo,
    sites: &BTreeSet<usize>,
    ambient: &BTreeSet<usize>,
) -> Result<Vec<Element>> {
    let (s, t) = restriction_sites(phi, sites, ambient)?;
    let (field, shape) = (phi.field, &phi.shape);
    let dim: usize = t.iter().map(|&x| shape.size(x)).product();
    let images = dense_site_images(phi, &s, &t)?;
    let mut blocks = Vec::new();
    for &site in &s {
        for (p, q) in labels(shape.size(site)) {
            blocks.push((
                Element::unit(field, shape, site, p, q)?.dense_expand(&t)?,
                images[&(site, (p, q))].clone(),
            ));
        }
    }
    // Unknown a = Σ_{(i,j)} a_ij E_ij in dense coordinates.
    let unknowns = dim * dim;
    let mut system = DenseMatrix::zeros(field, blocks.len() * unknowns, unknowns);
    for (b, (g, img)) in blocks.iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                let col = i * dim + j;
                // (g E_ij)_{rc} = g_{ri} δ_{jc};  (E_ij img)_{rc} = δ_{ri} img_{jc}
                for r in 0..dim {
                    let v = g.get(r, i);
                    if !v.is_zero() {
                        system.add_at(b * unknowns + r * dim + j, col, v);
                    }
                }
                for c in 0..dim {
                    let v = img.get(j, c);
                    if !v.is_zero() {
                        system.add_at(b * unknowns + i * dim + c, col, &-v);
                    }
                }
            }
        }
    }
    Ok(system
        .kernel()
        .into_iter()
        .map(|v| {
            let mut m = DenseMatrix::zeros(field, dim, dim);
            for (idx, x) in v.into_iter().enumerate() {
                m.set(idx / dim, idx % dim, x);
            }
            Element::from_dense(field, shape, &t, &m)
        })
        .collect())
}

fn restriction_sites(
    phi: &UnitalEndo,
    sites: &BTreeSet<usize>,
    ambient: &BTreeSet<usize>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if sites.is_empty() {
        return Err(Error::InvalidRestriction("empty source site set".into()));
    }
    if let Some(&s) = sites.iter().find(|&&s| s == 0 || s > phi.level) {
        return Err(Error::InvalidRestriction(format!(
            "site {s} is outside the source truncation"
        )));
    }
    if !sites.is_subset(ambient) {
        return Err(Error::SupportNotContained {
            support: sites.iter().copied().collect(),
            sites: ambient.iter().copied().collect(),
        });
    }
    Ok((
        sites.iter().copied().collect(),
        ambient.iter().copied().collect(),
    ))
}

/// Finds an invertible `a ∈ A_T` with `φ(x) = a⁻¹ x a` for all `x ∈ A_S`,
/// normalized so that its first nonzero canonical coefficient is 1.
pub fn skolem_noether(
    phi: &UnitalEndo,
    sites: &BTreeSet<usize>,
    ambient: &BTreeSet<usize>,
    config: &SolverConfig,
) -> Result<Element> {
    let (s, t) = restriction_sites(phi, sites, ambient)?;
    let images = dense_site_images(phi, &s, &t)?;
    let a = solve_conjugator(phi.field, &phi.shape, &s, &t, &images, config)?;
    Ok(Element::from_dense(phi.field, &phi.shape, &t, &a))
}

fn solve_conjugator(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    ambient: &[usize],
    images: &BTreeMap<(usize, Label), DenseMatrix>,
    config: &SolverConfig,
) -> Result<DenseMatrix> {
    let tw = build_intertwining(field, shape, sites, ambient, images)?;
    let basis = tw.basis();
    let one = field.one();
    let mut tried = 0usize;
    let accept = |w: Vec<(usize, usize, Scalar)>, tried: &mut usize| -> Option<DenseMatrix> {
        *tried += 1;
        let a = tw.intertwiner(&w);
        a.is_invertible().then_some(a)
    };
    let mut found = None;
    if config.order == CandidateOrder::PairingFirst {
        let w = tw
            .e11_rows
            .iter()
            .zip(&tw.image_rows)
            .map(|(&r, &s)| (r, s, one.clone()))
            .collect();
        found = accept(w, &mut tried);
    }
    for &(r, s) in &basis {
        if found.is_some() || tried >= config.budget {
            break;
        }
        found = accept(vec![(r, s, one.clone())], &mut tried);
    }
    for round in 0..25i64 {
        if found.is_some() || tried >= config.budget {
            break;
        }
        let w = basis
            .iter()
            .enumerate()
            .map(|(j, &(r, s))| {
                let j = j as i64;
                (
                    r,
                    s,
                    field.from_i64((round * (2 * j + 1) + j * j).rem_euclid(5) - 2),
                )
            })
            .collect();
        found = accept(w, &mut tried);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    while found.is_none() && tried < config.budget {
        let w = basis
            .iter()
            .map(|&(r, s)| {
                let c = match field {
                    FieldSpec::Rationals => field.from_i64(rng.gen_range(-10..=10)),
                    FieldSpec::Prime(p) => field.from_i64(rng.gen_range(0..p) as i64),
                };
                (r, s, c)
            })
            .collect();
        found = accept(w, &mut tried);
    }
    let a = found.ok_or(Error::NoConjugatorFound {
        budget: config.budget,
    })?;
    let a = normalize_leading(field, shape, ambient, &a);
    if !tw.verifies(&a) {
        return Err(Error::InvalidRestriction(
            "conjugator failed verification".into(),
        ));
    }
    Ok(a)
}

/// Scales so the first nonzero canonical coefficient equals 1.
fn normalize_leading(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    a: &DenseMatrix,
) -> DenseMatrix {
    let e = Element::from_dense(field, shape, sites, a);
    match e.leading_coefficient().and_then(Scalar::inv) {
        Some(c) => a.scale(&c),
        None => a.clone(),
    }
}

/// Whether a sequence is used as given or through its inverses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `ψ_k = conj(a_k)`; recomposes to `conj(a_1) ∘ conj(a_2) ∘ ⋯`.
    Forward,
    /// `ψ_k = conj(a_k)⁻¹ = conj(a_k⁻¹)`.
    Inverse,
}

/// Conjugators `a_1, …, a_N` with `a_k` centralizing `A_(1..k-1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConjugatorSeq {
    field: FieldSpec,
    shape: SiteShape,
    conjugators: Vec<Element>,
    inverses: Vec<Element>,
    direction: Direction,
}

impl ConjugatorSeq {
    pub fn new(
        field: FieldSpec,
        shape: &SiteShape,
        conjugators: Vec<Element>,
        direction: Direction,
    ) -> Result<Self> {
        let mut inverses = Vec::with_capacity(conjugators.len());
        for (k, a) in conjugators.iter().enumerate() {
            if a.field() != field {
                return Err(Error::FieldMismatch);
            }
            if a.shape() != shape {
                return Err(Error::ShapeMismatch);
            }
            inverses.push(a.invert().map_err(|_| {
                Error::InvalidSequence(format!("conjugator {} is not invertible", k + 1))
            })?);
            if let Some(s) = (1..=k).find(|&s| !a.centralizer_check(s)) {
                return Err(Error::InvalidSequence(format!(
                    "conjugator {} does not centralize site {s}",
                    k + 1
                )));
            }
        }
        Ok(ConjugatorSeq {
            field,
            shape: shape.clone(),
            conjugators,
            inverses,
            direction,
        })
    }

    pub fn conjugators(&self) -> &[Element] {
        &self.conjugators
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.conjugators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjugators.is_empty()
    }

    pub fn inverse(&self) -> ConjugatorSeq {
        ConjugatorSeq {
            direction: match self.direction {
                Direction::Forward => Direction::Inverse,
                Direction::Inverse => Direction::Forward,
            },
            ..self.clone()
        }
    }

    /// `ψ_k(x)` for `k` counted from 1.
    pub fn step(&self, k: usize, x: &Element) -> Result<Element> {
        let (a, a_inv) = (&self.conjugators[k - 1], &self.inverses[k - 1]);
        match self.direction {
            Direction::Forward => a_inv.mul(x)?.mul(a),
            Direction::Inverse => a.mul(x)?.mul(a_inv),
        }
    }

    /// `ψ_1 ∘ ψ_2 ∘ ⋯ ∘ ψ_N` applied to `x`.
    pub fn recompose(&self, x: &Element) -> Result<Element> {
        let mut v = x.clone();
        for k in (1..=self.len()).rev() {
            v = self.step(k, &v)?;
        }
        Ok(v)
    }

    /// The recomposed map as a generator-image endomorphism of `A_(1..level)`.
    pub fn to_endo(&self, level: usize) -> Result<UnitalEndo> {
        let mut images = BTreeMap::new();
        for site in 1..=level {
            for (p, q) in labels(self.shape.size(site)).filter(|&l| l != (1, 1)) {
                let g = Element::unit(self.field, &self.shape, site, p, q)?;
                images.insert((site, (p, q)), self.recompose(&g)?);
            }
        }
        UnitalEndo::new(self.field, &self.shape, level, images)
    }
}

/// Writes `φ` on `A_(1..N)` as `conj(a_1) ∘ ⋯ ∘ conj(a_N)`. Step `k` solves
/// the Skolem–Noether problem for the current residual on `A_k` inside the
/// sites its images touch, then strips that conjugation off.
pub fn factorize(phi: &UnitalEndo) -> Result<ConjugatorSeq> {
    factorize_traced(phi, &SolverConfig::default()).map(|(seq, _)| seq)
}

/// [`factorize`] with an explicit solver configuration, also returning the
/// residual `ψ_k` after every step.
pub fn factorize_traced(
    phi: &UnitalEndo,
    config: &SolverConfig,
) -> Result<(ConjugatorSeq, Vec<UnitalEndo>)> {
    validate_endo(phi)?;
    let (field, shape) = (phi.field, &phi.shape);
    let mut current: BTreeMap<(usize, Label), Element> = (1..=phi.level)
        .flat_map(|s| {
            phi.site_images(s)
                .into_iter()
                .map(move |(l, img)| ((s, l), img))
        })
        .collect();
    let mut conjugators = Vec::with_capacity(phi.level);
    let mut residuals = Vec::with_capacity(phi.level);
    for k in 1..=phi.level {
        let mut ambient: BTreeSet<usize> = BTreeSet::from([k]);
        for (p, q) in labels(shape.size(k)) {
            ambient.extend(current[&(k, (p, q))].support());
        }
        let ambient: Vec<usize> = ambient.into_iter().collect();
        let mut images = BTreeMap::new();
        for (p, q) in labels(shape.size(k)) {
            images.insert((k, (p, q)), current[&(k, (p, q))].dense_expand(&ambient)?);
        }
        let a = solve_conjugator(field, shape, &[k], &ambient, &images, config)?;
        let a = Element::from_dense(field, shape, &ambient, &a);
        let a_inv = a.invert()?;
        for img in current.values_mut() {
            *img = a.mul(img)?.mul(&a_inv)?;
        }
        conjugators.push(a);
        let res: BTreeMap<_, _> = current
            .iter()
            .filter(|((_, l), _)| *l != (1, 1))
            .map(|(key, img)| (*key, img.clone()))
            .collect();
        residuals.push(UnitalEndo::new(field, shape, phi.level, res)?);
    }
    let seq = ConjugatorSeq::new(field, shape, conjugators, Direction::Forward)?;
    Ok((seq, residuals))
}

/// Entry `n` (from 1) is `dim span{a, ψ_1(a), ψ_2ψ_1(a), …, ψ_n⋯ψ_1(a)}`.
pub fn integrability_profile(seq: &ConjugatorSeq, a: &Element, n_max: usize) -> Result<Vec<usize>> {
    if n_max > seq.len() {
        return Err(Error::InvalidSequence(format!(
            "sequence has {} members, profile needs {n_max}",
            seq.len()
        )));
    }
    let mut orbit = vec![a.clone()];
    let mut profile = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let next = seq.step(n, orbit.last().expect("nonempty"))?;
        orbit.push(next);
        profile.push(span_dimension(&orbit));
    }
    Ok(profile)
}

/// Exact rank of a list of elements in canonical coordinates.
pub fn span_dimension(elements: &[Element]) -> usize {
    let Some(first) = elements.first() else {
        return 0;
    };
    let monomials: BTreeSet<_> = elements
        .iter()
        .flat_map(|e| e.terms().map(|(m, _)| m.clone()))
        .collect();
    let index: BTreeMap<_, _> = monomials.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut mat = DenseMatrix::zeros(first.field(), elements.len(), monomials.len());
    for (r, e) in elements.iter().enumerate() {
        for (m, c) in e.terms() {
            mat.set(r, index[m], c.clone());
        }
    }
    mat.rank()
}

/// Site-local conjugators `a_k ∈ A_k`.
pub fn local_sequence(
    field: FieldSpec,
    shape: &SiteShape,
    units: Vec<Element>,
) -> Result<ConjugatorSeq> {
    for (idx, u) in units.iter().enumerate() {
        let k = idx + 1;
        if u.support().iter().any(|&s| s != k) {
            return Err(Error::WrongSupport { index: k, site: k });
        }
        u.invert()?;
    }
    ConjugatorSeq::new(field, shape, units, Direction::Forward)
}

/// `a_k = e_11(k) e_12(k+1)`.
pub fn chain_nilpotent(field: FieldSpec, shape: &SiteShape, k: usize) -> Result<Element> {
    Element::from_raw(
        field,
        shape,
        vec![(vec![(k, (1, 1)), (k + 1, (1, 2))], field.one())],
    )
}

/// Conjugators `(1 + a_k)⁻¹ = 1 - a_k`, `k = 1..=n_max`.
pub fn chain_sequence(field: FieldSpec, shape: &SiteShape, n_max: usize) -> Result<ConjugatorSeq> {
    let one = Element::one(field, shape);
    let conjugators = (1..=n_max)
        .map(|k| Ok(&one - &chain_nilpotent(field, shape, k)?))
        .collect::<Result<Vec<_>>>()?;
    ConjugatorSeq::new(field, shape, conjugators, Direction::Forward)
}

/// `Σ_{k=1}^{i+1} e_12(1) ⋯ e_12(k)`.
pub fn chain_closed_form(field: FieldSpec, shape: &SiteShape, i: usize) -> Result<Element> {
    let mut acc = Element::zero(field, shape);
    for k in 1..=i + 1 {
        acc = &acc + &e12_chain(field, shape, 1, k)?;
    }
    Ok(acc)
}
