//! Seeded generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use locmat::derivations::SparseSystem;
use locmat::{DenseMatrix, Element, FieldSpec, Scalar, SiteShape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn shape2() -> SiteShape {
    SiteShape::uniform(2).unwrap()
}

pub fn unit(field: FieldSpec, shape: &SiteShape, site: usize, p: usize, q: usize) -> Element {
    Element::unit(field, shape, site, p, q).unwrap()
}

pub fn scalar(field: FieldSpec, rng: &mut ChaCha8Rng) -> Scalar {
    match field {
        FieldSpec::Rationals => {
            let num: i64 = rng.gen_range(-5..=5);
            let den: i64 = rng.gen_range(1..=3);
            field.from_ratio(&num.into(), &den.into()).unwrap()
        }
        FieldSpec::Prime(_) => field.from_i64(rng.gen_range(-3..=3)),
    }
}

/// Random element with monomials on subsets of `sites`, raw (possibly
/// containing `(1,1)` labels) before canonicalization.
pub fn element_on(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    terms: usize,
    rng: &mut ChaCha8Rng,
) -> Element {
    let raw = (0..terms)
        .map(|_| {
            let mut factors = Vec::new();
            for &s in sites {
                if rng.gen_bool(0.6) {
                    let n = shape.size(s);
                    factors.push((s, (rng.gen_range(1..=n), rng.gen_range(1..=n))));
                }
            }
            (factors, scalar(field, rng))
        })
        .collect();
    Element::from_raw(field, shape, raw).unwrap()
}

pub fn random_invertible_dense(field: FieldSpec, n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    loop {
        let rows = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| field.from_i64(rng.gen_range(-2..=2)))
                    .collect()
            })
            .collect();
        let m = DenseMatrix::from_rows(field, rows);
        if m.inverse().is_some() {
            return m;
        }
    }
}

/// Integer matrix with determinant ±1, built from a few elementary moves so
/// that its inverse stays integral too.
pub fn random_unimodular(field: FieldSpec, n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut m: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
        .collect();
    for _ in 0..2 * n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i == j {
            m[i].iter_mut().for_each(|x| *x = -*x);
            continue;
        }
        let c = if rng.gen_bool(0.5) { 1 } else { -1 };
        let source = m[j].clone();
        for (x, y) in m[i].iter_mut().zip(source) {
            *x += c * y;
        }
    }
    let rows = m
        .into_iter()
        .map(|r| r.into_iter().map(|x| field.from_i64(x)).collect())
        .collect();
    DenseMatrix::from_rows(field, rows)
}

/// Random invertible element of `A_sites`; unimodular over Q to keep
/// coefficients small.
pub fn invertible_on(
    field: FieldSpec,
    shape: &SiteShape,
    sites: &[usize],
    rng: &mut ChaCha8Rng,
) -> Element {
    let dim = sites.iter().map(|&s| shape.size(s)).product();
    let m = match field {
        FieldSpec::Rationals => random_unimodular(field, dim, rng),
        FieldSpec::Prime(_) => random_invertible_dense(field, dim, rng),
    };
    Element::from_dense(field, shape, sites, &m)
}

/// Random sparse system on sites `1..=5`: a few finite members and, half the
/// time, one shift-family.
pub fn sparse_system(field: FieldSpec, shape: &SiteShape, rng: &mut ChaCha8Rng) -> SparseSystem {
    let mut s = SparseSystem::new(field, shape);
    for _ in 0..rng.gen_range(1..=3) {
        let lo = rng.gen_range(1..=4);
        let sites: Vec<usize> = (lo..=lo + rng.gen_range(0..=1)).collect();
        let e = element_on(field, shape, &sites, 3, rng);
        s.push_member(sites.iter().copied().collect::<BTreeSet<_>>(), e)
            .unwrap();
    }
    if rng.gen_bool(0.5) {
        let t = element_on(field, shape, &[1, 2], 2, rng);
        if !t.support().is_empty() {
            s.push_family(t, rng.gen_range(1..=3)).unwrap();
        }
    }
    s
}

/// Every matrix unit of `A_site`.
pub fn generators(field: FieldSpec, shape: &SiteShape, site: usize) -> Vec<Element> {
    let n = shape.size(site);
    (1..=n)
        .flat_map(|p| (1..=n).map(move |q| (p, q)))
        .map(|(p, q)| unit(field, shape, site, p, q))
        .collect()
}
