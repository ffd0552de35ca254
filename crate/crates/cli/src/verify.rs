//! Built-in verification suites. Each returns a report whose lines are
//! printed verbatim, plus an overall verdict.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use locmat::derivations::{build_yk, build_z, derivation_commutator, equal_on_truncation};
use locmat::endomorphisms::{
    chain_closed_form, chain_sequence, integrability_profile, local_sequence,
};
use locmat::minf::{
    ad_apply, build_df, build_yk_minf, build_z_minf, conjugate_by_af, pattern_commutator,
    FinitaryMatrix,
};
use locmat::{DenseMatrix, Element, FieldSpec, Scalar, SiteShape};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub lines: Vec<String>,
    pub ok: bool,
}

impl Report {
    fn check(&mut self, label: String, passed: bool) {
        self.lines
            .push(format!("{label}: {}", if passed { "ok" } else { "FAILED" }));
        self.ok &= passed;
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Uniform scalar with numerator in `[-3, 3]`.
pub fn small_scalar(field: FieldSpec, rng: &mut ChaCha8Rng) -> Scalar {
    field.from_i64(rng.gen_range(-3..=3))
}

/// A random invertible element of `A_site`.
pub fn random_site_unit(
    field: FieldSpec,
    shape: &SiteShape,
    site: usize,
    rng: &mut ChaCha8Rng,
) -> Element {
    let n = shape.size(site);
    loop {
        let rows = (0..n)
            .map(|_| (0..n).map(|_| small_scalar(field, rng)).collect())
            .collect();
        let m = DenseMatrix::from_rows(field, rows);
        if m.inverse().is_some() {
            return Element::from_dense(field, shape, &[site], &m);
        }
    }
}

/// Site-local conjugators: profiles of elements of `A_(1..2)` stop growing
/// after two steps and stay below `dim A_(1..2)`.
pub fn example1(
    field: FieldSpec,
    shape: &SiteShape,
    n: usize,
    seed: u64,
) -> Result<Report, locmat::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = (1..=n)
        .map(|k| random_site_unit(field, shape, k, &mut rng))
        .collect();
    let seq = local_sequence(field, shape, units)?;
    let a = Element::unit(field, shape, 1, 1, 2)?.add(&Element::unit(field, shape, 2, 2, 1)?)?;
    let profile = integrability_profile(&seq, &a, n)?;
    let bound = (shape.size(1) * shape.size(2)).pow(2);
    let mut r = Report {
        ok: true,
        ..Default::default()
    };
    r.lines.push(format!("profile: {}", join(&profile)));
    r.check(
        format!("bounded by {bound}"),
        profile.iter().all(|&d| d <= bound),
    );
    r.check(
        "stable from n = 2".into(),
        profile.iter().skip(1).all(|&d| d == profile[1]),
    );
    Ok(r)
}

/// Conjugators `1 - e_11(k) e_12(k+1)`: closed forms and the growing profile.
pub fn example2(field: FieldSpec, shape: &SiteShape, n: usize) -> Result<Report, locmat::Error> {
    let seq = chain_sequence(field, shape, n)?;
    let a = Element::unit(field, shape, 1, 1, 2)?;
    let mut r = Report {
        ok: true,
        ..Default::default()
    };
    let mut v = a.clone();
    let mut closed = true;
    for i in 1..=n {
        v = seq.step(i, &v)?;
        closed &= v == chain_closed_form(field, shape, i)?;
    }
    let profile = integrability_profile(&seq, &a, n)?;
    r.lines.push(format!("profile: {}", join(&profile)));
    r.check(format!("closed form for i = 1..{n}"), closed);
    r.check(
        "profile is 2..n+1".into(),
        profile == (2..=n + 1).collect::<Vec<_>>(),
    );
    Ok(r)
}

/// `[z, y_k] = y_(k+1)` for derivations of the tensor product.
pub fn ladder(field: FieldSpec, shape: &SiteShape, k_max: usize) -> Result<Report, locmat::Error> {
    let z = build_z(field, shape)?;
    let mut r = Report {
        ok: true,
        ..Default::default()
    };
    let mut yk = build_yk(field, shape, 1)?;
    for k in 1..=k_max {
        let next = build_yk(field, shape, k + 1)?;
        let got = derivation_commutator(&z, &yk)?;
        let syntactic = got.simplify() == next.simplify();
        let level = 8.max(k + 3);
        let truncated = equal_on_truncation(&got, &next, level);
        r.check(format!("[z,y{k}] = y{}", k + 1), syntactic && truncated);
        yk = got;
    }
    Ok(r)
}

/// `[z, y_k] = y_(k+1)` for pattern matrices, with a 40 x 40 window check.
pub fn minf_ladder(field: FieldSpec, k_max: usize) -> Result<Report, locmat::Error> {
    let z = build_z_minf(field);
    let mut r = Report {
        ok: true,
        ..Default::default()
    };
    for k in 1..=k_max {
        let yk = build_yk_minf(field, k)?;
        let next = build_yk_minf(field, k + 1)?;
        let got = pattern_commutator(&z, &yk)?;
        let n = 40;
        let m = n - 2 * k - 2;
        let dense = z.to_window(n).commutator(&yk.to_window(n));
        let w = got.to_window(n);
        let window = (0..m).all(|i| (0..m).all(|j| dense.get(i, j) == w.get(i, j)));
        r.check(format!("[z,y{k}] = y{}", k + 1), got == next && window);
    }
    Ok(r)
}

/// `a_f⁻¹ e_(1,2i-1) a_f = e_(1,2i-1) + f(i) e_(1,2i)` for random `f`, and
/// `[d_f, x]` finitary for random finitary `x`.
pub fn af_action(field: FieldSpec, n: usize, seed: u64) -> Result<Report, locmat::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<Scalar> = (0..n).map(|_| small_scalar(field, &mut rng)).collect();
    let mut r = Report {
        ok: true,
        ..Default::default()
    };
    let mut identity = true;
    for i in 1..=n {
        let x = FinitaryMatrix::unit(field, 1, 2 * i - 1)?;
        let mut expected = x.entries().clone();
        if !f[i - 1].is_zero() {
            expected.insert((1, 2 * i), f[i - 1].clone());
        }
        identity &= conjugate_by_af(field, &f, &x)?.entries() == &expected;
    }
    r.check(format!("conjugation identity for i = 1..{n}"), identity);
    let df = build_df(field, &f)?;
    let mut finitary = true;
    for _ in 0..100 {
        let entries: Vec<_> = (0..rng.gen_range(1..5))
            .map(|_| {
                (
                    (rng.gen_range(1..=2 * n), rng.gen_range(1..=2 * n)),
                    small_scalar(field, &mut rng),
                )
            })
            .collect();
        let x = FinitaryMatrix::from_entries(field, entries)?;
        finitary &= ad_apply(&df, &x).is_ok();
    }
    r.check("[d_f, x] finitary on 100 samples".into(), finitary);
    Ok(r)
}
