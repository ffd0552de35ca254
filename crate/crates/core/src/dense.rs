//! Dense exact matrices: the oracle bridge for tensor elements and the
//! elimination kernel behind inversion, rank and nullspaces.

use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::field::{FieldSpec, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl DenseMatrix {
    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        DenseMatrix {
            field,
            rows,
            cols,
            data: vec![field.zero(); rows * cols],
        }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, field.one());
        }
        m
    }

    pub fn from_rows(field: FieldSpec, rows: Vec<Vec<Scalar>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        DenseMatrix {
            field,
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_i64(field: FieldSpec, rows: &[&[i64]]) -> Self {
        Self::from_rows(
            field,
            rows.iter()
                .map(|r| r.iter().map(|&v| field.from_i64(v)).collect())
                .collect(),
        )
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Scalar {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Scalar) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: &Scalar) {
        let slot = &mut self.data[r * self.cols + c];
        *slot = &*slot + v;
    }

    pub fn row(&self, r: usize) -> &[Scalar] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Scalar::is_zero)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn trace(&self) -> Scalar {
        (0..self.rows.min(self.cols)).fold(self.field.zero(), |acc, i| &acc + self.get(i, i))
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        DenseMatrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c).clone());
            }
        }
        t
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Reduced row echelon form together with the pivot columns. Pivoting is
    /// deterministic: leftmost column with a nonzero entry, topmost such row.
    pub fn rref(&self) -> (DenseMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut next_row = 0;
        for col in 0..m.cols {
            if next_row == m.rows {
                break;
            }
            let Some(pr) = (next_row..m.rows).find(|&r| !m.get(r, col).is_zero()) else {
                continue;
            };
            m.swap_rows(pr, next_row);
            let inv = m.get(next_row, col).inv().expect("pivot is nonzero");
            for c in col..m.cols {
                let v = m.get(next_row, c) * &inv;
                m.set(next_row, c, v);
            }
            for r in 0..m.rows {
                if r == next_row || m.get(r, col).is_zero() {
                    continue;
                }
                let factor = m.get(r, col).clone();
                for c in col..m.cols {
                    let v = m.get(r, c) - &(&factor * m.get(next_row, c));
                    m.set(r, c, v);
                }
            }
            pivots.push(col);
            next_row += 1;
        }
        (m, pivots)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the right nullspace. One vector per free column, normalized so
    /// that its first nonzero coordinate equals 1.
    pub fn kernel(&self) -> Vec<Vec<Scalar>> {
        let (r, pivots) = self.rref();
        let mut basis = Vec::new();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        for free in (0..self.cols).filter(|&c| !is_pivot[c]) {
            let mut v = vec![self.field.zero(); self.cols];
            v[free] = self.field.one();
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -r.get(row, free);
            }
            let lead = v
                .iter()
                .find(|x| !x.is_zero())
                .and_then(Scalar::inv)
                .expect("kernel vector is nonzero");
            basis.push(v.iter().map(|x| x * &lead).collect());
        }
        basis
    }

    pub fn determinant(&self) -> Scalar {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let mut m = self.clone();
        let mut det = self.field.one();
        for col in 0..m.cols {
            let Some(pr) = (col..m.rows).find(|&r| !m.get(r, col).is_zero()) else {
                return self.field.zero();
            };
            if pr != col {
                m.swap_rows(pr, col);
                det = -det;
            }
            let pivot = m.get(col, col).clone();
            det = &det * &pivot;
            let inv = pivot.inv().expect("pivot is nonzero");
            for r in col + 1..m.rows {
                if m.get(r, col).is_zero() {
                    continue;
                }
                let factor = m.get(r, col) * &inv;
                for c in col..m.cols {
                    let v = m.get(r, c) - &(&factor * m.get(col, c));
                    m.set(r, c, v);
                }
            }
        }
        det
    }

    /// Exact invertibility test, cheaper than [`DenseMatrix::inverse`].
    ///
    /// Over Q each row is cleared of denominators and the determinant is
    /// taken modulo 31-bit primes: a nonzero residue proves invertibility,
    /// and once the primes multiply past twice the Hadamard bound, zero
    /// residues throughout prove the determinant is 0.
    pub fn is_invertible(&self) -> bool {
        assert!(self.is_square(), "invertibility of a non-square matrix");
        let n = self.rows;
        if self.field != FieldSpec::Rationals {
            return self.rank() == n;
        }
        let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(n);
        let mut log2_bound = 0.0f64;
        for r in 0..n {
            let entries: Vec<&BigRational> = (0..n)
                .map(|c| match self.get(r, c) {
                    Scalar::Rational(x) => x,
                    Scalar::Residue { .. } => unreachable!("rational matrix"),
                })
                .collect();
            let lcm = entries
                .iter()
                .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            let row: Vec<BigInt> = entries
                .iter()
                .map(|x| x.numer() * (&lcm / x.denom()))
                .collect();
            let norm2: BigInt = row.iter().map(|x| x * x).sum();
            if norm2.is_zero() {
                return false;
            }
            log2_bound += norm2.bits() as f64 / 2.0;
            rows.push(row);
        }
        let mut covered = 0.0f64;
        for p in primes_below(1 << 31) {
            let pb = BigInt::from(p);
            let m: Vec<Vec<u64>> = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|x| x.mod_floor(&pb).to_u64().expect("reduced"))
                        .collect()
                })
                .collect();
            if det_mod_is_nonzero(m, p) {
                return true;
            }
            covered += (p as f64).log2();
            if covered > log2_bound + 1.0 {
                return false;
            }
        }
        unreachable!("ran out of primes")
    }

    /// Gauss-Jordan inverse; `None` when singular.
    pub fn inverse(&self) -> Option<DenseMatrix> {
        assert!(self.is_square(), "inverse of a non-square matrix");
        let n = self.rows;
        let mut aug = Self::zeros(self.field, n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                aug.set(r, c, self.get(r, c).clone());
            }
            aug.set(r, n + r, self.field.one());
        }
        let (red, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        let mut inv = Self::zeros(self.field, n, n);
        for r in 0..n {
            for c in 0..n {
                inv.set(r, c, red.get(r, n + c).clone());
            }
        }
        Some(inv)
    }

    /// Row-major coordinates, for treating a matrix as a vector.
    pub fn as_slice(&self) -> &[Scalar] {
        &self.data
    }
}

impl DenseMatrix {
    /// Common denominator of the entries and the scaled integer entries, if
    /// those fit in an `i64`.
    fn scaled_integers(&self) -> Option<(BigInt, Vec<i64>)> {
        let rats = || {
            self.data.iter().map(|x| match x {
                Scalar::Rational(r) => r,
                Scalar::Residue { .. } => unreachable!("rational matrix"),
            })
        };
        let lcm = rats().fold(BigInt::one(), |acc, r| {
            if r.is_integer() {
                acc
            } else {
                acc.lcm(r.denom())
            }
        });
        let ints = rats()
            .map(|r| (r.numer() * (&lcm / r.denom())).to_i64())
            .collect::<Option<_>>()?;
        Some((lcm, ints))
    }

    /// Rational product computed in machine integers after clearing
    /// denominators; `None` if that does not apply or would overflow.
    fn mul_small_integers(&self, rhs: &DenseMatrix) -> Option<DenseMatrix> {
        if self.field != FieldSpec::Rationals {
            return None;
        }
        let ((da, a), (db, b)) = (self.scaled_integers()?, rhs.scaled_integers()?);
        let denom = da * db;
        let mut acc = vec![0i128; self.rows * rhs.cols];
        for r in 0..self.rows {
            for k in 0..self.cols {
                let x = i128::from(a[r * self.cols + k]);
                if x == 0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    let y = i128::from(b[k * rhs.cols + c]);
                    if y != 0 {
                        let slot = &mut acc[r * rhs.cols + c];
                        *slot = slot.checked_add(x.checked_mul(y)?)?;
                    }
                }
            }
        }
        let data = acc
            .into_iter()
            .map(|v| {
                let v = BigInt::from(v);
                Scalar::Rational(if denom.is_one() {
                    v.into()
                } else {
                    BigRational::new(v, denom.clone())
                })
            })
            .collect();
        Some(DenseMatrix {
            field: self.field,
            rows: self.rows,
            cols: rhs.cols,
            data,
        })
    }
}

impl DenseMatrix {
    /// Product over GF(p) for p < 2^32 with one reduction per entry.
    fn mul_small_residues(&self, rhs: &DenseMatrix) -> Option<DenseMatrix> {
        let FieldSpec::Prime(p) = self.field else {
            return None;
        };
        if p >= 1 << 32 {
            return None;
        }
        let values = |m: &DenseMatrix| -> Vec<u128> {
            m.data
                .iter()
                .map(|x| match x {
                    Scalar::Residue { value, .. } => u128::from(*value),
                    Scalar::Rational(_) => unreachable!("residue matrix"),
                })
                .collect()
        };
        let (a, b) = (values(self), values(rhs));
        let mut acc = vec![0u128; self.rows * rhs.cols];
        for r in 0..self.rows {
            for k in 0..self.cols {
                let x = a[r * self.cols + k];
                if x == 0 {
                    continue;
                }
                let row = &b[k * rhs.cols..(k + 1) * rhs.cols];
                for (slot, &y) in acc[r * rhs.cols..(r + 1) * rhs.cols].iter_mut().zip(row) {
                    *slot += x * y;
                }
            }
        }
        let data = acc
            .into_iter()
            .map(|v| Scalar::Residue {
                value: (v % u128::from(p)) as u64,
                modulus: p,
            })
            .collect();
        Some(DenseMatrix {
            field: self.field,
            rows: self.rows,
            cols: rhs.cols,
            data,
        })
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        if let Some(out) = self
            .mul_small_integers(rhs)
            .or_else(|| self.mul_small_residues(rhs))
        {
            return out;
        }
        let mut out = DenseMatrix::zeros(self.field, self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    let b = rhs.get(k, c);
                    if !b.is_zero() {
                        out.add_at(r, c, &(a * b));
                    }
                }
            }
        }
        out
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        DenseMatrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        DenseMatrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Exact right nullspace of `m`.
pub fn solve_kernel(m: &DenseMatrix) -> Vec<Vec<Scalar>> {
    m.kernel()
}

/// Primes below `limit`, largest first.
fn primes_below(limit: u64) -> impl Iterator<Item = u64> {
    (2..limit).rev().filter(|&k| {
        k % 2 == 1
            && (3..)
                .step_by(2)
                .take_while(|d| d * d <= k)
                .all(|d| k % d != 0)
    })
}

fn det_mod_is_nonzero(mut m: Vec<Vec<u64>>, p: u64) -> bool {
    let n = m.len();
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| m[r][col] != 0) else {
            return false;
        };
        m.swap(col, piv);
        let inv = pow_mod(m[col][col], p - 2, p);
        for r in col + 1..n {
            let f = m[r][col] * inv % p;
            if f == 0 {
                continue;
            }
            let (top, bottom) = m.split_at_mut(r);
            for (x, &y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x = (*x + p - f * y % p) % p;
            }
        }
    }
    true
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}
