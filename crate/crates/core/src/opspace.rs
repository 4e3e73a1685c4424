//! Truncated coefficient spaces and the operators acting on them.
//!
//! A univariate series `sum c_n x^n` is truncated at order `N`; operators are
//! dense `(N+1) x (N+1)` matrices. Bivariate spaces (`x^m t^n`) use the
//! row-major flattening `m * (N+1) + n`, and bivariate operators are built
//! from univariate ones with [`OperatorMatrix::kron`].
//!
//! Truncation corrupts some entries. Each matrix carries, per variable, an
//! [`Axis`] record describing which part of it agrees with the untruncated
//! operator:
//!
//! * `exact_cols`: applying the matrix to a polynomial of degree at most
//!   `exact_cols` is exact (used to compare operators and to act on
//!   polynomials);
//! * `exact_rows`: output rows up to `exact_rows` are exact even when the
//!   input is a truncated infinite series (used for residuals of series
//!   solutions).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{invalid, Error, Result};
use crate::qcore::{cn_value, QContext, Variant};

/// A univariate truncated series `sum_{n=0}^{N} c_n x^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSeries {
    coeffs: Vec<f64>,
}

impl CoeffSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "a series needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(invalid("coeffs", format!("coefficient {i} is not finite")));
        }
        Ok(CoeffSeries { coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        CoeffSeries {
            coeffs: vec![0.0; order + 1],
        }
    }

    /// The constant series `1`.
    pub fn one(order: usize) -> Self {
        Self::monomial(order, 0)
    }

    pub fn monomial(order: usize, degree: usize) -> Self {
        let mut s = Self::zeros(order);
        s.coeffs[degree] = 1.0;
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn scale(&self, k: f64) -> CoeffSeries {
        CoeffSeries {
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }
}

/// A bivariate truncated series `sum c_{mn} x^m t^n`, `m <= M`, `n <= N`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiCoeffSeries {
    order_x: usize,
    order_t: usize,
    coeffs: Vec<f64>,
}

impl BiCoeffSeries {
    pub fn zeros(order_x: usize, order_t: usize) -> Self {
        BiCoeffSeries {
            order_x,
            order_t,
            coeffs: vec![0.0; (order_x + 1) * (order_t + 1)],
        }
    }

    pub fn from_fn(
        order_x: usize,
        order_t: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut s = Self::zeros(order_x, order_t);
        for m in 0..=order_x {
            for n in 0..=order_t {
                s.set(m, n, f(m, n));
            }
        }
        s.check_finite()?;
        Ok(s)
    }

    pub(crate) fn from_flat(order_x: usize, order_t: usize, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), (order_x + 1) * (order_t + 1));
        BiCoeffSeries {
            order_x,
            order_t,
            coeffs,
        }
    }

    fn check_finite(&self) -> Result<()> {
        match self.coeffs.iter().position(|c| !c.is_finite()) {
            Some(i) => Err(invalid(
                "coeffs",
                format!("coefficient {:?} is not finite", self.unflatten(i)),
            )),
            None => Ok(()),
        }
    }

    pub fn order_x(&self) -> usize {
        self.order_x
    }

    pub fn order_t(&self) -> usize {
        self.order_t
    }

    fn unflatten(&self, i: usize) -> (usize, usize) {
        (i / (self.order_t + 1), i % (self.order_t + 1))
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        if m > self.order_x || n > self.order_t {
            return 0.0;
        }
        self.coeffs[m * (self.order_t + 1) + n]
    }

    pub fn set(&mut self, m: usize, n: usize, value: f64) {
        let stride = self.order_t + 1;
        self.coeffs[m * stride + n] = value;
    }

    pub fn flat(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let stride = self.order_t + 1;
        self.coeffs.chunks(stride).rev().fold(0.0, |acc, row| {
            acc * x + row.iter().rev().fold(0.0, |a, &c| a * t + c)
        })
    }

    /// Evaluates `sum |c_{mn}| |x|^m |t|^n`, the magnitude scale of `eval`.
    pub fn eval_abs(&self, x: f64, t: f64) -> f64 {
        let (x, t) = (x.abs(), t.abs());
        let stride = self.order_t + 1;
        self.coeffs.chunks(stride).rev().fold(0.0, |acc, row| {
            acc * x + row.iter().rev().fold(0.0, |a, &c| a * t + c.abs())
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Truncation bookkeeping for one variable of an operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Axis {
    /// Truncation order `N` of this variable.
    pub order: usize,
    /// Largest degree shift: column `n` maps into rows `<= n + shift`.
    pub shift: isize,
    /// Smallest degree shift: column `n` maps into rows `>= n + low`.
    pub low: isize,
    /// Largest input degree on which the matrix is exact (may be negative).
    pub exact_cols: isize,
    /// Largest output degree that is exact for truncated series input.
    pub exact_rows: isize,
}

impl Axis {
    fn banded(order: usize, shift: isize) -> Axis {
        let n = order as isize;
        Axis {
            order,
            shift,
            low: shift,
            exact_cols: (n - shift.max(0)).min(n),
            exact_rows: (n + shift.min(0)).min(n),
        }
    }

    fn compose(a: Axis, b: Axis) -> Axis {
        let n = a.order as isize;
        Axis {
            order: a.order,
            shift: a.shift + b.shift,
            low: a.low + b.low,
            exact_cols: b.exact_cols.min(a.exact_cols - b.shift).min(n),
            exact_rows: a.exact_rows.min(b.exact_rows + a.low).min(n),
        }
    }

    fn combine(a: Axis, b: Axis) -> Axis {
        Axis {
            order: a.order,
            shift: a.shift.max(b.shift),
            low: a.low.min(b.low),
            exact_cols: a.exact_cols.min(b.exact_cols),
            exact_rows: a.exact_rows.min(b.exact_rows),
        }
    }
}

/// A finite linear map on a (uni- or bivariate) truncated coefficient space.
#[derive(Clone, PartialEq)]
pub struct OperatorMatrix {
    axes: Vec<Axis>,
    dim: usize,
    entries: Vec<f64>,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("axes", &self.axes)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl OperatorMatrix {
    fn from_parts(axes: Vec<Axis>, entries: Vec<f64>) -> Self {
        let dim = axes.iter().map(|a| a.order + 1).product();
        debug_assert_eq!(entries.len(), dim * dim);
        OperatorMatrix { axes, dim, entries }
    }

    /// Univariate operator with `x^n -> weight(n) x^{n+shift}`.
    fn banded(order: usize, shift: isize, weight: impl Fn(usize) -> f64) -> Self {
        let dim = order + 1;
        let mut entries = vec![0.0; dim * dim];
        for col in 0..dim {
            let row = col as isize + shift;
            if row >= 0 && (row as usize) < dim {
                entries[row as usize * dim + col] = weight(col);
            }
        }
        Self::from_parts(vec![Axis::banded(order, shift)], entries)
    }

    pub fn identity(order: usize) -> Self {
        Self::banded(order, 0, |_| 1.0)
    }

    pub fn diagonal(order: usize, weight: impl Fn(usize) -> f64) -> Self {
        Self::banded(order, 0, weight)
    }

    /// Identity on a space with the same shape as `self`.
    pub fn identity_like(&self) -> Self {
        let mut entries = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            entries[i * self.dim + i] = 1.0;
        }
        let axes = self.axes.iter().map(|a| Axis::banded(a.order, 0)).collect();
        Self::from_parts(axes, entries)
    }

    /// Classical derivative `x^n -> n x^{n-1}`.
    pub fn derivative(order: usize) -> Self {
        Self::banded(order, -1, |n| n as f64)
    }

    /// Diagonal umbral map `x^n -> (n!/[n]_q!) x^n`.
    pub fn umbral_diag(ctx: &QContext, order: usize) -> Self {
        let mut u = Vec::with_capacity(order + 1);
        let mut acc = 1.0;
        u.push(acc);
        for n in 1..=order {
            acc *= n as f64 / ctx.bracket(n as u32);
            u.push(acc);
        }
        Self::diagonal(order, |n| u[n])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn shape(&self) -> String {
        let orders: Vec<_> = self.axes.iter().map(|a| a.order).collect();
        format!("{orders:?}")
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.axes.len() == other.axes.len()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.order == b.order)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleOrders {
                left: self.shape(),
                right: other.shape(),
            })
        }
    }

    /// Multi-index of a flat position.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % (a.order + 1);
            flat /= a.order + 1;
        }
        idx
    }

    fn within(&self, flat: usize, bound: impl Fn(&Axis) -> isize) -> bool {
        self.unflatten(flat)
            .iter()
            .zip(&self.axes)
            .all(|(&i, a)| (i as isize) <= bound(a))
    }

    /// Whether column `flat` lies in the exact-column interior.
    pub fn is_interior_col(&self, flat: usize) -> bool {
        self.within(flat, |a| a.exact_cols)
    }

    /// Whether output row `flat` is exact for truncated series input.
    pub fn is_interior_row(&self, flat: usize) -> bool {
        self.within(flat, |a| a.exact_rows)
    }

    pub fn interior_cols(&self) -> Vec<usize> {
        (0..self.dim).filter(|&c| self.is_interior_col(c)).collect()
    }

    pub fn interior_rows(&self) -> Vec<usize> {
        (0..self.dim).filter(|&r| self.is_interior_row(r)).collect()
    }

    /// `self ∘ other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.entries[k * n..(k + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(&a, &b)| Axis::compose(a, b))
            .collect();
        Ok(Self::from_parts(axes, out))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(&a, &b)| Axis::combine(a, b))
            .collect();
        Ok(Self::from_parts(axes, entries))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Self {
        OperatorMatrix {
            axes: self.axes.clone(),
            dim: self.dim,
            entries: self.entries.iter().map(|e| e * k).collect(),
        }
    }

    /// `self^k`, `k >= 0`.
    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(self.identity_like(), |acc, _| &acc * self)
    }

    /// Kronecker product: `self` acts on the leading variables, `other` on
    /// the trailing ones.
    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        let dim = n * m;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                let a = self.entries[i * n + j];
                if a == 0.0 {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        let b = other.entries[k * m + l];
                        if b != 0.0 {
                            entries[(i * m + k) * dim + (j * m + l)] = a * b;
                        }
                    }
                }
            }
        }
        let axes = self.axes.iter().chain(&other.axes).copied().collect();
        Self::from_parts(axes, entries)
    }

    /// Matrix-vector product on a flat coefficient vector.
    pub fn apply_flat(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length does not match operator");
        self.entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply(&self, s: &CoeffSeries) -> Result<CoeffSeries> {
        if self.axes.len() != 1 || s.coeffs.len() != self.dim {
            return Err(Error::IncompatibleOrders {
                left: self.shape(),
                right: format!("[{}]", s.order()),
            });
        }
        Ok(CoeffSeries {
            coeffs: self.apply_flat(&s.coeffs),
        })
    }

    pub fn apply_bi(&self, s: &BiCoeffSeries) -> Result<BiCoeffSeries> {
        let matches = self.axes.len() == 2
            && self.axes[0].order == s.order_x
            && self.axes[1].order == s.order_t;
        if !matches {
            return Err(Error::IncompatibleOrders {
                left: self.shape(),
                right: format!("[{}, {}]", s.order_x, s.order_t),
            });
        }
        Ok(BiCoeffSeries::from_flat(
            s.order_x,
            s.order_t,
            self.apply_flat(&s.coeffs),
        ))
    }

    /// Largest entrywise deviation over the column interior shared by both
    /// operators, each difference scaled by `max(1, |a|, |b|)`.
    pub fn interior_deviation(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for col in (0..n).filter(|&c| self.is_interior_col(c) && other.is_interior_col(c)) {
            for row in 0..n {
                let a = self.entries[row * n + col];
                let b = other.entries[row * n + col];
                let scale = 1f64.max(a.abs()).max(b.abs());
                worst = worst.max((a - b).abs() / scale);
            }
        }
        Ok(worst)
    }

    /// Largest entry magnitude over the column interior.
    pub fn interior_max_abs(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for col in (0..n).filter(|&c| self.is_interior_col(c)) {
            for row in 0..n {
                worst = worst.max(self.entries[row * n + col].abs());
            }
        }
        worst
    }

    /// Whether the column interior contains at least the constant monomial.
    pub fn has_interior(&self) -> bool {
        self.axes.iter().all(|a| a.exact_cols >= 0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;

    /// Composition; panics on mismatched shapes (see [`OperatorMatrix::compose`]).
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.compose(rhs).expect("operator shapes must match")
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_add(rhs).expect("operator shapes must match")
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_sub(rhs).expect("operator shapes must match")
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn neg(self) -> OperatorMatrix {
        self.scale(-1.0)
    }
}

impl Mul<&OperatorMatrix> for f64 {
    type Output = OperatorMatrix;

    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        rhs.scale(self)
    }
}

/// Dilation `x^n -> q^n x^n`, or `q^-n x^n` when `inverse`.
pub fn op_shift(ctx: &QContext, order: usize, inverse: bool) -> OperatorMatrix {
    let q = ctx.q();
    OperatorMatrix::diagonal(order, |n| {
        let p = q.powi(n as i32);
        if inverse {
            1.0 / p
        } else {
            p
        }
    })
}

/// q-derivative of the context's variant: `x^n -> [n]_q x^{n-1}`.
pub fn op_delta(ctx: &QContext, order: usize) -> OperatorMatrix {
    OperatorMatrix::banded(order, -1, |n| ctx.bracket(n as u32))
}

/// Multiplication by `x`.
pub fn op_mult_x(order: usize) -> OperatorMatrix {
    OperatorMatrix::banded(order, 1, |_| 1.0)
}

/// The shift-commuting factor `β_x` alone: `x^m -> (m/[m]_q) x^m`.
///
/// At `m = 0` the entry is the limit of `m/[m]_q`, i.e. the constant the
/// shift series starts from: `(q-1)/ln q`, `(1-1/q)/ln q` or
/// `(q-1/q)/(2 ln q)`.
pub fn op_beta(ctx: &QContext, order: usize) -> OperatorMatrix {
    let at_zero = match ctx.variant() {
        Variant::Right => ctx.qplus() / ctx.ln_q(),
        Variant::Left => ctx.qminus() / ctx.ln_q(),
        Variant::Symmetric => 0.5 * ctx.qsym() / ctx.ln_q(),
    };
    OperatorMatrix::diagonal(order, |m| {
        if m == 0 {
            at_zero
        } else {
            m as f64 / ctx.bracket(m as u32)
        }
    })
}

/// `B = β_x x`: `x^n -> ((n+1)/[n+1]_q) x^{n+1}`.
pub fn op_beta_x(ctx: &QContext, order: usize) -> OperatorMatrix {
    OperatorMatrix::banded(order, 1, |n| (n + 1) as f64 / ctx.bracket(n as u32 + 1))
}

/// Euler operator `x ∂_x`.
pub fn op_euler(order: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(order, |n| n as f64)
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.check_shape(b)?;
    let ab = a.compose(b)?;
    let ba = b.compose(a)?;
    ab.try_sub(&ba)
}

/// Applies the product `ops[0] ops[1] ... ops[k-1]` to the constant `1`
/// (the last operator acts first).
pub fn project_on_one(ops: &[OperatorMatrix]) -> Result<CoeffSeries> {
    let last = ops
        .last()
        .ok_or_else(|| invalid("ops", "at least one operator is required"))?;
    if last.axes.len() != 1 {
        return Err(invalid("ops", "projection acts on univariate operators"));
    }
    let mut s = CoeffSeries::one(last.axes[0].order);
    for op in ops.iter().rev() {
        s = op.apply(&s)?;
    }
    Ok(s)
}

/// Partial sum of the shift-operator series of `β_x`, with `terms` summands.
///
/// * Right: `(q-1)/ln q * sum (-1)^k (T-1)^k/(k+1)`
/// * Left: `(1-1/q)/ln q * sum (1-T^-1)^k/(k+1)`
/// * Symmetric: `(q-1/q)/ln q * 1/2 * sum (-1)^k C_{k+1} ((T-T^-1)/2)^{2k}`
///
/// Each converges on `x^m` wherever the scalar series in `q^m` does.
pub fn beta_shift_expansion(ctx: &QContext, terms: usize, order: usize) -> Result<OperatorMatrix> {
    if terms == 0 {
        return Err(invalid("terms", "at least one term is required"));
    }
    let id = OperatorMatrix::identity(order);
    let t = op_shift(ctx, order, false);
    let t_inv = op_shift(ctx, order, true);
    let (y, prefactor) = match ctx.variant() {
        Variant::Right => (&t - &id, ctx.qplus() / ctx.ln_q()),
        Variant::Left => (&id - &t_inv, ctx.qminus() / ctx.ln_q()),
        Variant::Symmetric => {
            let s = (&t - &t_inv).scale(0.5);
            (&s * &s, 0.5 * ctx.qsym() / ctx.ln_q())
        }
    };
    let mut sum = id.scale(0.0);
    let mut power = id.clone();
    for k in 0..terms {
        let weight = match ctx.variant() {
            Variant::Right => (if k % 2 == 0 { 1.0 } else { -1.0 }) / (k + 1) as f64,
            Variant::Left => 1.0 / (k + 1) as f64,
            Variant::Symmetric => (if k % 2 == 0 { 1.0 } else { -1.0 }) * cn_value(k as u32 + 1)?,
        };
        sum = &sum + &power.scale(weight);
        power = &power * &y;
    }
    Ok(sum.scale(prefactor))
}

#[cfg(test)]
mod tests {
    use super::*;

    const QS: [f64; 5] = [0.5, 0.9, 1.1, 1.3, 2.0];

    fn ctx(q: f64, v: Variant) -> QContext {
        QContext::new(q, v).unwrap()
    }

    #[test]
    fn shift_examples() {
        let c = ctx(2.0, Variant::Right);
        let t = op_shift(&c, 6, false);
        let out = t.apply(&CoeffSeries::monomial(6, 3)).unwrap();
        assert_eq!(out.coeff(3), 8.0);
        assert_eq!(t.apply(&CoeffSeries::one(6)).unwrap(), CoeffSeries::one(6));
        let both = &op_shift(&c, 6, true) * &t;
        assert_eq!(
            both.interior_deviation(&OperatorMatrix::identity(6))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn delta_examples() {
        let x2 = CoeffSeries::monomial(5, 2);
        let d = op_delta(&ctx(2.0, Variant::Right), 5).apply(&x2).unwrap();
        assert!((d.coeff(1) - 3.0).abs() < 1e-15);
        let x3 = CoeffSeries::monomial(5, 3);
        let d = op_delta(&ctx(2.0, Variant::Symmetric), 5)
            .apply(&x3)
            .unwrap();
        assert!((d.coeff(2) - 5.25).abs() < 1e-15);
        for v in Variant::ALL {
            let z = op_delta(&ctx(1.7, v), 5)
                .apply(&CoeffSeries::one(5))
                .unwrap();
            assert_eq!(z, CoeffSeries::zeros(5));
        }
    }

    #[test]
    fn mult_x_examples() {
        let x = op_mult_x(4);
        assert_eq!(
            x.apply(&CoeffSeries::monomial(4, 2)).unwrap(),
            CoeffSeries::monomial(4, 3)
        );
        assert_eq!(x.axes()[0].exact_cols, 3);
        assert!(!x.is_interior_col(4));
        assert_eq!(
            project_on_one(&[x.clone(), x]).unwrap(),
            CoeffSeries::monomial(4, 2)
        );
    }

    #[test]
    fn beta_examples() {
        let c = ctx(2.0, Variant::Right);
        let b = op_beta_x(&c, 8);
        assert_eq!(
            b.apply(&CoeffSeries::one(8)).unwrap(),
            CoeffSeries::monomial(8, 1)
        );
        let out = b.apply(&CoeffSeries::monomial(8, 1)).unwrap();
        assert!((out.coeff(2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn euler_examples() {
        let e = op_euler(5);
        assert_eq!(
            e.apply(&CoeffSeries::one(5)).unwrap(),
            CoeffSeries::zeros(5)
        );
        assert_eq!(e.apply(&CoeffSeries::monomial(5, 3)).unwrap().coeff(3), 3.0);
    }

    // Oracle for pointwise agreement: the difference quotients themselves.
    fn pointwise_delta(c: &QContext, p: &CoeffSeries, x: f64) -> f64 {
        let q = c.q();
        match c.variant() {
            Variant::Right => (p.eval(q * x) - p.eval(x)) / (c.qplus() * x),
            Variant::Left => (p.eval(x) - p.eval(x / q)) / (c.qminus() * x),
            Variant::Symmetric => (p.eval(q * x) - p.eval(x / q)) / (c.qsym() * x),
        }
    }

    #[test]
    fn coefficient_action_matches_difference_quotient() {
        let p = CoeffSeries::new(vec![0.3, 1.0, 0.5, 2.0, 0.25, 1.5, 0.75, 0.1, 0.2]).unwrap();
        for v in Variant::ALL {
            for q in [0.5, 1.3, 2.0] {
                let c = ctx(q, v);
                let dp = op_delta(&c, p.order()).apply(&p).unwrap();
                for x in [0.4, 0.7, 1.3, 2.1] {
                    let want = pointwise_delta(&c, &p, x);
                    let got = dp.eval(x);
                    assert!((got - want).abs() <= 1e-12 * want.abs(), "{v} q={q} x={x}");
                }
            }
        }
    }

    #[test]
    fn commutator_identities() {
        let n = 40;
        for q in QS {
            for v in Variant::ALL {
                let c = ctx(q, v);
                let d = op_delta(&c, n);
                let b = op_beta_x(&c, n);
                let id = OperatorMatrix::identity(n);
                let db = commutator(&d, &b).unwrap();
                assert!(
                    db.interior_deviation(&id).unwrap() <= 1e-13,
                    "[Δ,B] {v} q={q}"
                );
                let bd = &b * &d;
                assert!(bd.interior_deviation(&op_euler(n)).unwrap() <= 1e-13);
                let t = op_shift(&c, n, false);
                let bt = commutator(&op_beta(&c, n), &t).unwrap();
                assert!(bt.interior_deviation(&id.scale(0.0)).unwrap() <= 1e-13);
                let bx = &op_beta(&c, n) * &op_mult_x(n);
                assert!(bx.interior_deviation(&b).unwrap() <= 1e-15);
            }
            let x = op_mult_x(n);
            let t = op_shift(&ctx(q, Variant::Right), n, false);
            let t_inv = op_shift(&ctx(q, Variant::Right), n, true);
            let right = commutator(&op_delta(&ctx(q, Variant::Right), n), &x).unwrap();
            assert!(right.interior_deviation(&t).unwrap() <= 1e-13);
            let left = commutator(&op_delta(&ctx(q, Variant::Left), n), &x).unwrap();
            assert!(left.interior_deviation(&t_inv).unwrap() <= 1e-13);
            let sym = commutator(&op_delta(&ctx(q, Variant::Symmetric), n), &x).unwrap();
            let want = (&t.scale(q) + &t_inv).scale(1.0 / (1.0 + q));
            assert!(sym.interior_deviation(&want).unwrap() <= 1e-13);
        }
    }

    #[test]
    fn commutator_interior_excludes_truncated_column() {
        let c = ctx(1.3, Variant::Right);
        let k = commutator(&op_delta(&c, 10), &op_mult_x(10)).unwrap();
        assert_eq!(k.axes()[0].exact_cols, 9);
        // column 10 is polluted by the dropped x^11
        assert!((k.entry(10, 10) - c.q().powi(10)).abs() > 1.0);
    }

    #[test]
    fn commutator_rejects_mismatched_orders() {
        let c = ctx(1.3, Variant::Right);
        assert!(matches!(
            commutator(&op_delta(&c, 5), &op_mult_x(6)),
            Err(Error::IncompatibleOrders { .. })
        ));
    }

    #[test]
    fn umbral_conjugation() {
        for q in QS {
            for v in Variant::ALL {
                let c = ctx(q, v);
                let u = OperatorMatrix::umbral_diag(&c, 48);
                let lhs = &op_delta(&c, 48) * &u;
                let rhs = &u * &OperatorMatrix::derivative(48);
                assert!(lhs.interior_deviation(&rhs).unwrap() <= 1e-13, "{v} q={q}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let c = ctx(1.7, Variant::Symmetric);
        let b = op_beta_x(&c, 6);
        let bb = project_on_one(&[b.clone(), b.clone()]).unwrap();
        assert!((bb.coeff(2) - 2.0 / c.bracket(2)).abs() < 1e-15);
        let t = op_shift(&c, 6, false);
        assert_eq!(project_on_one(&[t]).unwrap(), CoeffSeries::one(6));
        for v in Variant::ALL {
            let c = ctx(0.8, v);
            let db = project_on_one(&[op_delta(&c, 6), op_beta_x(&c, 6)]).unwrap();
            assert!((db.coeff(0) - 1.0).abs() < 1e-15);
            assert!(db.coeffs()[1..].iter().all(|&x| x == 0.0));
        }
        assert!(project_on_one(&[]).is_err());
    }

    #[test]
    fn beta_series_right_converges() {
        let c = ctx(1.2, Variant::Right);
        let n = 8;
        let series = beta_shift_expansion(&c, 60, n).unwrap();
        let out = (&series * &op_mult_x(n))
            .apply(&CoeffSeries::monomial(n, 2))
            .unwrap();
        let want = 3.0 / c.bracket(3);
        assert!(
            (out.coeff(3) - want).abs() < 1e-8,
            "{} vs {want}",
            out.coeff(3)
        );

        // on 1 the composition reaches β x = x once the series has converged
        let c = ctx(1.1, Variant::Right);
        let series = beta_shift_expansion(&c, 40, n).unwrap();
        let out = (&series * &op_mult_x(n))
            .apply(&CoeffSeries::one(n))
            .unwrap();
        assert!((out.coeff(1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn beta_series_symmetric_converges() {
        let c = ctx(1.05, Variant::Symmetric);
        let n = 6;
        let series = beta_shift_expansion(&c, 30, n).unwrap();
        // β acting on x reproduces x: 1/[1] = 1
        let out = series.apply(&CoeffSeries::monomial(n, 1)).unwrap();
        assert!((out.coeff(1) - 1.0).abs() < 1e-6);
        let beta = op_beta(&c, n);
        assert!(series.interior_deviation(&beta).unwrap() < 1e-10);
    }

    #[test]
    fn beta_series_left_converges() {
        let c = ctx(1.3, Variant::Left);
        let series = beta_shift_expansion(&c, 80, 4).unwrap();
        assert!(series.interior_deviation(&op_beta(&c, 4)).unwrap() < 1e-10);
    }

    #[test]
    fn kron_bookkeeping() {
        let c = ctx(1.3, Variant::Right);
        let dx = op_delta(&c, 3).kron(&OperatorMatrix::identity(2));
        assert_eq!(dx.dim(), 12);
        assert_eq!(dx.unflatten(7), vec![2, 1]);
        // x^2 t -> [2] x t
        assert!((dx.entry(4, 7) - c.bracket(2)).abs() < 1e-15);
        assert_eq!(dx.axes()[0].exact_rows, 2);
        assert_eq!(dx.axes()[1].exact_rows, 2);
    }
}
