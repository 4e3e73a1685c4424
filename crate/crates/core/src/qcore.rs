//! Scalar q-arithmetic: q-brackets, umbral factors `n!/[n]_q!` and the
//! exact coefficients of the inverse hyperbolic sine series used by the
//! symmetric β expansion.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use twofloat::TwoFloat;

use crate::error::{invalid, Error, Result};

/// Which difference quotient plays the role of the derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `(T - 1) / ((q - 1) x)`
    Right,
    /// `(1 - T^-1) / ((1 - 1/q) x)`
    Left,
    /// `(T - T^-1) / ((q - 1/q) x)`
    Symmetric,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Right, Variant::Left, Variant::Symmetric];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Right => "right",
            Variant::Left => "left",
            Variant::Symmetric => "sym",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" | "+" | "plus" => Ok(Variant::Right),
            "left" | "-" | "minus" => Ok(Variant::Left),
            "sym" | "symmetric" | "s" => Ok(Variant::Symmetric),
            other => Err(invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Dilation parameter together with the chosen derivative variant.
///
/// `q` is validated on construction: it must be finite, positive and not 1.
/// The derived constants are stored exactly as `q - 1`, `1 - 1/q` and
/// `q - 1/q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QContext {
    q: f64,
    variant: Variant,
    qplus: f64,
    qminus: f64,
    qsym: f64,
    ln_q: f64,
}

impl QContext {
    pub fn new(q: f64, variant: Variant) -> Result<Self> {
        if !q.is_finite() || q <= 0.0 || q == 1.0 {
            return Err(Error::InvalidQ(q));
        }
        Ok(QContext {
            q,
            variant,
            qplus: q - 1.0,
            qminus: 1.0 - 1.0 / q,
            qsym: q - 1.0 / q,
            ln_q: q.ln(),
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn qplus(&self) -> f64 {
        self.qplus
    }

    pub fn qminus(&self) -> f64 {
        self.qminus
    }

    pub fn qsym(&self) -> f64 {
        self.qsym
    }

    pub fn ln_q(&self) -> f64 {
        self.ln_q
    }

    /// The constant dividing the difference quotient of this variant.
    pub fn step_constant(&self) -> f64 {
        match self.variant {
            Variant::Right => self.qplus,
            Variant::Left => self.qminus,
            Variant::Symmetric => self.qsym,
        }
    }

    /// Same variant, dilation parameter replaced by `1/q`.
    pub fn inverted(&self) -> QContext {
        QContext::new(1.0 / self.q, self.variant).expect("1/q of a valid q is valid")
    }

    pub fn with_variant(&self, variant: Variant) -> QContext {
        QContext::new(self.q, variant).expect("q already validated")
    }

    /// `[n]_q` for this variant.
    ///
    /// Evaluated through `expm1`/`sinh` of `n ln q`, which keeps full
    /// relative precision both near `q = 1` and for large `n`.
    pub fn bracket(&self, n: u32) -> f64 {
        match n {
            0 => 0.0,
            1 => 1.0,
            _ => {
                let n = f64::from(n);
                let l = self.ln_q;
                match self.variant {
                    Variant::Right => (n * l).exp_m1() / l.exp_m1(),
                    Variant::Left => (-n * l).exp_m1() / (-l).exp_m1(),
                    Variant::Symmetric => {
                        let l = l.abs();
                        (n * l).sinh() / l.sinh()
                    }
                }
            }
        }
    }

    /// Umbral factor `n!/[n]_q!`, accumulated as `prod k/[k]_q`.
    pub fn umbral_factor(&self, n: u32) -> f64 {
        (1..=n).fold(1.0, |acc, k| acc * f64::from(k) / self.bracket(k))
    }

    /// Double-double brackets `[1]_q, [2]_q, ...` built by positive-term
    /// recurrences, for evaluations that need more than 53 bits.
    pub fn precise_brackets(&self) -> PreciseBrackets {
        PreciseBrackets::new(*self)
    }
}

/// `[n]_q` for the context's variant.
pub fn q_bracket(ctx: &QContext, n: u32) -> f64 {
    ctx.bracket(n)
}

/// `n!/[n]_q!` without materializing either factorial.
pub fn q_factorial_ratio(ctx: &QContext, n: u32) -> f64 {
    ctx.umbral_factor(n)
}

/// `C_n` of `arcsinh z = sum_{n>=1} (-1)^{n+1} C_n z^{2n-1}`, exactly.
pub fn cn_coefficient(n: u32) -> Result<BigRational> {
    if n == 0 {
        return Err(invalid("n", "C_n is defined for n >= 1"));
    }
    let mut num = BigInt::one();
    let mut den = BigInt::from(2 * n - 1);
    for k in 2..=n {
        num *= BigInt::from(2 * k - 3);
        den *= BigInt::from(2 * k - 2);
    }
    Ok(BigRational::new(num, den))
}

/// `C_n` rounded to the nearest double.
pub fn cn_value(n: u32) -> Result<f64> {
    let c = cn_coefficient(n)?;
    Ok(c.to_f64().unwrap_or(0.0))
}

/// Double-double quotient accurate to the full working precision.
///
/// `TwoFloat`'s own division only carries about one double of accuracy, so
/// the quotient is refined with two correction steps.
pub fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

/// Iterator over `[n]_q` in double-double precision, starting at `n = 1`.
///
/// Right: `[n+1] = 1 + q [n]`; Left: `[n+1] = 1 + [n]/q`;
/// Symmetric: `[n+1] = q [n] + q^-n`. Every recurrence adds positive terms,
/// so relative error stays at the double-double level.
#[derive(Clone, Debug)]
pub struct PreciseBrackets {
    ctx: QContext,
    current: TwoFloat,
    q_pow_neg: TwoFloat,
    n: u32,
}

impl PreciseBrackets {
    fn new(ctx: QContext) -> Self {
        PreciseBrackets {
            ctx,
            current: TwoFloat::from(0.0),
            q_pow_neg: TwoFloat::from(1.0),
            n: 0,
        }
    }
}

impl Iterator for PreciseBrackets {
    type Item = TwoFloat;

    fn next(&mut self) -> Option<TwoFloat> {
        let q = TwoFloat::from(self.ctx.q);
        self.current = match self.ctx.variant {
            Variant::Right => self.current * q + 1.0,
            Variant::Left => dd_div(self.current, q) + 1.0,
            Variant::Symmetric => {
                // q^{-n} with n the index being left behind
                let next = self.current * q + self.q_pow_neg;
                self.q_pow_neg = dd_div(self.q_pow_neg, q);
                next
            }
        };
        self.n += 1;
        Some(self.current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(q: f64, v: Variant) -> QContext {
        QContext::new(q, v).unwrap()
    }

    // Oracle: the defining finite sums, evaluated term by term.
    fn bracket_by_sum(q: f64, v: Variant, n: u32) -> f64 {
        let n = n as i32;
        match v {
            Variant::Right => (0..n).map(|k| q.powi(k)).sum(),
            Variant::Left => (0..n).map(|k| q.powi(-k)).sum(),
            Variant::Symmetric => (0..n).map(|k| q.powi(2 * k - (n - 1))).sum(),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rejects_invalid_q() {
        for q in [0.0, -1.0, 1.0, f64::NAN, f64::INFINITY] {
            assert!(QContext::new(q, Variant::Right).is_err(), "q = {q}");
        }
    }

    #[test]
    fn derived_constants() {
        let c = ctx(2.0, Variant::Right);
        assert_eq!(c.qplus(), 1.0);
        assert_eq!(c.qminus(), 0.5);
        assert_eq!(c.qsym(), 1.5);
    }

    #[test]
    fn bracket_examples() {
        assert!(rel(q_bracket(&ctx(2.0, Variant::Right), 3), 7.0) < 1e-15);
        assert!(rel(q_bracket(&ctx(2.0, Variant::Symmetric), 3), 5.25) < 1e-15);
        for v in Variant::ALL {
            for q in [0.3, 0.9, 1.1, 2.0, 5.0] {
                let c = ctx(q, v);
                assert_eq!(c.bracket(0), 0.0);
                assert_eq!(c.bracket(1), 1.0);
            }
        }
    }

    #[test]
    fn bracket_matches_summation() {
        for v in Variant::ALL {
            for q in [0.5, 0.9, 1.1, 1.3, 2.0] {
                let c = ctx(q, v);
                for n in 0..60 {
                    let got = c.bracket(n);
                    let want = bracket_by_sum(q, v, n);
                    assert!(rel(got, want) < 1e-13, "{v} q={q} n={n}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn continuous_limit() {
        for v in Variant::ALL {
            for q in [1.0 + 1e-6, 1.0 - 1e-6] {
                let c = ctx(q, v);
                for n in 1..30 {
                    assert!(rel(c.bracket(n), f64::from(n)) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn symmetric_bracket_is_invariant_under_inversion() {
        for q in [0.5, 0.9, 1.3, 2.0, 3.7] {
            let a = ctx(q, Variant::Symmetric);
            let b = a.inverted();
            for n in 0..40 {
                assert!(rel(a.bracket(n), b.bracket(n)) < 1e-14, "q={q} n={n}");
            }
        }
    }

    #[test]
    fn left_is_right_of_inverse() {
        for q in [0.5, 0.9, 1.3, 2.0] {
            let left = ctx(q, Variant::Left);
            let right_inv = ctx(1.0 / q, Variant::Right);
            for n in 0..40 {
                assert!(rel(left.bracket(n), right_inv.bracket(n)) < 1e-12);
            }
        }
    }

    #[test]
    fn factorial_ratio_examples() {
        let c = ctx(2.0, Variant::Right);
        assert_eq!(q_factorial_ratio(&c, 0), 1.0);
        assert!(rel(q_factorial_ratio(&c, 2), 2.0 / 3.0) < 1e-15);
        assert!(rel(q_factorial_ratio(&c, 3), 6.0 / 21.0) < 1e-15);
    }

    #[test]
    fn factorial_ratio_stays_finite_where_factorials_overflow() {
        let c = ctx(2.0, Variant::Right);
        // [n]_2! overflows a double near n = 40; the ratio just underflows.
        let u = c.umbral_factor(60);
        assert!(u.is_finite() && u >= 0.0);
        let c = ctx(0.5, Variant::Right);
        assert!(c.umbral_factor(150).is_finite());
    }

    #[test]
    fn cn_examples() {
        assert!(cn_coefficient(0).is_err());
        assert_eq!(cn_coefficient(1).unwrap(), BigRational::one());
        assert_eq!(
            cn_coefficient(2).unwrap(),
            BigRational::new(BigInt::from(1), BigInt::from(6))
        );
        assert_eq!(
            cn_coefficient(3).unwrap(),
            BigRational::new(BigInt::from(3), BigInt::from(40))
        );
    }

    #[test]
    fn cn_rebuild_arcsinh() {
        for z in [-0.5f64, -0.3, 0.1, 0.25, 0.5] {
            let mut s = 0.0;
            for n in 1..=20u32 {
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                s += sign * cn_value(n).unwrap() * z.powi(2 * n as i32 - 1);
            }
            let want: f64 = f64::asinh(z);
            assert!((s - want).abs() < 1e-8, "z={z}: {s} vs {want}");
        }
    }

    #[test]
    fn precise_brackets_agree() {
        for v in Variant::ALL {
            for q in [0.5, 1.05, 1.3, 2.0] {
                let c = ctx(q, v);
                for (i, b) in c.precise_brackets().take(50).enumerate() {
                    let n = i as u32 + 1;
                    assert!(rel(f64::from(b), c.bracket(n)) < 1e-13, "{v} q={q} n={n}");
                }
            }
        }
    }

    #[test]
    fn dd_div_is_double_double_accurate() {
        let third = dd_div(TwoFloat::from(1.0), TwoFloat::from(3.0));
        let err = third * 3.0 - 1.0;
        assert!(err.hi().abs() < 1e-31, "{err:?}");
        let a = TwoFloat::new_add(1.0, 1e-20);
        let b = TwoFloat::from(7.0);
        let back = dd_div(a, b) * b - a;
        assert!(back.hi().abs() < 1e-31);
    }
}
