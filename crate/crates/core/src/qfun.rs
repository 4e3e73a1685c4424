//! Umbral q-special functions as truncated power series.
//!
//! Coefficients come from term recurrences carried out in double-double
//! precision; the public coefficient vector is their rounding to `f64`.
//! Evaluation sums in double-double as well, so that alternating series with
//! large intermediate terms (the q-exponential with `λ < 0` near `q = 1`)
//! keep their sign information up to the first zero.

use twofloat::TwoFloat;

use crate::error::{invalid, Error, Result};
use crate::opspace::{op_beta_x, op_delta, CoeffSeries, OperatorMatrix};
use crate::qcore::{dd_div, QContext, Variant};

/// Which umbral function a [`QSeriesFunction`] represents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QKind {
    /// `sum λ^n x^n / [n]_q!`
    Exp { lambda: f64 },
    /// `sum (-λ)^n (2n)!/n! x^{2n} / [2n]_q!`
    Gauss { lambda: f64 },
    /// `sum x0^{a-n} a(a-1)...(a-n+1) x^n / [n]_q!`
    ShiftedPower { a: f64, x0: f64 },
    /// Solutions of `Δ_xx ψ + β_x x Δ_x ψ = E ψ` with `ψ(0) = a1`, `Δψ(0) = a2`.
    Hermite { energy: f64, a1: f64, a2: f64 },
}

impl QKind {
    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            QKind::Exp { lambda } | QKind::Gauss { lambda } => vec![("lambda", lambda)],
            QKind::ShiftedPower { a, x0 } => vec![("a", a), ("x0", x0)],
            QKind::Hermite { energy, a1, a2 } => vec![("energy", energy), ("a1", a1), ("a2", a2)],
        }
    }
}

/// Outcome of summing a [`QSeriesFunction`] at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// The stopping rule (three consecutive negligible terms) was met.
    pub converged: bool,
    pub terms_used: usize,
    /// Nonzero term magnitudes kept growing over the final quarter of the
    /// budget.
    pub diverging: bool,
}

/// Scan specification for [`first_zero`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scan {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QSeriesFunction {
    kind: QKind,
    ctx: QContext,
    coeffs: CoeffSeries,
    precise: Vec<TwoFloat>,
}

const NEGLIGIBLE: f64 = 1e-16;
const BISECTION_WIDTH: f64 = 1e-10;

fn precise_bracket_table(ctx: &QContext, order: usize) -> Vec<TwoFloat> {
    std::iter::once(TwoFloat::from(0.0))
        .chain(ctx.precise_brackets().take(order))
        .collect()
}

/// Coefficients of a two-step recurrence `c_{n+2} = ratio(n) c_n / ([n+2][n+1])`.
fn two_step(
    br: &[TwoFloat],
    order: usize,
    c0: f64,
    c1: f64,
    ratio: impl Fn(usize) -> f64,
) -> Vec<TwoFloat> {
    let mut c = vec![TwoFloat::from(0.0); order + 1];
    c[0] = TwoFloat::from(c0);
    if order >= 1 {
        c[1] = TwoFloat::from(c1);
    }
    for n in 0..order.saturating_sub(1) {
        let r = ratio(n);
        c[n + 2] = if r == 0.0 {
            TwoFloat::from(0.0)
        } else {
            dd_div(c[n] * r, br[n + 2] * br[n + 1])
        };
    }
    c
}

impl QSeriesFunction {
    pub fn build(kind: QKind, ctx: QContext, order: usize) -> Result<Self> {
        for (name, v) in kind.params() {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        let br = precise_bracket_table(&ctx, order);
        let zero = TwoFloat::from(0.0);
        let precise: Vec<TwoFloat> = match kind {
            QKind::Exp { lambda } => {
                let mut c = Vec::with_capacity(order + 1);
                let mut acc = TwoFloat::from(1.0);
                c.push(acc);
                for b in &br[1..] {
                    acc = dd_div(acc * lambda, *b);
                    c.push(acc);
                }
                c
            }
            QKind::Gauss { lambda } => {
                let mut c = vec![zero; order + 1];
                c[0] = TwoFloat::from(1.0);
                let mut n = 1;
                while 2 * n <= order {
                    let factor = -lambda * 2.0 * (2 * n - 1) as f64;
                    c[2 * n] = dd_div(c[2 * n - 2] * factor, br[2 * n - 1] * br[2 * n]);
                    n += 1;
                }
                c
            }
            QKind::ShiftedPower { a, x0 } => {
                if x0 == 0.0 {
                    return Err(invalid("x0", "the expansion point must be nonzero"));
                }
                let lead = x0.powf(a);
                if !lead.is_finite() {
                    return Err(invalid(
                        "x0",
                        format!("x0^a is not real for x0 = {x0}, a = {a}"),
                    ));
                }
                let mut c = Vec::with_capacity(order + 1);
                let mut acc = TwoFloat::from(lead);
                c.push(acc);
                for (n, b) in br.iter().enumerate().skip(1) {
                    acc = dd_div(acc * (a - (n - 1) as f64), *b * x0);
                    c.push(acc);
                }
                c
            }
            QKind::Hermite { energy, a1, a2 } => {
                two_step(&br, order, a1, a2, |n| energy - n as f64)
            }
        };
        let rounded: Vec<f64> = precise.iter().map(|&c| f64::from(c)).collect();
        let coeffs = CoeffSeries::new(rounded).map_err(|_| {
            invalid(
                "order",
                format!("coefficients overflow a double before order {order}"),
            )
        })?;
        Ok(QSeriesFunction {
            kind,
            ctx,
            coeffs,
            precise,
        })
    }

    pub fn kind(&self) -> QKind {
        self.kind
    }

    pub fn ctx(&self) -> &QContext {
        &self.ctx
    }

    pub fn order(&self) -> usize {
        self.coeffs.order()
    }

    pub fn coeffs(&self) -> &CoeffSeries {
        &self.coeffs
    }

    /// Sums the series at `x`.
    ///
    /// Stops once three consecutive terms are at most `1e-16` of the partial
    /// sum; otherwise the whole truncation budget is used and `converged` is
    /// false.
    pub fn evaluate(&self, x: f64) -> Evaluation {
        let xx = TwoFloat::from(x);
        let mut sum = TwoFloat::from(0.0);
        let mut power = TwoFloat::from(1.0);
        let mut run = 0;
        let mut terms_used = 0;
        let mut converged = false;
        let mut magnitudes = Vec::with_capacity(self.precise.len());
        for &c in &self.precise {
            terms_used += 1;
            let term = if c == 0.0 {
                TwoFloat::from(0.0)
            } else {
                c * power
            };
            if !term.hi().is_finite() {
                break;
            }
            sum += term;
            if term.hi() != 0.0 {
                magnitudes.push(term.hi().abs());
            }
            if term.hi().abs() <= NEGLIGIBLE * sum.hi().abs() {
                run += 1;
                if run == 3 {
                    converged = true;
                    break;
                }
            } else {
                run = 0;
            }
            power *= xx;
        }
        let diverging = !converged && {
            let tail = &magnitudes[magnitudes.len() - magnitudes.len() / 4..];
            tail.len() >= 2 && tail.windows(2).all(|w| w[1] >= w[0])
        };
        Evaluation {
            value: f64::from(sum),
            converged,
            terms_used,
            diverging,
        }
    }

    /// Analytic convergence radius, where one is classified for this kind.
    pub fn radius(&self) -> Option<f64> {
        convergence_radius(self.kind, &self.ctx).ok()
    }

    /// The polynomial-capable factor of a Hermite solution: the umbral image
    /// of `e^{x²/2} ψ(x)`, with coefficients
    /// `[n+2][n+1] d_{n+2} = (E + 1 + n) d_n`, `d_0 = a1`, `d_1 = a2`.
    ///
    /// For `E = -(k+1)` the branch of parity `k` stops at degree `k`.
    pub fn kummer_factor(&self) -> Result<CoeffSeries> {
        let QKind::Hermite { energy, a1, a2 } = self.kind else {
            return Err(Error::Unsupported("kummer_factor"));
        };
        let order = self.order();
        let br = precise_bracket_table(&self.ctx, order);
        let d = two_step(&br, order, a1, a2, |n| energy + 1.0 + n as f64);
        CoeffSeries::new(d.into_iter().map(f64::from).collect())
    }
}

pub fn build(kind: QKind, ctx: QContext, order: usize) -> Result<QSeriesFunction> {
    QSeriesFunction::build(kind, ctx, order)
}

pub fn evaluate(f: &QSeriesFunction, x: f64) -> Evaluation {
    f.evaluate(x)
}

/// Radius of convergence of the umbral exponential and gaussian.
///
/// Returns `f64::INFINITY` for entire series and `0.0` for series that
/// diverge at every `x != 0`. The left variant is the right variant at `1/q`.
pub fn convergence_radius(kind: QKind, ctx: &QContext) -> Result<f64> {
    // `limit` is lim [n]_q as n -> inf, or None when the brackets grow without bound
    let limit = match ctx.variant() {
        Variant::Symmetric => None,
        Variant::Right if ctx.q() > 1.0 => None,
        Variant::Left if ctx.q() < 1.0 => None,
        Variant::Right => Some(1.0 / (1.0 - ctx.q())),
        Variant::Left => Some(1.0 / (1.0 - 1.0 / ctx.q())),
    };
    match kind {
        QKind::Exp { lambda } => Ok(match limit {
            _ if lambda == 0.0 => f64::INFINITY,
            None => f64::INFINITY,
            Some(l) => l / lambda.abs(),
        }),
        QKind::Gauss { lambda } => Ok(match limit {
            _ if lambda == 0.0 => f64::INFINITY,
            None => f64::INFINITY,
            Some(_) => 0.0,
        }),
        _ => Err(Error::Unsupported("convergence_radius")),
    }
}

/// First sign change of `f` along the scan, refined by bisection to an
/// interval narrower than `1e-10`.
pub fn first_zero(f: &QSeriesFunction, scan: Scan) -> Result<Option<f64>> {
    let Scan { start, end, step } = scan;
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(invalid(
            "scan",
            format!("empty or non-finite range [{start}, {end}]"),
        ));
    }
    if let Some(radius) = f.radius() {
        let reach = start.abs().max(end.abs());
        if reach >= radius {
            return Err(Error::OutsideRadius { x: reach, radius });
        }
    }
    let value_at = |x: f64| -> Result<f64> {
        let e = f.evaluate(x);
        if e.converged {
            Ok(e.value)
        } else {
            Err(Error::NotConverged(x))
        }
    };

    let steps = ((end - start) / step).floor() as usize;
    let mut a = start;
    let mut fa = value_at(a)?;
    if fa == 0.0 {
        return Ok(Some(a));
    }
    for i in 1..=steps {
        let b = start + i as f64 * step;
        let fb = value_at(b)?;
        if fb == 0.0 {
            return Ok(Some(b));
        }
        if fa.signum() != fb.signum() {
            return bisect(&value_at, a, b, fa).map(Some);
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

fn bisect(
    value_at: &impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
) -> Result<f64> {
    while b - a >= BISECTION_WIDTH {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = value_at(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// `Δ_xx + β_x x Δ_x - E` as an operator on order-`order` series.
pub fn hermite_operator(ctx: &QContext, energy: f64, order: usize) -> OperatorMatrix {
    let d = op_delta(ctx, order);
    let b = op_beta_x(ctx, order);
    let dd = &d * &d;
    let bd = &b * &d;
    &(&dd + &bd) - &OperatorMatrix::identity(order).scale(energy)
}

/// Largest residual of `Δ_xx ψ + β_x x Δ_x ψ - E ψ` over the exact rows
/// (degrees `<= order - 2`).
pub fn hermite_residual(f: &QSeriesFunction, order: usize) -> Result<f64> {
    let QKind::Hermite { energy, .. } = f.kind else {
        return Err(Error::Unsupported("hermite_residual"));
    };
    let order = order.min(f.order());
    if order < 2 {
        return Err(invalid("order", "need at least order 2"));
    }
    let psi = CoeffSeries::new(f.coeffs.coeffs()[..=order].to_vec())?;
    let op = hermite_operator(&f.ctx, energy, order);
    let r = op.apply(&psi)?;
    Ok(op
        .interior_rows()
        .into_iter()
        .map(|n| r.coeff(n).abs())
        .fold(0.0, f64::max))
}

/// [`hermite_residual`] with each row divided by the largest of its three
/// terms (and at least 1), for coefficients that grow with the order.
pub fn hermite_residual_scaled(f: &QSeriesFunction, order: usize) -> Result<f64> {
    let QKind::Hermite { energy, .. } = f.kind else {
        return Err(Error::Unsupported("hermite_residual_scaled"));
    };
    let order = order.min(f.order());
    if order < 2 {
        return Err(invalid("order", "need at least order 2"));
    }
    let psi = CoeffSeries::new(f.coeffs.coeffs()[..=order].to_vec())?;
    let d = op_delta(&f.ctx, order);
    let dd = (&d * &d).apply(&psi)?;
    let bd = (&op_beta_x(&f.ctx, order) * &d).apply(&psi)?;
    let rows = hermite_operator(&f.ctx, energy, order).interior_rows();
    Ok(rows
        .into_iter()
        .map(|n| {
            let (a, b, c) = (dd.coeff(n), bd.coeff(n), energy * psi.coeff(n));
            (a + b - c).abs() / 1f64.max(a.abs()).max(b.abs()).max(c.abs())
        })
        .fold(0.0, f64::max))
}
