//! Geometric lattices `x_n = x0 q^n` and the recurrence marchers that define
//! the q-exponentials pointwise, independently of their power series.

use twofloat::TwoFloat;

use crate::error::{invalid, Error, Result};
use crate::qcore::{dd_div, QContext};
use crate::qfun::{Evaluation, QSeriesFunction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricLattice {
    x0: f64,
    ctx: QContext,
    n_min: i32,
    n_max: i32,
}

impl GeometricLattice {
    pub fn new(x0: f64, ctx: QContext, n_min: i32, n_max: i32) -> Result<Self> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(invalid(
                "x0",
                format!("base point must be positive, got {x0}"),
            ));
        }
        if n_min > n_max {
            return Err(invalid(
                "n_min",
                format!("empty index range {n_min}..={n_max}"),
            ));
        }
        Ok(GeometricLattice {
            x0,
            ctx,
            n_min,
            n_max,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn ctx(&self) -> &QContext {
        &self.ctx
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i32> {
        self.n_min..=self.n_max
    }

    pub fn point(&self, n: i32) -> f64 {
        self.x0 * self.ctx.q().powi(n)
    }

    pub fn points(&self) -> Vec<f64> {
        self.indices().map(|n| self.point(n)).collect()
    }

    fn slot(&self, n: i32) -> usize {
        (n - self.n_min) as usize
    }
}

/// Marched values over a lattice; `None` where the recurrence is undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSolution {
    lattice: GeometricLattice,
    values: Vec<Option<f64>>,
}

impl LatticeSolution {
    pub fn lattice(&self) -> &GeometricLattice {
        &self.lattice
    }

    pub fn value(&self, n: i32) -> Option<f64> {
        if n < self.lattice.n_min || n > self.lattice.n_max {
            return None;
        }
        self.values[self.lattice.slot(n)]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// `(n, x_n, value)` in increasing `n`.
    pub fn iter(&self) -> impl Iterator<Item = (i32, f64, Option<f64>)> + '_ {
        self.lattice
            .indices()
            .zip(&self.values)
            .map(|(n, v)| (n, self.lattice.point(n), *v))
    }
}

fn finite_seed(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("seed must be finite, got {v}")))
    }
}

/// `E(qx) = [1 + (q-1) λ x] E(x)` marched both ways from `E(x0) = seed`.
///
/// A vanishing factor on the backward side leaves that point and everything
/// below it undefined.
pub fn march_right_exp(lat: &GeometricLattice, lambda: f64, seed: f64) -> Result<LatticeSolution> {
    finite_seed("seed", seed)?;
    if lat.n_min > 0 || lat.n_max < 0 {
        return Err(invalid(
            "lattice",
            "index range must contain the seed index 0",
        ));
    }
    let qm1 = lat.ctx.q() - 1.0;
    let factor = |n: i32| TwoFloat::from(1.0) + TwoFloat::new_mul(qm1 * lambda, lat.point(n));
    let mut values = vec![None; lat.len()];
    values[lat.slot(0)] = Some(seed);

    let mut e = TwoFloat::from(seed);
    for n in 0..lat.n_max {
        e *= factor(n);
        values[lat.slot(n + 1)] = Some(f64::from(e));
    }
    let mut e = TwoFloat::from(seed);
    for n in (lat.n_min..0).rev() {
        let f = factor(n);
        if f.hi() == 0.0 {
            break;
        }
        e = dd_div(e, f);
        values[lat.slot(n)] = Some(f64::from(e));
    }
    Ok(LatticeSolution {
        lattice: *lat,
        values,
    })
}

/// `E(qx) = (q - 1/q) λ x E(x) + E(x/q)` marched both ways from the seeds at
/// `x0` and `x0/q`.
///
/// Both directions are explicit. The relation amplifies the second solution
/// when marching toward `x -> 0`, so long runs should head outward.
pub fn march_symmetric_exp(
    lat: &GeometricLattice,
    lambda: f64,
    seed_x0: f64,
    seed_x0_over_q: f64,
) -> Result<LatticeSolution> {
    finite_seed("seed_x0", seed_x0)?;
    finite_seed("seed_x0_over_q", seed_x0_over_q)?;
    if lat.n_min > -1 || lat.n_max < 0 {
        return Err(invalid(
            "lattice",
            "index range must contain the seed indices -1 and 0",
        ));
    }
    let c = lat.ctx.qsym() * lambda;
    let coupling = |n: i32| TwoFloat::new_mul(c, lat.point(n));
    let mut values = vec![None; lat.len()];
    values[lat.slot(0)] = Some(seed_x0);
    values[lat.slot(-1)] = Some(seed_x0_over_q);

    let (mut prev, mut cur) = (TwoFloat::from(seed_x0_over_q), TwoFloat::from(seed_x0));
    for n in 0..lat.n_max {
        let next = coupling(n) * cur + prev;
        values[lat.slot(n + 1)] = Some(f64::from(next));
        (prev, cur) = (cur, next);
    }
    // walking down: (upper, here) = (E_{n+1}, E_n) gives E_{n-1}
    let (mut upper, mut here) = (TwoFloat::from(seed_x0), TwoFloat::from(seed_x0_over_q));
    for n in ((lat.n_min + 1)..=-1).rev() {
        let below = upper - coupling(n) * here;
        values[lat.slot(n - 1)] = Some(f64::from(below));
        (upper, here) = (here, below);
    }
    Ok(LatticeSolution {
        lattice: *lat,
        values,
    })
}

/// A defining relation to test a function against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatticeEquation {
    /// `f(qx) = [1 + (q-1) λ x] f(x)`
    RightExp(f64),
    /// `f(qx) = (q - 1/q) λ x f(x) + f(x/q)`
    SymExp(f64),
}

/// Something that can be evaluated pointwise, with an optional domain bound.
pub trait Evaluable {
    fn value_at(&self, x: f64) -> Result<f64>;

    /// `|x|` must stay below this; `None` means no analytic bound is known.
    fn radius(&self) -> Option<f64> {
        None
    }
}

impl Evaluable for QSeriesFunction {
    fn value_at(&self, x: f64) -> Result<f64> {
        match self.evaluate(x) {
            Evaluation {
                value,
                converged: true,
                ..
            } => Ok(value),
            _ => Err(Error::NotConverged(x)),
        }
    }

    fn radius(&self) -> Option<f64> {
        QSeriesFunction::radius(self)
    }
}

/// Adapts a closure to [`Evaluable`].
pub struct Pointwise<F>(pub F);

impl<F: Fn(f64) -> f64> Evaluable for Pointwise<F> {
    fn value_at(&self, x: f64) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// Largest residual of `equation` over the lattice, each one divided by the
/// largest magnitude among the terms of the relation at that point.
pub fn residual_on_lattice<E: Evaluable + ?Sized>(
    f: &E,
    lat: &GeometricLattice,
    equation: LatticeEquation,
) -> Result<f64> {
    let q = lat.ctx.q();
    let radius = f.radius().unwrap_or(f64::INFINITY);
    let mut worst: f64 = 0.0;
    for n in lat.indices() {
        let x = lat.point(n);
        for probe in [x, q * x, x / q] {
            if probe.abs() >= radius {
                return Err(Error::OutsideRadius { x: probe, radius });
            }
        }
        let (r, scale) = match equation {
            LatticeEquation::RightExp(lambda) => {
                let lhs = f.value_at(q * x)?;
                let rhs = (1.0 + (q - 1.0) * lambda * x) * f.value_at(x)?;
                (lhs - rhs, lhs.abs().max(rhs.abs()))
            }
            LatticeEquation::SymExp(lambda) => {
                let lhs = f.value_at(q * x)?;
                let a = lat.ctx.qsym() * lambda * x * f.value_at(x)?;
                let b = f.value_at(x / q)?;
                (lhs - a - b, lhs.abs().max(a.abs()).max(b.abs()))
            }
        };
        if scale > 0.0 {
            worst = worst.max(r.abs() / scale);
        }
    }
    Ok(worst)
}

const SEED_SCALE: f64 = 1e-8;

/// Value at `x` of the exponential solving `equation`, normalized by
/// `E(0) = 1`, obtained by marching the relation outward from a lattice point
/// close enough to the origin that a few series terms fix the seeds exactly.
///
/// Returns `None` when the right relation's backward step divides by zero
/// (for `q < 1` past the first zero of the factor).
pub fn recurrence_value(ctx: &QContext, equation: LatticeEquation, x: f64) -> Option<f64> {
    let lambda = match equation {
        LatticeEquation::RightExp(l) | LatticeEquation::SymExp(l) => l,
    };
    if x == 0.0 || lambda == 0.0 {
        return Some(1.0);
    }
    let q = TwoFloat::from(ctx.q());
    let expanding = ctx.q() > 1.0;
    // z_0 = x, z_{k+1} = z_k / max(q, 1/q): points shrinking toward 0
    let shrink = |z: TwoFloat| if expanding { dd_div(z, q) } else { z * q };
    let mut points = vec![TwoFloat::from(x)];
    while (points.last().unwrap().hi() * lambda).abs() > SEED_SCALE {
        let next = shrink(*points.last().unwrap());
        points.push(next);
    }
    let seed_series = |z: TwoFloat| {
        let mut term = TwoFloat::from(1.0);
        let mut sum = term;
        for b in ctx.precise_brackets().take(5) {
            term = dd_div(term * z * lambda, b);
            sum += term;
        }
        sum
    };
    let k_max = points.len() - 1;
    let qm1 = ctx.q() - 1.0;
    match equation {
        LatticeEquation::RightExp(_) => {
            let mut e = seed_series(points[k_max]);
            for k in (0..k_max).rev() {
                // step from z_{k+1} to z_k
                if expanding {
                    e *= TwoFloat::from(1.0) + points[k + 1] * (qm1 * lambda);
                } else {
                    let f = TwoFloat::from(1.0) + points[k] * (qm1 * lambda);
                    if f.hi() == 0.0 {
                        return None;
                    }
                    e = dd_div(e, f);
                }
            }
            Some(f64::from(e))
        }
        LatticeEquation::SymExp(_) => {
            let p = if expanding { ctx.q() } else { 1.0 / ctx.q() };
            let c = (p - 1.0 / p) * lambda;
            let below = shrink(points[k_max]);
            let (mut far, mut near) = (seed_series(below), seed_series(points[k_max]));
            for k in (0..k_max).rev() {
                let next = points[k + 1] * c * near + far;
                (far, near) = (near, next);
            }
            Some(f64::from(near))
        }
    }
}
