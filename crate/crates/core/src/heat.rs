//! The q-heat equation `(Δ_t - Δ_xx) u = 0` on bivariate truncated series:
//! its symmetry generators, polynomial and closed-form solutions, and the
//! checks that tie them together.
//!
//! Bivariate operators act on flat coefficient vectors indexed
//! `m (N + 1) + n` for `x^m t^n`. An operator `A` in `x` is lifted as
//! `A ⊗ I_t` and an operator in `t` as `I_x ⊗ A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::opspace::{op_beta_x, op_delta, op_mult_x, BiCoeffSeries, OperatorMatrix};
use crate::qcore::QContext;
use crate::qfun::{QKind, QSeriesFunction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatContext {
    ctx_x: QContext,
    ctx_t: QContext,
    order_x: usize,
    order_t: usize,
}

impl HeatContext {
    pub fn new(ctx_x: QContext, ctx_t: QContext, order_x: usize, order_t: usize) -> Result<Self> {
        if order_x < 2 {
            return Err(invalid(
                "order_x",
                format!("need at least 2, got {order_x}"),
            ));
        }
        if order_t < 1 {
            return Err(invalid("order_t", "need at least 1"));
        }
        Ok(HeatContext {
            ctx_x,
            ctx_t,
            order_x,
            order_t,
        })
    }

    /// Same dilation parameter and variant in both variables.
    pub fn uniform(ctx: QContext, order_x: usize, order_t: usize) -> Result<Self> {
        Self::new(ctx, ctx, order_x, order_t)
    }

    pub fn ctx_x(&self) -> &QContext {
        &self.ctx_x
    }

    pub fn ctx_t(&self) -> &QContext {
        &self.ctx_t
    }

    pub fn order_x(&self) -> usize {
        self.order_x
    }

    pub fn order_t(&self) -> usize {
        self.order_t
    }

    pub fn lift_x(&self, a: &OperatorMatrix) -> OperatorMatrix {
        a.kron(&OperatorMatrix::identity(self.order_t))
    }

    pub fn lift_t(&self, a: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::identity(self.order_x).kron(a)
    }

    pub fn identity(&self) -> OperatorMatrix {
        OperatorMatrix::identity(self.order_x).kron(&OperatorMatrix::identity(self.order_t))
    }

    pub fn delta_x(&self) -> OperatorMatrix {
        self.lift_x(&op_delta(&self.ctx_x, self.order_x))
    }

    pub fn delta_t(&self) -> OperatorMatrix {
        self.lift_t(&op_delta(&self.ctx_t, self.order_t))
    }

    /// `β_x x`, the umbral image of multiplication by `x`.
    pub fn beta_x(&self) -> OperatorMatrix {
        self.lift_x(&op_beta_x(&self.ctx_x, self.order_x))
    }

    /// `β_t t`, the umbral image of multiplication by `t`.
    pub fn beta_t(&self) -> OperatorMatrix {
        self.lift_t(&op_beta_x(&self.ctx_t, self.order_t))
    }

    /// `diag(m! n! / ([m]_x! [n]_t!))`.
    pub fn umbral_diag(&self) -> OperatorMatrix {
        OperatorMatrix::umbral_diag(&self.ctx_x, self.order_x)
            .kron(&OperatorMatrix::umbral_diag(&self.ctx_t, self.order_t))
    }
}

/// `L = Δ_t - Δ_x ∘ Δ_x`.
pub fn heat_operator(hc: &HeatContext) -> OperatorMatrix {
    let dx = hc.delta_x();
    &hc.delta_t() - &(&dx * &dx)
}

/// Classical `∂_t - ∂_x²` on the same truncated space.
pub fn continuous_heat_operator(order_x: usize, order_t: usize) -> OperatorMatrix {
    let it = OperatorMatrix::identity(order_t);
    let ix = OperatorMatrix::identity(order_x);
    let dx = OperatorMatrix::derivative(order_x).kron(&it);
    let dt = ix.kron(&OperatorMatrix::derivative(order_t));
    &dt - &(&dx * &dx)
}

fn umbral_factors(ctx: &QContext, order: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(order + 1);
    let mut acc = 1.0;
    u.push(acc);
    for n in 1..=order {
        acc *= n as f64 / ctx.bracket(n as u32);
        u.push(acc);
    }
    u
}

/// Umbral heat polynomials `v_0 ..= v_{k_max}`:
/// `v_k = sum_j k!/((k-2j)! j!) u_{k-2j} u'_j x^{k-2j} t^j`.
pub fn heat_polynomials(hc: &HeatContext, k_max: usize) -> Result<Vec<BiCoeffSeries>> {
    if k_max > hc.order_x || k_max > 2 * hc.order_t {
        return Err(invalid(
            "k_max",
            format!(
                "degree {k_max} does not fit orders M = {}, N = {}",
                hc.order_x, hc.order_t
            ),
        ));
    }
    let ux = umbral_factors(&hc.ctx_x, hc.order_x);
    let ut = umbral_factors(&hc.ctx_t, hc.order_t);
    (0..=k_max)
        .map(|k| {
            let mut v = BiCoeffSeries::zeros(hc.order_x, hc.order_t);
            // k!/((k-2j)! j!) built incrementally in j
            let mut weight = 1.0;
            for j in 0..=k / 2 {
                if j > 0 {
                    let m = (k - 2 * j) as f64;
                    weight *= (m + 2.0) * (m + 1.0) / j as f64;
                }
                v.set(k - 2 * j, j, weight * ux[k - 2 * j] * ut[j]);
            }
            Ok(v)
        })
        .collect()
}

/// `u = e_q^{λ t} e_q^{√λ x}`: `c_{mn} = λ^{m/2 + n} / ([m]_x! [n]_t!)`.
pub fn separation_solution(hc: &HeatContext, lambda: f64) -> Result<BiCoeffSeries> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let ex = QSeriesFunction::build(
        QKind::Exp {
            lambda: lambda.sqrt(),
        },
        hc.ctx_x,
        hc.order_x,
    )?;
    let et = QSeriesFunction::build(QKind::Exp { lambda }, hc.ctx_t, hc.order_t)?;
    BiCoeffSeries::from_fn(hc.order_x, hc.order_t, |m, n| {
        ex.coeffs().coeff(m) * et.coeffs().coeff(n)
    })
}

/// Umbral image of `u0 (t + t0)^{-1/2} exp(-x² / (4 (t + t0)))`:
/// `c_{2m, n} = u0 (-1/4)^m (2m)!/(m! [2m]_x!) h_{-m-1/2, n}` where
/// `h_a` holds the coefficients of the shifted power `(t + t0)^a` in `t`.
pub fn boost_solution(hc: &HeatContext, t0: f64, u0: f64) -> Result<BiCoeffSeries> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(invalid("t0", format!("must be positive, got {t0}")));
    }
    if !u0.is_finite() {
        return Err(invalid("u0", format!("must be finite, got {u0}")));
    }
    let gauss = QSeriesFunction::build(QKind::Gauss { lambda: 0.25 }, hc.ctx_x, hc.order_x)?;
    let mut u = BiCoeffSeries::zeros(hc.order_x, hc.order_t);
    for m in 0..=hc.order_x / 2 {
        let a = -(m as f64) - 0.5;
        let h = QSeriesFunction::build(QKind::ShiftedPower { a, x0: t0 }, hc.ctx_t, hc.order_t)?;
        let g = u0 * gauss.coeffs().coeff(2 * m);
        for n in 0..=hc.order_t {
            u.set(2 * m, n, g * h.coeffs().coeff(n));
        }
    }
    BiCoeffSeries::from_fn(hc.order_x, hc.order_t, |m, n| u.get(m, n))
}

/// Largest coefficient of `Δ_t u - Δ_xx u` over the exact rows, scaled by
/// `max(1, |Δ_t u|_max, |Δ_xx u|_max)`.
pub fn pde_residual(hc: &HeatContext, u: &BiCoeffSeries) -> Result<f64> {
    let dt = hc.delta_t();
    let dx = hc.delta_x();
    let dxx = &dx * &dx;
    let l = &dt - &dxx;
    let a = dt.apply_bi(u)?;
    let b = dxx.apply_bi(u)?;
    let rows = l.interior_rows();
    if rows.is_empty() {
        return Err(Error::DegenerateInterior(
            "heat operator has no exact rows".into(),
        ));
    }
    let (mut worst, mut scale) = (0.0f64, 1.0f64);
    for &r in &rows {
        let (p, s) = (a.flat()[r], b.flat()[r]);
        worst = worst.max((p - s).abs());
        scale = scale.max(p.abs()).max(s.abs());
    }
    Ok(worst / scale)
}

/// Largest pointwise value of `(Δ_t - Δ_xx) u` (exact rows only) over the
/// sample points, each divided by the absolute-value sum of the two terms.
pub fn pointwise_residual(
    hc: &HeatContext,
    u: &BiCoeffSeries,
    xs: &[f64],
    ts: &[f64],
) -> Result<f64> {
    let dt = hc.delta_t();
    let dx = hc.delta_x();
    let dxx = &dx * &dx;
    let l = &dt - &dxx;
    let keep = |s: BiCoeffSeries| {
        let mut out = BiCoeffSeries::zeros(hc.order_x, hc.order_t);
        for r in l.interior_rows() {
            let idx = l.unflatten(r);
            out.set(idx[0], idx[1], s.get(idx[0], idx[1]));
        }
        out
    };
    let a = keep(dt.apply_bi(u)?);
    let b = keep(dxx.apply_bi(u)?);
    let mut worst: f64 = 0.0;
    for &x in xs {
        for &t in ts {
            let scale = a.eval_abs(x, t) + b.eval_abs(x, t);
            if scale > 0.0 {
                worst = worst.max((a.eval(x, t) - b.eval(x, t)).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// The six symmetry generators, in the order `[P0, P1, W, B, D, K]`.
#[derive(Clone, Debug)]
pub struct HeatGeneratorSet {
    pub p0: OperatorMatrix,
    pub p1: OperatorMatrix,
    pub w: OperatorMatrix,
    /// Galilean boost `2 (β_t t) Δ_x + β_x x`.
    pub b: OperatorMatrix,
    pub d: OperatorMatrix,
    pub k: OperatorMatrix,
}

pub const GENERATOR_NAMES: [&str; 6] = ["P0", "P1", "W", "B", "D", "K"];

impl HeatGeneratorSet {
    /// Builds the set from the lifted derivatives and multipliers.
    fn assemble(
        dx: &OperatorMatrix,
        dt: &OperatorMatrix,
        x: &OperatorMatrix,
        t: &OperatorMatrix,
    ) -> HeatGeneratorSet {
        let id = dx.identity_like();
        let t_dt = t * dt;
        let x_dx = x * dx;
        let b = &(2.0 * &(t * dx)) + x;
        let d = &(&(2.0 * &t_dt) + &x_dx) + &(0.5 * &id);
        let k = &(&(&(t * &t_dt) + &(t * &x_dx)) + &(0.25 * &(x * x))) + &(0.5 * t);
        HeatGeneratorSet {
            p0: dt.clone(),
            p1: dx.clone(),
            w: id,
            b,
            d,
            k,
        }
    }

    /// Generators of the classical heat equation on the same truncated
    /// space (`∂` and multiplication by the variable).
    pub fn classical(order_x: usize, order_t: usize) -> HeatGeneratorSet {
        let ix = OperatorMatrix::identity(order_x);
        let it = OperatorMatrix::identity(order_t);
        Self::assemble(
            &OperatorMatrix::derivative(order_x).kron(&it),
            &ix.kron(&OperatorMatrix::derivative(order_t)),
            &op_mult_x(order_x).kron(&it),
            &ix.kron(&op_mult_x(order_t)),
        )
    }

    pub fn all(&self) -> [&OperatorMatrix; 6] {
        [&self.p0, &self.p1, &self.w, &self.b, &self.d, &self.k]
    }
}

pub fn generators(hc: &HeatContext) -> HeatGeneratorSet {
    HeatGeneratorSet::assemble(&hc.delta_x(), &hc.delta_t(), &hc.beta_x(), &hc.beta_t())
}

/// Coefficients of the general first-order symmetry
/// `τ Δ_t + ξ Δ_x + f` with
/// `τ = τ2 T² + τ1 T + τ0`,
/// `ξ = ½ (τ1 + 2 τ2 T) X + ξ1 T + ξ0`,
/// `f = ¼ τ2 X² + ½ τ2 T + ½ ξ1 X + γ`,
/// where `T = β_t t`, `X = β_x x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymmetryParams {
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub xi0: f64,
    pub xi1: f64,
    pub gamma: f64,
}

pub fn determining_solution(hc: &HeatContext, p: SymmetryParams) -> OperatorMatrix {
    let id = hc.identity();
    let (t, x) = (hc.beta_t(), hc.beta_x());
    let (dt, dx) = (hc.delta_t(), hc.delta_x());
    let tt = &t * &t;
    let tau = &(&(p.tau2 * &tt) + &(p.tau1 * &t)) + &(p.tau0 * &id);
    let xi = &(&(&(0.5 * p.tau1 * &x) + &(p.tau2 * &(&t * &x))) + &(p.xi1 * &t)) + &(p.xi0 * &id);
    let f = &(&(&(0.25 * p.tau2 * &(&x * &x)) + &(0.5 * p.tau2 * &t)) + &(0.5 * p.xi1 * &x))
        + &(p.gamma * &id);
    &(&(&tau * &dt) + &(&xi * &dx)) + &f
}

/// Largest scaled `‖L (G v)‖` over `basis`; zero when `G` carries the
/// solutions into solutions.
pub fn verify_symmetry(
    hc: &HeatContext,
    g: &OperatorMatrix,
    basis: &[BiCoeffSeries],
) -> Result<f64> {
    let l = heat_operator(hc);
    let lg = l.compose(g)?;
    let mut worst: f64 = 0.0;
    for v in basis {
        let outside = v
            .flat()
            .iter()
            .enumerate()
            .any(|(i, &c)| c != 0.0 && !lg.is_interior_col(i));
        if outside {
            return Err(invalid(
                "basis",
                "a basis element reaches past the generator's exact columns",
            ));
        }
        let gv = g.apply_bi(v)?;
        let r = l.apply_bi(&gv)?;
        let scale = 1f64.max(v.max_abs()).max(gv.max_abs());
        worst = worst.max(r.max_abs() / scale);
    }
    Ok(worst)
}

/// Least-squares fit of every commutator `[G_i, G_j]` in the span of the
/// generators.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosureReport {
    /// Largest `‖A c - b‖_∞ / max(‖b‖_∞, 1)` over the 15 pairs, with each
    /// equation divided by `max(1, |(G_i G_j)_e|, |(G_j G_i)_e|)`.
    pub residual: f64,
    /// `constants[i][j][k]`: coefficient of `G_k` in `[G_i, G_j]`.
    pub constants: [[[f64; 6]; 6]; 6],
}

impl ClosureReport {
    /// Largest difference between two tables of structure constants.
    pub fn max_difference(&self, other: &ClosureReport) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    worst = worst.max((self.constants[i][j][k] - other.constants[i][j][k]).abs());
                }
            }
        }
        worst
    }
}

pub fn closure_check(hc: &HeatContext) -> Result<ClosureReport> {
    if hc.order_x < 6 || hc.order_t < 3 {
        return Err(Error::DegenerateInterior(format!(
            "orders M = {}, N = {} leave no exact columns for double commutators",
            hc.order_x, hc.order_t
        )));
    }
    closure_of(&generators(hc))
}

/// Structure constants of an arbitrary six-element generator set.
pub fn closure_of(set: &HeatGeneratorSet) -> Result<ClosureReport> {
    let gens = set.all();
    let dim = gens[0].dim();
    let mut constants = [[[0.0; 6]; 6]; 6];
    let mut residual: f64 = 0.0;
    for i in 0..6 {
        for j in i + 1..6 {
            let (ij, ji) = (gens[i] * gens[j], gens[j] * gens[i]);
            let c = &ij - &ji;
            let cols: Vec<usize> = (0..dim)
                .filter(|&col| {
                    c.is_interior_col(col) && gens.iter().all(|g| g.is_interior_col(col))
                })
                .collect();
            if cols.is_empty() {
                return Err(Error::DegenerateInterior(format!(
                    "[{}, {}] has no exact columns",
                    GENERATOR_NAMES[i], GENERATOR_NAMES[j]
                )));
            }
            // each equation is weighted by the size of the products whose
            // difference forms it, so cancellation noise is measured relatively
            let mut rows_a: Vec<[f64; 6]> = Vec::new();
            let mut rhs = Vec::new();
            for &col in &cols {
                for row in 0..dim {
                    let a: [f64; 6] = std::array::from_fn(|k| gens[k].entry(row, col));
                    let b = c.entry(row, col);
                    if b != 0.0 || a.iter().any(|&v| v != 0.0) {
                        let w = 1f64
                            .max(ij.entry(row, col).abs())
                            .max(ji.entry(row, col).abs());
                        rows_a.push(a.map(|v| v / w));
                        rhs.push(b / w);
                    }
                }
            }
            let (coef, res) = least_squares(&rows_a, &rhs)?;
            residual = residual.max(res);
            for k in 0..6 {
                constants[i][j][k] = coef[k];
                constants[j][i][k] = -coef[k];
            }
        }
    }
    Ok(ClosureReport {
        residual,
        constants,
    })
}

fn least_squares(rows: &[[f64; 6]], rhs: &[f64]) -> Result<([f64; 6], f64)> {
    let a = DMatrix::from_fn(rows.len(), 6, |r, k| rows[r][k]);
    let b = DVector::from_column_slice(rhs);
    let norms: Vec<f64> = (0..6)
        .map(|k| {
            let n = a.column(k).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(rows.len(), 6, |r, k| a[(r, k)] / norms[k]);
    let svd = scaled.svd(true, true);
    let y = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::DegenerateInterior(format!("least squares failed: {e}")))?;
    let coef: [f64; 6] = std::array::from_fn(|k| y[k] / norms[k]);
    let fitted = &a * DVector::from_column_slice(&coef);
    let misfit = (fitted - &b).amax();
    Ok((coef, misfit / b.amax().max(1.0)))
}
