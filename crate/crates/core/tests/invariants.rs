use proptest::prelude::*;

use qumbra::heat::{self, HeatContext};
use qumbra::opspace::{commutator, op_beta_x, op_delta, op_shift};
use qumbra::qfun::{QKind, QSeriesFunction};
use qumbra::{OperatorMatrix, QContext, Variant};

fn any_q() -> impl Strategy<Value = f64> {
    prop_oneof![0.3f64..0.95, 1.05f64..3.0]
}

fn any_variant() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Right),
        Just(Variant::Left),
        Just(Variant::Symmetric)
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn brackets_under_inversion(q in any_q(), n in 1u32..40) {
        let right_inv = QContext::new(1.0 / q, Variant::Right).unwrap();
        let left = QContext::new(q, Variant::Left).unwrap();
        prop_assert!(close(right_inv.bracket(n), left.bracket(n), 1e-12));
        let s = QContext::new(q, Variant::Symmetric).unwrap();
        let s_inv = QContext::new(1.0 / q, Variant::Symmetric).unwrap();
        prop_assert!(close(s.bracket(n), s_inv.bracket(n), 1e-12));
    }

    #[test]
    fn right_bracket_recurrence(q in any_q(), n in 1u32..60) {
        let c = QContext::new(q, Variant::Right).unwrap();
        prop_assert!(close(c.bracket(n + 1), 1.0 + q * c.bracket(n), 1e-13));
    }

    #[test]
    fn delta_beta_commutator_is_identity(q in any_q(), v in any_variant(), n in 8usize..48) {
        let c = QContext::new(q, v).unwrap();
        let dev = commutator(&op_delta(&c, n), &op_beta_x(&c, n))
            .unwrap()
            .interior_deviation(&OperatorMatrix::identity(n))
            .unwrap();
        prop_assert!(dev <= 1e-13, "deviation {dev}");
    }

    #[test]
    fn shifts_are_inverse(q in any_q(), n in 4usize..40) {
        let c = QContext::new(q, Variant::Right).unwrap();
        let tt = &op_shift(&c, n, false) * &op_shift(&c, n, true);
        prop_assert!(tt.interior_deviation(&OperatorMatrix::identity(n)).unwrap() <= 1e-13);
    }

    #[test]
    fn qexp_is_delta_eigenfunction(q in any_q(), v in any_variant(), lambda in -2.0f64..2.0) {
        let n = 48;
        let c = QContext::new(q, v).unwrap();
        let f = QSeriesFunction::build(QKind::Exp { lambda }, c, n).unwrap();
        let d = op_delta(&c, n);
        let lhs = d.apply(f.coeffs()).unwrap();
        for r in d.interior_rows() {
            prop_assert!(close(lhs.coeff(r), lambda * f.coeffs().coeff(r), 1e-12), "row {r}");
        }
    }

    #[test]
    fn heat_polynomials_are_annihilated(q in any_q(), v in any_variant()) {
        let hc = HeatContext::uniform(QContext::new(q, v).unwrap(), 10, 5).unwrap();
        let l = heat::heat_operator(&hc);
        for p in heat::heat_polynomials(&hc, 10).unwrap() {
            let r = l.apply_bi(&p).unwrap().max_abs() / p.max_abs().max(1.0);
            prop_assert!(r <= 1e-12, "residual {r}");
        }
    }

    #[test]
    fn separation_residual_small(q in any_q(), lambda in 0.2f64..2.0) {
        let hc = HeatContext::uniform(QContext::new(q, Variant::Right).unwrap(), 16, 16).unwrap();
        let u = heat::separation_solution(&hc, lambda).unwrap();
        prop_assert!(heat::pde_residual(&hc, &u).unwrap() <= 1e-10);
    }
}
