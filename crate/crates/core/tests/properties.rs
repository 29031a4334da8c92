use ergodic::closedform::{CatalogId, CatalogModel};
use ergodic::expr::{kink_points, parse, BinOp, Expr, Func};
use ergodic::quad::integrate;
use ergodic::Problem;
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-100.0..100.0f64).prop_map(Expr::Num),
        (0u32..20).prop_map(|n| Expr::Num(n as f64 * 0.25)),
        Just(Expr::Var),
        Just(Expr::Const(ergodic::expr::Constant::Pi)),
        Just(Expr::Const(ergodic::expr::Constant::E)),
    ]
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let unary = prop_oneof![
            Just(Func::Exp),
            Just(Func::Log),
            Just(Func::Sqrt),
            Just(Func::Abs),
            Just(Func::Sgn)
        ];
        let binary = prop_oneof![Just(Func::Max), Just(Func::Min)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Bin(
                o,
                Box::new(l),
                Box::new(r)
            )),
            (unary, inner.clone()).prop_map(|(f, e)| Expr::Call(f, vec![e])),
            (binary, inner.clone(), inner).prop_map(|(f, l, r)| Expr::Call(f, vec![l, r])),
        ]
    })
}

fn agree(x: f64, y: f64) -> bool {
    x == y || (x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-15 * x.abs().max(y.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(tree in expr_tree(), xs in prop::collection::vec(-5.0..5.0f64, 10)) {
        let source = tree.to_string();
        let first = parse(&source).unwrap();
        let second = parse(&first.to_string()).unwrap();
        for x in xs {
            match (first.eval(x), second.eval(x)) {
                (Ok(u), Ok(v)) => prop_assert!(agree(u, v), "{source} at {x}: {u} vs {v}"),
                (Err(_), Err(_)) => {}
                (u, v) => prop_assert!(false, "{source} at {x}: {u:?} vs {v:?}"),
            }
        }
    }
}

proptest! {
    #[test]
    fn multiplication_binds_tighter(a in -50.0..50.0f64, b in -50.0..50.0f64, c in -50.0..50.0f64) {
        let lit = |v: f64| format!("({v:?})");
        let (a, b, c) = (lit(a), lit(b), lit(c));
        let pairs = [
            (format!("{a}+{b}*{c}"), format!("{a}+({b}*{c})")),
            (format!("{a}-{b}/{c}"), format!("{a}-({b}/{c})")),
            (format!("{a}*{b}+{c}"), format!("({a}*{b})+{c}")),
            (format!("{a}-{b}-{c}"), format!("({a}-{b})-{c}")),
            (format!("abs({a})^0.5^2"), format!("abs({a})^(0.5^2)")),
        ];
        for (implicit, explicit) in pairs {
            let u = parse(&implicit).unwrap().eval(0.0).unwrap();
            let v = parse(&explicit).unwrap().eval(0.0).unwrap();
            prop_assert!(agree(u, v), "{implicit} = {u}, {explicit} = {v}");
        }
    }

    #[test]
    fn smooth_expressions_have_no_kinks(p in -3.0..3.0f64, q in 0.1..2.0f64) {
        let source = format!("exp({p:?}*x) + ({q:?})*x^2 - sqrt(1 + x^2)");
        prop_assert!(kink_points(&parse(&source).unwrap(), -4.0, 4.0).is_empty());
    }

    #[test]
    fn every_kink_is_a_slope_break(
        t in prop::collection::vec(-3.0..3.0f64, 1..4),
        w in prop::collection::vec(0.1..2.0f64, 3),
    ) {
        let terms: Vec<String> = t.iter().zip(&w).map(|(t, w)| format!("{w:?}*abs(x - ({t:?}))")).collect();
        let e = parse(&terms.join(" + ")).unwrap();
        let kinks = kink_points(&e, -4.0, 4.0);
        let mut want = t.clone();
        want.sort_by(f64::total_cmp);
        want.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        prop_assert_eq!(kinks.len(), want.len());
        for k in kinks {
            let h = 1e-7;
            let f = |x: f64| e.eval(x).unwrap();
            let left = (f(k) - f(k - h)) / h;
            let right = (f(k + h) - f(k)) / h;
            prop_assert!((right - left).abs() > 1e-6 * left.abs().max(right.abs()), "no break at {k}");
        }
    }

    #[test]
    fn quadrature_is_additive(a in -3.0..0.0f64, w1 in 0.01..2.0f64, w2 in 0.01..2.0f64) {
        let (b, c) = (a + w1, a + w1 + w2);
        let tol = 1e-10;
        let fs: [&dyn Fn(f64) -> f64; 3] = [&|x| (-x * x).exp(), &|x| x.abs() * (1.0 + x).cos(), &|x| 1.0 / (1.0 + x * x)];
        for f in fs {
            let whole = integrate(f, a, c, tol, &[0.0]).unwrap().value;
            let left = integrate(f, a, b, tol, &[0.0]).unwrap().value;
            let right = integrate(f, b, c, tol, &[0.0]).unwrap().value;
            prop_assert!((whole - left - right).abs() <= 2.0 * tol, "{whole} vs {}", left + right);
        }
    }
}

fn catalog() -> Vec<Problem> {
    CatalogId::ALL
        .iter()
        .map(|&id| CatalogModel::with_defaults(id).problem().unwrap())
        .collect()
}

fn rel(x: f64, y: f64, scale: f64) -> f64 {
    (x - y).abs() / scale.max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn canonical_identity(a in -3.0..0.5f64, w in 0.1..3.0f64) {
        let b = a + w;
        for p in catalog() {
            let lhs = p.speed_integral(|t| p.mu(t), a, b).unwrap();
            let (sa, sb) = (p.inv_scale_density(a).unwrap(), p.inv_scale_density(b).unwrap());
            prop_assert!(rel(lhs, sb - sa, sa.abs() + sb.abs()) < 1e-8, "{lhs} vs {}", sb - sa);
        }
    }

    #[test]
    fn anchor_invariance(a in -3.0..0.5f64, w in 0.1..3.0f64, x0 in -2.0..2.0f64, x1 in -2.0..2.0f64) {
        let b = a + w;
        for base in catalog() {
            let (p, r) = (base.clone().with_anchor(x0).unwrap(), base.with_anchor(x1).unwrap());
            let products = |p: &Problem| {
                let m = p.speed_measure(a, b).unwrap();
                let cm = p.speed_integral(|t| p.c(t), a, b).unwrap();
                let qa = p.cost().q_u * p.inv_scale_density(a).unwrap() / m;
                let qb = p.cost().q_d * p.inv_scale_density(b).unwrap() / m;
                (m, cm, qa, qb, ergodic::solver::average_cost(p, a, b).unwrap())
            };
            let (u, v) = (products(&p), products(&r));
            // m and the cost integral rescale by S'(x0)/S'(x1); the ratios do not
            let k = r.scale_density(x0).unwrap();
            prop_assert!(rel(u.0, v.0 * k, u.0) < 1e-8);
            prop_assert!(rel(u.1, v.1 * k, u.1.abs()) < 1e-8);
            prop_assert!(rel(u.2, v.2, u.2.abs()) < 1e-8);
            prop_assert!(rel(u.3, v.3, u.3.abs()) < 1e-8);
            prop_assert!(rel(u.4, v.4, u.4.abs()) < 1e-8);
        }
    }

    #[test]
    fn stationary_density_normalizes(a in -3.0..0.5f64, w in 0.1..3.0f64) {
        let b = a + w;
        for p in catalog() {
            let f = |x: f64| p.stationary_density(a, b, x).unwrap();
            let total = integrate(f, a, b, 1e-12, p.kinks()).unwrap().value;
            prop_assert!((total - 1.0).abs() < 1e-8, "{total}");
        }
    }

    #[test]
    fn shifted_costs_differ_by_drift(x in -10.0..10.0f64) {
        for p in catalog() {
            let d = p.pi1(x) - p.pi2(x);
            let want = p.q_sum() * p.mu(x);
            prop_assert!((d - want).abs() <= 1e-14 * (p.pi1(x).abs() + p.pi2(x).abs()).max(want.abs()));
        }
    }

    #[test]
    fn first_order_conditions_differ_by_match(a in -3.0..0.5f64, w in 0.1..3.0f64) {
        let b = a + w;
        for p in catalog() {
            let i1 = ergodic::solver::foc_i1(&p, a, b).unwrap();
            let i2 = ergodic::solver::foc_i2(&p, a, b).unwrap();
            let want = (p.pi2(a) - p.pi1(b)) * p.speed_measure(a, b).unwrap();
            prop_assert!(rel(i1 - i2, want, i1.abs() + i2.abs() + want.abs()) < 1e-8);
        }
    }
}

#[test]
fn tighter_tolerance_never_hurts() {
    // speed-measure integrals of the catalog costs against a 1e-14 reference
    for p in catalog() {
        let (a, b) = (-1.7, 1.3);
        let f = |t: f64| p.c(t) * p.speed_density(t).unwrap();
        let reference = integrate(f, a, b, 1e-14, p.kinks()).unwrap().value;
        let mut last = f64::INFINITY;
        for k in 3..=12 {
            let err =
                (integrate(f, a, b, 10f64.powi(-k), p.kinks()).unwrap().value - reference).abs();
            assert!(
                err <= last.max(1e-15),
                "tol 1e-{k}: error {err} after {last}"
            );
            last = err;
        }
    }
}
