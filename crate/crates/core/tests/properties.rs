use proptest::prelude::*;
use proptest::test_runner::Config;

use iterint::chen::{iterated_path_integral, transport_series, TensorSeries};
use iterint::expr::{coordinate_names, Func};
use iterint::forms::{CoefficientTable, DifferentialForm};
use iterint::geometry::{subsets, Membrane};
use iterint::shuffles::{
    count_product, count_sh1, enumerate_blocks, enumerate_product, enumerate_sh1, is_block_shuffle, multinomial,
    shuffle_words,
};
use iterint::{parse, Expr, QuadratureConfig};

fn var_count() -> usize {
    3
}

/// Polynomial and trigonometric expressions in `x1..x3` that stay finite
/// and smooth on `[-1, 1]^3`.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        (0..var_count()).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::div(a, Expr::add(Expr::Const(1.5), Expr::pow(b, 2)))),
            (inner.clone(), 0..4i32).prop_map(|(a, n)| Expr::pow(a, n)),
            inner.clone().prop_map(Expr::neg),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.prop_map(|a| Expr::call(Func::Exp, Expr::call(Func::Sin, a))),
        ]
    })
}

fn polynomial(vars: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2i32..=2).prop_map(|c| Expr::Const(f64::from(c))),
        (0..vars).prop_map(Expr::var),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner, 1..3i32).prop_map(|(a, n)| Expr::pow(a, n)),
        ]
    })
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
}

/// A random polynomial form of the given degree on `R^dim`.
fn form(dim: usize, degree: usize) -> impl Strategy<Value = DifferentialForm> {
    let indices = subsets(dim, degree);
    prop::collection::vec(polynomial(dim), indices.len()).prop_map(move |coeffs| {
        DifferentialForm::from_terms(dim, degree, indices.clone().into_iter().zip(coeffs)).unwrap()
    })
}

fn any_form(dim: usize) -> impl Strategy<Value = DifferentialForm> {
    (0..=dim).prop_flat_map(move |p| form(dim, p))
}

fn table_diff(a: &CoefficientTable, b: &CoefficientTable) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

fn table_scale(a: &CoefficientTable) -> f64 {
    a.values().map(|v| v.abs()).fold(0.0, f64::max)
}

fn cubic_path() -> impl Strategy<Value = Membrane> {
    prop::collection::vec(-1.0..1.0f64, 9).prop_map(|c| {
        let comps: Vec<String> = (0..3)
            .map(|i| format!("{}*t + {}*t^2 + {}*t^3", c[3 * i], c[3 * i + 1], c[3 * i + 2]))
            .collect();
        let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
        Membrane::parse(1, &refs).unwrap()
    })
}

fn gauss_paths() -> QuadratureConfig {
    QuadratureConfig {
        points_per_axis: 16,
        rule: iterint::Rule::Gauss,
        ..QuadratureConfig::default()
    }
}

proptest! {
    #![proptest_config(Config::with_cases(1000))]

    #[test]
    fn derivative_matches_central_difference(e in smooth_expr(), p in point(3), v in 0..3usize) {
        let h = 1e-5;
        let (mut up, mut down) = (p.clone(), p.clone());
        up[v] += h;
        down[v] -= h;
        let fd = (e.eval(&up).unwrap() - e.eval(&down).unwrap()) / (2.0 * h);
        let exact = e.derivative(v).eval(&p).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{exact} vs {fd}");
    }

    #[test]
    fn printing_then_parsing_round_trips(e in smooth_expr(), p in point(3)) {
        let names = coordinate_names("x", 3);
        let text = e.display(&names).to_string();
        let back = parse(&text, &names).unwrap();
        let (a, b) = (e.eval(&p).unwrap(), back.eval(&p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{text}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(Config::with_cases(200))]

    #[test]
    fn d_squared_vanishes(w in any_form(4), p in point(4)) {
        let dd = w.exterior_derivative().exterior_derivative();
        let values = dd.evaluate(&p).unwrap();
        prop_assert!(values.values().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn wedge_is_graded_commutative(a in any_form(4), b in any_form(4), p in point(4)) {
        let ab = a.wedge(&b).unwrap().evaluate(&p).unwrap();
        let mut ba = b.wedge(&a).unwrap().evaluate(&p).unwrap();
        if (a.degree() * b.degree()) % 2 == 1 {
            ba.values_mut().for_each(|v| *v = -*v);
        }
        prop_assert!(table_diff(&ab, &ba) <= 1e-9 * (1.0 + table_scale(&ab)));
    }

    #[test]
    fn leibniz_rule(a in any_form(4), b in any_form(4), p in point(4)) {
        let lhs = a.wedge(&b).unwrap().exterior_derivative().evaluate(&p).unwrap();
        let first = a.exterior_derivative().wedge(&b).unwrap();
        let mut second = a.wedge(&b.exterior_derivative()).unwrap();
        if a.degree() % 2 == 1 {
            second = second.scale(&Expr::Const(-1.0));
        }
        let rhs = first.add(&second).unwrap().evaluate(&p).unwrap();
        prop_assert!(table_diff(&lhs, &rhs) <= 1e-9 * (1.0 + table_scale(&lhs)));
    }

    #[test]
    fn pullback_commutes_with_wedge(
        comps in prop::collection::vec(polynomial(2), 3),
        a in any_form(3),
        b in any_form(3),
        t in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let g = Membrane::symbolic(2, comps).unwrap();
        let whole = g.pullback(&a.wedge(&b).unwrap()).unwrap();
        let (pa, pb) = (g.pullback(&a).unwrap(), g.pullback(&b).unwrap());
        let split = pa.as_form().unwrap().wedge(pb.as_form().unwrap()).unwrap();
        let lhs = whole.as_form().unwrap().evaluate(&t).unwrap();
        let rhs = split.evaluate(&t).unwrap();
        prop_assert!(table_diff(&lhs, &rhs) <= 1e-9 * (1.0 + table_scale(&lhs)));
    }

    #[test]
    fn pullback_commutes_with_d(
        comps in prop::collection::vec(polynomial(3), 3),
        w in any_form(3),
        t in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let g = Membrane::symbolic(3, comps).unwrap();
        let lhs = g.pullback(&w.exterior_derivative()).unwrap().as_form().unwrap().evaluate(&t).unwrap();
        let rhs = g.pullback(&w).unwrap().as_form().unwrap().exterior_derivative().evaluate(&t).unwrap();
        prop_assert!(table_diff(&lhs, &rhs) <= 1e-9 * (1.0 + table_scale(&lhs)));
    }

    #[test]
    fn pullback_components_agree_with_symbolic_form(
        comps in prop::collection::vec(polynomial(2), 3),
        w in form(3, 2),
        t in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let pb = Membrane::symbolic(2, comps).unwrap().pullback(&w).unwrap();
        let direct = pb.component(&[0, 1], &t).unwrap();
        let via = pb.as_form().unwrap().evaluate(&t).unwrap().get(&vec![0, 1]).copied().unwrap_or(0.0);
        prop_assert!((direct - via).abs() <= 1e-9 * (1.0 + via.abs()));
    }
}

proptest! {
    #![proptest_config(Config::with_cases(64))]

    #[test]
    fn block_shuffles_preserve_order(blocks in prop::collection::vec(0..4usize, 1..4)) {
        prop_assume!(blocks.iter().sum::<usize>() <= 8);
        let all = enumerate_blocks(&blocks);
        prop_assert_eq!(all.len() as u128, multinomial(&blocks));
        prop_assert!(all.iter().all(|p| is_block_shuffle(p, &blocks)));
        prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn glue_family_sits_inside_the_barred_product(
        k1 in prop::collection::vec(0..3usize, 1..4),
        k2 in prop::collection::vec(0..3usize, 1..4),
    ) {
        let n = k1.len().min(k2.len());
        let (k1, k2) = (&k1[..n], &k2[..n]);
        let product = enumerate_product(k1, k2, true).unwrap();
        let glued = enumerate_sh1(k1, k2).unwrap();
        prop_assert_eq!(product.len() as u128, count_product(k1, k2));
        prop_assert_eq!(glued.len() as u128, count_sh1(k1, k2));
        prop_assert!(glued.iter().all(|rho| product.binary_search(rho).is_ok()));
    }
}

proptest! {
    #![proptest_config(Config::with_cases(12))]

    #[test]
    fn signature_is_group_like(g in cubic_path()) {
        let alphabet: Vec<DifferentialForm> = (0..3).map(|i| DifferentialForm::coordinate(3, i)).collect();
        let s = transport_series(&g, &alphabet, 4, &gauss_paths()).unwrap();
        for u in iterint::chen::all_words(3, 3) {
            for v in iterint::chen::all_words(3, 4 - u.len()) {
                let sum: f64 = shuffle_words(&u, &v).iter().map(|w| s.get(w)).sum();
                prop_assert!((s.get(&u) * s.get(&v) - sum).abs() <= 1e-6, "{u:?} {v:?}");
            }
        }
    }

    #[test]
    fn reparametrization_leaves_integrals_unchanged(g in cubic_path(), word in prop::collection::vec(0..3usize, 1..4)) {
        let forms: Vec<DifferentialForm> = word
            .iter()
            .map(|&i| DifferentialForm::coordinate(3, i).scale(&Expr::add(Expr::Const(1.0), Expr::var((i + 1) % 3))))
            .collect();
        let cfg = gauss_paths();
        let slow = g.reparametrize(&parse("t^2", &["t"]).unwrap()).unwrap();
        let a = iterated_path_integral(&g, &forms, &cfg).unwrap().value;
        let b = iterated_path_integral(&slow, &forms, &cfg).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
    }

    #[test]
    fn reversed_path_inverts_the_series(g in cubic_path()) {
        let alphabet: Vec<DifferentialForm> = (0..3).map(|i| DifferentialForm::coordinate(3, i)).collect();
        let cfg = gauss_paths();
        let there = transport_series(&g, &alphabet, 4, &cfg).unwrap();
        let back = transport_series(&g.reverse(), &alphabet, 4, &cfg).unwrap();
        let product = there.multiply(&back).unwrap();
        prop_assert!(product.max_diff(&TensorSeries::identity(3, 4)) <= 1e-6);
    }
}
