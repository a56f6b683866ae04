mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sasaki_weyl::expr::{BinOp, Expression, Func, Node};

fn node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0.0f64..1e6).prop_map(Node::Num),
        (1e-8f64..1e-3).prop_map(Node::Num),
        (0usize..3).prop_map(Node::Var),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
        let f = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Tan),
            Just(Func::Exp),
            Just(Func::Log),
            Just(Func::Sqrt),
            Just(Func::Abs)
        ];
        prop_oneof![
            inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Node::Bin(o, Box::new(a), Box::new(b))),
            (f, inner.clone()).prop_map(|(f, a)| Node::Call(f, vec![a])),
            (inner.clone(), inner).prop_map(|(a, b)| Node::Call(Func::Atan2, vec![a, b])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn printing_then_parsing_is_identity(n in node()) {
        let coords = ["x", "y", "z"];
        let e = Expression::from_node(n, coords.iter().map(|s| s.to_string()).collect());
        let printed = e.to_string();
        let back = Expression::parse(&printed, &coords).unwrap();
        prop_assert_eq!(back.node(), e.node(), "{}", printed);
    }

    #[test]
    fn parser_never_panics(s in "[-+*/^() xy0-9.,a-z]{0,24}") {
        let _ = Expression::parse(&s, &["x", "y"]);
    }
}

#[test]
fn jets_agree_with_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coords = ["x", "y", "z"];
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let src = common::smooth_expr(&mut rng, &coords, 3);
        let e = Expression::parse(&src, &coords).unwrap();
        let p = common::point(&mut rng, 3);
        let j = e.jet_at(&p, 2).unwrap();
        let g = j.gradient();
        let hs = j.hessian();
        for i in 0..3 {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (e.evaluate(&a).unwrap() - e.evaluate(&b).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            let (ga, gb) = (e.jet_at(&a, 1).unwrap().gradient(), e.jet_at(&b, 1).unwrap().gradient());
            for k in 0..3 {
                let fd2 = (ga[k] - gb[k]) / (2.0 * h);
                worst = worst.max((fd2 - hs[i][k]).abs() / hs[i][k].abs().max(1.0));
            }
        }
    }
    assert!(worst <= 1e-5, "worst relative gap {worst:e}");
}
