use bergkit::kernel_calculus::{random_poly_kernel, Composer, PolyKernel};
use bergkit::model_kernel::ModelKernel;
use bergkit::toeplitz::SymbolFunction;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn kernel(seed: u64, degree: u32) -> PolyKernel {
    random_poly_kernel(1, degree, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn coeff_gap(a: &PolyKernel, b: &PolyKernel) -> f64 {
    a.max_coeff_distance(b).unwrap()
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-2.0f64..2.0, -2.0f64..2.0]
}

fn symbol() -> impl Strategy<Value = SymbolFunction> {
    prop::collection::vec(((-2i32..=2, -2i32..=2), -1.0f64..1.0, -1.0f64..1.0), 1..4)
        .prop_map(|t| SymbolFunction::from_terms(&t.into_iter().map(|(k, re, im)| (k, C::new(re, im))).collect::<Vec<_>>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_kernel_is_hermitian_gaussian(a in point(), b in point()) {
        let mk = ModelKernel::standard(1);
        let (ab, ba) = (mk.eval(&a, &b), mk.eval(&b, &a));
        prop_assert!((ab - ba.conj()).norm() < 1e-14);
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        prop_assert!((ab.norm() - (-PI * d2 / 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn composition_is_bilinear(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), re in -2.0f64..2.0) {
        let cm = Composer::new(&ModelKernel::standard(1)).unwrap();
        let (f, g, h) = (kernel(s1, 2), kernel(s2, 2), kernel(s3, 2));
        let c = C::new(re, 0.5);
        let lhs = cm.compose(&f.scale(c).add(&g).unwrap(), &h).unwrap();
        let rhs = cm.compose(&f, &h).unwrap().scale(c).add(&cm.compose(&g, &h).unwrap()).unwrap();
        prop_assert!(coeff_gap(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn composition_is_associative(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let cm = Composer::new(&ModelKernel::standard(1)).unwrap();
        let (f, g, h) = (kernel(s1, 1), kernel(s2, 1), kernel(s3, 1));
        let left = cm.compose(&cm.compose(&f, &g).unwrap(), &h).unwrap();
        let right = cm.compose(&f, &cm.compose(&g, &h).unwrap()).unwrap();
        prop_assert!(coeff_gap(&left, &right) < 1e-10, "gap {}", coeff_gap(&left, &right));
    }

    #[test]
    fn poisson_bracket_is_antisymmetric_and_leibniz(f in symbol(), g in symbol(), h in symbol(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let fg = f.poisson(&g).eval(x, y);
        prop_assert!((fg + g.poisson(&f).eval(x, y)).norm() < 1e-10);
        let lhs = f.poisson(&g.mul(&h)).eval(x, y);
        let rhs = f.poisson(&g).eval(x, y) * h.eval(x, y) + g.eval(x, y) * f.poisson(&h).eval(x, y);
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
    }
}
