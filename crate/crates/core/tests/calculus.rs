use std::collections::BTreeMap;

use bergkit::kernel_calculus::{compose, random_poly_kernel, toeplitz_symbol_q, Composer, PolyKernel};
use bergkit::model_kernel::{compose_by_quadrature, ModelKernel, QuadratureBox};
use bergkit::poly::Parity;
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POINTS: [([f64; 2], [f64; 2]); 3] = [([0.0, 0.0], [0.0, 0.0]), ([0.4, -0.3], [0.1, 0.5]), ([-0.6, 0.2], [0.3, 0.3])];

fn quadrature_error(mk: &ModelKernel, f: &PolyKernel, g: &PolyKernel, k: &PolyKernel, bx: &QuadratureBox) -> f64 {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (z, zp) in POINTS {
        let q = compose_by_quadrature(
            mk,
            |a, b| f.eval(a, b) * mk.eval(a, b),
            |a, b| g.eval(a, b) * mk.eval(a, b),
            &z,
            &zp,
            bx,
            (f.degree() + g.degree()) as usize,
        );
        assert!(q.adequate);
        let sym = k.eval(&z, &zp) * mk.eval(&z, &zp);
        worst = worst.max((sym - q.value).norm());
        scale = scale.max(q.value.norm());
    }
    worst / scale
}

#[test]
fn linear_pair_matches_quadrature() {
    let mk = ModelKernel::standard(1);
    let f = PolyKernel::z(1, 0);
    let g = PolyKernel::zp(1, 0);
    let k = compose(&f, &g, &mk).unwrap();
    let bx = QuadratureBox::new(6.0, 0.05).unwrap();
    assert!(quadrature_error(&mk, &f, &g, &k, &bx) <= 1e-6);
}

#[test]
fn random_pairs_match_quadrature() {
    let mk = ModelKernel::standard(1);
    let composer = Composer::new(&mk).unwrap();
    let bx = QuadratureBox::new(6.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let f = random_poly_kernel(1, 2, &mut rng);
        let g = random_poly_kernel(1, 2, &mut rng);
        let k = composer.compose(&f, &g).unwrap();
        let err = quadrature_error(&mk, &f, &g, &k, &bx);
        assert!(err <= 1e-6, "relative error {err}");
    }
}

#[test]
fn degree_parity_linearity_associativity() {
    let mk = ModelKernel::standard(1);
    let c = Composer::new(&mk).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let f = random_poly_kernel(1, 4, &mut rng);
        let g = random_poly_kernel(1, 4, &mut rng);
        let k = c.compose(&f, &g).unwrap();
        assert!(k.degree() <= f.degree() + g.degree());
    }
    let even = PolyKernel::z(1, 0).mul(&PolyKernel::zp(1, 1)).unwrap();
    let odd = PolyKernel::z(1, 1);
    assert_eq!(c.compose(&even, &even).unwrap().parity(), Parity::Even);
    assert_eq!(c.compose(&odd, &odd).unwrap().parity(), Parity::Even);
    assert_eq!(c.compose(&even, &odd).unwrap().parity(), Parity::Odd);

    let f = random_poly_kernel(1, 2, &mut rng);
    let g = random_poly_kernel(1, 2, &mut rng);
    let h = random_poly_kernel(1, 2, &mut rng);
    let left = c.compose(&c.compose(&f, &g).unwrap(), &h).unwrap();
    let right = c.compose(&f, &c.compose(&g, &h).unwrap()).unwrap();
    assert!(left.max_coeff_distance(&right).unwrap() <= 1e-9);

    let a = C::new(0.3, -1.1);
    let lin = c.compose(&f.add(&g.scale(a)).unwrap(), &h).unwrap();
    let sep = c.compose(&f, &h).unwrap().add(&c.compose(&g, &h).unwrap().scale(a)).unwrap();
    assert!(lin.max_coeff_distance(&sep).unwrap() <= 1e-12);
}

#[test]
fn first_order_symbol_matches_quadrature() {
    let mk = ModelKernel::standard(1);
    let mut jet = BTreeMap::new();
    jet.insert(vec![0, 0], C::new(0.8, 0.0));
    jet.insert(vec![1, 0], C::new(0.5, 0.0));
    jet.insert(vec![0, 1], C::new(-0.25, 0.1));
    let f1 = PolyKernel::z(1, 0).add(&PolyKernel::zp(1, 1).scale(C::new(0.0, 0.5))).unwrap();
    let list = [PolyKernel::one(1), f1.clone()];
    let q = toeplitz_symbol_q(&jet, &list, 1, &mk).unwrap();

    // direct: P f1 (f0 + f_j W_j) P + P (f0 f1) P, composed by quadrature
    let bx = QuadratureBox::new(6.0, 0.05).unwrap();
    let f0 = jet[&vec![0, 0]];
    let lin = |w: &[f64]| jet[&vec![1, 0]] * w[0] + jet[&vec![0, 1]] * w[1];
    for (z, zp) in POINTS {
        let one = |a: &[f64], b: &[f64]| mk.eval(a, b);
        let first = compose_by_quadrature(&mk, |a, b| f1.eval(a, b) * mk.eval(a, b), |a, b| f0 * mk.eval(a, b), &z, &zp, &bx, 2);
        let second = compose_by_quadrature(&mk, one, |a, b| f0 * f1.eval(a, b) * mk.eval(a, b), &z, &zp, &bx, 2);
        let third = compose_by_quadrature(&mk, one, |a, b| lin(a) * mk.eval(a, b), &z, &zp, &bx, 2);
        let direct = first.value + second.value + third.value;
        let sym = q.eval(&z, &zp) * mk.eval(&z, &zp);
        assert!((direct - sym).norm() <= 1e-6, "{direct} vs {sym}");
    }
}
