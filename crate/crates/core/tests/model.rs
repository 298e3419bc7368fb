use bergkit::model_kernel::{model_gap_estimate, reproducing_residual, ModelKernel, ModelOperatorStencil, QuadratureBox};
use std::f64::consts::PI;
use std::time::Instant;

#[test]
fn reproducing_off_the_diagonal() {
    let mk = ModelKernel::standard(1);
    let bx = QuadratureBox::new(5.0, 0.05).unwrap();
    for (z, zp) in [([0.5, -0.5], [-0.3, 0.8]), ([1.2, 0.0], [1.0, 0.2])] {
        let r = reproducing_residual(&mk, &z, &zp, &bx).unwrap();
        assert!(r.residual <= 1e-6, "{z:?}, {zp:?}: {}", r.residual);
    }
}

#[test]
fn model_gap_is_stable_in_the_box() {
    let mk = ModelKernel::standard(1);
    let mu0 = 2.0 * PI;
    let t = Instant::now();
    let small = model_gap_estimate(&ModelOperatorStencil::new(&mk, 0.1, 3.0).unwrap(), mu0).unwrap();
    let large = model_gap_estimate(&ModelOperatorStencil::new(&mk, 0.1, 4.0).unwrap(), mu0).unwrap();
    eprintln!("gap estimates in {:.1} s: {small:?} {large:?}", t.elapsed().as_secs_f64());
    for g in [&small, &large] {
        assert!(g.lambda0.abs() <= 0.2, "lambda0 {}", g.lambda0);
        let ratio = g.lambda1 / (2.0 * mu0);
        assert!((0.9..=1.1).contains(&ratio), "lambda1 / 2 mu0 = {ratio}");
        assert!(g.lambda1_multiplicity >= 3);
    }
    // bulk levels do not feel the box once it is a few magnetic lengths wide
    assert!((small.lambda1 - large.lambda1).abs() <= 1e-3 * large.lambda1);
}
