use bergkit::bergman::{assemble_kernel, rescaled_comparison};
use bergkit::toeplitz::{
    build_toeplitz, commutator_poisson_check, leading_symbol_check, product_defect, toeplitz_kernel_decay,
    SymbolFunction,
};
use bergkit::torus::{build_hamiltonian, solve_low_spectrum, SpectralWindow, TorusConfig};
use num_complex::Complex64 as C;

fn window(p: usize) -> SpectralWindow {
    let cfg = TorusConfig::auto(p).unwrap();
    solve_low_spectrum(&build_hamiltonian(&cfg).unwrap(), p + 5).unwrap()
}

#[test]
fn constants_act_as_scalars() {
    let w = window(4);
    let one = build_toeplitz(&SymbolFunction::constant(C::new(1.0, 0.0)), &w).unwrap();
    assert_eq!(one.dim(), 4);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((one.entries[(i, j)] - C::new(want, 0.0)).norm() < 1e-12);
        }
    }
    let c = C::new(2.5, -0.5);
    let tc = build_toeplitz(&SymbolFunction::constant(c), &w).unwrap();
    assert!((tc.op_norm() - c.norm()).abs() < 1e-12);
}

#[test]
fn linearity_adjoint_and_norm() {
    let w = window(8);
    let f = SymbolFunction::cos(1, 0).add(&SymbolFunction::sin(0, 2).scale(C::new(0.0, 0.5)));
    let g = SymbolFunction::cos(1, 1);
    let a = C::new(0.3, 1.1);
    let lhs = build_toeplitz(&f.scale(a).add(&g), &w).unwrap();
    let (tf, tg) = (build_toeplitz(&f, &w).unwrap(), build_toeplitz(&g, &w).unwrap());
    let diff = (&lhs.entries - (&tf.entries * a + &tg.entries)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12);

    let adj = build_toeplitz(&f.conj(), &w).unwrap();
    assert!((&adj.entries - tf.entries.adjoint()).iter().all(|z| z.norm() < 1e-12));

    assert!(tg.hermiticity_defect() < 1e-12);
    assert!(tg.op_norm() <= 1.0 + 1e-12);
}

#[test]
fn nonnegative_symbols_give_nonnegative_operators() {
    let w = window(8);
    let f = SymbolFunction::constant(C::new(1.0, 0.0)).add(&SymbolFunction::cos(1, 0));
    assert!(build_toeplitz(&f, &w).unwrap().min_eigenvalue() >= -1e-10);
    let sq = SymbolFunction::sin(1, 1).mul(&SymbolFunction::sin(1, 1));
    assert!(build_toeplitz(&sq, &w).unwrap().min_eigenvalue() >= -1e-10);
}

#[test]
fn defects_vanish_for_trivial_pairs() {
    let ws = [window(4), window(8)];
    let one = SymbolFunction::constant(C::new(1.0, 0.0));
    let f = SymbolFunction::cos(1, 0);
    for row in product_defect(&one, &f, &ws).unwrap() {
        assert!(row.value < 1e-12, "p = {}: {}", row.p, row.value);
    }
    for row in commutator_poisson_check(&f, &f, &ws).unwrap() {
        assert_eq!(row.value, 0.0);
    }
    let e1 = product_defect(&f, &SymbolFunction::cos(0, 1), &ws).unwrap();
    assert!(e1[1].value < e1[0].value);
}

#[test]
fn kernel_decay_domain() {
    let w = window(8);
    let f = SymbolFunction::cos(1, 0);
    assert!(toeplitz_kernel_decay(&f, &w, 0.05, 4).is_err());
    assert!(toeplitz_kernel_decay(&f, &w, 0.45, 4).is_err());
    let d = toeplitz_kernel_decay(&f, &w, 0.3, 4).unwrap();
    assert_eq!(d.base_points, 16);
    assert!(d.mass > 0.0 && d.max_modulus > 0.0);
    assert!(d.mass <= d.max_modulus);
}

#[test]
fn unit_symbol_reduces_to_the_bergman_comparison() {
    let w = window(8);
    let mk = w.cfg.model_kernel().unwrap();
    let lead = leading_symbol_check(&SymbolFunction::constant(C::new(1.0, 0.0)), &w, &mk).unwrap();
    assert_eq!(lead.f_at_base, [1.0, 0.0]);
    let r = rescaled_comparison(&assemble_kernel(&w, 0).unwrap(), &mk, 2.0).unwrap();
    assert!(lead.sup_error <= r.sup_error + 1e-12);
    assert!((lead.sup_kernel - r.diagonal).abs() < 1e-12, "peak sits on the diagonal");
}

#[test]
fn leading_symbol_tracks_the_symbol_value() {
    let w = window(8);
    let mk = w.cfg.model_kernel().unwrap();
    let f = SymbolFunction::cos(1, 0);
    let lead = leading_symbol_check(&f, &w, &mk).unwrap();
    // the default base sits at x = 1/2
    assert!((lead.f_at_base[0] + 1.0).abs() < 1e-12);
    assert!(lead.sup_error < 0.5 * lead.sup_kernel);
}
