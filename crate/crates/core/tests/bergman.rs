use bergkit::bergman::{
    assemble_kernel, decay_samples, diagonal_limit_check, offdiagonal_decay_fit, q1_boundedness_check,
    rescaled_comparison, scaled_diagonal, translation_spread, BergmanKernel,
};
use bergkit::cli::{decay_range, majorant_ratio, random_orbit_sites, random_sites, RESCALED_RADIUS};
use bergkit::torus::{build_hamiltonian, solve_low_spectrum, SpectralWindow, TorusConfig};

fn window(p: usize) -> SpectralWindow {
    let cfg = TorusConfig::auto(p).unwrap();
    solve_low_spectrum(&build_hamiltonian(&cfg).unwrap(), p + 5).unwrap()
}

fn offsets() -> Vec<(usize, usize)> {
    (1..=3).flat_map(|m| [(m, 0), (0, m), (m, m)]).collect()
}

#[test]
fn projector_structure_at_p8() {
    let w = window(8);
    let k = assemble_kernel(&w, 0).unwrap();
    assert_eq!(k.rank(), 8);
    assert!((k.trace().re - 8.0).abs() < 1e-8 && k.trace().im.abs() < 1e-10);
    assert!(k.projection_defect() < 1e-8);

    let sites = random_sites(&k.cfg, 12, 3);
    for &s in &sites {
        assert!(k.value(s, s).re > 0.0);
        for &t in &sites {
            assert!((k.value(s, t) - k.value(t, s).conj()).norm() < 1e-12);
        }
    }
    // Cauchy-Schwarz for a positive kernel
    for &s in &sites {
        for &t in &sites {
            let bound = (k.value(s, s).re * k.value(t, t).re).sqrt();
            assert!(k.value(s, t).norm() <= bound * (1.0 + 1e-12));
        }
    }
}

#[test]
fn q1_trace_two_ways_and_cluster_bound() {
    let w = window(8);
    let k1 = assemble_kernel(&w, 1).unwrap();
    assert!((k1.trace().re - k1.spectral_trace()).abs() < 1e-8);
    assert!(k1.trace().re.abs() <= w.cluster_max_abs() * 8.0 + 1e-12);
    // P_1 at the diagonal is bounded by the cluster width times P_0
    let k0 = assemble_kernel(&w, 0).unwrap();
    let b = k0.base_site();
    assert!(k1.value(b, b).norm() <= w.cluster_max_abs() * k0.value(b, b).re * (1.0 + 1e-10));
}

#[test]
fn magnetic_translations_on_the_orbit() {
    for p in [4, 8] {
        let k = assemble_kernel(&window(p), 0).unwrap();
        let bases = random_orbit_sites(&k.cfg, 6, 11);
        let spread = translation_spread(&k, &bases, &offsets());
        assert!(spread <= 1e-6, "p = {p}: orbit spread {spread:e}");
    }
}

#[test]
fn generic_translations_become_exact_with_p() {
    let spread = |p| {
        let k = assemble_kernel(&window(p), 0).unwrap();
        let bases = random_sites(&k.cfg, 6, 5);
        translation_spread(&k, &bases, &offsets())
    };
    let (s4, s8) = (spread(4), spread(8));
    assert!(s8 < 0.1 * s4, "{s4:e} -> {s8:e}");
}

#[test]
fn rescaled_comparison_and_its_domain() {
    let w = window(8);
    let k = assemble_kernel(&w, 0).unwrap();
    let mk = w.cfg.model_kernel().unwrap();
    let r = rescaled_comparison(&k, &mk, RESCALED_RADIUS).unwrap();
    assert!(r.pairs > 0);
    assert!(r.sup_error < 0.1, "sup error {}", r.sup_error);
    assert!((r.diagonal - scaled_diagonal(&k)).abs() < 1e-15);
    // the diagonal entry alone is close to the model value 1
    assert!((r.diagonal - 1.0).abs() < r.sup_error + 1e-12);
    assert!(rescaled_comparison(&k, &mk, 20.0).is_err());
    assert!(rescaled_comparison(&k, &mk, 0.0).is_err());
    assert!(rescaled_comparison(&assemble_kernel(&w, 1).unwrap(), &mk, 2.0).is_err());
}

#[test]
fn radial_gauge_matches_modulus() {
    let k = assemble_kernel(&window(4), 0).unwrap();
    let b = k.base_site();
    for t in k.chart_sites(b, 0.2).into_iter().step_by(7) {
        assert!((k.radial_value(b, b, t).norm() - k.value(b, t).norm()).abs() < 1e-14);
    }
}

#[test]
fn decay_fit_dominates_samples() {
    let k = assemble_kernel(&window(16), 0).unwrap();
    let range = decay_range(16).unwrap();
    let fit = offdiagonal_decay_fit(&k, range).unwrap();
    assert!(fit.c_hat > 0.0);
    assert!(fit.samples_used >= 2);
    assert!(majorant_ratio(&k, &fit) <= 1.0 + 1e-12);
    let samples = decay_samples(&k, 0.25);
    assert!(samples.first().unwrap().1 > samples.last().unwrap().1);
    assert!(offdiagonal_decay_fit(&k, (0.01, 0.2)).is_err());
    assert!(offdiagonal_decay_fit(&k, (0.2, 0.4)).is_err());
    assert!(decay_range(1).is_none());
}

#[test]
fn fits_need_three_values() {
    let ks: Vec<BergmanKernel> = [4, 8].iter().map(|&p| assemble_kernel(&window(p), 0).unwrap()).collect();
    assert!(diagonal_limit_check(&ks).is_err());
    assert!(q1_boundedness_check(&ks).is_err(), "q = 0 kernels are rejected");
    let q1: Vec<BergmanKernel> = [4, 8].iter().map(|&p| assemble_kernel(&window(p), 1).unwrap()).collect();
    assert!(q1_boundedness_check(&q1).is_err());
}
