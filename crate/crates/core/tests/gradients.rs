use bac_core::check::{finite_difference_check, gradient_suite, GradCheckConfig, GradEpisode};
use bac_core::nn::{Arch, NetworkParams};
use bac_core::rl::{Variant, WorkerKind};
use bac_core::rng_from_seed;
use rand::Rng;

#[test]
fn narrow_network_every_coordinate() {
    let r = gradient_suite(Arch::narrow(6, 2, 4), 3, 6, 17).unwrap();
    assert!(r.passed(), "{r:?}");
    assert!(r.checked > 2000);
}

#[test]
fn each_variant_matches_finite_differences() {
    let mut rng = rng_from_seed(5);
    let arch = Arch::narrow(6, 2, 3);
    for (variant, kind) in [(Variant::A3c, WorkerKind::Plain), (Variant::A3cTp, WorkerKind::Plain), (Variant::PiA3c, WorkerKind::Demonstrator)] {
        let p = NetworkParams::<f64>::init(arch, rng.gen());
        let ep = GradEpisode::random(6, 5, &mut rng);
        let r = finite_difference_check(&p, &ep, variant, kind, &GradCheckConfig::default(), None).unwrap();
        assert!(r.passed(), "{variant}: {r:?}");
    }
}

#[test]
fn standard_network_sampled_coordinates() {
    let mut rng = rng_from_seed(8);
    let arch = Arch::standard(6);
    let p = NetworkParams::<f64>::init(arch, 3);
    let ep = GradEpisode::random(6, 3, &mut rng);
    let n = arch.param_count();
    let coords: Vec<usize> = (0..300).map(|_| rng.gen_range(0..n)).collect();
    let r = finite_difference_check(&p, &ep, Variant::PiA3cTp, WorkerKind::Demonstrator, &GradCheckConfig::default(), Some(&coords)).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn impossible_tolerance_reports_failures() {
    let mut rng = rng_from_seed(9);
    let arch = Arch::narrow(6, 2, 3);
    let p = NetworkParams::<f64>::init(arch, rng.gen());
    let ep = GradEpisode::random(6, 4, &mut rng);
    let cfg = GradCheckConfig { rel_tol: 0.0, abs_tol: 0.0, ..GradCheckConfig::default() };
    let r = finite_difference_check(&p, &ep, Variant::PiA3cTp, WorkerKind::Demonstrator, &cfg, None).unwrap();
    assert!(r.failures > 0, "{r:?}");
}
