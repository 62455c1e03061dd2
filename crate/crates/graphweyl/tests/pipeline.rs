//! End-to-end invariants across map, quantization and spectral layers.

use graphweyl::interval_map::builtin;
use graphweyl::markov::build_markov;
use graphweyl::quantize::{block_phase_search_quantize, doubling_unitary, verify_unistochastic, PhaseSearch};
use graphweyl::random_quant::build_random_quantization;
use graphweyl::spectral::{eigendecompose, pointwise_weyl_all, weyl_count, ArcWindow};
use graphweyl::TAU;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_is_unistochastic(half in 1usize..150) {
        let n = 2 * half;
        let p = build_markov(&builtin("doubling").unwrap(), n).unwrap();
        let u = doubling_unitary(n).unwrap();
        let r = verify_unistochastic(&u, &p).unwrap();
        prop_assert!(r.max_entry_error <= 1e-12);
        prop_assert!(r.unitarity_defect <= 1e-12);
    }

    #[test]
    fn pointwise_weyl_sums_to_count(half in 2usize..40, center in 0.0..TAU, width in 0.01..TAU) {
        let n = 2 * half;
        let spec = eigendecompose(&doubling_unitary(n).unwrap()).unwrap();
        let arc = ArcWindow::new(center, width).unwrap();
        let w = pointwise_weyl_all(&spec, &arc);
        let total: f64 = w.iter().sum();
        prop_assert!((total - weyl_count(&spec, &arc) as f64).abs() < 1e-9);
        prop_assert!(w.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn random_quantization_stays_in_bins(seed in any::<u64>(), kappa in 1usize..6) {
        let u = doubling_unitary(64).unwrap();
        let spec = eigendecompose(&u).unwrap();
        let q = build_random_quantization(&spec, kappa, None, seed).unwrap();
        prop_assert!(q.v.unitarity_defect() < 1e-10);
        let w = TAU / kappa as f64;
        let bin = |t: f64| (((t - q.offset).rem_euclid(TAU)) / w) as usize % kappa;
        for &(_, old, new) in &q.reassigned {
            prop_assert_eq!(bin(old), bin(new));
        }
        let mut ph = q.spectrum.phases().to_vec();
        ph.sort_by(f64::total_cmp);
        let gaps = ph.windows(2).map(|p| p[1] - p[0]).fold(TAU + ph[0] - ph[ph.len() - 1], f64::min);
        prop_assert!(gaps > 1e-12);
    }
}

#[test]
fn four_legs_phase_search_across_dimensions() {
    let map = builtin("four_legs").unwrap();
    for n in [8, 16, 24, 32] {
        let p = build_markov(&map, n).unwrap();
        let u = block_phase_search_quantize(&p, PhaseSearch::default()).unwrap();
        let r = verify_unistochastic(&u, &p).unwrap();
        assert!(r.max_entry_error < 1e-10, "n={n}: {}", r.max_entry_error);
        let spec = eigendecompose(&u).unwrap();
        assert!(spec.max_residual() < 1e-10);
        assert_eq!(weyl_count(&spec, &ArcWindow::full()), n);
    }
}
