//! Randomised invariants across modules, on small grids so each case is cheap.

use caplab_core::capacity::{dirichlet_capacity, CapacityOptions};
use caplab_core::domain::{ball_region, excise, make_ball, make_box, random_blob, GridDomain, Region};
use caplab_core::spectral::{assemble, lowest_eigenpairs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_region(d: &GridDomain, seed: u64, density: f64) -> Region {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = (0..d.n_cells()).map(|_| rng.gen::<f64>() < density).collect();
    Region::from_mask(d, mask).unwrap()
}

fn square(inv_h: u32) -> GridDomain {
    make_box(2, &[1.0, 1.0], 1.0 / inv_h as f64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn excision_splits_volume_exactly(seed in any::<u64>(), density in 0.0f64..0.5, inv_h in 8u32..24) {
        let d = square(inv_h);
        let a = random_region(&d, seed, density);
        let e = excise(&d, &a).unwrap_or_else(|_| d.with_mask(vec![false; d.n_cells()]).unwrap());
        let removed = a.intersection_count(&d);
        prop_assert_eq!(e.active_count() + removed, d.active_count());
    }

    #[test]
    fn excision_is_monotone(seed in any::<u64>(), extra in any::<u64>()) {
        let d = square(16);
        let a = random_region(&d, seed, 0.1);
        let b = a.union(&random_region(&d, extra, 0.1)).unwrap();
        let (ea, eb) = (excise(&d, &a).unwrap(), excise(&d, &b).unwrap());
        for (x, y) in eb.mask().iter().zip(ea.mask()) {
            prop_assert!(!x || *y);
        }
    }

    #[test]
    fn generators_are_pure(seed in 0u64..500, dim in 2usize..=3) {
        let h = if dim == 2 { 1.0 / 24.0 } else { 1.0 / 10.0 };
        // Coarse grids can reject a seed; purity then means the same error.
        match (random_blob(seed, dim, h), random_blob(seed, dim, h)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.mask(), b.mask()),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "seed {} gave different outcomes", seed),
        }
        let (a, b) = (make_ball(dim, 0.7, h).unwrap(), make_ball(dim, 0.7, h).unwrap());
        prop_assert_eq!(a.mask(), b.mask());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenvalues_rise_under_inclusion(cx in -0.35f64..0.35, cy in -0.35f64..0.35, r in 0.03f64..0.15) {
        let d = square(20);
        let e = excise(&d, &ball_region(&d, &[cx, cy], r).unwrap()).unwrap();
        let big = lowest_eigenpairs(&assemble(&d), 3, 1e-10).unwrap();
        let small = lowest_eigenpairs(&assemble(&e), 3, 1e-10).unwrap();
        for (x, y) in big.eigenvalues.iter().zip(&small.eigenvalues) {
            prop_assert!(*y >= x - 1e-8 * x, "{} < {}", y, x);
        }
    }

    #[test]
    fn capacity_is_monotone_with_barrier(seed in any::<u64>(), extra in any::<u64>()) {
        let d = square(20);
        let spec = lowest_eigenpairs(&assemble(&d), 1, 1e-10).unwrap();
        let a = random_region(&d, seed, 0.02);
        let b = a.union(&random_region(&d, extra, 0.02)).unwrap();
        let opts = CapacityOptions { tol: 1e-12, ..Default::default() };
        let ca = dirichlet_capacity(&d, &a, &spec, &opts).unwrap();
        let cb = dirichlet_capacity(&d, &b, &spec, &opts).unwrap();
        prop_assert!(ca.value <= cb.value + 1e-8);
        let phi = spec.ground_state();
        for (f, p) in ca.potential.iter().zip(phi) {
            prop_assert!(*f <= p + 1e-8);
            prop_assert!(*f >= -1e-8);
        }
    }
}
