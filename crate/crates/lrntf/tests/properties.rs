//! Property tests for the structural invariants: model-form equivalence,
//! proximal-operator geometry, generator constraints, simplex feasibility
//! and format round-trips.

use proptest::collection::vec;
use proptest::prelude::*;

use lrntf::fcls::{fcls_pixel, FclsConfig};
use lrntf::gbm::{forward, AbundanceState, EndmemberSet};
use lrntf::metrics::{rank_profile, EnergyMode};
use lrntf::solver::svt;
use lrntf::synth::{gen_abundances, SynthConfig};
use lrntf::tensor::{Mat, Tensor3};

fn mat_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    vec(-1.0..1.0f64, rows * cols).prop_map(move |data| Mat::from_vec(rows, cols, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mode3_is_linear_in_the_matrix(
        tdata in vec(-1.0..1.0f64, 3 * 4 * 5),
        xdata in vec(-1.0..1.0f64, 6 * 5),
        wdata in vec(-1.0..1.0f64, 6 * 5),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        let t = Tensor3::from_vec(3, 4, 5, tdata).unwrap();
        let x = Mat::from_vec(6, 5, xdata).unwrap();
        let w = Mat::from_vec(6, 5, wdata).unwrap();
        let mut combo = Mat::zeros(6, 5);
        for r in 0..6 {
            for c in 0..5 {
                combo.set(r, c, alpha * x.get(r, c) + beta * w.get(r, c));
            }
        }
        let lhs = t.mode3_product(&combo).unwrap();
        let tx = t.mode3_product(&x).unwrap();
        let tw = t.mode3_product(&w).unwrap();
        let scale = lhs.frob_norm().max(1.0);
        for (idx, l) in lhs.data().iter().enumerate() {
            let rhs = alpha * tx.data()[idx] + beta * tw.data()[idx];
            prop_assert!((l - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn outer_sums_equal_mode3_products(
        adata in vec(0.0..1.0f64, 4 * 4 * 3),
        bdata in vec(0.0..0.3f64, 4 * 4 * 3),
        cdata in vec(0.05..0.95f64, 7 * 3),
    ) {
        let ems = EndmemberSet::new(Mat::from_vec(7, 3, cdata).unwrap(), None).unwrap();
        let state = AbundanceState::new(
            Tensor3::from_vec(4, 4, 3, adata).unwrap(),
            Tensor3::from_vec(4, 4, 3, bdata).unwrap(),
        ).unwrap();
        let via_outer = forward(&state, &ems).unwrap();
        let mut via_mode3 = state.a.mode3_product(ems.c()).unwrap();
        let b_part = state.b.mode3_product(ems.m()).unwrap();
        for (x, y) in via_mode3.data_mut().iter_mut().zip(b_part.data()) {
            *x += y;
        }
        let scale = via_outer.frob_norm().max(1.0);
        for (x, y) in via_outer.data().iter().zip(via_mode3.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn svt_is_nonexpansive(
        x in mat_strategy(6, 5),
        y in mat_strategy(6, 5),
        tau in 0.0..1.0f64,
    ) {
        let sx = svt(&x, tau).unwrap();
        let sy = svt(&y, tau).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for ((a, b), (c, d)) in sx.data().iter().zip(sy.data()).zip(x.data().iter().zip(y.data())) {
            num += (a - b) * (a - b);
            den += (c - d) * (c - d);
        }
        prop_assert!(num.sqrt() <= den.sqrt() + 1e-10);
    }

    #[test]
    fn generated_abundances_stay_on_the_simplex(
        s in 2usize..5,
        k_half in 0usize..3,
        seed in any::<u64>(),
    ) {
        let cfg = SynthConfig {
            s,
            k: 2 * k_half + 1,
            r: 4,
            seed,
            ..SynthConfig::default()
        };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let a = gen_abundances(&cfg, &mut rng);
        for fiber in a.data().chunks_exact(4) {
            let sum: f64 = fiber.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(fiber.iter().all(|&v| v >= 0.0));
            prop_assert!(fiber.iter().cloned().fold(0.0f64, f64::max) <= cfg.purity_cap + 1e-12);
        }
    }

    #[test]
    fn fcls_output_is_always_feasible(
        ydata in vec(-0.5..1.5f64, 8),
        cdata in vec(0.05..0.95f64, 8 * 3),
    ) {
        let c = Mat::from_vec(8, 3, cdata).unwrap();
        let a = fcls_pixel(&ydata, &c, &FclsConfig::default()).unwrap();
        prop_assert!(a.iter().all(|&v| v >= 0.0));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn cube_encode_decode_round_trips(
        nr in 1usize..6,
        nc in 1usize..6,
        d in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let data: Vec<f64> = (0..nr * nc * d)
            .map(|_| rand::Rng::gen_range(&mut rng, -1e6..1e6))
            .collect();
        let t = Tensor3::from_vec(nr, nc, d, data).unwrap();
        let (header, payload) = lrntf::io::encode_cube(&t);
        let back = lrntf::io::decode_cube(&header, &payload).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn cumulative_energy_is_monotone_and_normalized(
        m in mat_strategy(7, 6),
    ) {
        for mode in [EnergyMode::Sigma, EnergyMode::SigmaSq] {
            let p = rank_profile(&m, 0.95, mode).unwrap();
            for w in p.cum_energy.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-15);
            }
            prop_assert!((p.cum_energy.last().unwrap() - 1.0).abs() < 1e-12);
            prop_assert!(p.dim95 >= 1 && p.dim95 <= 6);
        }
    }
}
