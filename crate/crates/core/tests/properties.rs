use proptest::prelude::*;
use semeq_core::config::ExperimentConfig;
use semeq_core::equalizer::{gaussian_ot_map, Mat2, COV_REGULARIZER};
use semeq_core::gridworld::{enumerate_states, optimal_action_set, GridConfig};

fn spd() -> impl Strategy<Value = Mat2> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c, d)| {
        [
            [a * a + b * b + 0.05, a * c + b * d],
            [a * c + b * d, c * c + d * d + 0.05],
        ]
    })
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    std::array::from_fn(|r| std::array::from_fn(|c| a[r][0] * b[0][c] + a[r][1] * b[1][c]))
}

fn regularized(m: &Mat2) -> Mat2 {
    [
        [m[0][0] + COV_REGULARIZER, m[0][1]],
        [m[1][0], m[1][1] + COV_REGULARIZER],
    ]
}

proptest! {
    #[test]
    fn ot_map_is_spd_and_pushes_covariance(cs in spd(), ct in spd(), ms in prop::array::uniform2(-3.0..3.0f64), mt in prop::array::uniform2(-3.0..3.0f64)) {
        let map = gaussian_ot_map(ms, &cs, mt, &ct).unwrap();
        let a = map.linear;
        prop_assert!((a[0][1] - a[1][0]).abs() < 1e-12);
        prop_assert!(a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0);
        let pushed = mul(&mul(&a, &regularized(&cs)), &a);
        let target = regularized(&ct);
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((pushed[r][c] - target[r][c]).abs() <= 1e-8 * (1.0 + target[r][c].abs()));
            }
        }
        let y = map.apply(ms);
        prop_assert!((y[0] - mt[0]).abs() < 1e-9 && (y[1] - mt[1]).abs() < 1e-9);
    }

    #[test]
    fn state_indices_are_a_bijection(width in 2usize..7, height in 2usize..7) {
        let grid = GridConfig { width, height, ..GridConfig::default() };
        let states = enumerate_states(&grid).unwrap();
        prop_assert_eq!(states.len(), grid.n_states());
        for (i, s) in states.iter().enumerate() {
            prop_assert_eq!(s.state_index(&grid), i);
            let opt = optimal_action_set(s).unwrap();
            let axis_aligned = s.agent.x == s.treasure.x || s.agent.y == s.treasure.y;
            prop_assert_eq!(opt.len(), if axis_aligned { 1 } else { 2 });
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), snrs in prop::collection::vec(-30.0..60.0f64, 1..6), episodes in 1usize..5000) {
        let mut cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        cfg.sweep.snr_grid_db = snrs;
        cfg.sweep.n_episodes = episodes;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
