use approx::assert_relative_eq;
use onsager::grid::{self, CellField, FaceField, PeriodicGrid};
use onsager::models::{self, DissipationMode, FokkerPlanck, MaxwellStefan, ModelSpec, SystemState};
use onsager::optim::{apply_projection, OptimizerConfig};
use onsager::step::{advance, build_step};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = PeriodicGrid> {
    prop_oneof![(2usize..24).prop_map(|n| (1, n)), (2usize..7).prop_map(|n| (2, n))]
        .prop_map(|(d, n)| PeriodicGrid::new(d, n, 1.0 + n as f64 * 0.1).unwrap())
}

fn cells(g: PeriodicGrid, lo: f64, hi: f64) -> impl Strategy<Value = CellField> {
    prop::collection::vec(lo..hi, g.cell_count()).prop_map(move |v| CellField::new(g, v).unwrap())
}

fn faces(g: PeriodicGrid) -> impl Strategy<Value = FaceField> {
    prop::collection::vec(-1.0..1.0f64, g.face_count()).prop_map(move |v| FaceField::new(g, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts((u, m) in grid_strategy().prop_flat_map(|g| (cells(g, -1.0, 1.0), faces(g)))) {
        let lhs = grid::cell_inner(&u, &grid::divergence_to_centers(&m));
        let rhs = -grid::face_inner(&grid::gradient_to_faces(&u), &m);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn divergence_integrates_to_zero(m in grid_strategy().prop_flat_map(faces)) {
        let total = grid::integrate_cells(&grid::divergence_to_centers(&m));
        prop_assert!(total.abs() < 1e-11);
    }

    #[test]
    fn gradient_is_linear(
        (a, b) in grid_strategy().prop_flat_map(|g| (cells(g, -1.0, 1.0), cells(g, -1.0, 1.0))),
        s in -3.0..3.0f64,
    ) {
        let g = *a.grid();
        let combo = CellField::new(g, a.values().iter().zip(b.values()).map(|(x, y)| s * x + y).collect()).unwrap();
        let lhs = grid::gradient_to_faces(&combo);
        let ga = grid::gradient_to_faces(&a);
        let gb = grid::gradient_to_faces(&b);
        for k in 0..lhs.values().len() {
            let expect = s * ga.values()[k] + gb.values()[k];
            prop_assert!((lhs.values()[k] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn fp_dissipation_is_quadratic(
        (u, m) in grid_strategy().prop_flat_map(|g| (cells(g, 0.2, 2.0), faces(g))),
        lambda in -4.0..4.0f64,
    ) {
        let g = *u.grid();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::constant(g, 0.0),
            mode: DissipationMode::Frozen,
        });
        let state = SystemState::scalar(u);
        let base = models::dissipation(&model, &state, std::slice::from_ref(&m)).unwrap();
        let scaled = FaceField::new(g, m.values().iter().map(|x| lambda * x).collect()).unwrap();
        let val = models::dissipation(&model, &state, &[scaled]).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((val - lambda * lambda * base).abs() <= 1e-13 * (lambda * lambda * base).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn fp_step_conserves_mass_and_decays_energy(u in cells(PeriodicGrid::unit(1, 12).unwrap(), 0.3, 2.0), tau in 1e-3..0.5f64) {
        let g = *u.grid();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap(),
            mode: DissipationMode::Frozen,
        });
        let state = SystemState::scalar(u);
        let problem = build_step(&model, &state, tau, &g).unwrap();
        let out = advance(&problem, &OptimizerConfig::newton()).unwrap();
        let before = grid::integrate_cells(&state.components[0]);
        let after = grid::integrate_cells(&out.state.components[0]);
        assert_relative_eq!(before, after, max_relative = 1e-12);
        prop_assert!(out.energy_after + out.dissipation_value / tau <= out.energy_before + 1e-9 * (1.0 + out.energy_before.abs()));
        prop_assert!(out.state.components[0].min() > 0.0);
    }

    #[test]
    fn ms_step_keeps_volume_filling(a in prop::collection::vec(0.2..0.4f64, 10), b in prop::collection::vec(0.2..0.4f64, 10)) {
        let g = PeriodicGrid::unit(1, 10).unwrap();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.0 - x - y).collect();
        let state = SystemState::new(vec![
            CellField::new(g, a).unwrap(),
            CellField::new(g, b).unwrap(),
            CellField::new(g, c).unwrap(),
        ]).unwrap();
        let model = ModelSpec::MaxwellStefan(MaxwellStefan::uniform(3, 1.0).unwrap());
        let problem = build_step(&model, &state, 0.05, &g).unwrap();
        let out = advance(&problem, &OptimizerConfig::newton()).unwrap();
        prop_assert!(models::simplex_deviation(&out.state) <= 1e-10);
    }

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-1.0..1.0f64, 24)) {
        let g = PeriodicGrid::unit(1, 8).unwrap();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::constant(g, 0.0),
            mode: DissipationMode::Frozen,
        });
        let problem = build_step(&model, &SystemState::scalar(CellField::constant(g, 1.0)), 0.1, &g).unwrap();
        let once = apply_projection(&problem, &v, 1e-14).unwrap();
        let twice = apply_projection(&problem, &once, 1e-14).unwrap();
        for (x, y) in once.iter().zip(&twice) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let bv = problem.constraint_apply(&once);
        prop_assert!(bv.iter().all(|x| x.abs() < 1e-10));
    }
}
