//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use onsager::diagnostics::{self, check_dissipation_inequality, DiagnosticsRow};
use onsager::grid::{self, CellField, FaceField, PeriodicGrid};
use onsager::models::{
    self, AllenCahn, BulkPotential, CahnHilliard, DissipationMode, FokkerPlanck, MaxwellStefan, ModelSpec, Pnp,
    PorousMedia, SystemState,
};
use onsager::optim::OptimizerConfig;
use onsager::step::{advance, build_step, ode_minimizing_movement, QuadraticPotential, StepProblem, StepResult};
use onsager::Error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    println!("{} criterion {id}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn sin2(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

fn field(g: PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> CellField {
    CellField::from_fn(g, f).unwrap()
}

struct Case {
    name: &'static str,
    model: ModelSpec,
    state: SystemState,
}

fn grid1() -> PeriodicGrid {
    PeriodicGrid::unit(1, 16).unwrap()
}

fn fp_case() -> Case {
    let g = grid1();
    Case {
        name: "fokker_planck",
        model: ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: field(g, |x| 0.5 * (2.0 * PI * x[0]).cos()),
            mode: DissipationMode::Frozen,
        }),
        state: SystemState::scalar(field(g, |x| 1.0 + 0.4 * sin2(x[0]))),
    }
}

fn pnp_initial(g: PeriodicGrid) -> SystemState {
    let prof = |t: f64| 1.02 + (2.0 * PI * t).sin() * (2.0 * PI * t).cos();
    SystemState::new(vec![field(g, |x| prof(x[0])), field(g, |x| prof(x[1]))]).unwrap()
}

fn pnp_model(g: PeriodicGrid) -> ModelSpec {
    ModelSpec::Pnp(Pnp {
        charges: vec![1.0, -1.0],
        diffusivities: vec![1.0, 1.0],
        permittivity: 1.0,
        fixed_charge: CellField::constant(g, 0.0),
    })
}

fn ms_case() -> Case {
    let g = grid1();
    let u1 = field(g, |x| 0.3 + 0.1 * sin2(x[0]));
    let u2 = field(g, |x| 0.3 - 0.1 * (2.0 * PI * x[0]).cos());
    let u3 = CellField::new(g, u1.values().iter().zip(u2.values()).map(|(a, b)| 1.0 - a - b).collect()).unwrap();
    Case {
        name: "maxwell_stefan",
        model: ModelSpec::MaxwellStefan(MaxwellStefan::uniform(3, 1.0).unwrap()),
        state: SystemState::new(vec![u1, u2, u3]).unwrap(),
    }
}

fn cases() -> Vec<Case> {
    let g = grid1();
    let g2 = PeriodicGrid::unit(2, 8).unwrap();
    let sat = field(g, |x| 0.5 + 0.3 * sin2(x[0]));
    let sat2 = CellField::new(g, sat.values().iter().map(|v| 1.0 - v).collect()).unwrap();
    vec![
        Case {
            name: "allen_cahn",
            model: ModelSpec::AllenCahn(AllenCahn {
                alpha: 0.01,
                xi0: 1.0,
                bulk: BulkPotential::double_well(),
            }),
            state: SystemState::scalar(field(g, |x| 0.6 * sin2(x[0]))),
        },
        Case {
            name: "cahn_hilliard",
            model: ModelSpec::CahnHilliard(CahnHilliard {
                alpha: 0.05,
                mobility: 1.0,
                bulk: BulkPotential::double_well(),
            }),
            state: SystemState::scalar(field(g, |x| 0.1 + 0.5 * (2.0 * PI * x[0]).cos())),
        },
        fp_case(),
        Case {
            name: "pnp",
            model: pnp_model(g2),
            state: pnp_initial(g2),
        },
        ms_case(),
        Case {
            name: "porous_media",
            model: ModelSpec::PorousMedia(PorousMedia {
                porosity: field(g, |x| 0.2 + 0.05 * (2.0 * PI * x[0]).cos()),
                sigma: vec![1.0, 1.0],
                quad: vec![0.0, 0.5, 0.5, 0.0],
                lin: vec![0.0, 0.2],
                viscosities: vec![0.9, 0.1],
                rel_perm_exponent: 3,
                permeability: CellField::constant(g, 1.0),
            }),
            state: SystemState::new(vec![sat, sat2]).unwrap(),
        },
    ]
}

struct Trajectory {
    rows: Vec<DiagnosticsRow>,
}

fn run(model: &ModelSpec, state: &SystemState, tau: f64, steps: usize, cfg: &OptimizerConfig) -> Trajectory {
    let g = *state.grid();
    let mut rows = vec![DiagnosticsRow::initial(model, state, 0.0).unwrap()];
    let mut current = state.clone();
    for k in 1..=steps {
        let problem = build_step(model, &current, tau, &g).unwrap();
        let out = advance(&problem, cfg).unwrap_or_else(|e| panic!("{} step {k}: {e}", model.name()));
        rows.push(DiagnosticsRow::from_step(&problem, &out, k, k as f64 * tau));
        current = out.state;
    }
    Trajectory { rows }
}

fn smoke_runs() -> Vec<(String, ModelSpec, Trajectory)> {
    let mut out = Vec::new();
    for case in cases() {
        for tau in [1e-3, 1e-1] {
            let traj = run(&case.model, &case.state, tau, 20, &OptimizerConfig::newton());
            out.push((format!("{} tau={tau}", case.name), case.model.clone(), traj));
        }
    }
    out
}

#[test]
fn criteria_1_2_3_smoke_trajectories() {
    let start = Instant::now();
    let runs = smoke_runs();
    let elapsed = start.elapsed().as_secs_f64();

    let mut worst_energy = f64::NEG_INFINITY;
    let mut ok1 = elapsed < 60.0;
    for (label, _, traj) in &runs {
        for w in traj.rows.windows(2) {
            let slack = w[1].energy + w[1].dissipation_over_tau - w[0].energy;
            worst_energy = worst_energy.max(slack / (1.0 + w[0].energy.abs()));
            if !check_dissipation_inequality(&w[0], &w[1]) {
                println!("  energy inequality violated in {label} at step {}", w[1].step);
                ok1 = false;
            }
        }
    }
    report(
        1,
        "energy-dissipation inequality, 6 models x 2 time steps x 20 steps",
        ok1,
        &format!("max relative excess {worst_energy:.3e}, runtime {elapsed:.1}s"),
    );

    let mut worst_mass: f64 = 0.0;
    for (_, model, traj) in &runs {
        if !model.is_conserved() {
            continue;
        }
        let first = &traj.rows[0].mass;
        for row in &traj.rows {
            for (m0, m) in first.iter().zip(&row.mass) {
                worst_mass = worst_mass.max((m - m0).abs() / m0.abs().max(1e-300));
            }
        }
    }
    report(
        2,
        "mass conservation over the horizon",
        worst_mass <= 1e-10,
        &format!("max relative drift {worst_mass:.3e}"),
    );

    let mut min_value = f64::INFINITY;
    for (_, model, traj) in &runs {
        if !model.requires_positivity() {
            continue;
        }
        for row in &traj.rows {
            min_value = min_value.min(row.min_value.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    report(
        3,
        "positivity for FP, PNP, MS and porous media",
        min_value > 0.0,
        &format!("smallest cell value {min_value:.3e}"),
    );
}

#[test]
fn criterion_4_pnp_example_scale() {
    let start = Instant::now();
    let g = PeriodicGrid::unit(2, 20).unwrap();
    assert!((g.spacing() - 0.05).abs() < 1e-15);
    let model = pnp_model(g);
    let traj = run(&model, &pnp_initial(g), 1e-4, 50, &OptimizerConfig::newton());
    let decreasing = traj.rows.windows(2).all(|w| w[1].energy < w[0].energy);
    let m0 = &traj.rows[0].mass;
    let drift = traj
        .rows
        .iter()
        .flat_map(|r| r.mass.iter().zip(m0).map(|(m, a)| (m - a).abs() / a))
        .fold(0.0, f64::max);
    let mut iters: Vec<usize> = traj.rows[1..].iter().map(|r| r.inner_iterations).collect();
    iters.sort_unstable();
    let median = iters[iters.len() / 2];
    let elapsed = start.elapsed().as_secs_f64();
    let ok = decreasing && drift <= 1e-10 && median <= 5 && elapsed < 300.0;
    report(
        4,
        "PNP example at h = 0.05, tau = 1e-4, 50 Newton steps",
        ok,
        &format!(
            "strictly decreasing: {decreasing}, initial masses {:.6}/{:.6}, max drift {drift:.3e}, median Newton iterations {median}, runtime {elapsed:.1}s",
            m0[0], m0[1]
        ),
    );
}

#[test]
fn criterion_5_backward_euler_oracle() {
    let g = PeriodicGrid::unit(1, 32).unwrap();
    let (alpha, xi0, c, tau) = (0.02, 1.5, 2.0, 0.05);
    let model = ModelSpec::AllenCahn(AllenCahn {
        alpha,
        xi0,
        bulk: BulkPotential {
            well_scale: 0.0,
            harmonic: c,
        },
    });
    let u0 = field(g, |x| sin2(x[0]) + 0.3 * (6.0 * PI * x[0]).cos());
    let problem = build_step(&model, &SystemState::scalar(u0.clone()), tau, &g).unwrap();
    let out = advance(&problem, &OptimizerConfig::newton()).unwrap();

    // (ξ₀/τ + c - α Δ_h) u = ξ₀ u^k / τ
    let n = 32;
    let h2 = g.spacing() * g.spacing();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = xi0 / tau + c + 2.0 * alpha / h2;
        a[(j, (j + 1) % n)] -= alpha / h2;
        a[(j, (j + n - 1) % n)] -= alpha / h2;
    }
    let rhs = DVector::from_iterator(n, u0.values().iter().map(|v| xi0 * v / tau));
    let direct = a.lu().solve(&rhs).unwrap();
    let err = out.state.components[0]
        .values()
        .iter()
        .zip(direct.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    report(
        5,
        "quadratic-well Allen-Cahn step equals backward Euler",
        err <= 1e-8,
        &format!("max difference {err:.3e}"),
    );
}

#[test]
fn criterion_6_ode_minimizing_movement() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let q = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let h = &q * q.transpose() + DMatrix::identity(n, n) * 0.1;
        let tau = 0.05 + rng.random::<f64>();
        let yk = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let pot = QuadraticPotential {
            hessian: h.clone(),
            linear: DVector::zeros(n),
        };
        let a = DMatrix::identity(n, n);
        let y = ode_minimizing_movement(&a, &pot, &yk, tau).unwrap();
        let oracle = (&a / tau + &h).lu().solve(&(&a * &yk / tau)).unwrap();
        worst = worst.max((y - oracle).amax());
    }
    report(
        6,
        "ODE minimizing movement vs dense solve, 10 random SPD Hessians",
        worst <= 1e-12,
        &format!("max difference {worst:.3e}"),
    );
}

fn fp_smoke_step(tau: f64) -> StepProblem {
    let case = fp_case();
    build_step(&case.model, &case.state, tau, case.state.grid()).unwrap()
}

#[test]
fn criterion_7_aepg_unconditional_stability() {
    let problem = fp_smoke_step(0.1);
    let mut details = Vec::new();
    let mut ok = true;
    for eta in [0.01, 1.0, 100.0] {
        let cfg = OptimizerConfig {
            max_iterations: 5000,
            ..OptimizerConfig::aepg(eta)
        };
        let trace = match onsager::optim::solve(&problem, &cfg) {
            Ok(p) => p.r_trace,
            Err(Error::NoConvergence { partial: Some(p), .. }) => p.r_trace,
            Err(e) => panic!("AEPG eta={eta}: {e}"),
        };
        let monotone = trace.windows(2).all(|w| w[1] <= w[0]);
        ok &= monotone && trace.len() > 1;
        details.push(format!("eta={eta}: {} iterates, monotone {monotone}", trace.len()));
    }
    report(7, "AEPG r is non-increasing for every step size", ok, &details.join("; "));
}

#[test]
fn criterion_8_cross_solver_agreement() {
    let problem = fp_smoke_step(0.1);
    let newton = advance(&problem, &OptimizerConfig::newton()).unwrap();
    let pgd = advance(&problem, &OptimizerConfig::projected_gradient(1.0)).unwrap();
    let aepg = advance(&problem, &OptimizerConfig::aepg(1.0)).unwrap();
    let diff = |a: &StepResult, b: &StepResult| {
        let u = a.state.stacked();
        let v = b.state.stacked();
        let du = u.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let dm = a.flux[0]
            .values()
            .iter()
            .zip(b.flux[0].values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        du.max(dm)
    };
    let d1 = diff(&newton, &pgd);
    let d2 = diff(&newton, &aepg);
    report(
        8,
        "projected gradient, AEPG and Newton agree on the FP step",
        d1 <= 1e-6 && d2 <= 1e-6,
        &format!(
            "Newton-PGD {d1:.3e}, Newton-AEPG {d2:.3e}; iterations {}/{}/{}",
            newton.iterations, pgd.iterations, aepg.iterations
        ),
    );
}

#[test]
fn criterion_9_maxwell_stefan_equivalence() {
    let case = ms_case();
    let problem = build_step(&case.model, &case.state, 0.05, case.state.grid()).unwrap();
    let cfg = OptimizerConfig {
        kkt_tolerance: 1e-10,
        ..OptimizerConfig::newton()
    };
    let out = advance(&problem, &cfg).unwrap();
    let res = diagnostics::maxwell_stefan_residual(&problem, &out).unwrap();
    report(
        9,
        "Maxwell-Stefan step solves the explicit-implicit face equations",
        res <= 1e-8,
        &format!("max face residual {res:.3e}, Newton iterations {}", out.iterations),
    );
}

/// A feasible point near the initial one: random flux, `u` from the
/// continuity constraint.
fn random_feasible(problem: &StepProblem, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    use onsager::optim::ConstrainedProblem;
    let mut theta = problem.initial_point();
    let g = problem.grid();
    let s = problem.previous().components.len();
    if !problem.model().is_conserved() {
        for x in theta.iter_mut() {
            *x += scale * (rng.random::<f64>() - 0.5);
        }
        return theta;
    }
    let nc = g.cell_count();
    let nf = g.face_count();
    let mut flux: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..nf).map(|_| scale * g.spacing() * (rng.random::<f64>() - 0.5)).collect())
        .collect();
    if problem.model().has_simplex_constraint() {
        // fluxes must sum to a divergence-free field; make them sum to zero
        for f in 0..nf {
            let mean = flux.iter().map(|m| m[f]).sum::<f64>() / s as f64;
            for m in flux.iter_mut() {
                m[f] -= mean;
            }
        }
    }
    let weights: Option<Vec<f64>> = match problem.model() {
        ModelSpec::PorousMedia(p) => Some(p.porosity.values().to_vec()),
        _ => None,
    };
    for (i, m) in flux.iter().enumerate() {
        let div = grid::divergence_to_centers(&FaceField::new(*g, m.clone()).unwrap());
        for j in 0..nc {
            let w = weights.as_ref().map_or(1.0, |w| w[j]);
            theta[i * nc + j] -= div.values()[j] / w;
        }
        theta[s * nc + i * nf..s * nc + (i + 1) * nf].copy_from_slice(m);
    }
    let r: f64 = problem
        .apply_constraint(&theta)
        .iter()
        .zip(problem.constraint_rhs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(r < 1e-12, "constructed point is infeasible: {r:e}");
    theta
}

#[test]
fn criterion_10_gradient_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut cs = cases();
    let mut joint = fp_case();
    if let ModelSpec::FokkerPlanck(fp) = &mut joint.model {
        fp.mode = DissipationMode::Joint;
    }
    joint.name = "fokker_planck_joint";
    cs.push(joint);
    for case in &cs {
        let problem = build_step(&case.model, &case.state, 0.05, case.state.grid()).unwrap();
        for _ in 0..3 {
            let theta = random_feasible(&problem, &mut rng, 0.05);
            let grad = problem.objective_gradient(&theta).unwrap();
            let scale = grad.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let mut err: f64 = 0.0;
            for k in 0..theta.len() {
                let eps = 1e-6 * theta[k].abs().max(1e-2);
                let mut p = theta.clone();
                p[k] += eps;
                let fp = problem.objective_value(&p).unwrap();
                p[k] = theta[k] - eps;
                let fm = problem.objective_value(&p).unwrap();
                let fd = (fp - fm) / (2.0 * eps);
                err = err.max((fd - grad[k]).abs());
            }
            let rel = err / scale;
            if rel > 1e-6 {
                println!("  {}: relative error {rel:.3e}", case.name);
            }
            worst = worst.max(rel);
        }
    }
    report(
        10,
        "objective gradient vs central differences, 3 random feasible points per model",
        worst <= 1e-6,
        &format!("max relative error {worst:.3e}"),
    );
}

#[test]
fn criterion_11_discrete_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sbp: f64 = 0.0;
    for (dim, n) in [(1, 16), (2, 8), (2, 5)] {
        let g = PeriodicGrid::unit(dim, n).unwrap();
        for _ in 0..5 {
            let u = CellField::new(g, (0..g.cell_count()).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
            let m = FaceField::new(g, (0..g.face_count()).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
            let lhs = grid::cell_inner(&u, &grid::divergence_to_centers(&m));
            let rhs = -grid::face_inner(&grid::gradient_to_faces(&u), &m);
            sbp = sbp.max((lhs - rhs).abs());
        }
    }
    let mut homog: f64 = 0.0;
    for case in cases() {
        if !case.model.is_conserved() {
            continue;
        }
        let g = *case.state.grid();
        let m: Vec<FaceField> = (0..case.state.components.len())
            .map(|_| FaceField::new(g, (0..g.face_count()).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap())
            .collect();
        let base = models::dissipation(&case.model, &case.state, &m).unwrap();
        for lambda in [0.5, 3.0, -2.0, 1e-3] {
            let ml: Vec<FaceField> = m
                .iter()
                .map(|f| FaceField::new(g, f.values().iter().map(|x| lambda * x).collect()).unwrap())
                .collect();
            let val = models::dissipation(&case.model, &case.state, &ml).unwrap();
            homog = homog.max((val - lambda * lambda * base).abs() / (lambda * lambda * base).abs());
        }
    }
    report(
        11,
        "summation by parts and quadratic homogeneity of the dissipation",
        sbp <= 1e-13 && homog <= 1e-13,
        &format!("SBP defect {sbp:.3e}, homogeneity defect {homog:.3e}"),
    );
}

/// `C` in `max|u_100 - u_0| ≤ C h²`. Refinement over N = 16, 32, 64 gives
/// defects at solver-tolerance level (below 1e-10) at every resolution,
/// since the sampled Gibbs profile makes `μ` exactly constant; `C = 1` is
/// therefore a generous bound.
const GIBBS_CONSTANT: f64 = 1.0;

fn gibbs_defect(n: usize) -> (f64, f64) {
    let g = PeriodicGrid::unit(1, n).unwrap();
    let beta = 1.0;
    let potential = field(g, |x| (2.0 * PI * x[0]).cos());
    let raw = field(g, |x| (-beta * (2.0 * PI * x[0]).cos()).exp());
    let mass = grid::integrate_cells(&raw);
    let u0 = CellField::new(g, raw.values().iter().map(|v| v / mass).collect()).unwrap();
    let model = ModelSpec::FokkerPlanck(FokkerPlanck {
        beta,
        potential,
        mode: DissipationMode::Frozen,
    });
    let mut state = SystemState::scalar(u0.clone());
    for _ in 0..100 {
        let problem = build_step(&model, &state, 0.01, &g).unwrap();
        state = advance(&problem, &OptimizerConfig::newton()).unwrap().state;
    }
    let defect = state.components[0]
        .values()
        .iter()
        .zip(u0.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (defect, g.spacing())
}

#[test]
fn criterion_12_gibbs_fixed_point() {
    let mut ok = true;
    let mut details = Vec::new();
    for n in [16, 32, 64] {
        let (defect, h) = gibbs_defect(n);
        ok &= defect <= GIBBS_CONSTANT * h * h;
        details.push(format!("N={n}: {defect:.2e} (bound {:.2e})", GIBBS_CONSTANT * h * h));
    }
    report(12, "Fokker-Planck Gibbs state is preserved", ok, &details.join(", "));
}
