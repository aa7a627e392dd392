//! Analytic-oracle suite for the embedded interior-point solver: LP corner,
//! closed-form second-order cone projection, Chebyshev center against a grid
//! search, weak duality, determinism, and data-scaling robustness.

use conic_test_util::*;
use risbeam_conic::{
    residuals, solve, Cone, LinExpr, ProgramBuilder, SolveStatus, SolverSettings,
};

mod conic_test_util {
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        r.gen_range(lo..hi)
    }
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn lp_corner_min_x_subject_to_x_ge_3() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_var("x");
    pb.add_objective_term(x, -1.0); // maximize -x  ==  minimize x
    pb.nonneg(LinExpr::var(x) - LinExpr::constant(3.0), "x_ge_3");
    let p = pb.finish();
    let r = solve(&p, &settings());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 3.0).abs() < 1e-6, "x* = {} != 3", r.x[0]);
    assert!((r.objective + 3.0).abs() < 1e-6);
    assert!(r.duality_gap <= 1e-8);
}

/// Closed-form Euclidean projection onto the second-order cone.
fn soc_projection(point: &[f64]) -> Vec<f64> {
    let t = point[0];
    let xn = point[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn <= t {
        point.to_vec()
    } else if xn <= -t {
        vec![0.0; point.len()]
    } else {
        let a = (t + xn) / 2.0;
        let mut out = vec![a];
        out.extend(point[1..].iter().map(|v| v * a / xn));
        out
    }
}

#[test]
fn soc_projection_matches_closed_form() {
    let mut r = rng(7);
    let tight = SolverSettings {
        tol_gap: 1e-12,
        tol_feas: 1e-10,
        ..SolverSettings::default()
    };
    // Points strictly outside the cone (the nontrivial projections): an axis
    // point below the apex, and random draws resampled until exterior.
    let mut cases: Vec<Vec<f64>> = vec![vec![-1.5, 0.0, 0.0, 0.0]];
    for case in 0..5 {
        let dim = 3 + case;
        loop {
            let point: Vec<f64> = (0..dim).map(|_| uniform(&mut r, -2.0, 2.0)).collect();
            let xn = point[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if xn > point[0] + 0.1 {
                cases.push(point);
                break;
            }
        }
    }
    for (case, point) in cases.into_iter().enumerate() {
        let dim = point.len();
        let expect = soc_projection(&point);

        // minimize u  s.t.  u >= ||v - point||^2,  v in Q
        let mut pb = ProgramBuilder::new();
        let u = pb.add_var("u");
        let vs: Vec<_> = (0..dim).map(|i| pb.add_var(format!("v{i}"))).collect();
        pb.add_objective_term(u, -1.0);
        let dist_rows = vs
            .iter()
            .zip(&point)
            .map(|(&v, &c)| LinExpr::var(v) - LinExpr::constant(c))
            .collect();
        pb.quad_le(dist_rows, LinExpr::var(u), "sq_distance");
        pb.add_block(
            Cone::SecondOrder(dim),
            vs.iter().map(|&v| LinExpr::var(v)).collect(),
            "cone_membership",
        );
        let p = pb.finish();
        let res = solve(&p, &tight);
        assert_eq!(res.status, SolveStatus::Optimal, "case {case}");
        for i in 0..dim {
            assert!(
                (res.x[1 + i] - expect[i]).abs() < 1e-6,
                "case {case}: v[{i}] = {} expected {}",
                res.x[1 + i],
                expect[i]
            );
        }
    }
}

#[test]
fn chebyshev_center_matches_grid_search() {
    // Random bounded 2-D polytope around the origin.
    let mut r = rng(21);
    let mut halfplanes: Vec<(f64, f64, f64)> = Vec::new(); // a1 x + a2 y <= b
    for i in 0..7 {
        let ang = uniform(&mut r, 0.0, std::f64::consts::TAU) + i as f64;
        let b = uniform(&mut r, 0.6, 1.8);
        halfplanes.push((ang.cos(), ang.sin(), b));
    }

    // maximize rho s.t. a_i'c + rho ||a_i|| <= b_i
    let mut pb = ProgramBuilder::new();
    let cx = pb.add_var("cx");
    let cy = pb.add_var("cy");
    let rho = pb.add_var("rho");
    pb.add_objective_term(rho, 1.0);
    for (i, &(a1, a2, b)) in halfplanes.iter().enumerate() {
        let norm = (a1 * a1 + a2 * a2).sqrt();
        let expr = LinExpr::constant(b)
            - LinExpr::term(cx, a1)
            - LinExpr::term(cy, a2)
            - LinExpr::term(rho, norm);
        pb.nonneg(expr, format!("hp_{i}"));
    }
    pb.nonneg(LinExpr::var(rho), "rho_nonneg");
    let p = pb.finish();
    let res = solve(&p, &settings());
    assert_eq!(res.status, SolveStatus::Optimal);

    // Exhaustive grid oracle: coarse pass, then a fine pass around the best
    // coarse cell so the oracle resolution beats the comparison tolerance.
    let radius_at = |x: f64, y: f64| {
        halfplanes
            .iter()
            .map(|&(a1, a2, b)| (b - a1 * x - a2 * y) / (a1 * a1 + a2 * a2).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let grid_max = |x0: f64, x1: f64, y0: f64, y1: f64, steps: usize| {
        let mut best = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for ix in 0..=steps {
            for iy in 0..=steps {
                let x = x0 + (x1 - x0) * ix as f64 / steps as f64;
                let y = y0 + (y1 - y0) * iy as f64 / steps as f64;
                let rad = radius_at(x, y);
                if rad > best.2 {
                    best = (x, y, rad);
                }
            }
        }
        best
    };
    let coarse = grid_max(-2.0, 2.0, -2.0, 2.0, 400);
    let w = 2.0 * 4.0 / 400.0;
    let fine = grid_max(
        coarse.0 - w,
        coarse.0 + w,
        coarse.1 - w,
        coarse.1 + w,
        800,
    );
    assert!(
        (res.objective - fine.2).abs() < 1e-4,
        "radius {} vs grid {}",
        res.objective,
        fine.2
    );
}

#[test]
fn rotated_cone_quadratic_minimization() {
    // minimize ||v - p||^2 via the quad_le lifting; optimum is v = p.
    let p_target = [0.3, -1.2, 0.7];
    let mut pb = ProgramBuilder::new();
    let u = pb.add_var("u");
    let vs: Vec<_> = (0..3).map(|i| pb.add_var(format!("v{i}"))).collect();
    pb.add_objective_term(u, -1.0);
    let rows = vs
        .iter()
        .zip(&p_target)
        .map(|(&v, &t)| LinExpr::var(v) - LinExpr::constant(t))
        .collect();
    pb.quad_le(rows, LinExpr::var(u), "sq_dist");
    let p = pb.finish();
    let r = solve(&p, &settings());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.objective.abs() < 1e-7);
    for (i, &t) in p_target.iter().enumerate() {
        assert!((r.x[1 + i] - t).abs() < 1e-4);
    }
}

#[test]
fn weak_duality_and_residual_contract_on_optimal_results() {
    // A mixed LP/SOC instance; verify the SolveResult invariant fields.
    let mut pb = ProgramBuilder::new();
    let x = pb.add_var("x");
    let y = pb.add_var("y");
    pb.add_objective_term(x, 1.0);
    pb.add_objective_term(y, 0.5);
    pb.nonneg(LinExpr::constant(4.0) - LinExpr::var(x), "x_le_4");
    pb.norm_le(
        vec![LinExpr::var(x), LinExpr::var(y)],
        LinExpr::constant(3.0),
        "ball",
    );
    let p = pb.finish();
    let r = solve(&p, &settings());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.primal_residual <= 1e-8);
    assert!(r.dual_residual <= 1e-8);
    assert!(r.duality_gap <= 1e-8);
    // analytic: maximize x + y/2 over the radius-3 ball -> 3*sqrt(1+0.25)
    let expect = 3.0 * (1.25f64).sqrt();
    assert!((r.objective - expect).abs() < 1e-6);

    // the returned point passes the program's own residual check
    let (res, obj) = residuals(&p, &r.x).unwrap();
    for b in res {
        assert!(b.distance <= 1e-6, "block {} residual {}", b.label, b.distance);
    }
    assert!((obj - r.objective).abs() < 1e-9);
}

#[test]
fn primal_infeasible_certificate() {
    // x >= 3 and x <= 1 is infeasible.
    let mut pb = ProgramBuilder::new();
    let x = pb.add_var("x");
    pb.add_objective_term(x, -1.0);
    pb.nonneg(LinExpr::var(x) - LinExpr::constant(3.0), "x_ge_3");
    pb.nonneg(LinExpr::constant(1.0) - LinExpr::var(x), "x_le_1");
    let p = pb.finish();
    let r = solve(&p, &settings());
    assert_eq!(r.status, SolveStatus::PrimalInfeasible);
    // certificate: z >= 0, h'z = -1, |G'z| ~ 0 (internal h = b, G = -A)
    assert!(r.z.iter().all(|&v| v >= -1e-9));
}

#[test]
fn dual_infeasible_detects_unbounded_ascent() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_var("x");
    pb.add_objective_term(x, 1.0);
    pb.nonneg(LinExpr::var(x), "x_ge_0"); // maximize x, unbounded above
    let p = pb.finish();
    let r = solve(&p, &settings());
    assert_eq!(r.status, SolveStatus::DualInfeasible);
    assert!(r.x[0] > 0.0);
}

#[test]
fn determinism_identical_results_across_repeat_solves() {
    let mut build = || {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_var("x");
        let y = pb.add_var("y");
        pb.add_objective_term(x, 1.0);
        pb.add_objective_term(y, -0.25);
        pb.norm_le(
            vec![LinExpr::var(x), LinExpr::var(y) - LinExpr::constant(0.5)],
            LinExpr::constant(2.0),
            "ball",
        );
        pb.nonneg(LinExpr::var(y), "y_ge_0");
        pb.finish()
    };
    let r1 = solve(&build(), &settings());
    let r2 = solve(&build(), &settings());
    assert_eq!(r1.status, r2.status);
    assert_eq!(r1.iterations, r2.iterations);
    assert_eq!(r1.x, r2.x);
    assert_eq!(r1.z, r2.z);
}

#[test]
fn scaling_robustness_of_descaled_optimum() {
    // Scale all data by 10^+-3: optimum value scales linearly, descaled
    // solution agrees to 1e-5 relative.
    let base = |scale: f64| {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_var("x");
        let y = pb.add_var("y");
        pb.add_objective_term(x, scale);
        pb.add_objective_term(y, 0.5 * scale);
        pb.nonneg(
            LinExpr::constant(4.0 * scale) - LinExpr::term(x, scale),
            "x_le_4",
        );
        pb.norm_le(
            vec![LinExpr::term(x, scale), LinExpr::term(y, scale)],
            LinExpr::constant(3.0 * scale),
            "ball",
        );
        pb.finish()
    };
    let r0 = solve(&base(1.0), &settings());
    assert_eq!(r0.status, SolveStatus::Optimal);
    for scale in [1e3, 1e-3] {
        let r = solve(&base(scale), &settings());
        assert_eq!(r.status, SolveStatus::Optimal, "scale {scale}");
        let descaled = r.objective / scale;
        let rel = (descaled - r0.objective).abs() / r0.objective.abs();
        assert!(rel <= 1e-5, "scale {scale}: rel diff {rel}");
    }
}

#[test]
fn hand_built_interior_point_has_zero_residuals() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_var("x");
    let y = pb.add_var("y");
    pb.nonneg(LinExpr::var(x), "x_ge_0");
    pb.norm_le(
        vec![LinExpr::var(y)],
        LinExpr::var(x) + LinExpr::constant(1.0),
        "abs_y_le_x_plus_1",
    );
    let p = pb.finish();
    let (res, _) = residuals(&p, &[2.0, 1.5]).unwrap();
    for b in res {
        assert_eq!(b.distance, 0.0);
    }
}
