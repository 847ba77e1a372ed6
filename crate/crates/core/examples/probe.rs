use stopt_core::baseline::BaselineProblem;
use stopt_core::elasticity::MaterialModel;
use stopt_core::grid::{build_grid, BuildPlate, Grid};
use stopt_core::model::{Model, ModelSpec, Terms};
use stopt_core::optimizer::{run_optimization, RunConfig};
use stopt_core::projection::ContinuationSchedule;

// Hook mask: column of width w up from the plate, arm of height w rightward
// along the top, and a fat block of width bw hanging depth bd below the
// arm's far end. The block overhangs: plate-offset ordering deposits it
// before the arm that carries it.
fn hook(nx: usize, ny: usize, w: usize, bw: usize, bd: usize, cut: usize) -> Vec<bool> {
    let mut mask = vec![false; nx * ny];
    let arm_y0 = ny - w;
    for iy in 0..ny {
        for ix in 0..nx {
            let mut solid = false;
            if ix < w && iy < ny {
                solid = true;
                if iy >= arm_y0 && (w - 1 - ix) + (iy - arm_y0) >= cut {
                    solid = false;
                }
            }
            if ix >= w && iy >= arm_y0 {
                solid = true;
                if ix >= nx - bw && (ix - (nx - bw)) + (iy - arm_y0) >= cut {
                    solid = false;
                }
            }
            if ix >= nx - bw && iy >= arm_y0 - bd && iy < arm_y0 {
                solid = true;
            }
            if solid {
                mask[ix * ny + iy] = true;
            }
        }
    }
    mask
}

fn run(tag: &str, grid: &Grid, mask: &[bool], n_layers: usize, eps: f64, iters: usize, use_geo: bool, bconst: f64, radius: f64) {
    let volume = mask.iter().filter(|&&m| m).count() as f64;
    let model = Model::new(ModelSpec {
        n_layers,
        v0: volume,
        filter_radius: radius,
        material: MaterialModel::default(),
        kappa_min: 1e-4,
        drain_beta: 0.1,
        char_length: None,
        mask: Some(mask.to_vec()),
        fixed_layout: true,
        supports: vec![],
        loads: vec![],
        gravity: 0.0,
        eps0: 0.01,
        distortion: None,
        terms: Terms { sequence_deviation: true, ..Terms::default() },
        grid: grid.clone(),
    })
    .unwrap();
    let mut problem = BaselineProblem::new(model, eps).unwrap();
    let t0 = if use_geo {
        let (t, u) = problem.geodesic_initial();
        assert_eq!(u, 0);
        t
    } else {
        problem.euclidean_initial()
    };
    if use_geo && std::env::var("STOPT_PROBE_SUPPLY").is_ok() {
        let mut counts = vec![0usize; n_layers];
        for (e, &v) in t0.iter().enumerate() {
            if mask[e] {
                let j = ((v * n_layers as f64) as usize).min(n_layers - 1);
                counts[j] += 1;
            }
        }
        let budget = volume / n_layers as f64;
        println!("  {tag} budget {budget:.1} supply {counts:?}");
    }
    let tf0 = problem.time_field(&t0);
    let init_report = problem.validity(&tf0);
    let init_smooth = problem.smoothness(&tf0);
    let schedule = if bconst > 0.0 {
        ContinuationSchedule { beta_initial: bconst, growth: 2.0, period: 25, beta_max: bconst }
    } else {
        ContinuationSchedule { beta_initial: 8.0, growth: 2.0, period: 25, beta_max: 64.0 }
    };
    let mut config = RunConfig { max_iterations: iters, schedule, ..RunConfig::default() };
    if let Ok(mv) = std::env::var("STOPT_PROBE_MOVE") {
        config.mma.move_limit = mv.parse().unwrap();
    }
    if let Ok(a) = std::env::var("STOPT_PROBE_ASY") {
        config.mma.asy_init = a.parse().unwrap();
    }
    if std::env::var("STOPT_PROBE_TIMELINE").is_ok() {
        use stopt_core::optimizer::OptimizationProblem;
        let (xmin, xmax) = problem.bounds();
        let mut x: Vec<f64> = t0
            .iter()
            .enumerate()
            .map(|(j, &v)| v.clamp(xmin[j], xmax[j]))
            .collect();
        let mut mma = stopt_mma::Mma::new(xmin, xmax, 1, config.mma.clone());
        for iteration in 1..=iters {
            let beta = config.schedule.value(iteration);
            let eval = problem.evaluate(&x, beta).unwrap();
            let x_new = mma.step(&x, &eval.objective_gradient, &eval.constraints, &eval.constraint_jacobian);
            let change = x.iter().zip(&x_new).fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
            x = x_new;
            if iteration % 50 == 0 || iteration == iters {
                let tfx = problem.time_field(&x);
                let rep = problem.validity(&tfx);
                println!(
                    "  {tag} it{iteration}: min={} max={} smooth={:.2e} obj={:.3e} change={:.2e}",
                    rep.interior_minima.len(),
                    rep.enclosed_maxima.len(),
                    problem.smoothness(&tfx),
                    eval.raw_objective,
                    change
                );
            }
        }
        return;
    }
    let result = run_optimization(&mut problem, t0, &config).unwrap();
    {
        let tf = problem.time_field(&result.x);
        let rep = problem.validity(&tf);
        println!(
            "  {tag} phase A: min={} max={} smooth={:.3e}",
            rep.interior_minima.len(),
            rep.enclosed_maxima.len(),
            problem.smoothness(&tf)
        );
    }
    let bmax = config.schedule.beta_max;
    let mut settle = RunConfig {
        max_iterations: 300,
        schedule: ContinuationSchedule { beta_initial: bmax, growth: 2.0, period: 25, beta_max: bmax },
        ..RunConfig::default()
    };
    settle.mma.move_limit = 0.02;
    settle.mma.asy_init = 0.05;
    settle.mma.asy_decr = 0.5;
    let result = run_optimization(&mut problem, result.x, &settle).unwrap();
    let mut settle2 = settle.clone();
    settle2.mma.move_limit = 0.005;
    settle2.mma.asy_init = 0.02;
    let result = run_optimization(&mut problem, result.x, &settle2).unwrap();
    let mut settle3 = settle.clone();
    settle3.max_iterations = 400;
    settle3.mma.move_limit = 0.002;
    settle3.mma.asy_init = 0.01;
    let result = run_optimization(&mut problem, result.x, &settle3).unwrap();
    let tf = problem.time_field(&result.x);
    if std::env::var("STOPT_PROBE_PROFILE").is_ok() {
        let ny = grid.ny();
        let line = |label: &str, cells: Vec<(usize, usize)>, f: &[f64]| {
            let vals: Vec<String> = cells
                .iter()
                .map(|&(ix, iy)| {
                    let e = ix * ny + iy;
                    if mask[e] { format!("{:.4}", f[e]) } else { "  .   ".into() }
                })
                .collect();
            println!("    {tag} {label}: {}", vals.join(" "));
        };
        let arm: Vec<(usize, usize)> = (6..48).step_by(3).map(|ix| (ix, 37)).collect();
        let col: Vec<(usize, usize)> = (0..40).step_by(3).map(|iy| (3, iy)).collect();
        let blk: Vec<(usize, usize)> = (16..34).step_by(3).map(|iy| (45, iy)).collect();
        line("arm  init", arm.clone(), &tf0);
        line("arm  conv", arm, &tf);
        line("col  init", col.clone(), &tf0);
        line("col  conv", col, &tf);
        line("blk  init", blk.clone(), &tf0);
        line("blk  conv", blk, &tf);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (e, &m) in mask.iter().enumerate() {
            if m {
                lo = lo.min(tf[e]);
                hi = hi.max(tf[e]);
            }
        }
        println!("    {tag} conv t range [{lo:.4}, {hi:.4}]");
    }
    let report = problem.validity(&tf);
    println!(
        "{tag}: init(min={} max={} smooth={:.2e}) final(min={:?} max={:?} smooth={:.3e} obj {:.3e}->{:.3e} conv={})",
        init_report.interior_minima.len(),
        init_report.enclosed_maxima.len(),
        init_smooth,
        report.interior_minima,
        report.enclosed_maxima,
        problem.smoothness(&tf),
        result.history.first().unwrap().objective,
        result.history.last().unwrap().objective,
        result.converged,
    );
    let ny = grid.ny();
    for &e in &report.interior_minima {
        let te = tf[e];
        let gap: f64 = grid
            .neighbors4(e)
            .filter(|&k| mask[k])
            .map(|k| tf[k] - te)
            .fold(f64::INFINITY, f64::min);
        println!("    min at ({},{}) t={te:.5} gap {gap:.2e}", e / ny, e % ny);
        let (cx, cy) = (e / ny, e % ny);
        for dy in (0..5).rev() {
            let row: Vec<String> = (0..5)
                .map(|dx| {
                    let (ix, iy) = (cx + dx, cy + dy);
                    if ix < 2 || iy < 2 || ix - 2 >= grid.nx() || iy - 2 >= grid.ny() {
                        return "   .    ".to_string();
                    }
                    let k = (ix - 2) * ny + (iy - 2);
                    if mask[k] {
                        format!("{:.5}", tf[k])
                    } else {
                        "   .    ".to_string()
                    }
                })
                .collect();
            println!("      {}", row.join(" "));
        }
    }
    for &e in &report.enclosed_maxima {
        let te = tf[e];
        let gap: f64 = grid
            .neighbors4(e)
            .filter(|&k| mask[k])
            .map(|k| te - tf[k])
            .fold(f64::INFINITY, f64::min);
        println!("    max at ({},{}) t={te:.5} gap {gap:.2e}", e / ny, e % ny);
    }
}

fn main() {
    let bconst: f64 = std::env::args().nth(1).map(|v| v.parse().unwrap()).unwrap_or(0.0);
    let radius: f64 = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(1.5);
    let iters: usize = std::env::args().nth(3).map(|v| v.parse().unwrap()).unwrap_or(500);
    let n: usize = std::env::args().nth(4).map(|v| v.parse().unwrap()).unwrap_or(10);
    let cut: usize = std::env::args().nth(5).map(|v| v.parse().unwrap()).unwrap_or(6);
    let bd: usize = std::env::args().nth(6).map(|v| v.parse().unwrap()).unwrap_or(18);
    let mask = hook(48, 40, 6, 6, bd, cut);
    let grid = build_grid(48, 40, 1.0, BuildPlate::Bottom).unwrap();
    run("full euclid", &grid, &mask, n, 1e-6, iters, false, bconst, radius);
    run("full geo   ", &grid, &mask, n, 1e-6, iters, true, bconst, radius);
}
