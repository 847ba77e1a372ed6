//! Method of moving asymptotes for smooth, bound-constrained nonlinear programs.
//!
//! Solves problems of the form
//!
//! ```text
//!   minimize    f(x)
//!   subject to  g_i(x) <= 0,   i = 1..m
//!               xmin_j <= x_j <= xmax_j
//! ```
//!
//! using Svanberg's sequential convex approximation. Every call to
//! [`Mma::step`] builds a separable convex subproblem around the current
//! iterate from the supplied gradients and constraint values, then solves it
//! with a primal-dual interior point method. The caller owns the outer loop
//! and provides fresh function values and gradients at each iterate.
//!
//! Constraints carry an elastic slack variable weighted by a large finite
//! penalty, so the subproblem is feasible even when the linearized
//! constraints are not; the slack vanishes whenever the true subproblem
//! admits a feasible point.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Tuning knobs for the asymptote updates and the subproblem penalties.
#[derive(Debug, Clone)]
pub struct Options {
    /// Per-iteration move limit as a fraction of the variable range.
    pub move_limit: f64,
    /// Initial asymptote distance as a fraction of the variable range.
    pub asy_init: f64,
    /// Asymptote expansion factor applied on non-oscillating variables.
    pub asy_incr: f64,
    /// Asymptote contraction factor applied on oscillating variables.
    pub asy_decr: f64,
    /// Minimum curvature regularization of the subproblem.
    pub raa0: f64,
    /// Fractional gap kept between the asymptotes and the trust bounds.
    pub albefa: f64,
    /// Weight of the artificial variable z in the subproblem objective.
    pub a0: f64,
    /// Elastic penalty on constraint slack variables.
    pub c: f64,
    /// Quadratic penalty on constraint slack variables.
    pub d: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            move_limit: 0.2,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            raa0: 1e-5,
            albefa: 0.1,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

/// Persistent state of the optimizer: asymptotes and the two previous
/// iterates that drive their adaptation.
pub struct Mma {
    n: usize,
    m: usize,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    opts: Options,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iter: usize,
}

impl Mma {
    /// Creates an optimizer for `xmin.len()` variables and `m` constraints.
    ///
    /// Variables with `xmax - xmin` below 1e-12 are treated as frozen: they
    /// are excluded from the subproblem and passed through unchanged.
    pub fn new(xmin: Vec<f64>, xmax: Vec<f64>, m: usize, opts: Options) -> Self {
        assert_eq!(xmin.len(), xmax.len());
        assert!(m >= 1, "at least one constraint is required");
        assert!(xmin.iter().zip(&xmax).all(|(l, u)| l <= u));
        let n = xmin.len();
        Mma {
            n,
            m,
            xmin,
            xmax,
            opts,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
            iter: 0,
        }
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    pub fn num_constraints(&self) -> usize {
        self.m
    }

    /// Lower asymptotes of the most recent subproblem.
    pub fn lower_asymptotes(&self) -> &[f64] {
        &self.low
    }

    /// Upper asymptotes of the most recent subproblem.
    pub fn upper_asymptotes(&self) -> &[f64] {
        &self.upp
    }

    /// Performs one outer iteration and returns the next iterate.
    ///
    /// `df` is the objective gradient, `g` the constraint values (feasible
    /// when `<= 0`) and `dg` the constraint Jacobian stored row-major, so
    /// `dg[i * n + j]` holds the derivative of constraint `i` with respect
    /// to variable `j`. The returned vector always satisfies the box bounds
    /// and the move limit.
    pub fn step(&mut self, x: &[f64], df: &[f64], g: &[f64], dg: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert_eq!(df.len(), self.n);
        assert_eq!(g.len(), self.m);
        assert_eq!(dg.len(), self.m * self.n);
        self.iter += 1;
        let (n, m) = (self.n, self.m);
        let o = &self.opts;

        // Active variables; frozen ones keep their value.
        let active: Vec<usize> = (0..n)
            .filter(|&j| self.xmax[j] - self.xmin[j] > 1e-12)
            .collect();
        let na = active.len();

        // Asymptote update. The first two iterations use the fixed spread,
        // afterwards the spread grows where the iterates move steadily and
        // shrinks where they oscillate.
        if self.iter <= 2 {
            for &j in &active {
                let range = self.xmax[j] - self.xmin[j];
                self.low[j] = x[j] - o.asy_init * range;
                self.upp[j] = x[j] + o.asy_init * range;
            }
        } else {
            for &j in &active {
                let range = self.xmax[j] - self.xmin[j];
                let osc = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if osc > 0.0 {
                    o.asy_incr
                } else if osc < 0.0 {
                    o.asy_decr
                } else {
                    1.0
                };
                let mut low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let mut upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                low = low.max(x[j] - 10.0 * range).min(x[j] - 0.01 * range);
                upp = upp.min(x[j] + 10.0 * range).max(x[j] + 0.01 * range);
                self.low[j] = low;
                self.upp[j] = upp;
            }
        }

        // Subproblem bounds: inside the asymptotes, the move limit and the
        // box constraints.
        let mut alfa = vec![0.0; na];
        let mut beta = vec![0.0; na];
        for (k, &j) in active.iter().enumerate() {
            let range = self.xmax[j] - self.xmin[j];
            alfa[k] = (self.low[j] + o.albefa * (x[j] - self.low[j]))
                .max(x[j] - o.move_limit * range)
                .max(self.xmin[j]);
            beta[k] = (self.upp[j] - o.albefa * (self.upp[j] - x[j]))
                .min(x[j] + o.move_limit * range)
                .min(self.xmax[j]);
        }

        // Separable approximation coefficients.
        let mut p0 = vec![0.0; na];
        let mut q0 = vec![0.0; na];
        let mut pq = vec![0.0; 2 * m * na];
        let mut ux2 = vec![0.0; na];
        let mut xl2 = vec![0.0; na];
        for (k, &j) in active.iter().enumerate() {
            let range = (self.xmax[j] - self.xmin[j]).max(1e-5);
            let ux1 = self.upp[j] - x[j];
            let xl1 = x[j] - self.low[j];
            ux2[k] = ux1 * ux1;
            xl2[k] = xl1 * xl1;
            let dpos = df[j].max(0.0);
            let dneg = (-df[j]).max(0.0);
            let smooth = 0.001 * (dpos + dneg) + o.raa0 / range;
            p0[k] = (dpos + smooth) * ux2[k];
            q0[k] = (dneg + smooth) * xl2[k];
        }
        let mut b = vec![0.0; m];
        for i in 0..m {
            let row = &dg[i * n..(i + 1) * n];
            let mut gi = -g[i];
            for (k, &j) in active.iter().enumerate() {
                let range = (self.xmax[j] - self.xmin[j]).max(1e-5);
                let dpos = row[j].max(0.0);
                let dneg = (-row[j]).max(0.0);
                let smooth = 0.001 * (dpos + dneg) + o.raa0 / range;
                let p = (dpos + smooth) * ux2[k];
                let q = (dneg + smooth) * xl2[k];
                pq[i * na * 2 + 2 * k] = p;
                pq[i * na * 2 + 2 * k + 1] = q;
                let ux1 = self.upp[j] - x[j];
                let xl1 = x[j] - self.low[j];
                gi += p / ux1 + q / xl1;
            }
            b[i] = gi;
        }

        let low_a: Vec<f64> = active.iter().map(|&j| self.low[j]).collect();
        let upp_a: Vec<f64> = active.iter().map(|&j| self.upp[j]).collect();
        let xsub = Subproblem {
            n: na,
            m,
            low: &low_a,
            upp: &upp_a,
            alfa: &alfa,
            beta: &beta,
            p0: &p0,
            q0: &q0,
            pq: &pq,
            b: &b,
            a0: o.a0,
            c: o.c,
            d: o.d,
        }
        .solve();

        let mut xnew = x.to_vec();
        for (k, &j) in active.iter().enumerate() {
            xnew[j] = xsub[k];
        }
        self.xold2.copy_from_slice(&self.xold1);
        self.xold1.copy_from_slice(x);
        xnew
    }
}

/// Separable convex subproblem data. `pq` interleaves the constraint
/// coefficients as `[p, q]` pairs per variable for cache friendliness.
struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    pq: &'a [f64],
    b: &'a [f64],
    a0: f64,
    c: f64,
    d: f64,
}

/// Full primal-dual point of the interior point method.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl<'a> Subproblem<'a> {
    fn solve(&self) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut pt = Point {
            x: (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect(),
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            xsi: vec![0.0; n],
            eta: vec![0.0; n],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        for j in 0..n {
            pt.xsi[j] = (1.0 / (pt.x[j] - self.alfa[j])).max(1.0);
            pt.eta[j] = (1.0 / (self.beta[j] - pt.x[j])).max(1.0);
        }

        let mut epsi = 1.0;
        while epsi > 1e-7 {
            let (mut rnorm, mut rmax) = self.residual(&pt, epsi);
            let mut inner = 0;
            while rmax > 0.9 * epsi && inner < 200 {
                inner += 1;
                let dir = self.newton_direction(&pt, epsi);

                // Largest step keeping every positive quantity at 1/1.01 of
                // its current value.
                let mut t = 1.0f64;
                let clip = |t: f64, v: f64, dv: f64| -> f64 {
                    if dv < 0.0 {
                        t.min(-v / (1.01 * dv))
                    } else {
                        t
                    }
                };
                for j in 0..n {
                    t = clip(t, pt.x[j] - self.alfa[j], dir.x[j]);
                    t = clip(t, self.beta[j] - pt.x[j], -dir.x[j]);
                    t = clip(t, pt.xsi[j], dir.xsi[j]);
                    t = clip(t, pt.eta[j], dir.eta[j]);
                }
                for i in 0..m {
                    t = clip(t, pt.y[i], dir.y[i]);
                    t = clip(t, pt.lam[i], dir.lam[i]);
                    t = clip(t, pt.mu[i], dir.mu[i]);
                    t = clip(t, pt.s[i], dir.s[i]);
                }
                t = clip(t, pt.z, dir.z);
                t = clip(t, pt.zet, dir.zet);

                let base = pt.clone();
                let mut steg = t;
                let mut tried = 0;
                loop {
                    apply_step(&mut pt, &base, &dir, steg);
                    let (rn, rm) = self.residual(&pt, epsi);
                    if rn <= rnorm || tried >= 50 {
                        rnorm = rn;
                        rmax = rm;
                        break;
                    }
                    tried += 1;
                    steg *= 0.5;
                }
            }
            epsi *= 0.1;
        }
        pt.x
    }

    /// Constraint activity vector g_i(x) of the approximation.
    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..self.m)
            .map(|i| {
                let row = &self.pq[i * n * 2..(i + 1) * n * 2];
                sum_chunks(n, |j| {
                    row[2 * j] / (self.upp[j] - x[j]) + row[2 * j + 1] / (x[j] - self.low[j])
                })
            })
            .collect()
    }

    fn residual(&self, pt: &Point, epsi: f64) -> (f64, f64) {
        let m = self.m;
        let gv = self.gvec(&pt.x);
        let (mut sq, mut mx) = par_residual_x(self, pt, epsi);

        let mut rest = Vec::with_capacity(4 * m + 2);
        for i in 0..m {
            rest.push(self.c + self.d * pt.y[i] - pt.mu[i] - pt.lam[i]);
            rest.push(gv[i] - pt.y[i] + pt.s[i] - self.b[i]);
            rest.push(pt.mu[i] * pt.y[i] - epsi);
            rest.push(pt.lam[i] * pt.s[i] - epsi);
        }
        rest.push(self.a0 - pt.zet);
        rest.push(pt.zet * pt.z - epsi);
        for r in rest {
            sq += r * r;
            mx = mx.max(r.abs());
        }
        (sq.sqrt(), mx)
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Point {
        let (n, m) = (self.n, self.m);

        // Per-variable quantities; the lambda-weighted numerators follow the
        // separable structure of the approximation.
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        let lam = &pt.lam;
        let pq = self.pq;
        par_for_each(n, &mut delx, &mut diagx, |j, dx, dgx| {
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let mut plam = self.p0[j];
            let mut qlam = self.q0[j];
            for i in 0..m {
                plam += lam[i] * pq[i * n * 2 + 2 * j];
                qlam += lam[i] * pq[i * n * 2 + 2 * j + 1];
            }
            *dx = plam / ux2 - qlam / xl2 - epsi / (pt.x[j] - self.alfa[j])
                + epsi / (self.beta[j] - pt.x[j]);
            *dgx = 2.0 * (plam / (ux2 * ux1) + qlam / (xl2 * xl1))
                + pt.xsi[j] / (pt.x[j] - self.alfa[j])
                + pt.eta[j] / (self.beta[j] - pt.x[j]);
        });

        let gv = self.gvec(&pt.x);
        let mut dely = vec![0.0; m];
        let mut dellam = vec![0.0; m];
        let mut diagy = vec![0.0; m];
        let mut diaglamyi = vec![0.0; m];
        for i in 0..m {
            dely[i] = self.c + self.d * pt.y[i] - pt.lam[i] - epsi / pt.y[i];
            dellam[i] = gv[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i];
            diagy[i] = self.d + pt.mu[i] / pt.y[i];
            diaglamyi[i] = pt.s[i] / pt.lam[i] + 1.0 / diagy[i];
        }
        let delz = self.a0 - epsi / pt.z;

        // Dual (m+1) x (m+1) system. GG[i][j] = dg_i/dx_j of the
        // approximation at the current point.
        let mut bb = vec![0.0; m + 1];
        let mut aa = vec![0.0; (m + 1) * (m + 1)];
        let gg_dot: Vec<f64> = (0..m)
            .map(|i| {
                sum_chunks(n, |j| {
                    let ux1 = self.upp[j] - pt.x[j];
                    let xl1 = pt.x[j] - self.low[j];
                    let gg = pq[i * n * 2 + 2 * j] / (ux1 * ux1)
                        - pq[i * n * 2 + 2 * j + 1] / (xl1 * xl1);
                    gg * delx[j] / diagx[j]
                })
            })
            .collect();
        for i in 0..m {
            bb[i] = dellam[i] + dely[i] / diagy[i] - gg_dot[i];
        }
        bb[m] = delz;
        // Lower triangle of GG * diag(1/diagx) * GG^T, mirrored afterwards.
        let tri: Vec<f64> = {
            let pairs: Vec<(usize, usize)> = (0..m)
                .flat_map(|i| (0..=i).map(move |k| (i, k)))
                .collect();
            pairs
                .par_iter()
                .map(|&(i, k)| {
                    sum_chunks_serial(n, |j| {
                        let ux1 = self.upp[j] - pt.x[j];
                        let xl1 = pt.x[j] - self.low[j];
                        let ggi = pq[i * n * 2 + 2 * j] / (ux1 * ux1)
                            - pq[i * n * 2 + 2 * j + 1] / (xl1 * xl1);
                        let ggk = pq[k * n * 2 + 2 * j] / (ux1 * ux1)
                            - pq[k * n * 2 + 2 * j + 1] / (xl1 * xl1);
                        ggi * ggk / diagx[j]
                    })
                })
                .collect()
        };
        let mut idx = 0;
        for i in 0..m {
            for k in 0..=i {
                aa[i * (m + 1) + k] = tri[idx];
                aa[k * (m + 1) + i] = tri[idx];
                idx += 1;
            }
            aa[i * (m + 1) + i] += diaglamyi[i];
            aa[i * (m + 1) + m] = 0.0;
            aa[m * (m + 1) + i] = 0.0;
        }
        aa[m * (m + 1) + m] = -pt.zet / pt.z;
        let sol = solve_dense(aa, bb, m + 1);
        let dlam = &sol[..m];
        let dz = sol[m];

        let mut dir = Point {
            x: vec![0.0; n],
            y: vec![0.0; m],
            z: dz,
            lam: dlam.to_vec(),
            xsi: vec![0.0; n],
            eta: vec![0.0; n],
            mu: vec![0.0; m],
            zet: -pt.zet + epsi / pt.z - pt.zet * dz / pt.z,
            s: vec![0.0; m],
        };
        par_for_each(n, &mut dir.x, &mut dir.xsi, |j, dxj, dxsij| {
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let mut gtd = 0.0;
            for i in 0..m {
                let gg = pq[i * n * 2 + 2 * j] / (ux1 * ux1)
                    - pq[i * n * 2 + 2 * j + 1] / (xl1 * xl1);
                gtd += gg * dlam[i];
            }
            *dxj = -delx[j] / diagx[j] - gtd / diagx[j];
            *dxsij = -pt.xsi[j] + epsi / (pt.x[j] - self.alfa[j])
                - pt.xsi[j] * *dxj / (pt.x[j] - self.alfa[j]);
        });
        for j in 0..n {
            dir.eta[j] = -pt.eta[j] + epsi / (self.beta[j] - pt.x[j])
                + pt.eta[j] * dir.x[j] / (self.beta[j] - pt.x[j]);
        }
        for i in 0..m {
            dir.y[i] = -dely[i] / diagy[i] + dlam[i] / diagy[i];
            dir.mu[i] = -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dir.y[i] / pt.y[i];
            dir.s[i] = -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i];
        }
        dir
    }
}

fn apply_step(pt: &mut Point, base: &Point, dir: &Point, t: f64) {
    for j in 0..pt.x.len() {
        pt.x[j] = base.x[j] + t * dir.x[j];
        pt.xsi[j] = base.xsi[j] + t * dir.xsi[j];
        pt.eta[j] = base.eta[j] + t * dir.eta[j];
    }
    for i in 0..pt.y.len() {
        pt.y[i] = base.y[i] + t * dir.y[i];
        pt.lam[i] = base.lam[i] + t * dir.lam[i];
        pt.mu[i] = base.mu[i] + t * dir.mu[i];
        pt.s[i] = base.s[i] + t * dir.s[i];
    }
    pt.z = base.z + t * dir.z;
    pt.zet = base.zet + t * dir.zet;
}

/// Stationarity residual over the x block, returned as (sum of squares, max).
fn par_residual_x(sp: &Subproblem, pt: &Point, epsi: f64) -> (f64, f64) {
    let n = sp.n;
    let m = sp.m;
    let parts: Vec<(f64, f64)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sq = 0.0f64;
            let mut mx = 0.0f64;
            for &j in chunk {
                let ux1 = sp.upp[j] - pt.x[j];
                let xl1 = pt.x[j] - sp.low[j];
                let mut plam = sp.p0[j];
                let mut qlam = sp.q0[j];
                for i in 0..m {
                    plam += pt.lam[i] * sp.pq[i * n * 2 + 2 * j];
                    qlam += pt.lam[i] * sp.pq[i * n * 2 + 2 * j + 1];
                }
                let rex = plam / (ux1 * ux1) - qlam / (xl1 * xl1) - pt.xsi[j] + pt.eta[j];
                let rexsi = pt.xsi[j] * (pt.x[j] - sp.alfa[j]) - epsi;
                let reeta = pt.eta[j] * (sp.beta[j] - pt.x[j]) - epsi;
                for r in [rex, rexsi, reeta] {
                    sq += r * r;
                    mx = mx.max(r.abs());
                }
            }
            (sq, mx)
        })
        .collect();
    parts
        .into_iter()
        .fold((0.0, 0.0), |(s, m), (ps, pm)| (s + ps, m.max(pm)))
}

/// Deterministic parallel sum: fixed chunking, ordered partials, serial fold.
fn sum_chunks(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    if n <= CHUNK {
        return (0..n).map(f).sum();
    }
    let parts: Vec<f64> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&j| f(j)).sum())
        .collect();
    parts.into_iter().sum()
}

fn sum_chunks_serial(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..n).map(f).sum()
}

/// Writes two derived vectors in parallel over fixed chunks.
fn par_for_each(
    n: usize,
    out1: &mut [f64],
    out2: &mut [f64],
    f: impl Fn(usize, &mut f64, &mut f64) + Sync,
) {
    if n <= CHUNK {
        for j in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            f(j, &mut a, &mut b);
            out1[j] = a;
            out2[j] = b;
        }
        return;
    }
    out1.par_chunks_mut(CHUNK)
        .zip(out2.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(ci, (c1, c2))| {
            let base = ci * CHUNK;
            for k in 0..c1.len() {
                f(base + k, &mut c1[k], &mut c2[k]);
            }
        });
}

/// Dense LU solve with partial pivoting for the small dual system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> Vec<f64> {
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if a[r * k + col].abs() > a[piv * k + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for cc in 0..k {
                a.swap(col * k + cc, piv * k + cc);
            }
            b.swap(col, piv);
        }
        let p = a[col * k + col];
        assert!(p.abs() > 1e-300, "singular dual system");
        for r in col + 1..k {
            let f = a[r * k + col] / p;
            if f != 0.0 {
                for cc in col..k {
                    a[r * k + cc] -= f * a[col * k + cc];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let mut s = b[r];
        for cc in r + 1..k {
            s -= a[r * k + cc] * x[cc];
        }
        x[r] = s / a[r * k + r];
    }
    x
}
