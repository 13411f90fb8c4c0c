//! Monotone FISTA on the columns of a working set of nodes, with a Newton
//! polish on the active blocks once the active set settles.

use nalgebra::{DMatrix, DVector};

use super::{soft_threshold_in_place, IterRecord, SolveOptions};
use crate::error::Result;
use crate::forward::ForwardModel;
use crate::linalg::{dot, ColMatrix};

pub(super) struct InnerOutcome {
    pub iterations: usize,
    pub stalled: bool,
    pub passed: bool,
    pub trace: Vec<IterRecord>,
}

struct SubProblem<'a> {
    b: ColMatrix,
    w: &'a [f64],
    f: &'a [f64],
    lambda: f64,
}

impl SubProblem<'_> {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let bx = self.b.mul_vec(x);
        self.f.iter().zip(bx).map(|(f, a)| f - a).collect()
    }

    fn smooth(&self, r: &[f64]) -> f64 {
        r.iter().zip(self.w).map(|(r, w)| w * r * r).sum()
    }

    /// `Bᵀ W r`, i.e. the working-set dual values `c`.
    fn duals(&self, r: &[f64]) -> Vec<f64> {
        let wr: Vec<f64> = r.iter().zip(self.w).map(|(r, w)| r * w).collect();
        self.b.tr_mul_vec(&wr)
    }

    fn lipschitz(&self, iters: usize) -> f64 {
        let n = self.b.cols();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut est = 0.0;
        for _ in 0..iters {
            let bv = self.b.mul_vec(&v);
            let wbv: Vec<f64> = bv.iter().zip(self.w).map(|(a, w)| a * w).collect();
            let u = self.b.tr_mul_vec(&wbv);
            est = dot(&u, &u).sqrt();
            if est == 0.0 {
                break;
            }
            v = u.into_iter().map(|t| t / est).collect();
        }
        if est > 0.0 {
            2.0 * est
        } else {
            1.0
        }
    }

    /// Certificate gap relative to `λ/2` restricted to the working set.
    fn cert_gap(&self, x: &[f64], c: &[f64]) -> f64 {
        let half = 0.5 * self.lambda;
        let mut worst: f64 = 0.0;
        let mut tv = 0.0;
        let mut pairing = 0.0;
        for (xb, cb) in x.chunks_exact(3).zip(c.chunks_exact(3)) {
            let xn = (xb[0] * xb[0] + xb[1] * xb[1] + xb[2] * xb[2]).sqrt();
            if xn > 0.0 {
                let mut d2 = 0.0;
                for i in 0..3 {
                    let d = cb[i] - half * xb[i] / xn;
                    d2 += d * d;
                }
                worst = worst.max(d2.sqrt());
                tv += xn;
                pairing += xb[0] * cb[0] + xb[1] * cb[1] + xb[2] * cb[2];
            } else {
                let cn = (cb[0] * cb[0] + cb[1] * cb[1] + cb[2] * cb[2]).sqrt();
                worst = worst.max(cn - half);
            }
        }
        let pairing = (pairing - half * tv).abs() / (1.0 + tv);
        worst.max(pairing) / half
    }
}

impl SubProblem<'_> {
    fn value(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let r = self.residual(x);
        let v = self.smooth(&r) + self.lambda * super::block_norms_sum(x);
        (r, v)
    }

    /// Active-set Newton method started from `x`. Newton steps run on the
    /// nonzero blocks, where the objective is smooth; blocks the full step
    /// would collapse are set to zero and dropped, and once the steps stall
    /// the zero block with the largest `|c_j| > λ/2` is switched on at its
    /// exact line minimizer. Returns the final point when its objective is
    /// below `f_x`.
    fn newton_polish(&self, x: &[f64], f_x: f64, tol: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let half = 0.5 * self.lambda;
        let mut blocks: Vec<usize> =
            (0..x.len() / 3).filter(|&j| x[3 * j..3 * j + 3].iter().any(|&v| v != 0.0)).collect();
        let mut cur = x.to_vec();
        let mut r_cur = self.residual(&cur);
        let mut f_cur = f_x;
        let mut gram = self.gram(&blocks);
        let norm = |v: &[f64], j: usize| (v[3 * j].powi(2) + v[3 * j + 1].powi(2) + v[3 * j + 2].powi(2)).sqrt();
        let dot3 = |a: &[f64], b: &[f64], j: usize| (0..3).map(|i| a[3 * j + i] * b[3 * j + i]).sum::<f64>();
        let roundoff = |f: f64| 8.0 * f64::EPSILON * f.abs();
        for _ in 0..MAX_NEWTON_STEPS {
            let g_cur = self.alignment(&cur, &r_cur, &blocks);
            if blocks.is_empty() || g_cur <= 1e-2 * tol * half {
                if !self.activate(&mut cur, &mut r_cur, &mut f_cur, &mut blocks, tol) {
                    break;
                }
                gram = self.gram(&blocks);
                continue;
            }
            let d = self.newton_direction(&cur, &r_cur, &blocks, &gram)?;
            // The block the full step shrinks most along itself, if any
            // is driven past half its length, is dropped.
            let collapsing = blocks
                .iter()
                .enumerate()
                .map(|(bi, &j)| {
                    let step = nalgebra::Vector3::new(d[3 * bi], d[3 * bi + 1], d[3 * bi + 2]);
                    let z = nalgebra::Vector3::new(cur[3 * j], cur[3 * j + 1], cur[3 * j + 2]);
                    (bi, (z + step).dot(&z) / z.norm_squared())
                })
                .filter(|&(_, ratio)| ratio < 0.5)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((bi, _)) = collapsing {
                let j = blocks.remove(bi);
                cur[3 * j..3 * j + 3].iter_mut().for_each(|v| *v = 0.0);
                let (r, f) = self.value(&cur);
                r_cur = r;
                f_cur = f;
                gram = self.gram(&blocks);
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let mut trial = cur.clone();
                for (bi, &j) in blocks.iter().enumerate() {
                    for a in 0..3 {
                        trial[3 * j + a] += t * d[3 * bi + a];
                    }
                }
                if blocks.iter().all(|&j| dot3(&trial, &cur, j) >= 0.5 * norm(&cur, j).powi(2)) {
                    let (r_t, f_t) = self.value(&trial);
                    // Near the minimizer objective differences drop below
                    // roundoff; the alignment residual then decides.
                    if f_t < f_cur
                        || (f_t <= f_cur + roundoff(f_cur) && self.alignment(&trial, &r_t, &blocks) < g_cur)
                    {
                        accepted = Some((trial, r_t, f_t));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, r_t, f_t)) => {
                    cur = trial;
                    r_cur = r_t;
                    f_cur = f_t;
                }
                None => {
                    if !self.activate(&mut cur, &mut r_cur, &mut f_cur, &mut blocks, tol) {
                        break;
                    }
                    gram = self.gram(&blocks);
                }
            }
        }
        (f_cur <= f_x + roundoff(f_x)).then_some((cur, r_cur, f_cur))
    }

    /// `max_j |c_j − (λ/2) x_j/|x_j||` over `blocks`.
    fn alignment(&self, x: &[f64], r: &[f64], blocks: &[usize]) -> f64 {
        let half = 0.5 * self.lambda;
        let c = self.duals(r);
        blocks
            .iter()
            .map(|&j| {
                let z = nalgebra::Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]);
                let cj = nalgebra::Vector3::new(c[3 * j], c[3 * j + 1], c[3 * j + 2]);
                (cj - z * (half / z.norm())).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Switches on the zero block with the largest dual norm above
    /// `(λ/2)(1 + tol/2)`, moving along `c_j/|c_j|` to the exact minimizer.
    fn activate(&self, x: &mut [f64], r: &mut Vec<f64>, f: &mut f64, blocks: &mut Vec<usize>, tol: f64) -> bool {
        let half = 0.5 * self.lambda;
        let c = self.duals(r);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..x.len() / 3 {
            if x[3 * j..3 * j + 3].iter().any(|&v| v != 0.0) {
                continue;
            }
            let n = (c[3 * j].powi(2) + c[3 * j + 1].powi(2) + c[3 * j + 2].powi(2)).sqrt();
            if n > half * (1.0 + 0.5 * tol) && best.is_none_or(|(_, b)| n > b) {
                best = Some((j, n));
            }
        }
        let Some((j, cn)) = best else { return false };
        let d = [c[3 * j] / cn, c[3 * j + 1] / cn, c[3 * j + 2] / cn];
        let mut bd = vec![0.0; self.b.rows()];
        for a in 0..3 {
            for (v, col) in bd.iter_mut().zip(self.b.col(3 * j + a)) {
                *v += d[a] * col;
            }
        }
        let curv: f64 = bd.iter().zip(self.w).map(|(v, w)| v * v * w).sum();
        if !(curv > 0.0) {
            return false;
        }
        let s = (cn - half) / curv;
        for a in 0..3 {
            x[3 * j + a] = s * d[a];
        }
        let (rn, fn_) = self.value(x);
        *r = rn;
        *f = fn_;
        blocks.push(j);
        blocks.sort_unstable();
        true
    }

    fn gram(&self, blocks: &[usize]) -> DMatrix<f64> {
        let idx: Vec<usize> = blocks.iter().flat_map(|&j| [3 * j, 3 * j + 1, 3 * j + 2]).collect();
        let n = idx.len();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            let ca = self.b.col(idx[a]);
            for b in a..n {
                let cb = self.b.col(idx[b]);
                let v: f64 = ca.iter().zip(cb).zip(self.w).map(|((p, q), w)| p * q * w).sum();
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        gram
    }

    /// Solves `H d = −g` for the objective restricted to `blocks`, all of
    /// which must be nonzero in `x`.
    fn newton_direction(&self, x: &[f64], r: &[f64], blocks: &[usize], gram: &DMatrix<f64>) -> Option<DVector<f64>> {
        let n = 3 * blocks.len();
        let c = self.duals(r);
        let mut g = DVector::<f64>::zeros(n);
        let mut h = gram * 2.0;
        for (bi, &j) in blocks.iter().enumerate() {
            let z = nalgebra::Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]);
            let zn = z.norm();
            let u = z / zn;
            let curv = (nalgebra::Matrix3::identity() - u * u.transpose()) * (self.lambda / zn);
            for a in 0..3 {
                g[3 * bi + a] = -2.0 * c[3 * j + a] + self.lambda * u[a];
                for b in 0..3 {
                    h[(3 * bi + a, 3 * bi + b)] += curv[(a, b)];
                }
            }
        }
        let ridge = 1e-14 * (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        h.cholesky().map(|ch| ch.solve(&(-g)))
    }
}

const MAX_NEWTON_STEPS: usize = 200;
const POLISH_EVERY: usize = 50;

fn active_pattern(x: &[f64]) -> Vec<bool> {
    x.chunks_exact(3).map(|b| b.iter().any(|&v| v != 0.0)).collect()
}

fn active_count(x: &[f64]) -> usize {
    x.chunks_exact(3).filter(|b| b.iter().any(|&v| v != 0.0)).count()
}

#[allow(clippy::too_many_arguments)]
pub(super) fn solve_working_set(
    model: &ForwardModel,
    f: &[f64],
    lambda: f64,
    working: &[usize],
    m: &mut [f64],
    opts: &SolveOptions,
    tol: f64,
    budget: usize,
    iter_offset: usize,
) -> Result<InnerOutcome> {
    let mut columns = Vec::with_capacity(3 * working.len());
    for &k in working {
        columns.extend(model.node_columns(k));
    }
    let sub = SubProblem {
        b: ColMatrix::from_columns(model.num_sensors(), columns),
        w: model.sensors().weights(),
        f,
        lambda,
    };
    let n = 3 * working.len();
    let mut x: Vec<f64> = working.iter().flat_map(|&k| m[3 * k..3 * k + 3].to_vec()).collect();

    let tv = |x: &[f64]| super::block_norms_sum(x);
    let mut r_x = sub.residual(&x);
    let mut f_x = sub.smooth(&r_x) + lambda * tv(&x);
    let mut outcome = InnerOutcome { iterations: 0, stalled: false, passed: false, trace: Vec::new() };
    if sub.cert_gap(&x, &sub.duals(&r_x)) <= tol {
        outcome.passed = true;
        return Ok(outcome);
    }

    let mut lip = sub.lipschitz(opts.power_iters);
    let mut y = x.clone();
    let mut z_prev = x.clone();
    let mut t = 1.0f64;
    let mut history: Vec<f64> = Vec::new();
    let mut z = vec![0.0; n];
    let mut pattern = active_pattern(&x);
    let mut stable_since = 0usize;

    for it in 1..=budget {
        let r_y = sub.residual(&y);
        let s_y = sub.smooth(&r_y);
        let grad: Vec<f64> = sub.duals(&r_y).into_iter().map(|c| -2.0 * c).collect();
        let (r_z, s_z) = loop {
            for i in 0..n {
                z[i] = y[i] - grad[i] / lip;
            }
            for b in z.chunks_exact_mut(3) {
                soft_threshold_in_place(b, lambda / lip);
            }
            let r_z = sub.residual(&z);
            let s_z = sub.smooth(&r_z);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for i in 0..n {
                let d = z[i] - y[i];
                lin += grad[i] * d;
                quad += d * d;
            }
            if s_z <= s_y + lin + 0.5 * lip * quad + 1e-14 * s_y.abs() {
                break (r_z, s_z);
            }
            lip /= opts.backtrack_shrink;
        };
        let f_z = s_z + lambda * tv(&z);
        let x_old = x.clone();
        let accepted = f_z <= f_x;
        if accepted {
            x.copy_from_slice(&z);
            r_x = r_z;
            f_x = f_z;
        }

        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart = opts.restart && {
            let mut s = 0.0;
            for i in 0..n {
                s += (y[i] - z[i]) * (z[i] - z_prev[i]);
            }
            s > 0.0 || !accepted
        };
        if restart {
            t = 1.0;
            y.copy_from_slice(&x);
        } else {
            for i in 0..n {
                y[i] = x[i] + (t / t_new) * (z[i] - x[i]) + ((t - 1.0) / t_new) * (x[i] - x_old[i]);
            }
            t = t_new;
        }
        z_prev.copy_from_slice(&z);

        let p = active_pattern(&x);
        if p != pattern {
            pattern = p;
            stable_since = it;
        }
        let mut gap = sub.cert_gap(&x, &sub.duals(&r_x));
        let stall_now = history.len() >= opts.stall_window && {
            let past = history[history.len() - opts.stall_window];
            past - f_x <= opts.objective_tol * f_x.abs().max(f64::MIN_POSITIVE)
        };
        if gap > tol && (stall_now || (it - stable_since >= POLISH_EVERY && it % POLISH_EVERY == 0)) {
            if let Some((xp, rp, fp)) = sub.newton_polish(&x, f_x, tol) {
                let gp = sub.cert_gap(&xp, &sub.duals(&rp));
                if gp <= tol || stall_now {
                    x = xp;
                    r_x = rp;
                    f_x = fp;
                    y.copy_from_slice(&x);
                    z_prev.copy_from_slice(&x);
                    t = 1.0;
                    history.clear();
                    gap = gp;
                }
            }
        }
        outcome.iterations = it;
        if opts.record_trace {
            outcome.trace.push(IterRecord {
                iter: iter_offset + it,
                objective: f_x,
                cert_gap: gap,
                step: 1.0 / lip,
                active_nodes: active_count(&x),
            });
        }
        if gap <= tol {
            outcome.passed = true;
            break;
        }
        history.push(f_x);
        if history.len() > opts.stall_window {
            let past = history[history.len() - 1 - opts.stall_window];
            if past - f_x <= opts.objective_tol * f_x.abs().max(f64::MIN_POSITIVE) {
                outcome.stalled = true;
                break;
            }
        }
    }

    for (j, &k) in working.iter().enumerate() {
        m[3 * k..3 * k + 3].copy_from_slice(&x[3 * j..3 * j + 3]);
    }
    Ok(outcome)
}
