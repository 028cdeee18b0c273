//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! A compact L-BFGS with gradient projection for simple bound constraints:
//! directions come from the two-loop recursion over the last few curvature
//! pairs, steps are clamped into the box and accepted by a bracketing weak-
//! Wolfe line search (sufficient decrease plus a curvature condition, with
//! expansion when the trial step is too short), and convergence is declared
//! on the projected gradient. The curvature condition is what keeps the
//! stored (s, y) pairs positive — with plain backtracking a short step can
//! land where sᵀy ≤ 0, freezing the memory with stale pairs and collapsing
//! the direction. Built for objectives where each evaluation is expensive
//! (here: a full variational re-fit), so the iteration budget is the scarce
//! resource, not the linear algebra.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct BoxLbfgs {
    pub max_iters: usize,
    /// Number of curvature pairs remembered.
    pub memory: usize,
    /// Convergence threshold on the projected-gradient infinity norm.
    pub grad_tol: f64,
    /// Trial points budgeted per line search.
    pub max_line_search: usize,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        BoxLbfgs {
            max_iters: 25,
            memory: 5,
            grad_tol: 1e-5,
            max_line_search: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptResult {
    /// Best point seen (always within the box).
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub f: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Accepted descent steps; 0 means the returned point is the start.
    pub accepted_steps: usize,
    /// The projected gradient already met the tolerance at the start.
    pub converged_at_start: bool,
    /// (f, x) at the start and after every accepted step.
    pub trace: Vec<(f64, Vec<f64>)>,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Gradient with bound-blocked components zeroed: a coordinate pinned at its
/// lower bound with an increasing objective outward (g > 0 pushes it below
/// the bound) cannot move, so it does not count toward non-optimality.
fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut pg = g.to_vec();
    for i in 0..x.len() {
        if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A trial point accepted by the line search.
struct LinePoint {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    /// Realized displacement after box clamping.
    disp: Vec<f64>,
}

/// Minimize `objective` (returning value and gradient) over the box
/// [lo, hi], starting from `x0` (clamped into the box first).
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &BoxLbfgs,
) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch {
            context: "optimization bounds",
            expected: n,
            got: lo.len().min(hi.len()),
        });
    }
    for i in 0..n {
        if lo[i].is_nan() || hi[i].is_nan() || lo[i] > hi[i] {
            return Err(Error::InvalidArgument(format!(
                "bound {i} is empty: [{}, {}]",
                lo[i], hi[i]
            )));
        }
    }
    let mut x = x0.to_vec();
    clamp_into(&mut x, lo, hi);
    let (mut fx, mut g) = objective(&x)?;
    if !fx.is_finite() {
        return Err(Error::InvalidArgument(
            "objective is not finite at the start".into(),
        ));
    }

    let mut best_x = x.clone();
    let mut best_f = fx;
    let mut trace = vec![(fx, x.clone())];
    let mut s_mem: Vec<Vec<f64>> = Vec::new();
    let mut y_mem: Vec<Vec<f64>> = Vec::new();
    let mut accepted = 0usize;
    let mut iterations = 0usize;

    let start_pg = inf_norm(&projected_gradient(&x, &g, lo, hi));
    let converged_at_start = start_pg <= cfg.grad_tol;

    if !converged_at_start {
        'outer: for _ in 0..cfg.max_iters {
            iterations += 1;
            // Two-loop recursion for d = −H·g over the stored pairs.
            let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
            if !s_mem.is_empty() {
                let k = s_mem.len();
                let mut alpha = vec![0.0; k];
                let mut q = d.clone();
                for i in (0..k).rev() {
                    let rho = 1.0 / dot(&y_mem[i], &s_mem[i]);
                    alpha[i] = rho * dot(&s_mem[i], &q);
                    for j in 0..n {
                        q[j] -= alpha[i] * y_mem[i][j];
                    }
                }
                let gamma = dot(&s_mem[k - 1], &y_mem[k - 1]) / dot(&y_mem[k - 1], &y_mem[k - 1]);
                for v in q.iter_mut() {
                    *v *= gamma;
                }
                for i in 0..k {
                    let rho = 1.0 / dot(&y_mem[i], &s_mem[i]);
                    let beta = rho * dot(&y_mem[i], &q);
                    for j in 0..n {
                        q[j] += s_mem[i][j] * (alpha[i] - beta);
                    }
                }
                d = q;
            }
            if dot(&d, &g) >= 0.0 {
                // Curvature information is unusable; fall back to steepest
                // descent for this iteration.
                d = g.iter().map(|v| -v).collect();
            }

            // Weak-Wolfe line search on the projected step; if the
            // quasi-Newton direction yields nothing, retry along −g.
            let mut moved = false;
            for attempt in 0..2 {
                let dir: Vec<f64> = if attempt == 0 {
                    d.clone()
                } else {
                    g.iter().map(|v| -v).collect()
                };
                let g_dot_dir = dot(&g, &dir);
                if g_dot_dir >= 0.0 {
                    continue;
                }
                // Bracket [a_lo, a_hi]: sufficient-decrease failures shrink
                // from above, too-steep slopes push from below (doubling the
                // step while unbracketed). A step truncated by the box is
                // accepted on sufficient decrease alone — the slope along the
                // clipped path is no longer the directional derivative.
                let mut a_lo = 0.0f64;
                let mut a_hi = f64::INFINITY;
                let mut alpha = 1.0f64;
                // Accepted point: Wolfe if one is found, otherwise the last
                // sufficient-decrease point visited.
                let mut chosen: Option<LinePoint> = None;
                for _ in 0..cfg.max_line_search {
                    let raw: Vec<f64> = (0..n).map(|i| x[i] + alpha * dir[i]).collect();
                    let mut x_new = raw.clone();
                    clamp_into(&mut x_new, lo, hi);
                    let disp: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                    if inf_norm(&disp) == 0.0 {
                        break; // fully blocked by the box
                    }
                    let truncated = (0..n).any(|i| x_new[i] != raw[i]);
                    let (f_new, g_new) = objective(&x_new)?;
                    let decreased =
                        f_new.is_finite() && f_new <= fx + 1e-4 * dot(&g, &disp);
                    if !decreased {
                        a_hi = alpha;
                    } else if !truncated && dot(&g_new, &dir) < 0.9 * g_dot_dir {
                        // Decrease is fine but the slope is still steep: the
                        // step is too short to be trusted for curvature.
                        a_lo = alpha;
                        chosen = Some(LinePoint {
                            x: x_new,
                            f: f_new,
                            g: g_new,
                            disp,
                        });
                    } else {
                        chosen = Some(LinePoint {
                            x: x_new,
                            f: f_new,
                            g: g_new,
                            disp,
                        });
                        break;
                    }
                    alpha = if a_hi.is_finite() {
                        0.5 * (a_lo + a_hi)
                    } else {
                        2.0 * alpha
                    };
                }
                if let Some(LinePoint {
                    x: x_new,
                    f: f_new,
                    g: g_new,
                    disp,
                }) = chosen
                {
                    let y_vec: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                    let sy = dot(&disp, &y_vec);
                    if sy > 1e-12 * inf_norm(&disp) * inf_norm(&y_vec).max(1e-300) {
                        s_mem.push(disp);
                        y_mem.push(y_vec);
                        if s_mem.len() > cfg.memory {
                            s_mem.remove(0);
                            y_mem.remove(0);
                        }
                    }
                    x = x_new;
                    fx = f_new;
                    g = g_new;
                    moved = true;
                    accepted += 1;
                    if fx < best_f {
                        best_f = fx;
                        best_x = x.clone();
                    }
                    trace.push((fx, x.clone()));
                }
                if moved {
                    break;
                }
            }
            if !moved {
                break 'outer; // no improving point found in any direction
            }
            if inf_norm(&projected_gradient(&x, &g, lo, hi)) <= cfg.grad_tol {
                break 'outer;
            }
        }
    }

    Ok(OptResult {
        x: best_x,
        f: best_f,
        iterations,
        accepted_steps: accepted,
        converged_at_start,
        trace,
    })
}
