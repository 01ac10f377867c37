//! Log-barrier interior point method with damped Newton centering.
//!
//! Problems are stated as `minimize cᵀz` subject to `g_i(z) < 0`, with
//! optional linear equalities handled through a null-space basis.

use nalgebra::{DMatrix, DVector};

use thiserror::Error;

pub trait BarrierProblem {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Linear cost vector, minimized.
    fn cost(&self) -> &[f64];
    /// Writes every `g_i(z)`. Returns `false` when `z` lies outside the
    /// domain of some constraint function.
    fn constraint_values(&self, z: &[f64], out: &mut [f64]) -> bool;
    /// Accumulates `sum_i -∇g_i / g_i` into `grad` and
    /// `sum_i ∇g_i∇g_iᵀ / g_i² - ∇²g_i / g_i` into `hess`, given the
    /// strictly negative `values` at `z`.
    fn add_barrier_terms(&self, z: &[f64], values: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOptions {
    /// Target duality gap, relative to `1 + |objective|`.
    pub gap_tol: f64,
    pub mu: f64,
    pub max_centering_steps: usize,
    pub max_newton_steps: usize,
    /// Newton decrement threshold `λ²/2` ending a centering step.
    pub newton_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, mu: 10.0, max_centering_steps: 100, max_newton_steps: 1000, newton_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Error)]
pub enum BarrierError {
    #[error("start point is not strictly feasible (max constraint {max_violation:e})")]
    InfeasibleStart { max_violation: f64 },
    /// Iterations stalled; `best` is the last strictly feasible iterate.
    #[error("barrier iterations stalled (gap {:e})", best.gap)]
    Stalled { best: Box<BarrierSolution> },
}

impl BarrierError {
    pub fn best_point(&self) -> Option<&[f64]> {
        match self {
            BarrierError::Stalled { best } => Some(&best.z),
            BarrierError::InfeasibleStart { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Largest constraint value at `z` (negative when strictly feasible).
    pub max_constraint: f64,
    pub newton_steps: usize,
    /// Upper bound on suboptimality, `m / s`.
    pub gap: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Workspace<'a, P: BarrierProblem + ?Sized> {
    problem: &'a P,
    values: Vec<f64>,
}

impl<P: BarrierProblem + ?Sized> Workspace<'_, P> {
    /// Barrier merit `s cᵀz - sum log(-g)`, or `None` outside the interior.
    fn merit(&mut self, z: &[f64], s: f64) -> Option<f64> {
        if !self.problem.constraint_values(z, &mut self.values) {
            return None;
        }
        let mut phi = s * dot(self.problem.cost(), z);
        for &g in &self.values {
            if !(g < 0.0) {
                return None;
            }
            phi -= (-g).ln();
        }
        phi.is_finite().then_some(phi)
    }
}

/// Solves `H w = -g` for a symmetric positive definite `H` after Jacobi
/// scaling; adds growing diagonal shifts when the factorization fails.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let scale: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let d = h[(i, i)];
            if d > 0.0 && d.is_finite() { 1.0 / d.sqrt() } else { 1.0 }
        }),
    );
    let mut hs = h.clone();
    for i in 0..n {
        for j in 0..n {
            hs[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs = -g.component_mul(&scale);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            let v = ch.solve(&rhs);
            if v.iter().all(|x| x.is_finite()) {
                return Some(v.component_mul(&scale));
            }
        }
        shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
    }
    None
}

/// Minimizes the problem from a strictly feasible `start`.
///
/// `null_basis`, when given, is an `n x r` matrix whose columns span the
/// directions allowed by the linear equalities already satisfied at `start`.
pub fn minimize<P: BarrierProblem + ?Sized>(
    problem: &P,
    start: &[f64],
    null_basis: Option<&DMatrix<f64>>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution, BarrierError> {
    let n = problem.dim();
    let m = problem.num_constraints();
    assert_eq!(start.len(), n, "start point has the wrong dimension");
    let mut ws = Workspace { problem, values: vec![0.0; m] };
    let cost = problem.cost().to_vec();

    let report = |z: &[f64], ws: &mut Workspace<P>, steps: usize, gap: f64, converged: bool| {
        ws.problem.constraint_values(z, &mut ws.values);
        BarrierSolution {
            z: z.to_vec(),
            objective: dot(&cost, z),
            max_constraint: ws.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            newton_steps: steps,
            gap,
            converged,
        }
    };

    if ws.merit(start, 0.0).is_none() {
        let worst = if problem.constraint_values(start, &mut ws.values) {
            ws.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            f64::INFINITY
        };
        return Err(BarrierError::InfeasibleStart { max_violation: worst });
    }
    let mut z = start.to_vec();
    if m == 0 {
        return Ok(report(&z, &mut ws, 0, 0.0, true));
    }

    let obj0 = dot(&cost, &z);
    let mut s = m as f64 / (10.0 * (1.0 + obj0.abs()));
    let mut steps = 0usize;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let mut trial = vec![0.0; n];
    let mut stalled_rounds = 0;

    for _ in 0..opts.max_centering_steps {
        let mut stalled = false;
        loop {
            if steps >= opts.max_newton_steps {
                let gap = m as f64 / s;
                return Err(BarrierError::Stalled { best: Box::new(report(&z, &mut ws, steps, gap, false)) });
            }
            steps += 1;
            let phi = ws.merit(&z, s).expect("iterate stays interior");
            grad.fill(0.0);
            hess.fill(0.0);
            problem.add_barrier_terms(&z, &ws.values, &mut grad, &mut hess);
            for i in 0..n {
                grad[i] += s * cost[i];
            }
            let (gr, hr) = match null_basis {
                Some(b) => (b.tr_mul(&grad), b.tr_mul(&(&hess * b))),
                None => (grad.clone(), hess.clone()),
            };
            let (w, newton) = match newton_direction(&hr, &gr) {
                Some(w) => (w, true),
                None => (-&gr, false),
            };
            let slope = gr.dot(&w);
            if newton && -slope / 2.0 <= opts.newton_tol {
                break;
            }
            if !(slope < 0.0) {
                stalled = true;
                break;
            }
            let dz = match null_basis {
                Some(b) => b * &w,
                None => w,
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-16 {
                for i in 0..n {
                    trial[i] = z[i] + alpha * dz[i];
                }
                if let Some(p) = ws.merit(&trial, s) {
                    if p <= phi + 0.25 * alpha * slope {
                        accepted = Some(p);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(p) = accepted else {
                stalled = true;
                break;
            };
            z.copy_from_slice(&trial);
            // Remaining decrease is below rounding of the merit itself.
            if phi - p <= 1e-14 * (1.0 + phi.abs()) {
                break;
            }
        }
        let gap = m as f64 / s;
        let obj = dot(&cost, &z);
        if gap <= opts.gap_tol * (1.0 + obj.abs()) {
            return Ok(report(&z, &mut ws, steps, gap, true));
        }
        if stalled {
            stalled_rounds += 1;
            if stalled_rounds >= 3 {
                return Err(BarrierError::Stalled { best: Box::new(report(&z, &mut ws, steps, gap, false)) });
            }
        } else {
            stalled_rounds = 0;
        }
        s *= opts.mu;
    }
    let gap = m as f64 / s;
    Err(BarrierError::Stalled { best: Box::new(report(&z, &mut ws, steps, gap, false)) })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimize cᵀz over a box `lo <= z <= hi`.
    struct BoxLp {
        c: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }

    impl BarrierProblem for BoxLp {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn num_constraints(&self) -> usize {
            2 * self.c.len()
        }
        fn cost(&self) -> &[f64] {
            &self.c
        }
        fn constraint_values(&self, z: &[f64], out: &mut [f64]) -> bool {
            for i in 0..z.len() {
                out[2 * i] = self.lo[i] - z[i];
                out[2 * i + 1] = z[i] - self.hi[i];
            }
            true
        }
        fn add_barrier_terms(&self, _z: &[f64], v: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
            for i in 0..self.c.len() {
                let (a, b) = (v[2 * i], v[2 * i + 1]);
                g[i] += 1.0 / a - 1.0 / b;
                h[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
            }
        }
    }

    /// minimize t subject to |z - p|² <= t and a box on z.
    struct Quadratic {
        p: Vec<f64>,
        cost: Vec<f64>,
    }

    impl BarrierProblem for Quadratic {
        fn dim(&self) -> usize {
            self.p.len() + 1
        }
        fn num_constraints(&self) -> usize {
            1 + 2 * self.p.len()
        }
        fn cost(&self) -> &[f64] {
            &self.cost
        }
        fn constraint_values(&self, z: &[f64], out: &mut [f64]) -> bool {
            let k = self.p.len();
            out[0] = self.p.iter().zip(z).map(|(p, x)| (x - p).powi(2)).sum::<f64>() - z[k];
            for i in 0..k {
                out[1 + 2 * i] = z[i] - 10.0;
                out[2 + 2 * i] = -10.0 - z[i];
            }
            true
        }
        fn add_barrier_terms(&self, z: &[f64], v: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
            let k = self.p.len();
            let mut dg = vec![0.0; k + 1];
            for i in 0..k {
                dg[i] = 2.0 * (z[i] - self.p[i]);
            }
            dg[k] = -1.0;
            let w = -1.0 / v[0];
            for i in 0..=k {
                g[i] += w * dg[i];
                for j in 0..=k {
                    h[(i, j)] += w * w * dg[i] * dg[j];
                }
            }
            for i in 0..k {
                h[(i, i)] += 2.0 * w;
                let (a, b) = (v[1 + 2 * i], v[2 + 2 * i]);
                g[i] += -1.0 / a + 1.0 / b;
                h[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
            }
        }
    }

    #[test]
    fn box_lp_hits_vertex() {
        let p = BoxLp { c: vec![1.0, -2.0, 0.5], lo: vec![-1.0, 0.0, 2.0], hi: vec![1.0, 3.0, 4.0] };
        let sol = minimize(&p, &[0.0, 1.0, 3.0], None, &BarrierOptions::default()).unwrap();
        assert!(sol.converged);
        let expect = [-1.0, 3.0, 2.0];
        for (a, b) in sol.z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5, "{:?}", sol.z);
        }
        assert!(sol.max_constraint < 0.0);
    }

    #[test]
    fn inactive_constraints_recover_unconstrained_minimizer() {
        let p = Quadratic { p: vec![1.5, -2.0, 0.25], cost: vec![0.0, 0.0, 0.0, 1.0] };
        let sol = minimize(&p, &[0.0, 0.0, 0.0, 20.0], None, &BarrierOptions::default()).unwrap();
        for (a, b) in sol.z.iter().zip(&p.p) {
            assert!((a - b).abs() < 1e-3, "{:?}", sol.z);
        }
        assert!(sol.objective.abs() < 1e-5);
    }

    #[test]
    fn equality_via_null_basis() {
        // minimize x0 + 2 x1 + 3 x2 over the simplex; the basis keeps the sum fixed.
        let p = BoxLp { c: vec![1.0, 2.0, 3.0], lo: vec![0.0; 3], hi: vec![1.0; 3] };
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let third = 1.0 / 3.0;
        let sol = minimize(&p, &[third, third, third], Some(&b), &BarrierOptions::default()).unwrap();
        assert!((sol.z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((sol.z[0] - 1.0).abs() < 1e-5);
        assert!((sol.objective - 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = BoxLp { c: vec![1.0], lo: vec![0.0], hi: vec![1.0] };
        match minimize(&p, &[2.0], None, &BarrierOptions::default()) {
            Err(BarrierError::InfeasibleStart { max_violation }) => assert!((max_violation - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        // Boundary points are not strictly interior.
        assert!(minimize(&p, &[1.0], None, &BarrierOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let p = Quadratic { p: vec![0.3, 0.7], cost: vec![0.2, -0.1, 1.0] };
        let a = minimize(&p, &[0.0, 0.0, 5.0], None, &BarrierOptions::default()).unwrap();
        let b = minimize(&p, &[0.0, 0.0, 5.0], None, &BarrierOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
