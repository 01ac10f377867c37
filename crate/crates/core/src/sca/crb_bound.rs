//! Convex upper bound on the FIM trace, concave lower bound on its
//! determinant, and the resulting convex restriction of the CRB constraint.
//!
//! Local variables of a slot pair are ordered `[x1, x2, y1, y2]`, each an
//! offset from the target.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{wrap, Point, SystemParams, Trajectory};

/// `h2(D1, D2)` with `D` the squared distances: the pair weight of the
/// determinant expansion.
pub fn h2(d1: f64, d2: f64, eta: f64) -> f64 {
    let (d1_2, d2_2) = (d1 * d1, d2 * d2);
    let (d1_3, d2_3) = (d1_2 * d1, d2_2 * d2);
    eta * eta / (d1_3 * d2_3) + 8.0 * eta / (d1_3 * d2_2) + 8.0 * eta / (d1_2 * d2_3) + 64.0 / (d1_2 * d2_2)
}

/// Squared cross product of two offsets.
pub fn psi(dx1: f64, dy1: f64, dx2: f64, dy2: f64) -> f64 {
    let c = dx1 * dy2 - dx2 * dy1;
    c * c
}

/// FIM determinant as a sum of nonnegative pair terms; avoids the
/// cancellation in `Θa Θb - Θc²`.
pub fn pairwise_determinant(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> f64 {
    let h2sq = params.altitude * params.altitude;
    let slots: Vec<usize> = traj.window(m, params.window).collect();
    let mut det = 0.0;
    for (i, &n1) in slots.iter().enumerate() {
        for &n2 in &slots[i + 1..] {
            let (dx1, dy1) = (traj.x[n1] - s.x, traj.y[n1] - s.y);
            let (dx2, dy2) = (traj.x[n2] - s.x, traj.y[n2] - s.y);
            let d1 = dx1 * dx1 + dy1 * dy1 + h2sq;
            let d2 = dx2 * dx2 + dy2 * dy2 + h2sq;
            det += h2(d1, d2, params.eta) * psi(dx1, dy1, dx2, dy2);
        }
    }
    det
}

fn h4(v: &[f64; 4]) -> f64 {
    0.5 * ((v[0] + v[3]).powi(2) + v[1] * v[1] + v[2] * v[2])
}

fn h5(v: &[f64; 4]) -> f64 {
    0.5 * (v[0] * v[0] + v[3] * v[3] + (v[1] + v[2]).powi(2))
}

fn grad_h4(v: &[f64; 4]) -> [f64; 4] {
    let s = v[0] + v[3];
    [s, v[1], v[2], s]
}

fn grad_h5(v: &[f64; 4]) -> [f64; 4] {
    let s = v[1] + v[2];
    [v[0], s, s, v[3]]
}

const HESS_H4: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]];
const HESS_H5: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0], [0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];


/// Tangent plane of `h` at `vr`, evaluated at `v`.
fn tangent(hr: f64, gr: &[f64; 4], vr: &[f64; 4], v: &[f64; 4]) -> f64 {
    hr + gr[0] * (v[0] - vr[0]) + gr[1] * (v[1] - vr[1]) + gr[2] * (v[2] - vr[2]) + gr[3] * (v[3] - vr[3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermBounds {
    pub h3: f64,
    pub h4: f64,
    pub h5: f64,
    /// Concave minorant of `h3`.
    pub psi_tilde: f64,
    /// Convex majorant of `h3`.
    pub psi_hat: f64,
}

/// Both bounds of `h3 = (x1 y2 - x2 y1)²` at `v`, expanded at `vr`.
pub fn cross_term_bounds(v: [f64; 4], vr: [f64; 4]) -> CrossTermBounds {
    let (h4v, h5v) = (h4(&v), h5(&v));
    let (h4r, h5r) = (h4(&vr), h5(&vr));
    let t4 = tangent(h4r, &grad_h4(&vr), &vr, &v);
    let t5 = tangent(h5r, &grad_h5(&vr), &vr, &v);
    let s = h4v + h5v;
    let psi_tilde = 4.0 * h4r * t4 - 2.0 * h4r * h4r + 4.0 * h5r * t5 - 2.0 * h5r * h5r - s * s;
    let mx = (h4v - t5).max(h5v - t4);
    CrossTermBounds { h3: (h4v - h5v).powi(2), h4: h4v, h5: h5v, psi_tilde, psi_hat: mx * mx }
}

/// Small dense derivative block over a subset of trajectory variables
/// (`x_n` is variable `n`, `y_n` is variable `N + n`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDerivs {
    pub value: f64,
    pub vars: Vec<usize>,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

/// Per-slot term of the trace bound:
/// `eta / φ² + 8 / φ + B1 D + B2` with `φ` the tangent plane of `D` at the
/// local point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotBound {
    pub dxr: f64,
    pub dyr: f64,
    pub dr: f64,
    pub b1: f64,
    pub b2: f64,
}

impl SlotBound {
    fn new(dxr: f64, dyr: f64, h2sq: f64, eta: f64) -> Self {
        let dr = dxr * dxr + dyr * dyr + h2sq;
        let (dr2, dr3) = (dr * dr, dr * dr * dr);
        let b1 = 3.0 * eta * h2sq / (dr2 * dr2) + 16.0 * h2sq / dr3;
        let b2 = -eta * h2sq / dr3 - 8.0 * h2sq / dr2 - b1 * dr;
        Self { dxr, dyr, dr, b1, b2 }
    }

    pub fn phi(&self, dx: f64, dy: f64, h2sq: f64) -> f64 {
        2.0 * self.dxr * dx + 2.0 * self.dyr * dy + 2.0 * h2sq - self.dr
    }

    pub fn value(&self, dx: f64, dy: f64, h2sq: f64, eta: f64) -> Result<f64> {
        let phi = self.phi(dx, dy, h2sq);
        if !(phi > 0.0) {
            return Err(Error::Domain);
        }
        let d = dx * dx + dy * dy + h2sq;
        Ok(eta / (phi * phi) + 8.0 / phi + self.b1 * d + self.b2)
    }

    /// Value, gradient and Hessian in `(x, y)`.
    pub fn derivs(&self, dx: f64, dy: f64, h2sq: f64, eta: f64) -> Result<(f64, [f64; 2], [[f64; 2]; 2])> {
        let phi = self.phi(dx, dy, h2sq);
        if !(phi > 0.0) {
            return Err(Error::Domain);
        }
        let (p2, p3) = (phi * phi, phi * phi * phi);
        let d = dx * dx + dy * dy + h2sq;
        let value = eta / p2 + 8.0 / phi + self.b1 * d + self.b2;
        let g1 = -2.0 * eta / p3 - 8.0 / p2;
        let g2 = 6.0 * eta / (p2 * p2) + 16.0 / p3;
        let dphi = [2.0 * self.dxr, 2.0 * self.dyr];
        let grad = [g1 * dphi[0] + 2.0 * self.b1 * dx, g1 * dphi[1] + 2.0 * self.b1 * dy];
        let mut hess = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                hess[i][j] = g2 * dphi[i] * dphi[j] + if i == j { 2.0 * self.b1 } else { 0.0 };
            }
        }
        Ok((value, grad, hess))
    }
}

/// Concave lower bound of `h2(D1, D2) ψ` for one slot pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBound {
    pub vr: [f64; 4],
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub h4r: f64,
    pub h5r: f64,
    /// Collinear at the local point; the bound is the constant 0.
    pub degenerate: bool,
}

impl PairBound {
    pub fn new(vr: [f64; 4], h2sq: f64, eta: f64) -> Self {
        let d1 = vr[0] * vr[0] + vr[2] * vr[2] + h2sq;
        let d2 = vr[1] * vr[1] + vr[3] * vr[3] + h2sq;
        let (d1_2, d2_2) = (d1 * d1, d2 * d2);
        let (d1_3, d2_3) = (d1_2 * d1, d2_2 * d2);
        let (d1_4, d2_4) = (d1_2 * d1_2, d2_2 * d2_2);
        let e1 = 3.0 * eta * eta / (d1_4 * d2_3) + 24.0 * eta / (d1_4 * d2_2) + 16.0 * eta / (d1_3 * d2_3) + 128.0 / (d1_3 * d2_2);
        let e2 = 3.0 * eta * eta / (d1_3 * d2_4) + 16.0 * eta / (d1_3 * d2_3) + 24.0 * eta / (d1_2 * d2_4) + 128.0 / (d1_2 * d2_3);
        let e3 = h2(d1, d2, eta) + e1 * d1 + e2 * d2;
        let (h4r, h5r) = (h4(&vr), h5(&vr));
        let psi_r = (h4r - h5r).powi(2);
        let degenerate = !(psi_r > 1e-12 * (h4r + h5r).powi(2));
        let e4 = if degenerate { 0.0 } else { psi_r / (e1 * d1 + e2 * d2) };
        Self { vr, e1, e2, e3, e4, h4r, h5r, degenerate }
    }

    pub fn value(&self, v: &[f64; 4], h2sq: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let b = self.e1 * (v[0] * v[0] + v[2] * v[2] + h2sq) + self.e2 * (v[1] * v[1] + v[3] * v[3] + h2sq);
        let l = cross_term_bounds(*v, self.vr);
        -0.5 * self.e4 * b * b - l.psi_hat * l.psi_hat / (2.0 * self.e4) + self.e3 * l.psi_tilde
    }

    /// Value, gradient and Hessian over `[x1, x2, y1, y2]`. On the kink of
    /// the majorant the first piece is used.
    pub fn derivs(&self, v: &[f64; 4], h2sq: f64) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        if self.degenerate {
            return (0.0, [0.0; 4], [[0.0; 4]; 4]);
        }
        let (e1, e2, e3, e4) = (self.e1, self.e2, self.e3, self.e4);
        let b = e1 * (v[0] * v[0] + v[2] * v[2] + h2sq) + e2 * (v[1] * v[1] + v[3] * v[3] + h2sq);
        let gb = [2.0 * e1 * v[0], 2.0 * e2 * v[1], 2.0 * e1 * v[2], 2.0 * e2 * v[3]];
        let hb = [2.0 * e1, 2.0 * e2, 2.0 * e1, 2.0 * e2];

        let (h4v, h5v) = (h4(v), h5(v));
        let (g4, g5) = (grad_h4(v), grad_h5(v));
        let (g4r, g5r) = (grad_h4(&self.vr), grad_h5(&self.vr));
        let t4 = tangent(self.h4r, &g4r, &self.vr, v);
        let t5 = tangent(self.h5r, &g5r, &self.vr, v);
        let (m1, m2) = (h4v - t5, h5v - t4);
        let (mx, gm, hm) = if m1 >= m2 {
            (m1, [g4[0] - g5r[0], g4[1] - g5r[1], g4[2] - g5r[2], g4[3] - g5r[3]], &HESS_H4)
        } else {
            (m2, [g5[0] - g4r[0], g5[1] - g4r[1], g5[2] - g4r[2], g5[3] - g4r[3]], &HESS_H5)
        };

        let s = h4v + h5v;
        let gs = [g4[0] + g5[0], g4[1] + g5[1], g4[2] + g5[2], g4[3] + g5[3]];
        let psi_tilde = 4.0 * self.h4r * t4 - 2.0 * self.h4r * self.h4r + 4.0 * self.h5r * t5
            - 2.0 * self.h5r * self.h5r
            - s * s;

        let m2v = mx * mx;
        let m3 = m2v * mx;
        let value = -0.5 * e4 * b * b - m2v * m2v / (2.0 * e4) + e3 * psi_tilde;
        let mut grad = [0.0; 4];
        let mut hess = [[0.0; 4]; 4];
        for i in 0..4 {
            let gpt = 4.0 * self.h4r * g4r[i] + 4.0 * self.h5r * g5r[i] - 2.0 * s * gs[i];
            grad[i] = -e4 * b * gb[i] - 2.0 * m3 * gm[i] / e4 + e3 * gpt;
            for j in 0..4 {
                let hs = HESS_H4[i][j] + HESS_H5[i][j];
                let hpt = -2.0 * (gs[i] * gs[j] + s * hs);
                let hbij = if i == j { hb[i] } else { 0.0 };
                hess[i][j] = -e4 * (gb[i] * gb[j] + b * hbij)
                    - (12.0 * m2v * gm[i] * gm[j] + 4.0 * m3 * hm[i][j]) / (2.0 * e4)
                    + e3 * hpt;
            }
        }
        (value, grad, hess)
    }
}

/// Surrogates for every window of one target, built at a local trajectory.
///
/// Slot and pair terms do not depend on the window start, so they are built
/// once and shared by all windows containing them.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSurrogate {
    pub target: Point,
    slots: usize,
    window: usize,
    h2sq: f64,
    eta: f64,
    xi: f64,
    slot_bounds: Vec<SlotBound>,
    /// Indexed by `n1 * (L - 1) + (offset - 1)`, pairing `n1` with `n1 + offset`.
    pairs: Vec<PairBound>,
}

impl TargetSurrogate {
    pub fn build(local: &Trajectory, target: Point, params: &SystemParams) -> Self {
        let n = local.len();
        let l = params.window;
        let h2sq = params.altitude * params.altitude;
        let offsets: Vec<(f64, f64)> = local.points().map(|p| (p.x - target.x, p.y - target.y)).collect();
        let slot_bounds = offsets.iter().map(|&(dx, dy)| SlotBound::new(dx, dy, h2sq, params.eta)).collect();
        let mut pairs = Vec::with_capacity(n * l.saturating_sub(1));
        for n1 in 0..n {
            for off in 1..l {
                let n2 = (n1 + off) % n;
                let (a, b) = (offsets[n1], offsets[n2]);
                pairs.push(PairBound::new([a.0, b.0, a.1, b.1], h2sq, params.eta));
            }
        }
        Self { target, slots: n, window: l, h2sq, eta: params.eta, xi: params.crb_limit, slot_bounds, pairs }
    }

    pub fn slot_bound(&self, n: usize) -> &SlotBound {
        &self.slot_bounds[n]
    }

    pub fn pair_bound(&self, n1: usize, offset: usize) -> &PairBound {
        &self.pairs[n1 * (self.window - 1) + offset - 1]
    }

    fn offset(&self, traj: &Trajectory, n: usize) -> (f64, f64) {
        (traj.x[n] - self.target.x, traj.y[n] - self.target.y)
    }

    fn pair_vars(&self, traj: &Trajectory, n1: usize, offset: usize) -> [f64; 4] {
        let n2 = (n1 + offset) % self.slots;
        let (a, b) = (self.offset(traj, n1), self.offset(traj, n2));
        [a.0, b.0, a.1, b.1]
    }

    /// Slot `(start, offset)` pairs of window `m`.
    fn window_pairs(&self, m: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.window).flat_map(move |i| (i + 1..self.window).map(move |j| (wrap((m + i) as isize, self.slots), j - i)))
    }

    /// Upper bound on `Θa + Θb` for window `m`.
    pub fn g1(&self, traj: &Trajectory, m: usize) -> Result<f64> {
        traj.window(m as isize, self.window)
            .map(|n| {
                let (dx, dy) = self.offset(traj, n);
                self.slot_bounds[n].value(dx, dy, self.h2sq, self.eta)
            })
            .sum()
    }

    /// Lower bound on `Θa Θb - Θc²` for window `m`.
    pub fn g2(&self, traj: &Trajectory, m: usize) -> f64 {
        self.window_pairs(m)
            .map(|(n1, off)| self.pair_bound(n1, off).value(&self.pair_vars(traj, n1, off), self.h2sq))
            .sum()
    }

    /// `g1 - xi g2`; nonpositive values certify the CRB limit.
    pub fn constraint(&self, traj: &Trajectory, m: usize) -> Result<f64> {
        Ok(self.g1(traj, m)? - self.xi * self.g2(traj, m))
    }

    /// Constraint values of every window, sharing slot and pair evaluations.
    pub fn constraint_values(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let g1_slot: Vec<f64> = (0..self.slots)
            .map(|n| {
                let (dx, dy) = self.offset(traj, n);
                self.slot_bounds[n].value(dx, dy, self.h2sq, self.eta)
            })
            .collect::<Result<_>>()?;
        let lm1 = self.window - 1;
        let g2_pair: Vec<f64> = (0..self.slots * lm1)
            .map(|i| {
                let (n1, off) = (i / lm1, i % lm1 + 1);
                self.pairs[i].value(&self.pair_vars(traj, n1, off), self.h2sq)
            })
            .collect();
        Ok((0..self.slots)
            .map(|m| {
                let g1: f64 = traj.window(m as isize, self.window).map(|n| g1_slot[n]).sum();
                let g2: f64 = self.window_pairs(m).map(|(n1, off)| g2_pair[n1 * lm1 + off - 1]).sum();
                g1 - self.xi * g2
            })
            .collect())
    }

    /// Derivative blocks of `g1 - xi g2` for every window.
    pub fn constraint_derivs(&self, traj: &Trajectory) -> Result<Vec<SparseDerivs>> {
        let slot: Vec<_> = (0..self.slots)
            .map(|n| {
                let (dx, dy) = self.offset(traj, n);
                self.slot_bounds[n].derivs(dx, dy, self.h2sq, self.eta)
            })
            .collect::<Result<_>>()?;
        let lm1 = self.window - 1;
        let pair: Vec<_> = (0..self.slots * lm1)
            .map(|i| {
                let (n1, off) = (i / lm1, i % lm1 + 1);
                self.pairs[i].derivs(&self.pair_vars(traj, n1, off), self.h2sq)
            })
            .collect();
        Ok((0..self.slots).map(|m| self.assemble(m, &slot, &pair, 1.0, -self.xi)).collect())
    }

    /// Derivative blocks of `w1 g1 + w2 g2` for window `m`.
    pub fn window_derivs(&self, traj: &Trajectory, m: usize, w1: f64, w2: f64) -> Result<SparseDerivs> {
        let slot: Vec<_> = (0..self.slots)
            .map(|n| {
                let (dx, dy) = self.offset(traj, n);
                if traj.window(m as isize, self.window).any(|k| k == n) {
                    self.slot_bounds[n].derivs(dx, dy, self.h2sq, self.eta)
                } else {
                    Ok((0.0, [0.0; 2], [[0.0; 2]; 2]))
                }
            })
            .collect::<Result<_>>()?;
        let lm1 = self.window - 1;
        let pair: Vec<_> = (0..self.slots * lm1)
            .map(|i| {
                let (n1, off) = (i / lm1, i % lm1 + 1);
                if self.window_pairs(m).any(|p| p == (n1, off)) {
                    self.pairs[i].derivs(&self.pair_vars(traj, n1, off), self.h2sq)
                } else {
                    (0.0, [0.0; 4], [[0.0; 4]; 4])
                }
            })
            .collect();
        Ok(self.assemble(m, &slot, &pair, w1, w2))
    }

    #[allow(clippy::type_complexity)]
    fn assemble(
        &self,
        m: usize,
        slot: &[(f64, [f64; 2], [[f64; 2]; 2])],
        pair: &[(f64, [f64; 4], [[f64; 4]; 4])],
        w1: f64,
        w2: f64,
    ) -> SparseDerivs {
        let mut local: Vec<usize> = Vec::with_capacity(self.window);
        for n in (0..self.window).map(|i| wrap((m + i) as isize, self.slots)) {
            if !local.contains(&n) {
                local.push(n);
            }
        }
        let q = local.len();
        let pos = |n: usize| local.iter().position(|&k| k == n).expect("slot in window");
        let mut value = 0.0;
        let mut grad = vec![0.0; 2 * q];
        let mut hess = DMatrix::zeros(2 * q, 2 * q);
        for i in 0..self.window {
            let n = wrap((m + i) as isize, self.slots);
            let (v, g, h) = &slot[n];
            let idx = [pos(n), q + pos(n)];
            value += w1 * v;
            for a in 0..2 {
                grad[idx[a]] += w1 * g[a];
                for b in 0..2 {
                    hess[(idx[a], idx[b])] += w1 * h[a][b];
                }
            }
        }
        let lm1 = self.window - 1;
        for (n1, off) in self.window_pairs(m) {
            let (v, g, h) = &pair[n1 * lm1 + off - 1];
            let n2 = (n1 + off) % self.slots;
            let idx = [pos(n1), pos(n2), q + pos(n1), q + pos(n2)];
            value += w2 * v;
            for a in 0..4 {
                grad[idx[a]] += w2 * g[a];
                for b in 0..4 {
                    hess[(idx[a], idx[b])] += w2 * h[a][b];
                }
            }
        }
        let vars = local.iter().copied().chain(local.iter().map(|&n| self.slots + n)).collect();
        SparseDerivs { value, vars, grad, hess }
    }
}
