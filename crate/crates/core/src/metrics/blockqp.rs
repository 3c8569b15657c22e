//! Exact minimization of `x' H x + <l, x>` (H positive semidefinite) over a
//! single box or ball.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::geometry::{ConvexSet, SetShape};

const MAX_ACTIVE_SET_STEPS: usize = 500;

pub(crate) fn minimize(h: &DMatrix<f64>, l: &DVector<f64>, set: &ConvexSet) -> DVector<f64> {
    let e = set.inner_radius();
    match set.shape() {
        SetShape::Box { .. } => box_qp(h, l, e),
        SetShape::Ball { .. } => ball_qp(h, l, e),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Primal active-set method on `[-e, e]^p`.
fn box_qp(h: &DMatrix<f64>, l: &DVector<f64>, e: f64) -> DVector<f64> {
    let p = l.len();
    let scale = 1.0 + h.amax() * e + l.amax();
    let ridge = 1e-13 * (1.0 + h.diagonal().amax());
    let mut x = DVector::zeros(p);
    let mut state = vec![Bound::Free; p];
    for _ in 0..MAX_ACTIVE_SET_STEPS {
        let free: Vec<usize> = (0..p).filter(|&j| state[j] == Bound::Free).collect();
        let grad = h * &x * 2.0 + l;
        if !free.is_empty() {
            let k = free.len();
            let mut hff = DMatrix::from_fn(k, k, |a, b| 2.0 * h[(free[a], free[b])]);
            for a in 0..k {
                hff[(a, a)] += ridge;
            }
            let rhs = DVector::from_fn(k, |a, _| -grad[free[a]]);
            let step = match hff.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => hff.lu().solve(&rhs).unwrap_or_else(|| rhs.clone()),
            };
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (a, &j) in free.iter().enumerate() {
                let d = step[a];
                let room = if d > 0.0 { e - x[j] } else { -e - x[j] };
                if d != 0.0 && room / d < alpha {
                    alpha = (room / d).max(0.0);
                    blocking = Some((j, if d > 0.0 { Bound::Upper } else { Bound::Lower }));
                }
            }
            for (a, &j) in free.iter().enumerate() {
                x[j] = (x[j] + alpha * step[a]).clamp(-e, e);
            }
            if let Some((j, b)) = blocking {
                x[j] = if b == Bound::Upper { e } else { -e };
                state[j] = b;
                continue;
            }
        }
        let grad = h * &x * 2.0 + l;
        let mut worst = None;
        let mut worst_val = 1e-12 * scale;
        for j in 0..p {
            let wrong = match state[j] {
                Bound::Upper => grad[j],
                Bound::Lower => -grad[j],
                Bound::Free => continue,
            };
            if wrong > worst_val {
                worst_val = wrong;
                worst = Some(j);
            }
        }
        match worst {
            Some(j) => state[j] = Bound::Free,
            None => return x,
        }
    }
    x
}

/// Secular-equation solve on the ball of radius `r`.
fn ball_qp(h: &DMatrix<f64>, l: &DVector<f64>, r: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let c = eig.eigenvectors.tr_mul(l);
    let lam = eig.eigenvalues;
    let tiny = 1e-14 * (1.0 + lam.amax());
    let point = |nu: f64| -> DVector<f64> {
        let y = DVector::from_fn(c.len(), |j, _| {
            let d = 2.0 * (lam[j] + nu);
            if d > tiny {
                -c[j] / d
            } else {
                0.0
            }
        });
        &eig.eigenvectors * y
    };
    let x0 = point(0.0);
    let flat_gradient =
        (0..c.len()).any(|j| lam[j] <= tiny && c[j].abs() > 1e-14 * (1.0 + c.amax()));
    if x0.norm() <= r && !flat_gradient {
        return x0;
    }
    let (mut lo, mut hi) = (0.0f64, l.norm() / (2.0 * r) + 1e-300);
    while point(hi).norm() > r {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if point(mid).norm() > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(hi);
    let n = x.norm();
    if n > r {
        x * (r / n)
    } else {
        x
    }
}
