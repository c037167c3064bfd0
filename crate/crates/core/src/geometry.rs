//! Loss-surface geometry: Hessians, spectra, stationarity checks and the
//! per-breakpoint loss slice.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{activation_patterns, residuals, Dataset, NetParams};
use crate::spline::{nn_to_bdso, partition_data, BdsoParams};

/// Closest a breakpoint may sit to a datapoint before the Hessian is undefined.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Default relative threshold for counting an eigenvalue as zero.
pub const ZERO_EIG_TOL: f64 = 1e-8;

fn check_boundaries(net: &NetParams, data: &Dataset) -> Result<()> {
    for i in 0..net.width() {
        let (w, b) = (net.w[i], net.b[i]);
        for (n, &x) in data.xs().iter().enumerate() {
            let pre = w * x + b;
            let close = if w == 0.0 {
                b.abs() < BOUNDARY_TOL
            } else {
                (pre / w).abs() < BOUNDARY_TOL
            };
            if close {
                return Err(Error::BoundaryBreakpoint {
                    neuron: i,
                    point: n,
                });
            }
        }
    }
    Ok(())
}

/// `N × (3H+1)` Jacobian of the outputs in `[w | v | b | b0]` order.
pub fn feature_matrix(net: &NetParams, data: &Dataset) -> DMatrix<f64> {
    let h = net.width();
    let xs = data.xs();
    let mut f = DMatrix::zeros(xs.len(), 3 * h + 1);
    for (n, &x) in xs.iter().enumerate() {
        for i in 0..h {
            let pre = net.w[i] * x + net.b[i];
            if pre > 0.0 {
                f[(n, i)] = net.v[i] * x;
                f[(n, h + i)] = pre;
                f[(n, 2 * h + i)] = net.v[i];
            }
        }
        f[(n, 3 * h)] = 1.0;
    }
    f
}

/// Gram matrix of the `3H+1` output-gradient features.
pub fn gram_hessian(net: &NetParams, data: &Dataset) -> Result<DMatrix<f64>> {
    check_boundaries(net, data)?;
    let f = feature_matrix(net, data);
    Ok(f.transpose() * f)
}

/// Exact loss Hessian: the Gram part plus the residual terms coupling each
/// neuron's `v` with its own `w` and `b`.
pub fn full_hessian(net: &NetParams, data: &Dataset) -> Result<DMatrix<f64>> {
    let mut hess = gram_hessian(net, data)?;
    let h = net.width();
    let e = residuals(net, data);
    for i in 0..h {
        let mut e1 = 0.0;
        let mut ex = 0.0;
        for (&x, &en) in data.xs().iter().zip(&e) {
            if net.w[i] * x + net.b[i] > 0.0 {
                e1 += en;
                ex += en * x;
            }
        }
        hess[(i, h + i)] -= ex;
        hess[(h + i, i)] -= ex;
        hess[(2 * h + i, h + i)] -= e1;
        hess[(h + i, 2 * h + i)] -= e1;
    }
    Ok(hess)
}

/// Eigenvalues in ascending order.
pub fn eig_spectrum(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !matrix.is_square() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let scale = matrix.amax().max(1.0);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Eigenvalues with `|λ| ≤ rel_tol · max|λ|`.
pub fn zero_count(eigenvalues: &[f64], rel_tol: f64) -> usize {
    let top = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    eigenvalues.iter().filter(|l| l.abs() <= rel_tol * top).count()
}

/// Lower bound on the fraction of zero Hessian eigenvalues at a lonely
/// critical point, from the rank bound `2N − 1`.
pub fn zero_fraction_bound(h: usize, n: usize) -> f64 {
    (1.0 - (2.0 * n as f64 - 1.0) / (3.0 * h as f64 + 1.0)).max(0.0)
}

/// The same bound with rank `2N − 3`, kept for comparison in reports.
pub fn zero_fraction_bound_tight(h: usize, n: usize) -> f64 {
    (1.0 - (2.0 * n as f64 - 3.0) / (3.0 * h as f64 + 1.0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub zero_count: usize,
    pub zero_fraction: f64,
    pub theoretical_bound: f64,
    pub tight_bound: f64,
    pub rel_tol: f64,
}

pub fn hessian_report(net: &NetParams, data: &Dataset, rel_tol: f64) -> Result<HessianReport> {
    let matrix = full_hessian(net, data)?;
    let eigenvalues = eig_spectrum(&matrix)?;
    let zeros = zero_count(&eigenvalues, rel_tol);
    Ok(HessianReport {
        zero_fraction: zeros as f64 / eigenvalues.len() as f64,
        zero_count: zeros,
        theoretical_bound: zero_fraction_bound(net.width(), data.len()),
        tight_bound: zero_fraction_bound_tight(net.width(), data.len()),
        eigenvalues,
        matrix,
        rel_tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceCheck {
    pub piece: usize,
    pub count: usize,
    /// `⟨ê_p, 1⟩`
    pub residual_sum: f64,
    /// `⟨ê_p, x⟩`
    pub residual_moment: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsReport {
    pub pieces: Vec<PieceCheck>,
    pub global_residual_sum: f64,
    /// Every datapoint is on the active side of some neuron.
    pub all_data_covered: bool,
    /// Some neuron is active on every datapoint.
    pub has_global_neuron: bool,
    /// Both assumptions hold; a failure is reported but not fatal.
    pub assumptions_hold: bool,
    pub passes: bool,
}

/// Checks that the fit restricted to every piece of the induced partition
/// is the least-squares line of the data in that piece.
pub fn is_critical_ols(net: &NetParams, data: &Dataset, tol: f64) -> OlsReport {
    let (bdso, _) = nn_to_bdso(net);
    let partition = partition_data(&bdso, data);
    let e = residuals(net, data);
    let xs = data.xs();
    let pieces: Vec<PieceCheck> = partition
        .pieces
        .iter()
        .enumerate()
        .map(|(p, idx)| {
            let residual_sum: f64 = idx.iter().map(|&n| e[n]).sum();
            let residual_moment: f64 = idx.iter().map(|&n| e[n] * xs[n]).sum();
            PieceCheck {
                piece: p,
                count: idx.len(),
                residual_sum,
                residual_moment,
                pass: residual_sum.abs() <= tol && residual_moment.abs() <= tol,
            }
        })
        .collect();
    let global_residual_sum: f64 = e.iter().sum();
    let patterns = activation_patterns(net, data);
    let all_data_covered = (0..data.len()).all(|n| patterns.iter().any(|p| p[n]));
    let has_global_neuron = patterns.iter().any(|p| p.iter().all(|&a| a));
    OlsReport {
        passes: pieces.iter().all(|p| p.pass) && global_residual_sum.abs() <= tol,
        pieces,
        global_residual_sum,
        all_data_covered,
        has_global_neuron,
        assumptions_hold: all_data_covered && has_global_neuron,
    }
}

/// Squared loss as a function of neuron `i`'s breakpoint alone.
pub fn loss_slice(bdso: &BdsoParams, i: usize, data: &Dataset, beta: f64) -> f64 {
    let mut probe = bdso.clone();
    probe.neurons[i].beta = beta;
    data.xs()
        .iter()
        .zip(data.ys())
        .map(|(&x, &y)| {
            let r = probe.eval(x) - y;
            0.5 * r * r
        })
        .sum()
}

/// Quadratic `value + slope·(t − center) + curvature·(t − center)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPiece {
    pub center: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl QuadraticPiece {
    /// Exact interpolant through three distinct points.
    pub fn through(t: [f64; 3], f: [f64; 3]) -> Self {
        let d01 = (f[1] - f[0]) / (t[1] - t[0]);
        let d12 = (f[2] - f[1]) / (t[2] - t[1]);
        let curvature = (d12 - d01) / (t[2] - t[0]);
        QuadraticPiece {
            center: t[1],
            value: f[1],
            slope: d01 + curvature * (t[1] - t[0]),
            curvature,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let d = t - self.center;
        self.value + d * (self.slope + self.curvature * d)
    }

    /// Unconstrained minimizer; `±∞` for a line, `NaN` for a constant.
    pub fn argmin(&self) -> f64 {
        let flat = self.curvature.abs() <= 1e-12 * (1.0 + self.value.abs());
        if flat {
            if self.slope > 0.0 {
                f64::NEG_INFINITY
            } else if self.slope < 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        } else {
            self.center - self.slope / (2.0 * self.curvature)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotKind {
    /// Both piece minimizers on the same side: the breakpoint passes over.
    TypeIPassover,
    /// `m1 < x_n < m2`: the datapoint pushes the breakpoint away.
    TypeIIRepulsor,
    /// `m2 < x_n < m1`: the datapoint pulls the breakpoint in.
    TypeIIIAttractor,
    /// A minimizer sits on the datapoint, or the slice is flat.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotClass {
    pub n: usize,
    pub i: usize,
    pub m1: f64,
    pub m2: f64,
    pub kind: KnotKind,
    /// The slice does not depend on β (zero delta-slope).
    pub degenerate: bool,
    pub left: QuadraticPiece,
    pub right: QuadraticPiece,
}

/// Classifies datapoint `n` as a knot of neuron `i`'s loss slice.
pub fn classify_knot(bdso: &BdsoParams, i: usize, n: usize, data: &Dataset) -> Result<KnotClass> {
    if i >= bdso.width() {
        return Err(Error::InvalidInput(format!("neuron {i} out of range")));
    }
    let xs = data.xs();
    if n == 0 || n + 1 >= xs.len() {
        return Err(Error::NotInterior(n));
    }
    let (xl, xn, xr) = (xs[n - 1], xs[n], xs[n + 1]);
    if !(xl < xn && xn < xr) {
        return Err(Error::NotInterior(n));
    }
    let fit = |a: f64, b: f64| {
        let t = [0.25, 0.5, 0.75].map(|q| a + q * (b - a));
        QuadraticPiece::through(t, t.map(|tt| loss_slice(bdso, i, data, tt)))
    };
    let left = fit(xl, xn);
    let right = fit(xn, xr);
    let (m1, m2) = (left.argmin(), right.argmin());
    let degenerate = bdso.neurons[i].mu == 0.0 || m1.is_nan() || m2.is_nan();
    let scale = 1e-9 * (xr - xl).max(xn.abs()).max(1.0);
    let kind = if degenerate || (m1 - xn).abs() < scale || (m2 - xn).abs() < scale {
        KnotKind::Boundary
    } else if m1 < xn && xn < m2 {
        KnotKind::TypeIIRepulsor
    } else if m2 < xn && xn < m1 {
        KnotKind::TypeIIIAttractor
    } else {
        KnotKind::TypeIPassover
    };
    Ok(KnotClass {
        n,
        i,
        m1,
        m2,
        kind,
        degenerate,
        left,
        right,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    /// Case number 1–7.
    pub case: u8,
    pub neurons: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub conditions: Vec<Degeneracy>,
}

impl DegeneracyReport {
    pub fn has(&self, case: u8, neurons: &[usize]) -> bool {
        self.conditions
            .iter()
            .any(|d| d.case == case && d.neurons == neurons)
    }

    pub fn count(&self, case: u8) -> usize {
        self.conditions.iter().filter(|d| d.case == case).count()
    }
}

/// Lists every way the Gram features lose linear independence.
///
/// 1. two neurons share an activation pattern
/// 2. `w x_i + b 1_i` lies in the span of `v x_i` and `v 1_i` (any `v ≠ 0`)
/// 3. a neuron is active on all data
/// 4. a neuron is active on no data
/// 5. `x_i ∝ 1_i` (all active inputs equal)
/// 6. one of `w_i, v_i, b_i` is zero
/// 7. two neurons have complementary patterns
pub fn degeneracy_report(net: &NetParams, data: &Dataset) -> DegeneracyReport {
    let h = net.width();
    let xs = data.xs();
    let patterns = activation_patterns(net, data);
    let mut out = Vec::new();
    for i in 0..h {
        for j in i + 1..h {
            if patterns[i] == patterns[j] {
                out.push(Degeneracy {
                    case: 1,
                    neurons: vec![i, j],
                });
            }
        }
    }
    for i in 0..h {
        if net.v[i] != 0.0 {
            out.push(Degeneracy {
                case: 2,
                neurons: vec![i],
            });
        }
    }
    for (i, p) in patterns.iter().enumerate() {
        if p.iter().all(|&a| a) {
            out.push(Degeneracy {
                case: 3,
                neurons: vec![i],
            });
        }
        if p.iter().all(|&a| !a) {
            out.push(Degeneracy {
                case: 4,
                neurons: vec![i],
            });
        }
    }
    for (i, p) in patterns.iter().enumerate() {
        let active: Vec<f64> = xs.iter().zip(p).filter(|(_, &a)| a).map(|(&x, _)| x).collect();
        if let Some(&first) = active.first() {
            let tol = 1e-10 * active.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            if active.iter().all(|x| (x - first).abs() <= tol) {
                out.push(Degeneracy {
                    case: 5,
                    neurons: vec![i],
                });
            }
        }
    }
    for i in 0..h {
        if net.w[i] == 0.0 || net.v[i] == 0.0 || net.b[i] == 0.0 {
            out.push(Degeneracy {
                case: 6,
                neurons: vec![i],
            });
        }
    }
    for i in 0..h {
        for j in i + 1..h {
            if patterns[i].iter().zip(&patterns[j]).all(|(a, b)| a != b) {
                out.push(Degeneracy {
                    case: 7,
                    neurons: vec![i, j],
                });
            }
        }
    }
    DegeneracyReport { conditions: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{Knot, Orientation};

    fn data3() -> Dataset {
        Dataset::from_points(&[(-1.0, 0.5), (0.5, 1.0), (2.0, -0.3)]).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(eig_spectrum(&d).unwrap(), vec![1.0, 2.0, 3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = eig_spectrum(&m).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eig_spectrum(&bad), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn bound_values() {
        assert!((zero_fraction_bound(64, 8) - (1.0 - 15.0 / 193.0)).abs() < 1e-15);
        assert!((zero_fraction_bound(1_000_000, 8) - 1.0).abs() < 1e-4);
        assert_eq!(zero_fraction_bound(1, 10), 0.0);
    }

    #[test]
    fn boundary_breakpoint_rejected() {
        let net = NetParams::new(0.0, vec![2.0], vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(
            full_hessian(&net, &data3()),
            Err(Error::BoundaryBreakpoint {
                neuron: 0,
                point: 1
            })
        );
    }

    #[test]
    fn zero_residual_hessian_is_gram() {
        let net = NetParams::new(0.2, vec![1.0, -0.5], vec![0.3, 0.4], vec![0.7, -1.2]).unwrap();
        let xs = vec![-1.3, -0.2, 0.9, 1.7];
        let ys = crate::net::predict(&net, &xs);
        let data = Dataset::new(xs, ys).unwrap();
        assert_eq!(full_hessian(&net, &data).unwrap(), gram_hessian(&net, &data).unwrap());
    }

    #[test]
    fn single_point_piece_passes_ols() {
        let net = NetParams::new(0.0, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let data = Dataset::from_points(&[(1.0, 1.0)]).unwrap();
        let rep = is_critical_ols(&net, &data, 1e-12);
        assert!(rep.passes);
        assert_eq!(rep.pieces.iter().filter(|p| p.count == 1).count(), 1);
    }

    #[test]
    fn flat_slice_is_boundary() {
        let bdso = BdsoParams::new(0.0, vec![Knot::new(0.1, 0.0, Orientation::Right)]).unwrap();
        let c = classify_knot(&bdso, 0, 1, &data3()).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.kind, KnotKind::Boundary);
        assert_eq!(classify_knot(&bdso, 0, 0, &data3()), Err(Error::NotInterior(0)));
        assert_eq!(classify_knot(&bdso, 0, 2, &data3()), Err(Error::NotInterior(2)));
    }

    #[test]
    fn fitted_pieces_match_slice() {
        let data = Dataset::from_points(&[(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).unwrap();
        let bdso = BdsoParams::new(0.0, vec![Knot::new(0.3, 1.0, Orientation::Left)]).unwrap();
        let c = classify_knot(&bdso, 0, 1, &data).unwrap();
        let probe = 0.6;
        assert!((c.right.eval(probe) - loss_slice(&bdso, 0, &data, probe)).abs() < 1e-12);
        assert!(matches!(
            c.kind,
            KnotKind::TypeIPassover | KnotKind::TypeIIRepulsor | KnotKind::TypeIIIAttractor
        ));
    }

    #[test]
    fn degeneracy_cases() {
        let data = data3();
        let dup = NetParams::new(0.0, vec![1.0, 1.0], vec![0.1, 0.1], vec![1.0, 1.0]).unwrap();
        assert!(degeneracy_report(&dup, &data).has(1, &[0, 1]));

        let dead = NetParams::new(0.0, vec![1.0], vec![-5.0], vec![1.0]).unwrap();
        assert!(degeneracy_report(&dead, &data).has(4, &[0]));

        let one = NetParams::new(0.0, vec![1.0], vec![-1.0], vec![1.0]).unwrap();
        let rep = degeneracy_report(&one, &data);
        assert!(rep.has(5, &[0]));
        assert!(rep.has(2, &[0]));

        let pair = NetParams::new(0.0, vec![1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let rep = degeneracy_report(&pair, &data);
        assert!(rep.has(7, &[0, 1]));
        assert_eq!(rep.count(6), 2);
        assert!(rep.conditions.iter().all(|d| (1..=7).contains(&d.case)));
    }
}
