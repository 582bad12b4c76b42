//! Exact discrete optimal transport and the sliced estimator.

use nalgebra::{DMatrix, DVector};

use super::EmpiricalMeasure;
use crate::error::{invalid_arg, Error, Result};
use crate::linalg::{dist2, random_orthonormal_columns, seeded_rng};

/// Largest combined support handed to the exact solver.
pub const EXACT_BUDGET: usize = 512;
/// Largest common refinement used to split unequal masses.
pub const REFINEMENT_CAP: usize = 1024;
pub const DEFAULT_SLICES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum W2Method {
    Exact,
    Sliced { projections: usize, seed: u64 },
}

impl W2Method {
    pub fn label(&self) -> &'static str {
        match self {
            W2Method::Exact => "w2_exact",
            W2Method::Sliced { .. } => "w2_sliced",
        }
    }
}

/// Minimum-cost perfect assignment of rows to columns (`rows <= cols`) by
/// shortest augmenting paths with potentials. Returns the total cost and the
/// column chosen for every row.
pub fn assignment_cost(cost: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let (n, m) = cost.shape();
    assert!(n <= m, "assignment needs rows <= cols");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    (total, assignment)
}

/// Smallest `k <= cap` such that every weight is an integer multiple of `1/k`.
fn mass_denominator(weights: &[f64], cap: usize) -> Option<usize> {
    (weights.len()..=cap).find(|&k| {
        weights.iter().all(|&w| {
            let units = w * k as f64;
            (units - units.round()).abs() <= 1e-9
        })
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn split_masses(mu: &EmpiricalMeasure, total: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(total);
    for (i, &w) in mu.weights().iter().enumerate() {
        let copies = (w * total as f64).round() as usize;
        out.extend(std::iter::repeat_n(i, copies));
    }
    out
}

/// Exact W2 by optimal assignment; unequal or non-uniform masses are split
/// into a common refinement of equal atoms.
pub fn wasserstein2_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(invalid_arg("measures live in different dimensions"));
    }
    let size = mu.len() + nu.len();
    if size > EXACT_BUDGET {
        return Err(Error::BudgetExceeded { size, budget: EXACT_BUDGET });
    }
    let ka = mass_denominator(mu.weights(), REFINEMENT_CAP);
    let kb = mass_denominator(nu.weights(), REFINEMENT_CAP);
    let (ka, kb) = match (ka, kb) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(invalid_arg("weights have no common refinement within the exact solver cap")),
    };
    let total = ka / gcd(ka, kb) * kb;
    if total > REFINEMENT_CAP {
        return Err(Error::BudgetExceeded { size: total, budget: REFINEMENT_CAP });
    }
    let rows = split_masses(mu, total);
    let cols = split_masses(nu, total);
    if rows.len() != total || cols.len() != total {
        return Err(Error::Internal("mass splitting lost atoms".into()));
    }
    let cost = DMatrix::from_fn(total, total, |i, j| {
        dist2(mu.points()[rows[i]].as_slice(), nu.points()[cols[j]].as_slice())
    });
    let (c, _) = assignment_cost(&cost);
    Ok((c / total as f64).max(0.0).sqrt())
}

/// Squared W2 between weighted samples on the line.
pub fn wasserstein1d_squared(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let mut ia: Vec<usize> = (0..a.len()).collect();
    let mut ib: Vec<usize> = (0..b.len()).collect();
    ia.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    ib.sort_by(|&i, &j| b[i].total_cmp(&b[j]));
    if a.len() == b.len() && wa.iter().chain(wb).all(|&w| w == wa[0]) {
        let s: f64 = ia.iter().zip(&ib).map(|(&i, &j)| (a[i] - b[j]).powi(2)).sum();
        return s / a.len() as f64;
    }
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wa[ia[0]], wb[ib[0]]);
    let mut acc = 0.0;
    while i < ia.len() && j < ib.len() {
        let m = ra.min(rb);
        acc += m * (a[ia[i]] - b[ib[j]]).powi(2);
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            if i < ia.len() {
                ra = wa[ia[i]];
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if j < ib.len() {
                rb = wb[ib[j]];
            }
        }
    }
    acc
}

/// Seeded unit directions, drawn as the columns of independent uniformly
/// random orthonormal frames. Each full frame resolves squared norms exactly,
/// which removes most of the Monte Carlo noise for near-translations.
pub fn slice_directions(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let frame = random_orthonormal_columns(&mut rng, dim, dim);
        for col in frame.column_iter() {
            if out.len() < count {
                out.push(col.into_owned());
            }
        }
    }
    out
}

/// `sqrt(d * mean_theta W2^2(theta#mu, theta#nu))`. The factor `d` makes the
/// estimate unbiased for translations and keeps it below exact W2 on average.
pub fn wasserstein2_sliced(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, projections: usize, seed: u64) -> Result<f64> {
    if projections == 0 {
        return Err(invalid_arg("sliced W2 needs at least one projection"));
    }
    if mu.dim() != nu.dim() {
        return Err(invalid_arg("measures live in different dimensions"));
    }
    let dim = mu.dim();
    let dirs = slice_directions(dim, projections, seed);
    let mut total = 0.0;
    for theta in &dirs {
        let pa: Vec<f64> = mu.points().iter().map(|p| p.dot(theta)).collect();
        let pb: Vec<f64> = nu.points().iter().map(|p| p.dot(theta)).collect();
        total += wasserstein1d_squared(&pa, mu.weights(), &pb, nu.weights());
    }
    Ok((dim as f64 * total / projections as f64).max(0.0).sqrt())
}

/// Exact W2 when the supports fit the budget, sliced otherwise.
pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, seed: u64) -> Result<(f64, W2Method)> {
    match wasserstein2_exact(mu, nu) {
        Ok(v) => Ok((v, W2Method::Exact)),
        Err(Error::BudgetExceeded { .. }) => {
            let v = wasserstein2_sliced(mu, nu, DEFAULT_SLICES, seed)?;
            Ok((v, W2Method::Sliced { projections: DEFAULT_SLICES, seed }))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(xs.iter().map(|&x| DVector::from_element(1, x)).collect()).unwrap()
    }

    #[test]
    fn exact_examples() {
        let a = line(&[0.0, 2.0]);
        assert_eq!(wasserstein2_exact(&a, &a).unwrap(), 0.0);
        assert!((wasserstein2_exact(&line(&[0.0]), &line(&[1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!((wasserstein2_exact(&a, &line(&[1.0, 3.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_supports_split_mass() {
        // two atoms at 0 and 1 versus one at 0.5: every unit moves 0.5
        let v = wasserstein2_exact(&line(&[0.0, 1.0]), &line(&[0.5])).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let mu = EmpiricalMeasure::new(
            vec![DVector::from_element(1, 0.0), DVector::from_element(1, 1.0)],
            vec![0.25, 0.75],
        )
        .unwrap();
        let v = wasserstein2_exact(&mu, &line(&[1.0])).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let xs: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let m = line(&xs);
        assert!(matches!(wasserstein2_exact(&m, &m), Err(Error::BudgetExceeded { .. })));
        let (v, method) = wasserstein2(&m, &m, 0).unwrap();
        assert_eq!(v, 0.0);
        assert!(matches!(method, W2Method::Sliced { .. }));
    }

    #[test]
    fn one_dimensional_weighted_matches_exact() {
        let a = [0.0, 1.0, 5.0];
        let b = [2.0, 3.0];
        let v = wasserstein1d_squared(&a, &[1.0 / 3.0; 3], &b, &[0.5; 2]);
        let exact = wasserstein2_exact(&line(&a), &line(&b)).unwrap();
        assert!((v.sqrt() - exact).abs() < 1e-12);
    }

    #[test]
    fn sliced_translation_and_determinism() {
        let base: Vec<DVector<f64>> = (0..64)
            .map(|i| {
                let t = i as f64 * 0.37;
                DVector::from_vec(vec![t.sin(), (1.3 * t).cos(), 0.1 * t])
            })
            .collect();
        let shift = DVector::from_vec(vec![0.3, -0.4, 1.2]);
        let mu = EmpiricalMeasure::uniform(base.clone()).unwrap();
        let nu = EmpiricalMeasure::uniform(base.iter().map(|p| p + &shift).collect()).unwrap();
        let s = wasserstein2_sliced(&mu, &nu, 256, 3).unwrap();
        assert!((s - shift.norm()).abs() <= 0.05 * shift.norm(), "sliced {s}");
        assert_eq!(s, wasserstein2_sliced(&mu, &nu, 256, 3).unwrap());
        assert_eq!(wasserstein2_sliced(&mu, &mu, 16, 1).unwrap(), 0.0);
        assert!(wasserstein2_sliced(&mu, &nu, 0, 1).is_err());
    }
}
