//! Certified interval for the embedding gap between a target map `f` on `K`
//! and a model map `g` on `W`.
//!
//! The lower end is the directed sup-inf distance from `f(K)` to `g(W)`; the
//! upper end is `sup_x ‖g(h(x)) - f(x)‖` for an explicit injective candidate
//! `h: K → W`, fitted by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{directed_supinf, wasserstein2, EmpiricalMeasure, W2Method};
use crate::error::{invalid_arg, Error, Result};
use crate::expansive::RANK_TOLERANCE;
use crate::flows::FlowBlock;
use crate::linalg::{has_full_column_rank, seeded_rng};
use crate::network::{InjectiveNetwork, LatentBox};
use crate::projection::{project_to_range, supports_projection};
use crate::training::{Adam, AdamConfig};

/// A map that can be evaluated pointwise, optionally with a domain box and a
/// way to pull ambient points back.
pub trait EmbeddingMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, w: &[f64]) -> Result<DVector<f64>>;

    fn domain(&self) -> Option<&LatentBox> {
        None
    }

    /// Approximate preimage of an ambient point, when the map offers one.
    fn preimage(&self, _y: &DVector<f64>) -> Option<Result<DVector<f64>>> {
        None
    }
}

impl EmbeddingMap for InjectiveNetwork {
    fn in_dim(&self) -> usize {
        InjectiveNetwork::in_dim(self)
    }

    fn out_dim(&self) -> usize {
        InjectiveNetwork::out_dim(self)
    }

    fn eval(&self, w: &[f64]) -> Result<DVector<f64>> {
        self.forward(w).map(DVector::from_vec)
    }

    fn domain(&self) -> Option<&LatentBox> {
        self.latent_domain()
    }

    fn preimage(&self, y: &DVector<f64>) -> Option<Result<DVector<f64>>> {
        supports_projection(self).then(|| project_to_range(self, y).map(|r| r.x))
    }
}

type PointFn = Box<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;

/// Closure-backed [`EmbeddingMap`].
pub struct FnMap {
    in_dim: usize,
    out_dim: usize,
    f: PointFn,
    domain: Option<LatentBox>,
}

impl FnMap {
    pub fn new(in_dim: usize, out_dim: usize, f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self { in_dim, out_dim, f: Box::new(f), domain: None }
    }

    pub fn with_domain(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.domain = Some(LatentBox { lo, hi });
        self
    }
}

impl EmbeddingMap for FnMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn eval(&self, w: &[f64]) -> Result<DVector<f64>> {
        Ok((self.f)(w))
    }

    fn domain(&self) -> Option<&LatentBox> {
        self.domain.as_ref()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFamily {
    #[default]
    Affine,
    SmallFlow,
}

/// Candidate map `h` from `K` into `W`.
#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    Affine { a: DMatrix<f64>, b: DVector<f64> },
    Constant(DVector<f64>),
    /// `x ↦ A T(x) + b` with a bijective flow `T`.
    SmallFlow { flow: FlowBlock, a: DMatrix<f64>, b: DVector<f64> },
}

impl Candidate {
    /// `x ↦ [I 0] x` or `x ↦ [I; 0] x`, matching dimensions by truncation or padding.
    pub fn identity_embedding(k_dim: usize, w_dim: usize) -> Self {
        Candidate::Affine { a: DMatrix::identity(w_dim, k_dim), b: DVector::zeros(w_dim) }
    }

    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        let xv = DVector::from_column_slice(x);
        match self {
            Candidate::Affine { a, b } => {
                if a.ncols() != x.len() {
                    return Err(invalid_arg("candidate input dimension mismatch"));
                }
                Ok(a * xv + b)
            }
            Candidate::Constant(c) => Ok(c.clone()),
            Candidate::SmallFlow { flow, a, b } => Ok(a * DVector::from_vec(flow.forward(x)?) + b),
        }
    }

    pub fn describe(&self) -> String {
        let fmt_m = |m: &DMatrix<f64>| {
            let rows: Vec<String> = m
                .row_iter()
                .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")))
                .collect();
            format!("[{}]", rows.join(", "))
        };
        let fmt_v = |v: &DVector<f64>| format!("[{}]", v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", "));
        match self {
            Candidate::Affine { a, b } => format!("affine A={} b={}", fmt_m(a), fmt_v(b)),
            Candidate::Constant(c) => format!("constant {}", fmt_v(c)),
            Candidate::SmallFlow { flow, a, b } => {
                format!("small-flow ({} layers) then A={} b={}", flow.layers().len(), fmt_m(a), fmt_v(b))
            }
        }
    }

    fn is_injective(&self, k_dim: usize) -> bool {
        match self {
            Candidate::Affine { a, .. } | Candidate::SmallFlow { a, .. } => has_full_column_rank(a, RANK_TOLERANCE),
            Candidate::Constant(_) => k_dim == 0,
        }
    }
}

/// Lower and upper bounds on the embedding gap with the witnessing candidate.
#[derive(Clone, Debug)]
pub struct EmbeddingGapEstimate {
    pub lower: f64,
    pub upper: f64,
    pub candidate: Candidate,
    /// Number of `K` samples both bounds were evaluated on.
    pub samples: usize,
}

fn check_pairs(f_pairs: &[(DVector<f64>, DVector<f64>)], g: &dyn EmbeddingMap) -> Result<()> {
    if f_pairs.is_empty() {
        return Err(invalid_arg("need at least one (x, f(x)) pair"));
    }
    let (kd, md) = (f_pairs[0].0.len(), f_pairs[0].1.len());
    if f_pairs.iter().any(|(x, y)| x.len() != kd || y.len() != md) {
        return Err(invalid_arg("pairs must have consistent dimensions"));
    }
    if md != g.out_dim() {
        return Err(invalid_arg(format!("f maps into R^{md}, g into R^{}", g.out_dim())));
    }
    Ok(())
}

fn candidate_images(f_pairs: &[(DVector<f64>, DVector<f64>)], g: &dyn EmbeddingMap, h: &Candidate) -> Result<Vec<DVector<f64>>> {
    f_pairs
        .iter()
        .map(|(x, _)| {
            let w = h.apply(x.as_slice())?;
            if w.len() != g.in_dim() {
                return Err(Error::InvalidCandidate(format!("candidate maps into R^{}, g expects R^{}", w.len(), g.in_dim())));
            }
            if let Some(dom) = g.domain() {
                if !dom.contains(w.as_slice(), 1e-9) {
                    return Err(Error::InvalidCandidate(format!("h({:?}) leaves the domain of g", x.as_slice())));
                }
            }
            g.eval(w.as_slice())
        })
        .collect()
}

/// `max_j ‖g(h(x_j)) - f(x_j)‖`.
pub fn embedding_gap_upper(f_pairs: &[(DVector<f64>, DVector<f64>)], g: &dyn EmbeddingMap, h: &Candidate) -> Result<f64> {
    check_pairs(f_pairs, g)?;
    let images = candidate_images(f_pairs, g, h)?;
    Ok(images.iter().zip(f_pairs).map(|(gy, (_, fy))| (gy - fy).norm()).fold(0.0, f64::max))
}

fn affine_regression(xs: &[DVector<f64>], zs: &[DVector<f64>]) -> Result<Candidate> {
    let (n, k, rows) = (xs[0].len(), zs[0].len(), xs.len());
    let design = DMatrix::from_fn(rows, n + 1, |i, j| if j < n { xs[i][j] } else { 1.0 });
    if !has_full_column_rank(&design, 1e-10) {
        return Err(invalid_arg("K samples are affinely degenerate; affine regression is rank deficient"));
    }
    let targets = DMatrix::from_fn(rows, k, |i, j| zs[i][j]);
    let coef = design
        .svd(true, true)
        .solve(&targets, 1e-14)
        .map_err(|e| Error::Internal(e.to_string()))?;
    let a = coef.rows(0, n).transpose();
    let b = coef.row(n).transpose();
    Ok(Candidate::Affine { a, b })
}

/// Preimages of every `f(x_j)`: exact pullbacks when `g` offers them, else the
/// nearest `W` sample.
fn preimages(f_pairs: &[(DVector<f64>, DVector<f64>)], g: &dyn EmbeddingMap, w_samples: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let images: Vec<DVector<f64>> = w_samples.iter().map(|w| g.eval(w.as_slice())).collect::<Result<_>>()?;
    f_pairs
        .iter()
        .map(|(_, y)| match g.preimage(y) {
            Some(r) => r,
            None => {
                let k = images
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - y).norm_squared().total_cmp(&(b.1 - y).norm_squared()))
                    .map(|(k, _)| k)
                    .ok_or_else(|| invalid_arg("need W samples to pull points back"))?;
                Ok(w_samples[k].clone())
            }
        })
        .collect()
}

/// Trains `T` in `x ↦ A T(x) + b` on the squared error to the preimages, with
/// `A`, `b` from the affine fit.
fn fit_small_flow(xs: &[DVector<f64>], zs: &[DVector<f64>], a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Candidate> {
    let n = xs[0].len();
    let mut rng = seeded_rng(0x5a11);
    let mut flow = FlowBlock::random(&mut rng, n, 2, 16, 1e-2);
    let x = DMatrix::from_columns(xs);
    let z = DMatrix::from_columns(zs);
    let mut params = Vec::new();
    flow.write_params(&mut params);
    let mask = vec![true; params.len()];
    let mut adam = Adam::new(params.len(), AdamConfig::default());
    for _ in 0..400 {
        let (t, caches) = flow.forward_cached(&x)?;
        let mut pred = a * t;
        for mut c in pred.column_iter_mut() {
            c += b;
        }
        let dout = a.transpose() * ((pred - &z) * (2.0 / xs.len() as f64));
        let mut grad = vec![0.0; params.len()];
        flow.backward(&caches, &dout, Some(&mut grad));
        adam.step(&mut params, &grad, 1e-2, &mask);
        flow.read_params(&params);
    }
    Ok(Candidate::SmallFlow { flow, a: a.clone(), b: b.clone() })
}

/// Candidate from the requested family minimizing the empirical upper bound,
/// never worse than the identity-embedding incumbent when that is admissible.
pub fn fit_candidate_alignment(
    f_pairs: &[(DVector<f64>, DVector<f64>)],
    g: &dyn EmbeddingMap,
    w_samples: &[DVector<f64>],
    family: CandidateFamily,
) -> Result<(Candidate, f64)> {
    check_pairs(f_pairs, g)?;
    if f_pairs.len() == 1 {
        let y = &f_pairs[0].1;
        let mut best: Option<(f64, &DVector<f64>)> = None;
        for w in w_samples {
            let d = (g.eval(w.as_slice())? - y).norm();
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, w));
            }
        }
        let (d, w) = best.ok_or_else(|| invalid_arg("need W samples for a single-point K"))?;
        return Ok((Candidate::Constant(w.clone()), d));
    }
    let k_dim = f_pairs[0].0.len();
    if f_pairs.len() < k_dim + 1 {
        return Err(invalid_arg(format!("affine fit needs at least {} pairs", k_dim + 1)));
    }
    let xs: Vec<DVector<f64>> = f_pairs.iter().map(|p| p.0.clone()).collect();
    let zs = preimages(f_pairs, g, w_samples)?;
    let fitted = affine_regression(&xs, &zs)?;
    let mut pool = vec![Candidate::identity_embedding(k_dim, g.in_dim()), fitted.clone()];
    if family == CandidateFamily::SmallFlow {
        if let Candidate::Affine { a, b } = &fitted {
            pool.push(fit_small_flow(&xs, &zs, a, b)?);
        }
    }
    let mut best: Option<(Candidate, f64)> = None;
    for c in pool {
        if !c.is_injective(k_dim) {
            continue;
        }
        match embedding_gap_upper(f_pairs, g, &c) {
            Ok(v) if best.as_ref().is_none_or(|(_, b)| v < *b) => best = Some((c, v)),
            Ok(_) | Err(Error::InvalidCandidate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::InvalidCandidate("no admissible injective candidate maps K into W".into()))
}

/// Fits a candidate and pairs its upper bound with the directed sup-inf lower
/// bound. The lower bound's model set includes the candidate's images, so the
/// sampled interval is always ordered.
pub fn estimate_embedding_gap(
    f_pairs: &[(DVector<f64>, DVector<f64>)],
    g: &dyn EmbeddingMap,
    w_samples: &[DVector<f64>],
    family: CandidateFamily,
) -> Result<EmbeddingGapEstimate> {
    let (candidate, upper) = fit_candidate_alignment(f_pairs, g, w_samples, family)?;
    let mut model: Vec<DVector<f64>> = w_samples.iter().map(|w| g.eval(w.as_slice())).collect::<Result<_>>()?;
    model.extend(candidate_images(f_pairs, g, &candidate)?);
    let targets: Vec<DVector<f64>> = f_pairs.iter().map(|p| p.1.clone()).collect();
    let lower = directed_supinf(&targets, &model)?;
    Ok(EmbeddingGapEstimate { lower, upper, candidate, samples: f_pairs.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub w2: f64,
    pub method: &'static str,
    pub upper: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Pushes the uniform measure on the `K` samples through the candidate to get
/// `μ_o` on `W`, then compares `W2(f#μ, g#μ_o)` with the gap's upper bound.
pub fn wasserstein_bound_check(
    f_pairs: &[(DVector<f64>, DVector<f64>)],
    g: &dyn EmbeddingMap,
    gap: &EmbeddingGapEstimate,
    tolerance: f64,
) -> Result<BoundCheck> {
    check_pairs(f_pairs, g)?;
    let g_images = candidate_images(f_pairs, g, &gap.candidate)?;
    let f_measure = EmpiricalMeasure::uniform(f_pairs.iter().map(|p| p.1.clone()).collect())?;
    let g_measure = EmpiricalMeasure::uniform(g_images)?;
    let (w2, method) = wasserstein2(&f_measure, &g_measure, 0)?;
    Ok(BoundCheck {
        w2,
        method: match method {
            W2Method::Exact => "exact",
            W2Method::Sliced { .. } => "sliced",
        },
        upper: gap.upper,
        tolerance,
        passed: w2 <= gap.upper + tolerance,
    })
}
