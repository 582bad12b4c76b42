//! Target manifolds, their parametrizations, and samplers for the parameter
//! domains `K`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use crate::error::{invalid_arg, Error, Result};
use crate::linalg::{columns_to_matrix, norm, seeded_rng};
use crate::metrics::EmpiricalMeasure;

/// Default half-width scale of the knotted ribbon.
pub const DEFAULT_RIBBON_WIDTH: f64 = 0.1;

/// Below this norm the Frenet construction is abandoned for the reference-vector fallback.
const FRENET_MIN_CURVATURE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingLaw {
    /// Deterministic quadrature-style layout.
    Grid,
    /// Independent uniform draws from a seeded generator.
    Random { seed: u64 },
}

impl fmt::Display for SamplingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingLaw::Grid => write!(f, "grid"),
            SamplingLaw::Random { seed } => write!(f, "random(seed={seed})"),
        }
    }
}

/// A finite sample of a compact set: non-empty, finite, common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactSampleSet {
    points: Vec<DVector<f64>>,
    generator: String,
}

impl CompactSampleSet {
    pub fn new(points: Vec<DVector<f64>>, generator: impl Into<String>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(invalid_arg("sample set must be non-empty"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(invalid_arg("sample points must have positive dimension"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(invalid_arg(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(invalid_arg(format!("point {i} is not finite")));
            }
        }
        Ok(Self { points, generator: generator.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], generator: impl Into<String>) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect(), generator)
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<DVector<f64>> {
        self.points
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points as the columns of a `dim x len` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        columns_to_matrix(&self.points)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_points_csv(out, &self.points)
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let rows = read_points_csv(input)?;
        Self::from_rows(&rows, "csv")
    }
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes points as CSV with a `x0,..,x{d-1}` header.
pub fn write_points_csv<W: Write>(mut out: W, points: &[DVector<f64>]) -> Result<()> {
    let dim = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let row: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a headered numeric CSV into rows.
pub fn read_points_csv<R: BufRead>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV: missing header".into()))??;
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if row.len() != width {
            return Err(Error::Parse(format!(
                "line {}: expected {width} fields, found {}",
                lineno + 2,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Descriptor of a compact parameter domain `K`.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    /// The unit circle S¹ ⊂ R².
    Circle,
    /// `{x ∈ R² : inner ≤ |x| ≤ outer}`.
    Annulus { inner: f64, outer: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    /// Dimension of the space containing the domain.
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Circle | Domain::Annulus { .. } => 2,
            Domain::Box { lo, .. } => lo.len(),
        }
    }

    pub fn sample(&self, count: usize, law: SamplingLaw) -> Result<CompactSampleSet> {
        match self {
            Domain::Interval { lo, hi } => sample_interval(*lo, *hi, count, law),
            Domain::Circle => sample_circle(count, law),
            Domain::Annulus { inner, outer } => sample_annulus(*inner, *outer, count, law),
            Domain::Box { lo, hi } => sample_box(lo, hi, count, law),
        }
    }

    /// Uniform draws as matrix columns, for training batches.
    pub(crate) fn sample_batch(&self, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, count);
        for j in 0..count {
            match self {
                Domain::Interval { lo, hi } => out[(0, j)] = rng.random_range(*lo..=*hi),
                Domain::Circle => {
                    let t = rng.random_range(0.0..TAU);
                    out[(0, j)] = t.cos();
                    out[(1, j)] = t.sin();
                }
                Domain::Annulus { inner, outer } => {
                    let (x, y) = annulus_draw(*inner, *outer, rng);
                    out[(0, j)] = x;
                    out[(1, j)] = y;
                }
                Domain::Box { lo, hi } => {
                    for i in 0..dim {
                        out[(i, j)] = rng.random_range(lo[i]..=hi[i]);
                    }
                }
            }
        }
        out
    }
}

fn annulus_draw(inner: f64, outer: f64, rng: &mut impl Rng) -> (f64, f64) {
    let u: f64 = rng.random_range(0.0..=1.0);
    let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
    let t = rng.random_range(0.0..TAU);
    (r * t.cos(), r * t.sin())
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        Err(invalid_arg("count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Points on the unit circle in R², uniform in angle.
pub fn sample_circle(count: usize, law: SamplingLaw) -> Result<CompactSampleSet> {
    check_count(count)?;
    let angles: Vec<f64> = match law {
        SamplingLaw::Grid => (0..count).map(|k| TAU * k as f64 / count as f64).collect(),
        SamplingLaw::Random { seed } => {
            let mut rng = seeded_rng(seed);
            (0..count).map(|_| rng.random_range(0.0..TAU)).collect()
        }
    };
    let points = angles
        .into_iter()
        .map(|t| {
            // exact values at the quarter turns keep the grid symmetric
            let (s, c) = exact_sin_cos(t);
            DVector::from_vec(vec![c, s])
        })
        .collect();
    CompactSampleSet::new(points, format!("circle/{law}"))
}

fn exact_sin_cos(t: f64) -> (f64, f64) {
    let quarter = t / (PI / 2.0);
    if (quarter - quarter.round()).abs() < 1e-15 {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        t.sin_cos()
    }
}

pub fn sample_interval(lo: f64, hi: f64, count: usize, law: SamplingLaw) -> Result<CompactSampleSet> {
    check_count(count)?;
    if !(lo < hi) {
        return Err(invalid_arg(format!("empty interval [{lo}, {hi}]")));
    }
    let values: Vec<f64> = match law {
        SamplingLaw::Grid if count == 1 => vec![0.5 * (lo + hi)],
        SamplingLaw::Grid => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
        SamplingLaw::Random { seed } => {
            let mut rng = seeded_rng(seed);
            (0..count).map(|_| rng.random_range(lo..=hi)).collect()
        }
    };
    let points = values.into_iter().map(|v| DVector::from_vec(vec![v])).collect();
    CompactSampleSet::new(points, format!("interval[{lo},{hi}]/{law}"))
}

/// Uniform (in area) samples of the annulus. The grid law uses a golden-angle
/// spiral with equal-area radial spacing.
pub fn sample_annulus(inner: f64, outer: f64, count: usize, law: SamplingLaw) -> Result<CompactSampleSet> {
    check_count(count)?;
    if !(0.0 <= inner && inner < outer) {
        return Err(invalid_arg(format!("invalid annulus radii {inner}, {outer}")));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let points = match law {
        SamplingLaw::Grid => (0..count)
            .map(|k| {
                let u = (k as f64 + 0.5) / count as f64;
                let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                let t = golden * k as f64;
                DVector::from_vec(vec![r * t.cos(), r * t.sin()])
            })
            .collect(),
        SamplingLaw::Random { seed } => {
            let mut rng = seeded_rng(seed);
            (0..count)
                .map(|_| {
                    let (x, y) = annulus_draw(inner, outer, &mut rng);
                    DVector::from_vec(vec![x, y])
                })
                .collect()
        }
    };
    CompactSampleSet::new(points, format!("annulus[{inner},{outer}]/{law}"))
}

/// Samples of an axis-aligned box. The grid law places `round(count^(1/d))`
/// points per axis, so it returns that many to the power `d`.
pub fn sample_box(lo: &[f64], hi: &[f64], count: usize, law: SamplingLaw) -> Result<CompactSampleSet> {
    check_count(count)?;
    if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(invalid_arg("invalid box bounds"));
    }
    let d = lo.len();
    let points = match law {
        SamplingLaw::Grid => {
            let per_axis = ((count as f64).powf(1.0 / d as f64).round() as usize).max(1);
            let axis = |i: usize, k: usize| {
                if per_axis == 1 {
                    0.5 * (lo[i] + hi[i])
                } else {
                    lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64
                }
            };
            let total = per_axis.pow(d as u32);
            (0..total)
                .map(|mut idx| {
                    let mut p = DVector::zeros(d);
                    for i in 0..d {
                        p[i] = axis(i, idx % per_axis);
                        idx /= per_axis;
                    }
                    p
                })
                .collect()
        }
        SamplingLaw::Random { seed } => {
            let mut rng = seeded_rng(seed);
            (0..count)
                .map(|_| DVector::from_fn(d, |i, _| rng.random_range(lo[i]..=hi[i])))
                .collect()
        }
    };
    CompactSampleSet::new(points, format!("box/{law}"))
}

/// The trefoil knot `(sin θ + 2 sin 2θ, cos θ − 2 cos 2θ, −sin 3θ)`.
pub fn trefoil(theta: f64) -> Vector3<f64> {
    Vector3::new(
        theta.sin() + 2.0 * (2.0 * theta).sin(),
        theta.cos() - 2.0 * (2.0 * theta).cos(),
        -(3.0 * theta).sin(),
    )
}

pub fn trefoil_tangent(theta: f64) -> Vector3<f64> {
    Vector3::new(
        theta.cos() + 4.0 * (2.0 * theta).cos(),
        -theta.sin() + 4.0 * (2.0 * theta).sin(),
        -3.0 * (3.0 * theta).cos(),
    )
}

fn trefoil_second_derivative(theta: f64) -> Vector3<f64> {
    Vector3::new(
        -theta.sin() - 8.0 * (2.0 * theta).sin(),
        -theta.cos() + 8.0 * (2.0 * theta).cos(),
        9.0 * (3.0 * theta).sin(),
    )
}

/// Unit normal to the trefoil at `trefoil(theta)`, continuous in θ.
///
/// Uses the Frenet principal normal; where the curvature vector is numerically
/// zero, the fixed axis `e_z` (or `e_x`) is projected off the tangent instead.
pub fn trefoil_normal(theta: f64) -> Vector3<f64> {
    let d1 = trefoil_tangent(theta);
    let unit_t = d1 / d1.norm();
    let d2 = trefoil_second_derivative(theta);
    let curvature_dir = d2 - unit_t * d2.dot(&unit_t);
    if curvature_dir.norm() > FRENET_MIN_CURVATURE * d2.norm().max(1.0) {
        return curvature_dir / curvature_dir.norm();
    }
    let reference = if unit_t.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let projected = reference - unit_t * reference.dot(&unit_t);
    projected / projected.norm()
}

/// The knotted ribbon `F(r, θ) = f(θ) + a (r − 1) v(θ)` over the annulus `1/2 ≤ r ≤ 3/2`.
pub fn knotted_ribbon(r: f64, theta: f64, a: f64) -> Result<Vector3<f64>> {
    if !(0.5..=1.5).contains(&r) {
        return Err(invalid_arg(format!("radial coordinate {r} outside [1/2, 3/2]")));
    }
    if !(a > 0.0) {
        return Err(invalid_arg(format!("ribbon width scale must be positive, got {a}")));
    }
    Ok(trefoil(theta) + trefoil_normal(theta) * (a * (r - 1.0)))
}

type ParamMap = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

/// A target embedding `f: K → R^m` together with its domain.
#[derive(Clone)]
pub struct ManifoldTarget {
    name: String,
    intrinsic_dim: usize,
    ambient_dim: usize,
    domain: Domain,
    map: Arc<ParamMap>,
}

impl fmt::Debug for ManifoldTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldTarget")
            .field("name", &self.name)
            .field("intrinsic_dim", &self.intrinsic_dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ManifoldTarget {
    pub fn new(
        name: impl Into<String>,
        ambient_dim: usize,
        domain: Domain,
        map: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            intrinsic_dim: domain.dim(),
            ambient_dim,
            domain,
            map: Arc::new(map),
        }
    }

    /// Trefoil knot scaled by `scale`, parametrized over S¹ ⊂ R².
    pub fn trefoil(scale: f64) -> Self {
        Self::new("trefoil", 3, Domain::Circle, move |p| {
            let theta = p[1].atan2(p[0]);
            let v = trefoil(theta) * scale;
            DVector::from_column_slice(v.as_slice())
        })
    }

    /// Circle of the given radius in the plane `z = 0` of R³, parametrized over S¹.
    pub fn planar_circle(radius: f64) -> Self {
        Self::new("planar-circle", 3, Domain::Circle, move |p| {
            let theta = p[1].atan2(p[0]);
            DVector::from_vec(vec![radius * theta.cos(), radius * theta.sin(), 0.0])
        })
    }

    /// Knotted ribbon over the annulus `1/2 ≤ |x| ≤ 3/2`.
    pub fn knotted_ribbon(a: f64, scale: f64) -> Self {
        Self::new(
            "knotted-ribbon",
            3,
            Domain::Annulus { inner: 0.5, outer: 1.5 },
            move |p| {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt().clamp(0.5, 1.5);
                let theta = p[1].atan2(p[0]);
                let v = (trefoil(theta) + trefoil_normal(theta) * (a * (r - 1.0))) * scale;
                DVector::from_column_slice(v.as_slice())
            },
        )
    }

    /// Smooth open space curve over `[-1, 1]` with end-to-end distance 1.
    pub fn space_curve() -> Self {
        Self::new("space-curve", 3, Domain::Interval { lo: -1.0, hi: 1.0 }, |p| {
            let t = p[0];
            DVector::from_vec(vec![
                0.5 * t,
                0.3 * (PI * t).sin(),
                0.2 * (PI * t).cos(),
            ])
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.map)(x)
    }

    /// Applies the map column-wise.
    pub fn eval_batch(&self, params: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ambient_dim, params.ncols());
        for (j, col) in params.column_iter().enumerate() {
            let v = self.eval(col.as_slice());
            out.set_column(j, &v);
        }
        out
    }
}

/// Uniform-weight measure on `{f(x) : x ∈ base}`.
pub fn pushforward_samples(target: &ManifoldTarget, base: &CompactSampleSet) -> Result<EmpiricalMeasure> {
    if base.dim() != target.intrinsic_dim() {
        return Err(invalid_arg(format!(
            "base samples have dimension {}, target expects {}",
            base.dim(),
            target.intrinsic_dim()
        )));
    }
    let points = base.points().iter().map(|p| target.eval(p.as_slice())).collect();
    EmpiricalMeasure::uniform(points)
}

/// Largest distance from any ribbon sample to the sampled core curve.
pub fn max_distance_to_curve(points: &[DVector<f64>], curve: &[DVector<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            curve
                .iter()
                .map(|c| norm((p - c).as_slice()))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn circle_grid_quarter_turns() {
        let s = sample_circle(4, SamplingLaw::Grid).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in s.points().iter().zip(expected) {
            assert_eq!(p.as_slice(), &e);
        }
        let one = sample_circle(1, SamplingLaw::Grid).unwrap();
        assert_eq!(one.points()[0].as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn circle_random_points_are_unit() {
        let s = sample_circle(1000, SamplingLaw::Random { seed: 7 }).unwrap();
        assert_eq!(s.len(), 1000);
        for p in s.points() {
            assert!((p.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(matches!(sample_circle(0, SamplingLaw::Grid), Err(Error::InvalidArgument(_))));
        assert!(sample_interval(0.0, 1.0, 0, SamplingLaw::Grid).is_err());
    }

    #[test]
    fn trefoil_values() {
        assert!(close(trefoil(0.0).as_slice(), &[0.0, -1.0, 0.0], 1e-15));
        assert!(close(trefoil(PI).as_slice(), &[0.0, -3.0, 0.0], 1e-12));
        assert!(close(trefoil(TAU).as_slice(), trefoil(0.0).as_slice(), 1e-12));
    }

    #[test]
    fn ribbon_examples() {
        for k in 0..16 {
            let t = k as f64 * 0.4;
            let core = trefoil(t);
            let on = knotted_ribbon(1.0, t, 0.1).unwrap();
            assert!(close(on.as_slice(), core.as_slice(), 0.0));
        }
        let edge = knotted_ribbon(1.5, 0.0, 0.1).unwrap();
        assert!(((edge - trefoil(0.0)).norm() - 0.05).abs() <= 1e-10);
        assert!(knotted_ribbon(1.6, 0.0, 0.1).is_err());
        assert!(knotted_ribbon(0.49, 0.0, 0.1).is_err());
    }

    #[test]
    fn normal_is_orthogonal_to_finite_difference_tangent() {
        let h = 1e-5;
        for k in 0..100 {
            let t = TAU * k as f64 / 100.0;
            let fd = (trefoil(t + h) - trefoil(t - h)) / (2.0 * h);
            let v = trefoil_normal(t);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v.dot(&fd).abs() <= 1e-8, "θ={t}: {}", v.dot(&fd));
        }
    }

    #[test]
    fn normal_is_continuous() {
        let mut prev = trefoil_normal(0.0);
        for k in 1..=2000 {
            let v = trefoil_normal(TAU * k as f64 / 2000.0);
            assert!((v - prev).norm() < 0.1);
            prev = v;
        }
    }

    #[test]
    fn pushforward_examples() {
        let circle = ManifoldTarget::new("circle", 2, Domain::Circle, DVector::from_column_slice);
        let base = sample_circle(4, SamplingLaw::Grid).unwrap();
        let mu = pushforward_samples(&circle, &base).unwrap();
        assert_eq!(mu.len(), 4);
        assert!(mu.weights().iter().all(|&w| w == 0.25));

        let tref = ManifoldTarget::trefoil(1.0);
        let base = sample_circle(100, SamplingLaw::Grid).unwrap();
        let mu = pushforward_samples(&tref, &base).unwrap();
        assert_eq!(mu.dim(), 3);
        assert!(mu.points().iter().all(|p| p.norm() <= 3.0 + 1e-9));

        let wrong = sample_interval(0.0, 1.0, 5, SamplingLaw::Grid).unwrap();
        assert!(pushforward_samples(&tref, &wrong).is_err());
        assert!(CompactSampleSet::new(vec![], "empty").is_err());
    }

    #[test]
    fn trefoil_is_injective_on_grid() {
        let n = 500;
        let pts: Vec<Vector3<f64>> = (0..n).map(|k| trefoil(TAU * k as f64 / n as f64)).collect();
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                min = min.min((pts[i] - pts[j]).norm());
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn ribbon_stays_near_core() {
        let a = DEFAULT_RIBBON_WIDTH;
        let target = ManifoldTarget::knotted_ribbon(a, 1.0);
        let base = target.domain().sample(400, SamplingLaw::Random { seed: 2 }).unwrap();
        let ribbon: Vec<_> = base.points().iter().map(|p| target.eval(p.as_slice())).collect();
        let core: Vec<_> = (0..4000)
            .map(|k| {
                let v = trefoil(TAU * k as f64 / 4000.0);
                DVector::from_column_slice(v.as_slice())
            })
            .collect();
        // half a grid step of the sampled core (max speed ≈ 5.84) is added to the bound
        assert!(max_distance_to_curve(&ribbon, &core) <= a / 2.0 + 0.005);
        for p in base.points() {
            let theta = p[1].atan2(p[0]);
            let core_point = DVector::from_column_slice(trefoil(theta).as_slice());
            assert!((target.eval(p.as_slice()) - core_point).norm() <= a / 2.0 + 1e-12);
        }
    }

    #[test]
    fn seeded_samples_serialize_identically() {
        let a = sample_annulus(0.5, 1.5, 50, SamplingLaw::Random { seed: 11 }).unwrap();
        let b = sample_annulus(0.5, 1.5, 50, SamplingLaw::Random { seed: 11 }).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let back = CompactSampleSet::read_csv(ba.as_slice()).unwrap();
        assert_eq!(back.points(), a.points());
    }
}
