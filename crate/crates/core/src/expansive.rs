//! Injective dimension-raising layers.
//!
//! Four families are supported: zero padding, full-rank linear maps, single
//! injective ReLU layers with weight `[B; -DB; M]`, and stacks of such ReLU
//! layers followed by a full-column-rank linear read-out. Injectivity is
//! certified by constructive sufficient conditions, see [`validate_injectivity`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::linalg::{
    gaussian_matrix, has_full_column_rank, random_orthonormal_columns, random_well_conditioned,
    serde_matrix, serde_vector, spectral_norm,
};

/// Smallest admissible singular value relative to the largest one.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One hidden layer `ReLU([B; -DB; M] x + bias)` of an injective ReLU network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluBlock {
    #[serde(with = "serde_matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_vector")]
    pub d: DVector<f64>,
    #[serde(with = "serde_matrix")]
    pub extra: DMatrix<f64>,
    #[serde(with = "serde_vector")]
    pub bias: DVector<f64>,
}

impl ReluBlock {
    fn weight(&self) -> DMatrix<f64> {
        assemble_relu_weight(&self.b, &self.d, &self.extra)
    }

    fn out_dim(&self) -> usize {
        2 * self.b.nrows() + self.extra.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpansiveLayer {
    ZeroPad {
        n: usize,
        m: usize,
    },
    Linear {
        n: usize,
        m: usize,
        #[serde(with = "serde_matrix")]
        weight: DMatrix<f64>,
    },
    /// `ReLU(W x)` with `W = [B; -DB; M]`; `d` is the diagonal of `D`.
    InjectiveRelu {
        n: usize,
        m: usize,
        #[serde(with = "serde_matrix")]
        b: DMatrix<f64>,
        #[serde(with = "serde_vector")]
        d: DVector<f64>,
        #[serde(with = "serde_matrix")]
        extra: DMatrix<f64>,
    },
    InjectiveReluNetwork {
        n: usize,
        m: usize,
        hidden: Vec<ReluBlock>,
        #[serde(with = "serde_matrix")]
        output_weight: DMatrix<f64>,
        #[serde(with = "serde_vector")]
        output_bias: DVector<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectivityReport {
    pub ok: bool,
    pub detail: String,
}

impl InjectivityReport {
    fn pass(detail: impl Into<String>) -> Self {
        Self { ok: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self { ok: false, detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub enum ExpansiveCache {
    Plain,
    Linear { x: DMatrix<f64> },
    Relu { x: DMatrix<f64>, pre: DMatrix<f64> },
    Network { pre: Vec<DMatrix<f64>> },
}

pub(crate) fn assemble_relu_weight(b: &DMatrix<f64>, d: &DVector<f64>, extra: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut w = DMatrix::zeros(2 * n + extra.nrows(), b.ncols());
    w.rows_mut(0, n).copy_from(b);
    for i in 0..n {
        let row = b.row(i) * (-d[i]);
        w.set_row(n + i, &row);
    }
    if extra.nrows() > 0 {
        w.rows_mut(2 * n, extra.nrows()).copy_from(extra);
    }
    w
}

fn relu_block_report(b: &DMatrix<f64>, d: &DVector<f64>, extra: &DMatrix<f64>) -> InjectivityReport {
    let n = b.ncols();
    if b.nrows() != n {
        return InjectivityReport::fail(format!("B must be square, got {}x{}", b.nrows(), n));
    }
    if d.len() != n {
        return InjectivityReport::fail("D diagonal length must equal n");
    }
    if extra.ncols() != n {
        return InjectivityReport::fail("M must have n columns");
    }
    if let Some(i) = d.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return InjectivityReport::fail(format!("D[{i},{i}] = {} is not positive", d[i]));
    }
    if !has_full_column_rank(b, RANK_TOLERANCE) {
        return InjectivityReport::fail("B is not invertible within rank tolerance");
    }
    if extra.iter().any(|v| !v.is_finite()) {
        return InjectivityReport::fail("M has non-finite entries");
    }
    InjectivityReport::pass("B invertible, D positive diagonal")
}

/// Checks the kind-specific sufficient condition for injectivity.
pub fn validate_injectivity(layer: &ExpansiveLayer) -> InjectivityReport {
    match layer {
        ExpansiveLayer::ZeroPad { n, m } => {
            if m > n && *n > 0 {
                InjectivityReport::pass("zero padding is injective")
            } else {
                InjectivityReport::fail(format!("zero padding needs 0 < n < m, got n={n}, m={m}"))
            }
        }
        ExpansiveLayer::Linear { n, m, weight } => {
            if weight.shape() != (*m, *n) || m <= n {
                return InjectivityReport::fail("weight shape must be m x n with m > n");
            }
            if has_full_column_rank(weight, RANK_TOLERANCE) {
                InjectivityReport::pass(format!("rank(W) = {n}"))
            } else {
                InjectivityReport::fail("W is rank deficient")
            }
        }
        ExpansiveLayer::InjectiveRelu { n, m, b, d, extra } => {
            if *m < 2 * n || 2 * n + extra.nrows() != *m || b.ncols() != *n {
                return InjectivityReport::fail(format!("shapes inconsistent with n={n}, m={m}"));
            }
            relu_block_report(b, d, extra)
        }
        ExpansiveLayer::InjectiveReluNetwork { n, m, hidden, output_weight, output_bias } => {
            if m <= n {
                return InjectivityReport::fail("network must be expansive");
            }
            let mut width = *n;
            for (k, block) in hidden.iter().enumerate() {
                if block.b.ncols() != width {
                    return InjectivityReport::fail(format!("hidden layer {k} input width mismatch"));
                }
                let out = block.out_dim();
                if out < 2 * width {
                    return InjectivityReport::fail(format!("hidden layer {k} width {out} < 2 x {width}"));
                }
                let report = relu_block_report(&block.b, &block.d, &block.extra);
                if !report.ok {
                    return InjectivityReport::fail(format!("hidden layer {k}: {}", report.detail));
                }
                if block.bias.len() != out {
                    return InjectivityReport::fail(format!("hidden layer {k} bias length mismatch"));
                }
                // the pair (α + c₁, −dα + c₂) must not be simultaneously non-positive on an interval
                for i in 0..width {
                    if block.bias[width + i] + block.d[i] * block.bias[i] < 0.0 {
                        return InjectivityReport::fail(format!(
                            "hidden layer {k}: biases of row pair {i} leave a dead interval"
                        ));
                    }
                }
                width = out;
            }
            if output_weight.shape() != (*m, width) || output_bias.len() != *m {
                return InjectivityReport::fail("output layer shape mismatch");
            }
            if !has_full_column_rank(output_weight, RANK_TOLERANCE) {
                return InjectivityReport::fail("output weight lacks full column rank");
            }
            InjectivityReport::pass(format!("{} width-doubling [B;-DB;M] layers, injective read-out", hidden.len()))
        }
    }
}

impl ExpansiveLayer {
    fn certified(self) -> Result<Self> {
        let report = validate_injectivity(&self);
        if report.ok {
            Ok(self)
        } else {
            Err(Error::InvalidLayer(report.detail))
        }
    }

    pub fn zero_pad(n: usize, m: usize) -> Result<Self> {
        ExpansiveLayer::ZeroPad { n, m }.certified()
    }

    pub fn linear(weight: DMatrix<f64>) -> Result<Self> {
        let (m, n) = weight.shape();
        ExpansiveLayer::Linear { n, m, weight }.certified()
    }

    pub fn injective_relu(b: DMatrix<f64>, d: DVector<f64>, extra: DMatrix<f64>) -> Result<Self> {
        let n = b.ncols();
        let extra = if extra.ncols() == 0 && extra.nrows() == 0 { DMatrix::zeros(0, n) } else { extra };
        let m = 2 * n + extra.nrows();
        ExpansiveLayer::InjectiveRelu { n, m, b, d, extra }.certified()
    }

    pub fn injective_relu_network(
        n: usize,
        hidden: Vec<ReluBlock>,
        output_weight: DMatrix<f64>,
        output_bias: DVector<f64>,
    ) -> Result<Self> {
        let m = output_weight.nrows();
        ExpansiveLayer::InjectiveReluNetwork { n, m, hidden, output_weight, output_bias }.certified()
    }

    /// Linear layer with random orthonormal columns.
    pub fn random_linear(rng: &mut impl Rng, n: usize, m: usize) -> Result<Self> {
        if m <= n {
            return Err(invalid_arg("linear expansive layer needs m > n"));
        }
        Self::linear(random_orthonormal_columns(rng, m, n))
    }

    pub fn random_injective_relu(rng: &mut impl Rng, n: usize, m: usize) -> Result<Self> {
        if m < 2 * n {
            return Err(invalid_arg("injective ReLU layer needs m >= 2n"));
        }
        let b = random_well_conditioned(rng, n, 10.0);
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        let extra = gaussian_matrix(rng, m - 2 * n, n, 1.0);
        Self::injective_relu(b, d, extra)
    }

    /// Constructively generated injective ReLU network: each hidden layer
    /// doubles the width with a well-conditioned `[B; -DB]` block and zero bias.
    pub fn random_relu_network(rng: &mut impl Rng, n: usize, hidden_layers: usize, m: usize) -> Result<Self> {
        let mut width = n;
        let mut hidden = Vec::with_capacity(hidden_layers);
        for _ in 0..hidden_layers {
            let b = random_well_conditioned(rng, width, 10.0);
            let d = DVector::from_fn(width, |_, _| rng.random_range(0.5..2.0));
            hidden.push(ReluBlock { b, d, extra: DMatrix::zeros(0, width), bias: DVector::zeros(2 * width) });
            width *= 2;
        }
        if m < width {
            return Err(invalid_arg(format!("output dimension {m} below final hidden width {width}")));
        }
        let output_weight = random_orthonormal_columns(rng, m, width);
        Self::injective_relu_network(n, hidden, output_weight, DVector::zeros(m))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            ExpansiveLayer::ZeroPad { n, .. }
            | ExpansiveLayer::Linear { n, .. }
            | ExpansiveLayer::InjectiveRelu { n, .. }
            | ExpansiveLayer::InjectiveReluNetwork { n, .. } => *n,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ExpansiveLayer::ZeroPad { m, .. }
            | ExpansiveLayer::Linear { m, .. }
            | ExpansiveLayer::InjectiveRelu { m, .. }
            | ExpansiveLayer::InjectiveReluNetwork { m, .. } => *m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ExpansiveLayer::ZeroPad { .. } => "zero_pad",
            ExpansiveLayer::Linear { .. } => "linear",
            ExpansiveLayer::InjectiveRelu { .. } => "injective_relu",
            ExpansiveLayer::InjectiveReluNetwork { .. } => "injective_relu_network",
        }
    }

    /// Assembled weight of a single ReLU layer, `[B; -DB; M]`.
    pub fn relu_weight(&self) -> Option<DMatrix<f64>> {
        match self {
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => Some(assemble_relu_weight(b, d, extra)),
            _ => None,
        }
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.in_dim() {
            return Err(invalid_arg(format!(
                "input has dimension {}, layer expects {}",
                x.nrows(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.apply_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    pub fn apply_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ExpansiveCache)> {
        self.check_input(x)?;
        match self {
            ExpansiveLayer::ZeroPad { n, m } => {
                let mut y = DMatrix::zeros(*m, x.ncols());
                y.rows_mut(0, *n).copy_from(x);
                Ok((y, ExpansiveCache::Plain))
            }
            ExpansiveLayer::Linear { weight, .. } => Ok((weight * x, ExpansiveCache::Linear { x: x.clone() })),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => {
                let pre = assemble_relu_weight(b, d, extra) * x;
                let y = pre.map(|v| v.max(0.0));
                Ok((y, ExpansiveCache::Relu { x: x.clone(), pre }))
            }
            ExpansiveLayer::InjectiveReluNetwork { hidden, output_weight, output_bias, .. } => {
                let mut h = x.clone();
                let mut pres = Vec::with_capacity(hidden.len());
                for block in hidden {
                    let mut z = block.weight() * &h;
                    for mut col in z.column_iter_mut() {
                        col += &block.bias;
                    }
                    h = z.map(|v| v.max(0.0));
                    pres.push(z);
                }
                let mut y = output_weight * h;
                for mut col in y.column_iter_mut() {
                    col += output_bias;
                }
                Ok((y, ExpansiveCache::Network { pre: pres }))
            }
        }
    }

    pub fn backward(&self, cache: &ExpansiveCache, dy: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        match (self, cache) {
            (ExpansiveLayer::ZeroPad { n, .. }, _) => dy.rows(0, *n).into_owned(),
            (ExpansiveLayer::Linear { weight, .. }, ExpansiveCache::Linear { x }) => {
                if let Some(g) = grad {
                    let dw = dy * x.transpose();
                    write_row_major_add(g, &dw);
                }
                weight.transpose() * dy
            }
            (ExpansiveLayer::InjectiveRelu { n, b, d, extra, .. }, ExpansiveCache::Relu { x, pre }) => {
                let dz = dy.zip_map(pre, |g, z| if z > 0.0 { g } else { 0.0 });
                let w = assemble_relu_weight(b, d, extra);
                if let Some(g) = grad {
                    let n = *n;
                    let dw = &dz * x.transpose();
                    let mut db = dw.rows(0, n).into_owned();
                    let mut dlogd = DVector::zeros(n);
                    for i in 0..n {
                        let lower = dw.row(n + i);
                        let row = lower * (-d[i]);
                        let mut target = db.row_mut(i);
                        target += row;
                        dlogd[i] = -d[i] * lower.dot(&b.row(i));
                    }
                    let mut pos = write_row_major_add(g, &db);
                    for i in 0..n {
                        g[pos] += dlogd[i];
                        pos += 1;
                    }
                    if extra.nrows() > 0 {
                        let dm = dw.rows(2 * n, extra.nrows()).into_owned();
                        write_row_major_add(&mut g[pos..], &dm);
                    }
                }
                w.transpose() * dz
            }
            (ExpansiveLayer::InjectiveReluNetwork { hidden, output_weight, .. }, ExpansiveCache::Network { pre }) => {
                let mut delta = output_weight.transpose() * dy;
                for (k, block) in hidden.iter().enumerate().rev() {
                    let dz = delta.zip_map(&pre[k], |g, z| if z > 0.0 { g } else { 0.0 });
                    delta = block.weight().transpose() * dz;
                }
                delta
            }
            _ => panic!("expansive cache does not belong to this layer kind"),
        }
    }

    /// Trainable parameters: linear weight; or `B`, `log D`, `M` for a single
    /// ReLU layer. Zero padding and ReLU networks are fixed.
    pub fn param_count(&self) -> usize {
        match self {
            ExpansiveLayer::Linear { weight, .. } => weight.len(),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => b.len() + d.len() + extra.len(),
            _ => 0,
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            ExpansiveLayer::Linear { weight, .. } => push_row_major(out, weight),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => {
                push_row_major(out, b);
                out.extend(d.iter().map(|v| v.ln()));
                push_row_major(out, extra);
            }
            _ => {}
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        match self {
            ExpansiveLayer::Linear { weight, .. } => read_row_major(src, weight),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => {
                let mut pos = read_row_major(src, b);
                for v in d.iter_mut() {
                    *v = src[pos].exp();
                    pos += 1;
                }
                pos + read_row_major(&src[pos..], extra)
            }
            _ => 0,
        }
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        let mut mat = |tag: &str, m: &DMatrix<f64>| {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push(format!("{prefix}/{tag}[{i},{j}]"));
                }
            }
        };
        match self {
            ExpansiveLayer::Linear { weight, .. } => mat("weight", weight),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => {
                mat("B", b);
                for i in 0..d.len() {
                    out.push(format!("{prefix}/log_D[{i}]"));
                }
                let mut mat = |tag: &str, m: &DMatrix<f64>| {
                    for i in 0..m.nrows() {
                        for j in 0..m.ncols() {
                            out.push(format!("{prefix}/{tag}[{i},{j}]"));
                        }
                    }
                };
                mat("M", extra);
            }
            _ => {}
        }
    }

    /// Global Lipschitz bound from the operator norms of the weights.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            ExpansiveLayer::ZeroPad { .. } => 1.0,
            ExpansiveLayer::Linear { weight, .. } => spectral_norm(weight),
            ExpansiveLayer::InjectiveRelu { b, d, extra, .. } => spectral_norm(&assemble_relu_weight(b, d, extra)),
            ExpansiveLayer::InjectiveReluNetwork { hidden, output_weight, .. } => {
                hidden.iter().map(|h| spectral_norm(&h.weight())).product::<f64>() * spectral_norm(output_weight)
            }
        }
    }

    /// Bound on the output norm for inputs of norm at most `radius`.
    pub fn output_radius(&self, radius: f64) -> f64 {
        match self {
            ExpansiveLayer::InjectiveReluNetwork { hidden, output_weight, output_bias, .. } => {
                let mut r = radius;
                for h in hidden {
                    r = spectral_norm(&h.weight()) * r + h.bias.norm();
                }
                spectral_norm(output_weight) * r + output_bias.norm()
            }
            _ => self.lipschitz_bound() * radius,
        }
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

fn read_row_major(src: &[f64], m: &mut DMatrix<f64>) -> usize {
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            m[(i, j)] = src[i * cols + j];
        }
    }
    m.len()
}

fn write_row_major_add(g: &mut [f64], m: &DMatrix<f64>) -> usize {
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            g[i * cols + j] += m[(i, j)];
        }
    }
    m.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn zero_pad_examples() {
        assert_eq!(ExpansiveLayer::zero_pad(2, 4).unwrap().apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(ExpansiveLayer::zero_pad(1, 2).unwrap().apply(&[0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ExpansiveLayer::zero_pad(2, 3).unwrap().apply(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0, 0.0]);
        let pad = ExpansiveLayer::zero_pad(2, 3).unwrap();
        assert!(matches!(pad.apply(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn linear_examples() {
        let l = ExpansiveLayer::linear(mat(2, 1, &[1.0, 0.0])).unwrap();
        assert_eq!(l.apply(&[5.0]).unwrap(), vec![5.0, 0.0]);
        let l = ExpansiveLayer::linear(mat(2, 1, &[1.0, 1.0])).unwrap();
        assert_eq!(l.apply(&[2.0]).unwrap(), vec![2.0, 2.0]);
        let l = ExpansiveLayer::linear(mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(l.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            ExpansiveLayer::linear(mat(2, 1, &[0.0, 0.0])),
            Err(Error::InvalidLayer(_))
        ));
    }

    #[test]
    fn injective_relu_examples() {
        let one = |v: f64| mat(1, 1, &[v]);
        let l = ExpansiveLayer::injective_relu(one(1.0), DVector::from_vec(vec![1.0]), DMatrix::zeros(0, 1)).unwrap();
        assert_eq!(l.apply(&[2.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(l.apply(&[-3.0]).unwrap(), vec![0.0, 3.0]);
        let l = ExpansiveLayer::injective_relu(one(1.0), DVector::from_vec(vec![2.0]), one(1.0)).unwrap();
        assert_eq!(l.apply(&[1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        assert!(ExpansiveLayer::injective_relu(one(0.0), DVector::from_vec(vec![1.0]), DMatrix::zeros(0, 1)).is_err());
        assert!(ExpansiveLayer::injective_relu(one(1.0), DVector::from_vec(vec![0.0]), DMatrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn validation_reports() {
        assert!(validate_injectivity(&ExpansiveLayer::ZeroPad { n: 1, m: 2 }).ok);
        let good = ExpansiveLayer::Linear { n: 1, m: 2, weight: mat(2, 1, &[1.0, 0.0]) };
        assert!(validate_injectivity(&good).ok);
        let bad = ExpansiveLayer::Linear { n: 1, m: 2, weight: mat(2, 1, &[0.0, 0.0]) };
        assert!(!validate_injectivity(&bad).ok);
        let relu = ExpansiveLayer::InjectiveRelu {
            n: 1,
            m: 2,
            b: mat(1, 1, &[1.0]),
            d: DVector::from_vec(vec![0.0]),
            extra: DMatrix::zeros(0, 1),
        };
        let report = validate_injectivity(&relu);
        assert!(!report.ok);
        assert!(report.detail.contains("not positive"));
    }

    #[test]
    fn relu_network_validation() {
        let mut rng = seeded_rng(4);
        let net = ExpansiveLayer::random_relu_network(&mut rng, 2, 2, 9).unwrap();
        assert!(validate_injectivity(&net).ok);
        assert_eq!(net.out_dim(), 9);
        if let ExpansiveLayer::InjectiveReluNetwork { n, m, mut hidden, output_weight, output_bias } = net {
            hidden[0].bias[0] = 1.0;
            hidden[0].bias[2] = -2.0;
            let broken = ExpansiveLayer::InjectiveReluNetwork { n, m, hidden, output_weight, output_bias };
            assert!(!validate_injectivity(&broken).ok);
        }
    }

    #[test]
    fn zero_pad_left_inverse() {
        let pad = ExpansiveLayer::zero_pad(3, 5).unwrap();
        let x = [0.3, -1.7, 2.5];
        let y = pad.apply(&x).unwrap();
        assert_eq!(&y[..3], &x);
    }

    #[test]
    fn params_round_trip_for_relu() {
        let mut rng = seeded_rng(8);
        let layer = ExpansiveLayer::random_injective_relu(&mut rng, 2, 5).unwrap();
        let mut p = Vec::new();
        layer.write_params(&mut p);
        assert_eq!(p.len(), layer.param_count());
        let mut copy = layer.clone();
        copy.read_params(&p);
        let x = [0.4, -0.9];
        let (a, b) = (layer.apply(&x).unwrap(), copy.apply(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-14));
    }
}
