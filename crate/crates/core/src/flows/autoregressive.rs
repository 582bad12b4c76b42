use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::subnet::{Subnet, SubnetCache};
use super::{check_finite, DEFAULT_SCALE_CLAMP};
use crate::error::{invalid_arg, Error, Result};

/// Affine triangular flow `y_i = x_i exp(s_i(x_{<i})) + t_i(x_{<i})`.
///
/// `g_1` is the constant pair `(first_log_scale, first_shift)`; for `i ≥ 2`
/// the conditioner `conditioners[i-2]` maps `R^{i-1}` to `(s_i, t_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveLayer {
    dim: usize,
    scale_clamp: f64,
    first_log_scale: f64,
    first_shift: f64,
    conditioners: Vec<Subnet>,
}

#[derive(Clone, Debug)]
pub struct AutoregressiveCache {
    x: DMatrix<f64>,
    /// Clamped log-scales, one row per coordinate.
    scale: DMatrix<f64>,
    clamp_active: DMatrix<f64>,
    conditioner_caches: Vec<SubnetCache>,
}

impl AutoregressiveLayer {
    pub fn new(dim: usize, first_log_scale: f64, first_shift: f64, conditioners: Vec<Subnet>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid_arg("autoregressive layer needs dim >= 1"));
        }
        if conditioners.len() != dim - 1 {
            return Err(invalid_arg(format!(
                "expected {} conditioners, got {}",
                dim - 1,
                conditioners.len()
            )));
        }
        for (k, g) in conditioners.iter().enumerate() {
            if g.in_dim() != k + 1 || g.out_dim() != 2 {
                return Err(invalid_arg(format!(
                    "conditioner {} maps R^{} -> R^{}, expected R^{} -> R^2",
                    k + 2,
                    g.in_dim(),
                    g.out_dim(),
                    k + 1
                )));
            }
        }
        Ok(Self { dim, scale_clamp: DEFAULT_SCALE_CLAMP, first_log_scale, first_shift, conditioners })
    }

    pub fn identity(dim: usize) -> Self {
        let conds = (1..dim).map(|k| Subnet::zeros(k, 2)).collect();
        Self::new(dim, 0.0, 0.0, conds).expect("identity layer is well formed")
    }

    pub fn random(rng: &mut impl Rng, dim: usize, width: usize, output_scale: f64) -> Self {
        let conds = (1..dim).map(|k| Subnet::mlp(rng, k, 2, width, 2, output_scale)).collect();
        Self::new(dim, 0.0, 0.0, conds).expect("random layer is well formed")
    }

    pub fn with_scale_clamp(mut self, clamp: f64) -> Self {
        assert!(clamp > 0.0);
        self.scale_clamp = clamp;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale_clamp(&self) -> f64 {
        self.scale_clamp
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.dim {
            return Err(invalid_arg(format!("input has dimension {}, layer expects {}", x.nrows(), self.dim)));
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> (f64, f64) {
        let c = self.scale_clamp;
        (v.clamp(-c, c), if v.abs() <= c { 1.0 } else { 0.0 })
    }

    /// Log-scale and shift rows for coordinate `i` given the full input.
    fn conditioner_output(&self, i: usize, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if i == 0 {
            let mut out = DMatrix::zeros(2, x.ncols());
            out.row_mut(0).fill(self.first_log_scale);
            out.row_mut(1).fill(self.first_shift);
            return Ok(out);
        }
        let out = self.conditioners[i - 1].forward(&x.rows(0, i).into_owned());
        check_finite(&out, "autoregressive conditioner")?;
        Ok(out)
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, AutoregressiveCache)> {
        self.check_dim(x)?;
        let n = x.ncols();
        let mut y = DMatrix::zeros(self.dim, n);
        let mut scale = DMatrix::zeros(self.dim, n);
        let mut active = DMatrix::zeros(self.dim, n);
        let mut caches = Vec::with_capacity(self.dim.saturating_sub(1));
        for i in 0..self.dim {
            let st = if i == 0 {
                self.conditioner_output(0, x)?
            } else {
                let (out, cache) = self.conditioners[i - 1].forward_cached(&x.rows(0, i).into_owned());
                check_finite(&out, "autoregressive conditioner")?;
                caches.push(cache);
                out
            };
            for j in 0..n {
                let (s, a) = self.clamp(st[(0, j)]);
                scale[(i, j)] = s;
                active[(i, j)] = a;
                y[(i, j)] = x[(i, j)] * s.exp() + st[(1, j)];
            }
        }
        check_finite(&y, "autoregressive output")?;
        Ok((y, AutoregressiveCache { x: x.clone(), scale, clamp_active: active, conditioner_caches: caches }))
    }

    /// Solves for the coordinates in order `i = 1..n`.
    pub fn inverse_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(y)?;
        let mut x = DMatrix::zeros(self.dim, y.ncols());
        for i in 0..self.dim {
            let st = self.conditioner_output(i, &x)?;
            for j in 0..y.ncols() {
                let (s, _) = self.clamp(st[(0, j)]);
                x[(i, j)] = (y[(i, j)] - st[(1, j)]) * (-s).exp();
            }
        }
        check_finite(&x, "autoregressive inverse")?;
        Ok(x)
    }

    pub fn log_det_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut total = vec![0.0; x.ncols()];
        for i in 0..self.dim {
            let st = self.conditioner_output(i, x)?;
            for (j, t) in total.iter_mut().enumerate() {
                *t += self.clamp(st[(0, j)]).0;
            }
        }
        Ok(total)
    }

    pub fn backward(&self, cache: &AutoregressiveCache, dy: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        let n = dy.ncols();
        let mut dx = DMatrix::zeros(self.dim, n);
        let mut grad = grad;
        let mut offset = 2;
        for i in 0..self.dim {
            let mut dst = DMatrix::zeros(2, n);
            for j in 0..n {
                let e = cache.scale[(i, j)].exp();
                dx[(i, j)] += dy[(i, j)] * e;
                dst[(0, j)] = dy[(i, j)] * cache.x[(i, j)] * e * cache.clamp_active[(i, j)];
                dst[(1, j)] = dy[(i, j)];
            }
            if i == 0 {
                if let Some(g) = grad.as_deref_mut() {
                    g[0] += dst.row(0).sum();
                    g[1] += dst.row(1).sum();
                }
                continue;
            }
            let cond = &self.conditioners[i - 1];
            let k = cond.param_count();
            let g = grad.as_deref_mut().map(|g| &mut g[offset..offset + k]);
            let dprefix = cond.backward(&cache.conditioner_caches[i - 1], &dst, g);
            let mut rows = dx.rows_mut(0, i);
            rows += dprefix;
            offset += k;
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        2 + self.conditioners.iter().map(Subnet::param_count).sum::<usize>()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.push(self.first_log_scale);
        out.push(self.first_shift);
        self.conditioners.iter().for_each(|c| c.write_params(out));
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        self.first_log_scale = src[0];
        self.first_shift = src[1];
        let mut pos = 2;
        for c in &mut self.conditioners {
            pos += c.read_params(&src[pos..]);
        }
        pos
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}/g1.log_scale"));
        out.push(format!("{prefix}/g1.shift"));
        for (k, c) in self.conditioners.iter().enumerate() {
            c.param_names(&format!("{prefix}/g{}", k + 2), out);
        }
    }

    /// Lipschitz bound on the ball of the given radius plus an output-norm bound.
    pub fn lipschitz_bound(&self, radius: f64) -> (f64, f64) {
        let first_s = self.first_log_scale.abs().min(self.scale_clamp);
        let mut diag_max = first_s.exp();
        let mut off_diag_sq = 0.0;
        let mut shift_sq = self.first_shift * self.first_shift;
        for c in &self.conditioners {
            // the prefix x_{<i} has norm at most the radius
            let out_bound = c.output_bound(radius);
            let e = out_bound.min(self.scale_clamp).exp();
            diag_max = diag_max.max(e);
            let lip = c.lipschitz();
            let row = radius * e * lip + lip;
            off_diag_sq += row * row;
            shift_sq += out_bound * out_bound;
        }
        let lip = diag_max + off_diag_sq.sqrt();
        (lip, diag_max * radius + shift_sq.sqrt())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.first_log_scale.is_finite()
            || !self.first_shift.is_finite()
            || self.conditioners.iter().any(|c| !c.is_finite())
        {
            return Err(Error::InvalidLayer("autoregressive parameters are not finite".into()));
        }
        Ok(())
    }
}
