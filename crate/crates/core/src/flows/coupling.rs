use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::subnet::{Subnet, SubnetCache};
use super::{check_finite, DEFAULT_SCALE_CLAMP};
use crate::error::{invalid_arg, Error, Result};

/// Affine coupling `(a, b) ↦ (a ⊙ exp(s(b)) + t(b), b)` applied after a fixed
/// coordinate permutation. `a` holds the first `split` permuted coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    dim: usize,
    split: usize,
    /// `permuted[i] = x[permutation[i]]`.
    permutation: Vec<usize>,
    scale_clamp: f64,
    scale_net: Subnet,
    shift_net: Subnet,
}

#[derive(Clone, Debug)]
pub struct CouplingCache {
    a: DMatrix<f64>,
    scale: DMatrix<f64>,
    clamp_active: DMatrix<f64>,
    scale_cache: SubnetCache,
    shift_cache: SubnetCache,
}

impl CouplingLayer {
    pub fn new(
        dim: usize,
        split: usize,
        permutation: Vec<usize>,
        scale_net: Subnet,
        shift_net: Subnet,
    ) -> Result<Self> {
        if !(1 <= split && split < dim) {
            return Err(invalid_arg(format!("split {split} must satisfy 1 <= d < n = {dim}")));
        }
        let mut seen = vec![false; dim];
        if permutation.len() != dim || permutation.iter().any(|&p| p >= dim || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid_arg(format!("{permutation:?} is not a permutation of 0..{dim}")));
        }
        for (name, net) in [("scale", &scale_net), ("shift", &shift_net)] {
            if net.in_dim() != dim - split || net.out_dim() != split {
                return Err(invalid_arg(format!(
                    "{name} subnet maps R^{} -> R^{}, expected R^{} -> R^{split}",
                    net.in_dim(),
                    net.out_dim(),
                    dim - split
                )));
            }
        }
        Ok(Self { dim, split, permutation, scale_clamp: DEFAULT_SCALE_CLAMP, scale_net, shift_net })
    }

    pub fn with_scale_clamp(mut self, clamp: f64) -> Self {
        assert!(clamp > 0.0);
        self.scale_clamp = clamp;
        self
    }

    pub fn identity_permutation(dim: usize) -> Vec<usize> {
        (0..dim).collect()
    }

    pub fn reversal_permutation(dim: usize) -> Vec<usize> {
        (0..dim).rev().collect()
    }

    /// Layer with MLP conditioners whose outputs start near zero.
    pub fn random(rng: &mut impl Rng, dim: usize, reverse: bool, width: usize, output_scale: f64) -> Result<Self> {
        let split = dim.div_ceil(2);
        let perm = if reverse { Self::reversal_permutation(dim) } else { Self::identity_permutation(dim) };
        let s = Subnet::mlp(rng, dim - split, split, width, 2, output_scale);
        let t = Subnet::mlp(rng, dim - split, split, width, 2, output_scale);
        Self::new(dim, split, perm, s, t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn scale_clamp(&self) -> f64 {
        self.scale_clamp
    }

    pub fn scale_net(&self) -> &Subnet {
        &self.scale_net
    }

    pub fn shift_net(&self) -> &Subnet {
        &self.shift_net
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.dim {
            return Err(invalid_arg(format!("input has dimension {}, layer expects {}", x.nrows(), self.dim)));
        }
        Ok(())
    }

    fn permute(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.select_rows(self.permutation.iter())
    }

    fn unpermute(&self, xp: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(xp.nrows(), xp.ncols());
        for (i, &p) in self.permutation.iter().enumerate() {
            x.set_row(p, &xp.row(i));
        }
        x
    }

    fn clamp(&self, raw: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = self.scale_clamp;
        let scale = raw.map(|v| v.clamp(-c, c));
        let active = raw.map(|v| if v.abs() <= c { 1.0 } else { 0.0 });
        (scale, active)
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, CouplingCache)> {
        self.check_dim(x)?;
        let xp = self.permute(x);
        let a = xp.rows(0, self.split).into_owned();
        let b = xp.rows(self.split, self.dim - self.split).into_owned();
        let (raw, scale_cache) = self.scale_net.forward_cached(&b);
        let (shift, shift_cache) = self.shift_net.forward_cached(&b);
        check_finite(&raw, "coupling scale subnet")?;
        check_finite(&shift, "coupling shift subnet")?;
        let (scale, clamp_active) = self.clamp(&raw);
        let ya = a.zip_map(&scale, |av, sv| av * sv.exp()) + shift;
        let mut y = xp;
        y.rows_mut(0, self.split).copy_from(&ya);
        check_finite(&y, "coupling output")?;
        Ok((y, CouplingCache { a, scale, clamp_active, scale_cache, shift_cache }))
    }

    pub fn inverse_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(y)?;
        let ya = y.rows(0, self.split).into_owned();
        let b = y.rows(self.split, self.dim - self.split).into_owned();
        let raw = self.scale_net.forward(&b);
        let shift = self.shift_net.forward(&b);
        check_finite(&raw, "coupling scale subnet")?;
        check_finite(&shift, "coupling shift subnet")?;
        let (scale, _) = self.clamp(&raw);
        let a = (ya - shift).zip_map(&scale, |v, sv| v * (-sv).exp());
        let mut xp = y.clone();
        xp.rows_mut(0, self.split).copy_from(&a);
        let x = self.unpermute(&xp);
        check_finite(&x, "coupling inverse")?;
        Ok(x)
    }

    pub fn log_det_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let xp = self.permute(x);
        let b = xp.rows(self.split, self.dim - self.split).into_owned();
        let raw = self.scale_net.forward(&b);
        check_finite(&raw, "coupling scale subnet")?;
        let (scale, _) = self.clamp(&raw);
        Ok(scale.column_iter().map(|c| c.sum()).collect())
    }

    pub fn backward(&self, cache: &CouplingCache, dy: &DMatrix<f64>, grad: Option<&mut [f64]>) -> DMatrix<f64> {
        let d = self.split;
        let dya = dy.rows(0, d).into_owned();
        let exp_s = cache.scale.map(f64::exp);
        let da = dya.component_mul(&exp_s);
        let ds = dya
            .component_mul(&cache.a)
            .component_mul(&exp_s)
            .component_mul(&cache.clamp_active);
        let n_s = self.scale_net.param_count();
        let (gs, gt) = match grad {
            Some(g) => {
                let (gs, gt) = g.split_at_mut(n_s);
                (Some(gs), Some(gt))
            }
            None => (None, None),
        };
        let db_s = self.scale_net.backward(&cache.scale_cache, &ds, gs);
        let db_t = self.shift_net.backward(&cache.shift_cache, &dya, gt);
        let db = dy.rows(d, self.dim - d) + db_s + db_t;
        let mut dxp = DMatrix::zeros(self.dim, dy.ncols());
        dxp.rows_mut(0, d).copy_from(&da);
        dxp.rows_mut(d, self.dim - d).copy_from(&db);
        self.unpermute(&dxp)
    }

    pub fn param_count(&self) -> usize {
        self.scale_net.param_count() + self.shift_net.param_count()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.scale_net.write_params(out);
        self.shift_net.write_params(out);
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let k = self.scale_net.read_params(src);
        k + self.shift_net.read_params(&src[k..])
    }

    pub fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        self.scale_net.param_names(&format!("{prefix}/scale"), out);
        self.shift_net.param_names(&format!("{prefix}/shift"), out);
    }

    /// Lipschitz bound on the ball of the given radius, and a bound on the
    /// output norm over that ball.
    ///
    /// The Jacobian is `[[diag e^s, diag(a e^s) ∂s + ∂t], [0, I]]` in permuted
    /// coordinates, so its norm is at most `max(e^smax, 1) + r e^smax Lip(s) + Lip(t)`.
    pub fn lipschitz_bound(&self, radius: f64) -> (f64, f64) {
        let s_max = self.scale_net.output_bound(radius).min(self.scale_clamp);
        let e = s_max.exp();
        let lip = e.max(1.0) + radius * e * self.scale_net.lipschitz() + self.shift_net.lipschitz();
        let out = e * radius + self.shift_net.output_bound(radius) + radius;
        (lip, out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let x = self.inverse_batch(&DMatrix::from_column_slice(y.len(), 1, y))?;
        Ok(x.as_slice().to_vec())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.scale_net.is_finite() || !self.shift_net.is_finite() {
            return Err(Error::InvalidLayer("coupling parameters are not finite".into()));
        }
        Ok(())
    }
}
