//! Scalar modulation heads.
//!
//! Both heads map a timestep-offset vector `dt` (length `L`, one entry per
//! schedule step) to a single scalar `alpha` that scales the predictor's
//! residual direction. [`KanScalar`] is a one-layer spline network,
//!
//! ```text
//! alpha = b + sum_m w[m] * phi_m(clamp(a[m] . dt))
//! phi_m(z) = sum_j coeffs[m][j] * B_j(z)
//! ```
//!
//! with each `phi_m` a learnable function on the spline grid. [`MlpScalar`]
//! is the ablation head, `alpha = v . silu(U dt + c)`. Backward passes are
//! analytic; where an input projection leaves the spline range, the clamp
//! contributes zero gradient to `a[m]` and to `dt`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::spline::SplineGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulatorKind {
    Kan,
    Mlp,
}

/// Spline-basis scalar head with `components` ridge functions.
#[derive(Debug, Clone, PartialEq)]
pub struct KanScalar {
    input_len: usize,
    components: usize,
    /// Projection rows, `components x input_len`.
    pub a: Vec<f64>,
    /// Mixing weights, one per component.
    pub w: Vec<f64>,
    /// Spline coefficients, `components x basis_count`.
    pub coeffs: Vec<f64>,
    pub bias: f64,
    grid: SplineGrid,
}

/// Forward activations needed by [`KanScalar::backward`].
#[derive(Debug, Clone)]
pub struct KanCache {
    dt: Vec<f64>,
    proj: Vec<f64>,
    basis: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

/// Parameter and input gradients of one scalar output.
#[derive(Debug, Clone)]
pub struct KanGrad {
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub bias: f64,
    pub dt: Vec<f64>,
}

impl KanScalar {
    /// Seeded initialization: projection entries `N(0, 1/L)`, mixing weights
    /// `N(0, 1/M)`, spline coefficients `N(0, 0.1^2)`, zero bias. Draw order
    /// is `a` row-major, then `w`, then `coeffs` row-major.
    pub fn init(input_len: usize, components: usize, grid: SplineGrid, seed: u64) -> Result<Self> {
        if input_len == 0 || components == 0 {
            return Err(Error::Validation(
                "modulator needs positive input length and component count".into(),
            ));
        }
        let mut rng = SeededRng::new(seed);
        let sa = (1.0 / input_len as f64).sqrt();
        let a = (0..components * input_len)
            .map(|_| sa * rng.next_normal())
            .collect();
        let sw = (1.0 / components as f64).sqrt();
        let w = (0..components).map(|_| sw * rng.next_normal()).collect();
        let nb = grid.basis_count();
        let coeffs = (0..components * nb).map(|_| 0.1 * rng.next_normal()).collect();
        Ok(KanScalar {
            input_len,
            components,
            a,
            w,
            coeffs,
            bias: 0.0,
            grid,
        })
    }

    pub fn from_parts(
        input_len: usize,
        components: usize,
        a: Vec<f64>,
        w: Vec<f64>,
        coeffs: Vec<f64>,
        bias: f64,
        grid: SplineGrid,
    ) -> Result<Self> {
        let nb = grid.basis_count();
        if a.len() != components * input_len
            || w.len() != components
            || coeffs.len() != components * nb
        {
            return Err(Error::Validation("kan parameter shapes do not match dims".into()));
        }
        Ok(KanScalar {
            input_len,
            components,
            a,
            w,
            coeffs,
            bias,
            grid,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn forward(&self, dt: &[f64]) -> Result<(f64, KanCache)> {
        if dt.len() != self.input_len {
            return Err(Error::DimMismatch {
                place: "kan input",
                expected: self.input_len,
                got: dt.len(),
            });
        }
        if dt.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kan input"));
        }
        let nb = self.grid.basis_count();
        let m = self.components;
        let mut proj = vec![0.0; m];
        let mut basis = vec![0.0; m * nb];
        let mut phi = vec![0.0; m];
        let mut dphi = vec![0.0; m];
        let mut alpha = self.bias;
        for i in 0..m {
            let row = &self.a[i * self.input_len..(i + 1) * self.input_len];
            let p: f64 = row.iter().zip(dt).map(|(a, d)| a * d).sum();
            proj[i] = p;
            let (bz, dz) = self.grid.basis_and_deriv(p);
            let crow = &self.coeffs[i * nb..(i + 1) * nb];
            let mut f = 0.0;
            let mut df = 0.0;
            for j in 0..nb {
                f += crow[j] * bz[j];
                df += crow[j] * dz[j];
            }
            basis[i * nb..(i + 1) * nb].copy_from_slice(&bz);
            phi[i] = f;
            dphi[i] = df;
            alpha += self.w[i] * f;
        }
        Ok((
            alpha,
            KanCache {
                dt: dt.to_vec(),
                proj,
                basis,
                phi,
                dphi,
            },
        ))
    }

    pub fn backward(&self, cache: &KanCache, dalpha: f64) -> Result<KanGrad> {
        let nb = self.grid.basis_count();
        if cache.dt.len() != self.input_len
            || cache.proj.len() != self.components
            || cache.basis.len() != self.components * nb
        {
            return Err(Error::StaleCache("kan cache shape does not match module"));
        }
        let mut grad = KanGrad {
            a: vec![0.0; self.a.len()],
            w: vec![0.0; self.components],
            coeffs: vec![0.0; self.coeffs.len()],
            bias: dalpha,
            dt: vec![0.0; self.input_len],
        };
        for i in 0..self.components {
            grad.w[i] = dalpha * cache.phi[i];
            let dw = dalpha * self.w[i];
            for j in 0..nb {
                grad.coeffs[i * nb + j] = dw * cache.basis[i * nb + j];
            }
            if self.grid.in_range(cache.proj[i]) {
                let dproj = dw * cache.dphi[i];
                let arow = &self.a[i * self.input_len..(i + 1) * self.input_len];
                let garow = &mut grad.a[i * self.input_len..(i + 1) * self.input_len];
                for l in 0..self.input_len {
                    garow[l] = dproj * cache.dt[l];
                    grad.dt[l] += dproj * arow[l];
                }
            }
        }
        Ok(grad)
    }
}

/// SiLU MLP scalar head used for the modulator ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpScalar {
    input_len: usize,
    hidden: usize,
    /// First-layer weights, `hidden x input_len`.
    pub u: Vec<f64>,
    /// First-layer bias.
    pub c: Vec<f64>,
    /// Output weights.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    dt: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub v: Vec<f64>,
    pub dt: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

impl MlpScalar {
    /// Seeded initialization mirroring [`KanScalar::init`]: first-layer
    /// weights `N(0, 1/L)`, zero bias, output weights `N(0, 1/H)`. Draw
    /// order is `u` row-major, then `v`.
    pub fn init(input_len: usize, hidden: usize, seed: u64) -> Result<Self> {
        if input_len == 0 || hidden == 0 {
            return Err(Error::Validation(
                "modulator needs positive input length and hidden width".into(),
            ));
        }
        let mut rng = SeededRng::new(seed);
        let su = (1.0 / input_len as f64).sqrt();
        let u = (0..hidden * input_len).map(|_| su * rng.next_normal()).collect();
        let sv = (1.0 / hidden as f64).sqrt();
        let v = (0..hidden).map(|_| sv * rng.next_normal()).collect();
        Ok(MlpScalar {
            input_len,
            hidden,
            u,
            c: vec![0.0; hidden],
            v,
        })
    }

    pub fn from_parts(
        input_len: usize,
        hidden: usize,
        u: Vec<f64>,
        c: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if u.len() != hidden * input_len || c.len() != hidden || v.len() != hidden {
            return Err(Error::Validation("mlp parameter shapes do not match dims".into()));
        }
        Ok(MlpScalar {
            input_len,
            hidden,
            u,
            c,
            v,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn forward(&self, dt: &[f64]) -> Result<(f64, MlpCache)> {
        if dt.len() != self.input_len {
            return Err(Error::DimMismatch {
                place: "mlp input",
                expected: self.input_len,
                got: dt.len(),
            });
        }
        if dt.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp input"));
        }
        let mut pre = vec![0.0; self.hidden];
        let mut act = vec![0.0; self.hidden];
        let mut alpha = 0.0;
        for h in 0..self.hidden {
            let row = &self.u[h * self.input_len..(h + 1) * self.input_len];
            let p: f64 = row.iter().zip(dt).map(|(a, d)| a * d).sum::<f64>() + self.c[h];
            pre[h] = p;
            act[h] = silu(p);
            alpha += self.v[h] * act[h];
        }
        Ok((
            alpha,
            MlpCache {
                dt: dt.to_vec(),
                pre,
                act,
            },
        ))
    }

    pub fn backward(&self, cache: &MlpCache, dalpha: f64) -> Result<MlpGrad> {
        if cache.dt.len() != self.input_len || cache.pre.len() != self.hidden {
            return Err(Error::StaleCache("mlp cache shape does not match module"));
        }
        let mut grad = MlpGrad {
            u: vec![0.0; self.u.len()],
            c: vec![0.0; self.hidden],
            v: vec![0.0; self.hidden],
            dt: vec![0.0; self.input_len],
        };
        for h in 0..self.hidden {
            grad.v[h] = dalpha * cache.act[h];
            // silu'(x) = silu(x) + sigmoid(x) * (1 - silu(x))
            let dsilu = cache.act[h] + sigmoid(cache.pre[h]) * (1.0 - cache.act[h]);
            let dpre = dalpha * self.v[h] * dsilu;
            grad.c[h] = dpre;
            let row = &self.u[h * self.input_len..(h + 1) * self.input_len];
            let grow = &mut grad.u[h * self.input_len..(h + 1) * self.input_len];
            for l in 0..self.input_len {
                grow[l] = dpre * cache.dt[l];
                grad.dt[l] += dpre * row[l];
            }
        }
        Ok(grad)
    }
}

/// Either scalar head, so experts can swap modulators without generics.
#[derive(Debug, Clone, PartialEq)]
pub enum Modulator {
    Kan(KanScalar),
    Mlp(MlpScalar),
}

#[derive(Debug, Clone)]
pub enum ModulatorCache {
    Kan(KanCache),
    Mlp(MlpCache),
}

#[derive(Debug, Clone)]
pub enum ModulatorGrad {
    Kan(KanGrad),
    Mlp(MlpGrad),
}

impl Modulator {
    pub fn kind(&self) -> ModulatorKind {
        match self {
            Modulator::Kan(_) => ModulatorKind::Kan,
            Modulator::Mlp(_) => ModulatorKind::Mlp,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Modulator::Kan(k) => k.input_len(),
            Modulator::Mlp(m) => m.input_len(),
        }
    }

    pub fn forward(&self, dt: &[f64]) -> Result<(f64, ModulatorCache)> {
        match self {
            Modulator::Kan(k) => {
                let (alpha, cache) = k.forward(dt)?;
                Ok((alpha, ModulatorCache::Kan(cache)))
            }
            Modulator::Mlp(m) => {
                let (alpha, cache) = m.forward(dt)?;
                Ok((alpha, ModulatorCache::Mlp(cache)))
            }
        }
    }

    pub fn backward(&self, cache: &ModulatorCache, dalpha: f64) -> Result<ModulatorGrad> {
        match (self, cache) {
            (Modulator::Kan(k), ModulatorCache::Kan(c)) => Ok(ModulatorGrad::Kan(k.backward(c, dalpha)?)),
            (Modulator::Mlp(m), ModulatorCache::Mlp(c)) => Ok(ModulatorGrad::Mlp(m.backward(c, dalpha)?)),
            _ => Err(Error::StaleCache("modulator cache kind does not match module")),
        }
    }

    /// Parameter tensors in serialization order.
    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Modulator::Kan(k) => vec![&k.a, &k.w, &k.coeffs, std::slice::from_ref(&k.bias)],
            Modulator::Mlp(m) => vec![&m.u, &m.c, &m.v],
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Modulator::Kan(k) => vec![
                k.a.as_mut_slice(),
                k.w.as_mut_slice(),
                k.coeffs.as_mut_slice(),
                std::slice::from_mut(&mut k.bias),
            ],
            Modulator::Mlp(m) => vec![m.u.as_mut_slice(), m.c.as_mut_slice(), m.v.as_mut_slice()],
        }
    }
}

impl ModulatorGrad {
    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ModulatorGrad::Kan(g) => vec![&g.a, &g.w, &g.coeffs, std::slice::from_ref(&g.bias)],
            ModulatorGrad::Mlp(g) => vec![&g.u, &g.c, &g.v],
        }
    }
}
