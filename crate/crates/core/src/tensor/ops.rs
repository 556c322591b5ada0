use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::kernels::{matmul, matmul_a_bt, matmul_at_b};
use super::Tensor;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

fn elementwise_grad(g: &[f64], d: impl Fn(usize) -> f64) -> Vec<f64> {
    g.iter().enumerate().map(|(i, gi)| gi * d(i)).collect()
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() || shape.iter().any(|&e| e == 0) {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor::from_op_shared(
            shape.to_vec(),
            Arc::clone(&self.data),
            &[self],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim("add", &self.shape, &other.shape));
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(self.shape.clone(), data, &[self, other], |g, needs| {
            vec![needs[0].then(|| g.to_vec()), needs[1].then(|| g.to_vec())]
        }))
    }

    /// `self[..., rest] + other[rest]`, with `other` repeated over the leading axes.
    pub fn add_bcast(&self, other: &Tensor) -> Result<Tensor> {
        let k = other.shape.len();
        if k > self.shape.len() || self.shape[self.shape.len() - k..] != other.shape[..] {
            return Err(Error::dim("add_bcast", &self.shape, &other.shape));
        }
        let inner = other.numel();
        let o = Arc::clone(&other.data);
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, a)| a + o[i % inner])
            .collect();
        Ok(Tensor::from_op(self.shape.clone(), data, &[self, other], move |g, needs| {
            let gb = needs[1].then(|| {
                let mut acc = vec![0.0; inner];
                for chunk in g.chunks(inner) {
                    for (a, v) in acc.iter_mut().zip(chunk) {
                        *a += v;
                    }
                }
                acc
            });
            vec![needs[0].then(|| g.to_vec()), gb]
        }))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim("mul", &self.shape, &other.shape));
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).collect();
        let (a, b) = (Arc::clone(&self.data), Arc::clone(&other.data));
        Ok(Tensor::from_op(self.shape.clone(), data, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| elementwise_grad(g, |i| b[i])),
                needs[1].then(|| elementwise_grad(g, |i| a[i])),
            ]
        }))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&self, c: &[f64]) -> Result<Tensor> {
        if c.len() != self.numel() {
            return Err(Error::dim("mul_const", &self.shape, &[c.len()]));
        }
        let data = self.data.iter().zip(c).map(|(a, b)| a * b).collect();
        let c = c.to_vec();
        Ok(Tensor::from_op(self.shape.clone(), data, &[self], move |g, _| {
            vec![Some(elementwise_grad(g, |i| c[i]))]
        }))
    }

    /// `self * scale + shift` with per-element constants; no gradient reaches the constants.
    pub fn affine_const(&self, scale: &[f64], shift: &[f64]) -> Result<Tensor> {
        if scale.len() != self.numel() || shift.len() != self.numel() {
            return Err(Error::dim("affine_const", &self.shape, &[scale.len(), shift.len()]));
        }
        let data = self
            .data
            .iter()
            .zip(scale)
            .zip(shift)
            .map(|((x, s), b)| x * s + b)
            .collect();
        let scale = scale.to_vec();
        Ok(Tensor::from_op(self.shape.clone(), data, &[self], move |g, _| {
            vec![Some(elementwise_grad(g, |i| scale[i]))]
        }))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        let data = self.data.iter().map(|x| x * s).collect();
        Tensor::from_op(self.shape.clone(), data, &[self], move |g, _| {
            vec![Some(g.iter().map(|v| v * s).collect())]
        })
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data.iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![1], vec![s], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    /// `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        let &in_dim = self.shape.last().expect("tensors have rank >= 1");
        if w.shape.len() != 2 || w.shape[0] != in_dim {
            return Err(Error::dim("linear", &self.shape, &w.shape));
        }
        let out_dim = w.shape[1];
        if let Some(b) = b {
            if b.shape != [out_dim] {
                return Err(Error::dim("linear(bias)", &w.shape, &b.shape));
            }
        }
        let rows = self.numel() / in_dim;
        let mut data = matmul(&self.data, &w.data, rows, in_dim, out_dim);
        if let Some(b) = b {
            for row in data.chunks_mut(out_dim) {
                for (o, bv) in row.iter_mut().zip(b.data.iter()) {
                    *o += bv;
                }
            }
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = out_dim;
        let (x, wd) = (Arc::clone(&self.data), Arc::clone(&w.data));
        let backward = move |g: &[f64], needs: &[bool]| {
            let gx = needs[0].then(|| matmul_a_bt(g, &wd, rows, out_dim, in_dim));
            let gw = needs[1].then(|| matmul_at_b(&x, g, rows, in_dim, out_dim));
            let mut out = vec![gx, gw];
            if needs.len() > 2 {
                out.push(needs[2].then(|| {
                    let mut gb = vec![0.0; out_dim];
                    for row in g.chunks(out_dim) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    gb
                }));
            }
            out
        };
        Ok(match b {
            Some(b) => Tensor::from_op(shape, data, &[self, w, b], backward),
            None => Tensor::from_op(shape, data, &[self, w], backward),
        })
    }

    /// Linear map with one weight matrix per group along axis 1:
    /// `x[B, G, R, in] · w[G, in, out] + b[G, out]`.
    pub fn grouped_linear(&self, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        if self.shape.len() != 4 || w.shape.len() != 3 {
            return Err(Error::dim("grouped_linear", &self.shape, &w.shape));
        }
        let (batch, groups, rows, in_dim) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        if w.shape[0] != groups || w.shape[1] != in_dim {
            return Err(Error::dim("grouped_linear", &self.shape, &w.shape));
        }
        let out_dim = w.shape[2];
        if let Some(b) = b {
            if b.shape != [groups, out_dim] {
                return Err(Error::dim("grouped_linear(bias)", &w.shape, &b.shape));
            }
        }
        let x_block = rows * in_dim;
        let o_block = rows * out_dim;
        let w_block = in_dim * out_dim;
        let mut data = Vec::with_capacity(batch * groups * o_block);
        for bi in 0..batch {
            for gi in 0..groups {
                let xs = &self.data[(bi * groups + gi) * x_block..][..x_block];
                let ws = &w.data[gi * w_block..][..w_block];
                let mut y = matmul(xs, ws, rows, in_dim, out_dim);
                if let Some(b) = b {
                    let bs = &b.data[gi * out_dim..][..out_dim];
                    for row in y.chunks_mut(out_dim) {
                        for (o, bv) in row.iter_mut().zip(bs) {
                            *o += bv;
                        }
                    }
                }
                data.extend_from_slice(&y);
            }
        }
        let shape = vec![batch, groups, rows, out_dim];
        let (x, wd) = (Arc::clone(&self.data), Arc::clone(&w.data));
        let backward = move |g: &[f64], needs: &[bool]| {
            let mut gx = needs[0].then(|| Vec::with_capacity(x.len()));
            let mut gw = needs[1].then(|| vec![0.0; wd.len()]);
            let mut gb = (needs.len() > 2 && needs[2]).then(|| vec![0.0; groups * out_dim]);
            for bi in 0..batch {
                for gi in 0..groups {
                    let gs = &g[(bi * groups + gi) * o_block..][..o_block];
                    let ws = &wd[gi * w_block..][..w_block];
                    if let Some(gx) = gx.as_mut() {
                        gx.extend_from_slice(&matmul_a_bt(gs, ws, rows, out_dim, in_dim));
                    }
                    if let Some(gw) = gw.as_mut() {
                        let xs = &x[(bi * groups + gi) * x_block..][..x_block];
                        let part = matmul_at_b(xs, gs, rows, in_dim, out_dim);
                        for (a, v) in gw[gi * w_block..][..w_block].iter_mut().zip(part) {
                            *a += v;
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        let dst = &mut gb[gi * out_dim..][..out_dim];
                        for row in gs.chunks(out_dim) {
                            for (a, v) in dst.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                }
            }
            let mut out = vec![gx, gw];
            if needs.len() > 2 {
                out.push(gb);
            }
            out
        };
        Ok(match b {
            Some(b) => Tensor::from_op(shape, data, &[self, w, b], backward),
            None => Tensor::from_op(shape, data, &[self, w], backward),
        })
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor {
        let data = self.data.iter().map(|&x| gelu_scalar(x)).collect();
        let x = Arc::clone(&self.data);
        Tensor::from_op(self.shape.clone(), data, &[self], move |g, _| {
            vec![Some(elementwise_grad(g, |i| {
                let v = x[i];
                normal_cdf(v) + v * normal_pdf(v)
            }))]
        })
    }

    /// Normalizes each trailing-axis slice with population variance.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let &d = self.shape.last().unwrap();
        if gamma.shape != [d] || beta.shape != [d] {
            return Err(Error::dim("layer_norm", &self.shape, &gamma.shape));
        }
        let rows = self.numel() / d;
        let mut xhat = Vec::with_capacity(self.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in self.data.chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            xhat.extend(row.iter().map(|v| (v - mean) * inv));
        }
        let data = xhat
            .chunks(d)
            .flat_map(|row| {
                row.iter()
                    .zip(gamma.data.iter())
                    .zip(beta.data.iter())
                    .map(|((x, g), b)| x * g + b)
            })
            .collect();
        let gam = Arc::clone(&gamma.data);
        Ok(Tensor::from_op(self.shape.clone(), data, &[self, gamma, beta], move |g, needs| {
            let gx = needs[0].then(|| {
                let mut out = Vec::with_capacity(g.len());
                for ((grow, xrow), inv) in g.chunks(d).zip(xhat.chunks(d)).zip(&inv_std) {
                    let dxhat: Vec<f64> = grow.iter().zip(gam.iter()).map(|(a, b)| a * b).collect();
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum();
                    let df = d as f64;
                    out.extend(
                        dxhat
                            .iter()
                            .zip(xrow)
                            .map(|(dx, xh)| inv / df * (df * dx - s1 - xh * s2)),
                    );
                }
                out
            });
            let ggamma = needs[1].then(|| {
                let mut acc = vec![0.0; d];
                for (grow, xrow) in g.chunks(d).zip(xhat.chunks(d)) {
                    for ((a, gv), xv) in acc.iter_mut().zip(grow).zip(xrow) {
                        *a += gv * xv;
                    }
                }
                acc
            });
            let gbeta = needs[2].then(|| {
                let mut acc = vec![0.0; d];
                for grow in g.chunks(d) {
                    for (a, gv) in acc.iter_mut().zip(grow) {
                        *a += gv;
                    }
                }
                acc
            });
            vec![gx, ggamma, gbeta]
        }))
    }

    /// Inverted dropout; the identity when not training or when `rate == 0`.
    pub fn dropout(&self, rate: f64, training: bool, rng: &mut RngStream) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(&mask)
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let r = self.shape.len();
        if r < 2 {
            return Err(Error::dim("transpose_last2", &self.shape, &[]));
        }
        let (a, b) = (self.shape[r - 2], self.shape[r - 1]);
        let perm = move |src: &[f64], rows: usize, cols: usize| {
            let mut out = Vec::with_capacity(src.len());
            for block in src.chunks(rows * cols) {
                for j in 0..cols {
                    for i in 0..rows {
                        out.push(block[i * cols + j]);
                    }
                }
            }
            out
        };
        let data = perm(&self.data, a, b);
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(shape, data, &[self], move |g, _| {
            vec![Some(perm(g, b, a))]
        }))
    }

    /// Concatenates along the last axis; leading shapes must agree.
    pub fn concat_last(&self, other: &Tensor) -> Result<Tensor> {
        let r = self.shape.len();
        if other.shape.len() != r || self.shape[..r - 1] != other.shape[..r - 1] {
            return Err(Error::dim("concat_last", &self.shape, &other.shape));
        }
        let (da, db) = (self.shape[r - 1], other.shape[r - 1]);
        let mut data = Vec::with_capacity(self.numel() + other.numel());
        for (ra, rb) in self.data.chunks(da).zip(other.data.chunks(db)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let mut shape = self.shape.clone();
        shape[r - 1] = da + db;
        Ok(Tensor::from_op(shape, data, &[self, other], move |g, needs| {
            let mut ga = needs[0].then(Vec::new);
            let mut gb = needs[1].then(Vec::new);
            for row in g.chunks(da + db) {
                if let Some(ga) = ga.as_mut() {
                    ga.extend_from_slice(&row[..da]);
                }
                if let Some(gb) = gb.as_mut() {
                    gb.extend_from_slice(&row[da..]);
                }
            }
            vec![ga, gb]
        }))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Tensor> {
        let r = self.shape.len();
        let d = self.shape[r - 1];
        if len == 0 || start + len > d {
            return Err(Error::dim("slice_last", &self.shape, &[start, len]));
        }
        let data = self
            .data
            .chunks(d)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = self.shape.clone();
        shape[r - 1] = len;
        Ok(Tensor::from_op(shape, data, &[self], move |g, _| {
            let mut gx = Vec::with_capacity(g.len() / len * d);
            for row in g.chunks(len) {
                gx.extend(std::iter::repeat(0.0).take(start));
                gx.extend_from_slice(row);
                gx.extend(std::iter::repeat(0.0).take(d - start - len));
            }
            vec![Some(gx)]
        }))
    }

    /// Mean absolute error against a constant target; subgradient 0 at ties.
    pub fn l1_loss(&self, target: &[f64]) -> Result<Tensor> {
        if target.len() != self.numel() {
            return Err(Error::dim("l1_loss", &self.shape, &[target.len()]));
        }
        let n = self.numel() as f64;
        let v = self.data.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        let signs: Vec<f64> = self
            .data
            .iter()
            .zip(target)
            .map(|(a, b)| {
                let d = a - b;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Tensor::from_op(vec![1], vec![v], &[self], move |g, _| {
            vec![Some(signs.iter().map(|s| s * g[0]).collect())]
        }))
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&self, target: &[f64]) -> Result<Tensor> {
        if target.len() != self.numel() {
            return Err(Error::dim("mse_loss", &self.shape, &[target.len()]));
        }
        let n = self.numel() as f64;
        let diff: Vec<f64> = self.data.iter().zip(target).map(|(a, b)| a - b).collect();
        let v = diff.iter().map(|d| d * d).sum::<f64>() / n;
        Ok(Tensor::from_op(vec![1], vec![v], &[self], move |g, _| {
            vec![Some(diff.iter().map(|d| 2.0 * d / n * g[0]).collect())]
        }))
    }
}
