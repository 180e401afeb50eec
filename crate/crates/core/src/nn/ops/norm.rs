//! Group normalization and softmax.

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

fn group_stats<S: Scalar>(chunk: &[S], eps: S) -> (S, S) {
    let n = S::from64(chunk.len() as f64);
    let mean = chunk.iter().copied().sum::<S>() / n;
    let var = chunk
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<S>()
        / n;
    (mean, S::one() / (var + eps).sqrt())
}

impl<S: Scalar> Graph<S> {
    /// Group normalization over `[B, C, H, W]`: per-(sample, group) zero
    /// mean / unit variance, then per-channel affine.
    pub fn group_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        eps: f64,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::Shape(format!("group_norm wants 4-d input, got {xs:?}")));
        }
        let (bsz, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!(
                "group_norm: {c} channels not divisible by {groups} groups"
            )));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!(
                "group_norm affine shapes {:?}/{:?}, expected [{c}]",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let cg = c / groups;
        let group_len = cg * h * w;
        let epss = S::from64(eps);

        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut value = vec![S::zero(); xv.len()];
        for b in 0..bsz {
            for g in 0..groups {
                let at = (b * c + g * cg) * h * w;
                let (mean, istd) = group_stats(&xv[at..at + group_len], epss);
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let row = at + ci * h * w;
                    for k in 0..h * w {
                        let xhat = (xv[row + k] - mean) * istd;
                        value[row + k] = gv[ch] * xhat + bv[ch];
                    }
                }
            }
        }

        Ok(self.push(
            xs,
            value,
            vec![x.0, gamma.0, beta.0],
            Box::new(move |ctx| {
                let xv = ctx.parents[0].data;
                let gv = ctx.parents[1].data;
                let gout = ctx.grad;
                let n = S::from64(group_len as f64);

                let mut dx = ctx.needs[0].then(|| vec![S::zero(); xv.len()]);
                let mut dgamma = ctx.needs[1].then(|| vec![S::zero(); c]);
                let mut dbeta = ctx.needs[2].then(|| vec![S::zero(); c]);

                for b in 0..bsz {
                    for g in 0..groups {
                        let at = (b * c + g * cg) * h * w;
                        let chunk = &xv[at..at + group_len];
                        let (mean, istd) = group_stats(chunk, epss);
                        // Per-group reductions of dxhat and dxhat*xhat.
                        let mut sum_dxhat = S::zero();
                        let mut sum_dxhat_xhat = S::zero();
                        for ci in 0..cg {
                            let ch = g * cg + ci;
                            let row = at + ci * h * w;
                            for k in 0..h * w {
                                let xhat = (xv[row + k] - mean) * istd;
                                let dy = gout[row + k];
                                let dxhat = dy * gv[ch];
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                                if let Some(dg) = dgamma.as_mut() {
                                    dg[ch] += dy * xhat;
                                }
                                if let Some(db) = dbeta.as_mut() {
                                    db[ch] += dy;
                                }
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            let mean_dxhat = sum_dxhat / n;
                            let mean_dxhat_xhat = sum_dxhat_xhat / n;
                            for ci in 0..cg {
                                let ch = g * cg + ci;
                                let row = at + ci * h * w;
                                for k in 0..h * w {
                                    let xhat = (xv[row + k] - mean) * istd;
                                    let dxhat = gout[row + k] * gv[ch];
                                    dx[row + k] =
                                        istd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                                }
                            }
                        }
                    }
                }
                vec![dx, dgamma, dbeta]
            }),
        ))
    }

    /// Softmax over the last dimension; every output row sums to one.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| Error::Shape("softmax of a 0-d tensor".into()))?;
        let xv = self.value(x);
        let mut value = vec![S::zero(); xv.len()];
        for (row, out) in xv.chunks(d).zip(value.chunks_mut(d)) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for (o, &v) in out.iter_mut().zip(row) {
                let e = (v - max).exp();
                *o = e;
                sum += e;
            }
            let inv = S::one() / sum;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        Ok(self.push(
            shape,
            value,
            vec![x.0],
            Box::new(move |ctx| {
                let mut dx = vec![S::zero(); ctx.grad.len()];
                for ((y, g), out) in ctx
                    .value
                    .chunks(d)
                    .zip(ctx.grad.chunks(d))
                    .zip(dx.chunks_mut(d))
                {
                    let dot: S = y.iter().zip(g).map(|(&yv, &gv)| yv * gv).sum();
                    for ((o, &yv), &gv) in out.iter_mut().zip(y).zip(g) {
                        *o = yv * (gv - dot);
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}
