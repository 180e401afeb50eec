//! Affine map over the last axis (`linear`) and batched matrix products.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

/// `out[m,n] = sum_k A[m,k] * B(k,n)` where B is read transposed when `tb`.
fn mm<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, tb: bool, out: &mut [S]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        if tb {
            // B is [n, k]; each output is a dot of two contiguous rows.
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = S::zero();
                for l in 0..k {
                    acc += arow[l] * brow[l];
                }
                *o = acc;
            }
        } else {
            for o in orow.iter_mut() {
                *o = S::zero();
            }
            for (l, &av) in arow.iter().enumerate() {
                let brow = &b[l * n..(l + 1) * n];
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += av * brow[j];
                }
            }
        }
    }
}

/// `out[m,n] = sum_k A[k,m] * B[k,n]` (A read transposed).
fn mm_ta<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(out.len(), m * n);
    for o in out.iter_mut() {
        *o = S::zero();
    }
    for l in 0..k {
        let arow = &a[l * m..(l + 1) * m];
        let brow = &b[l * n..(l + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for (j, o) in orow.iter_mut().enumerate() {
                *o += av * brow[j];
            }
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// Affine map over the last dimension: `x[..., Din] -> x[..., Dout]`
    /// with weight `[Dout, Din]` and optional bias `[Dout]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        if ws.len() != 2 {
            return Err(Error::Shape(format!("linear weight must be 2-d, got {ws:?}")));
        }
        let (dout, din) = (ws[0], ws[1]);
        if xs.is_empty() || *xs.last().unwrap() != din {
            return Err(Error::Shape(format!(
                "linear: input {:?} does not end in Din={din}",
                xs
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [dout] {
                return Err(Error::Shape(format!(
                    "linear bias shape {:?}, expected [{dout}]",
                    self.shape(b)
                )));
            }
        }
        let rows = self.numel(x) / din;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = dout;

        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = bias.map(|b| self.value(b).to_vec());
        let mut value = vec![S::zero(); rows * dout];
        value
            .par_chunks_mut(dout)
            .enumerate()
            .for_each(|(r, orow)| {
                let xrow = &xv[r * din..(r + 1) * din];
                for (o, slot) in orow.iter_mut().enumerate() {
                    let wrow = &wv[o * din..(o + 1) * din];
                    let mut acc = match &bv {
                        Some(b) => b[o],
                        None => S::zero(),
                    };
                    for i in 0..din {
                        acc += xrow[i] * wrow[i];
                    }
                    *slot = acc;
                }
            });

        let mut parents = vec![x.0, weight.0];
        if let Some(b) = bias {
            parents.push(b.0);
        }
        let has_bias = bias.is_some();
        Ok(self.push(
            out_shape,
            value,
            parents,
            Box::new(move |ctx| {
                let g = ctx.grad;
                let xv = ctx.parents[0].data;
                let wv = ctx.parents[1].data;
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![S::zero(); xv.len()];
                    dx.par_chunks_mut(din).enumerate().for_each(|(r, drow)| {
                        let grow = &g[r * dout..(r + 1) * dout];
                        for (o, &gv) in grow.iter().enumerate() {
                            let wrow = &wv[o * din..(o + 1) * din];
                            for i in 0..din {
                                drow[i] += gv * wrow[i];
                            }
                        }
                    });
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![S::zero(); wv.len()];
                    dw.par_chunks_mut(din).enumerate().for_each(|(o, wrow)| {
                        for r in 0..rows {
                            let gv = g[r * dout + o];
                            let xrow = &xv[r * din..(r + 1) * din];
                            for i in 0..din {
                                wrow[i] += gv * xrow[i];
                            }
                        }
                    });
                    dw
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    let db = ctx.needs[2].then(|| {
                        let mut db = vec![S::zero(); dout];
                        for r in 0..rows {
                            for (o, d) in db.iter_mut().enumerate() {
                                *d += g[r * dout + o];
                            }
                        }
                        db
                    });
                    grads.push(db);
                }
                grads
            }),
        ))
    }

    /// Batched matrix product. `a` is `[batch.., M, K]`; `b` is
    /// `[batch.., K, N]`, or `[batch.., N, K]` when `transpose_b`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() != sa.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(Error::Shape(format!("bmm: incompatible shapes {sa:?} x {sb:?}")));
        }
        let rank = sa.len();
        let (m, k) = (sa[rank - 2], sa[rank - 1]);
        let (n, kb) = if transpose_b {
            (sb[rank - 2], sb[rank - 1])
        } else {
            (sb[rank - 1], sb[rank - 2])
        };
        if kb != k {
            return Err(Error::Shape(format!(
                "bmm: inner dims disagree ({k} vs {kb}) for {sa:?} x {sb:?}"
            )));
        }
        let batch: usize = sa[..rank - 2].iter().product();
        let mut out_shape = sa[..rank - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);

        let av = self.value(a);
        let bv = self.value(b);
        let mut value = vec![S::zero(); batch * m * n];
        value
            .par_chunks_mut(m * n)
            .enumerate()
            .for_each(|(bi, chunk)| {
                mm(
                    &av[bi * m * k..(bi + 1) * m * k],
                    &bv[bi * n * k..(bi + 1) * n * k],
                    m,
                    k,
                    n,
                    transpose_b,
                    chunk,
                );
            });

        Ok(self.push(
            out_shape,
            value,
            vec![a.0, b.0],
            Box::new(move |ctx| {
                let g = ctx.grad;
                let av = ctx.parents[0].data;
                let bv = ctx.parents[1].data;
                let da = ctx.needs[0].then(|| {
                    let mut da = vec![S::zero(); av.len()];
                    da.par_chunks_mut(m * k).enumerate().for_each(|(bi, chunk)| {
                        let gb = &g[bi * m * n..(bi + 1) * m * n];
                        let bb = &bv[bi * n * k..(bi + 1) * n * k];
                        if transpose_b {
                            // dA = G[m,n] * B[n,k]
                            mm(gb, bb, m, n, k, false, chunk);
                        } else {
                            // dA = G[m,n] * B^T ([k,n] read transposed)
                            mm(gb, bb, m, n, k, true, chunk);
                        }
                    });
                    da
                });
                let db = ctx.needs[1].then(|| {
                    let mut db = vec![S::zero(); bv.len()];
                    db.par_chunks_mut(n * k).enumerate().for_each(|(bi, chunk)| {
                        let gb = &g[bi * m * n..(bi + 1) * m * n];
                        let ab = &av[bi * m * k..(bi + 1) * m * k];
                        if transpose_b {
                            // dB[n,k] = G^T[n,m] * A[m,k]
                            mm_ta(gb, ab, n, m, k, chunk);
                        } else {
                            // dB[k,n] = A^T[k,m] * G[m,n]
                            mm_ta(ab, gb, k, m, n, chunk);
                        }
                    });
                    db
                });
                vec![da, db]
            }),
        ))
    }
}
