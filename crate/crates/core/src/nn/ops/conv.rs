//! 2-D convolution (cross-correlation convention) and its transposed
//! counterpart. Direct loops, parallelized over independent output slabs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

impl<S: Scalar> Graph<S> {
    /// `x [B,Cin,H,W] * w [Cout,Cin,kh,kw] (+ b [Cout]) -> [B,Cout,H',W']`
    /// with `H' = (H + 2*ph - kh)/sh + 1`.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d wants 4-d input/weight, got {xs:?} and {ws:?}"
            )));
        }
        let (bsz, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, wcin, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {cin}, weight expects {wcin}"
            )));
        }
        let (sh, sw) = stride;
        let (ph, pw) = padding;
        if sh == 0 || sw == 0 {
            return Err(Error::Argument("conv2d stride must be positive".into()));
        }
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::Shape(format!(
                "conv2d: spatial dims ({h},{w}) + padding too small for kernel ({kh},{kw})"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::Shape(format!(
                    "conv2d bias shape {:?}, expected [{cout}]",
                    self.shape(b)
                )));
            }
        }
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;

        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = bias.map(|b| self.value(b).to_vec());
        let mut value = vec![S::zero(); bsz * cout * oh * ow];
        value
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(slab, out)| {
                let (b, co) = (slab / cout, slab % cout);
                let base_b = b * cin * h * w;
                let wbase = co * cin * kh * kw;
                let bias_v = bv.as_ref().map_or(S::zero(), |bv| bv[co]);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias_v;
                        for ci in 0..cin {
                            let xbase = base_b + ci * h * w;
                            let wrow = &wv[wbase + ci * kh * kw..wbase + (ci + 1) * kh * kw];
                            for ky in 0..kh {
                                let iy = (oy * sh + ky) as isize - ph as isize;
                                if iy < 0 || iy as usize >= h {
                                    continue;
                                }
                                let xrow = xbase + iy as usize * w;
                                for kx in 0..kw {
                                    let ix = (ox * sw + kx) as isize - pw as isize;
                                    if ix < 0 || ix as usize >= w {
                                        continue;
                                    }
                                    acc += xv[xrow + ix as usize] * wrow[ky * kw + kx];
                                }
                            }
                        }
                        out[oy * ow + ox] = acc;
                    }
                }
            });

        let mut parents = vec![x.0, weight.0];
        if let Some(b) = bias {
            parents.push(b.0);
        }
        let has_bias = bias.is_some();
        Ok(self.push(
            vec![bsz, cout, oh, ow],
            value,
            parents,
            Box::new(move |ctx| {
                let g = ctx.grad;
                let xv = ctx.parents[0].data;
                let wv = ctx.parents[1].data;
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![S::zero(); xv.len()];
                    dx.par_chunks_mut(h * w).enumerate().for_each(|(slab, dchunk)| {
                        let (b, ci) = (slab / cin, slab % cin);
                        for co in 0..cout {
                            let gbase = (b * cout + co) * oh * ow;
                            let wbase = (co * cin + ci) * kh * kw;
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let gv = g[gbase + oy * ow + ox];
                                    if gv == S::zero() {
                                        continue;
                                    }
                                    for ky in 0..kh {
                                        let iy = (oy * sh + ky) as isize - ph as isize;
                                        if iy < 0 || iy as usize >= h {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ix = (ox * sw + kx) as isize - pw as isize;
                                            if ix < 0 || ix as usize >= w {
                                                continue;
                                            }
                                            dchunk[iy as usize * w + ix as usize] +=
                                                gv * wv[wbase + ky * kw + kx];
                                        }
                                    }
                                }
                            }
                        }
                    });
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![S::zero(); wv.len()];
                    dw.par_chunks_mut(cin * kh * kw)
                        .enumerate()
                        .for_each(|(co, wchunk)| {
                            for b in 0..bsz {
                                let gbase = (b * cout + co) * oh * ow;
                                for oy in 0..oh {
                                    for ox in 0..ow {
                                        let gv = g[gbase + oy * ow + ox];
                                        if gv == S::zero() {
                                            continue;
                                        }
                                        for ci in 0..cin {
                                            let xbase = (b * cin + ci) * h * w;
                                            let wrow = &mut wchunk[ci * kh * kw..(ci + 1) * kh * kw];
                                            for ky in 0..kh {
                                                let iy = (oy * sh + ky) as isize - ph as isize;
                                                if iy < 0 || iy as usize >= h {
                                                    continue;
                                                }
                                                for kx in 0..kw {
                                                    let ix =
                                                        (ox * sw + kx) as isize - pw as isize;
                                                    if ix < 0 || ix as usize >= w {
                                                        continue;
                                                    }
                                                    wrow[ky * kw + kx] += gv
                                                        * xv[xbase + iy as usize * w + ix as usize];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        });
                    dw
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    let db = ctx.needs[2].then(|| {
                        let mut db = vec![S::zero(); cout];
                        for b in 0..bsz {
                            for (co, d) in db.iter_mut().enumerate() {
                                let gbase = (b * cout + co) * oh * ow;
                                for &gv in &g[gbase..gbase + oh * ow] {
                                    *d += gv;
                                }
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

    /// Transposed 2-D convolution (no padding):
    /// `x [B,Cin,H,W] * w [Cin,Cout,kh,kw] -> [B,Cout,(H-1)*sh+kh,(W-1)*sw+kw]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: (usize, usize),
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::Shape(format!(
                "conv_transpose2d wants 4-d input/weight, got {xs:?} and {ws:?}"
            )));
        }
        let (bsz, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (wcin, cout, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv_transpose2d channel mismatch: input has {cin}, weight expects {wcin}"
            )));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(Error::Argument("conv_transpose2d stride must be positive".into()));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::Shape(format!(
                    "conv_transpose2d bias shape {:?}, expected [{cout}]",
                    self.shape(b)
                )));
            }
        }
        let oh = (h - 1) * sh + kh;
        let ow = (w - 1) * sw + kw;

        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = bias.map(|b| self.value(b).to_vec());
        let mut value = vec![S::zero(); bsz * cout * oh * ow];
        value
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(slab, out)| {
                let (b, co) = (slab / cout, slab % cout);
                if let Some(bv) = &bv {
                    for o in out.iter_mut() {
                        *o = bv[co];
                    }
                }
                for ci in 0..cin {
                    let xbase = (b * cin + ci) * h * w;
                    let wbase = (ci * cout + co) * kh * kw;
                    for iy in 0..h {
                        for ix in 0..w {
                            let xs = xv[xbase + iy * w + ix];
                            if xs == S::zero() {
                                continue;
                            }
                            for ky in 0..kh {
                                let orow = (iy * sh + ky) * ow + ix * sw;
                                for kx in 0..kw {
                                    out[orow + kx] += xs * wv[wbase + ky * kw + kx];
                                }
                            }
                        }
                    }
                }
            });

        let mut parents = vec![x.0, weight.0];
        if let Some(b) = bias {
            parents.push(b.0);
        }
        let has_bias = bias.is_some();
        Ok(self.push(
            vec![bsz, cout, oh, ow],
            value,
            parents,
            Box::new(move |ctx| {
                let g = ctx.grad;
                let xv = ctx.parents[0].data;
                let wv = ctx.parents[1].data;
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![S::zero(); xv.len()];
                    dx.par_chunks_mut(h * w).enumerate().for_each(|(slab, dchunk)| {
                        let (b, ci) = (slab / cin, slab % cin);
                        for co in 0..cout {
                            let gbase = (b * cout + co) * oh * ow;
                            let wbase = (ci * cout + co) * kh * kw;
                            for iy in 0..h {
                                for ix in 0..w {
                                    let mut acc = S::zero();
                                    for ky in 0..kh {
                                        let grow = gbase + (iy * sh + ky) * ow + ix * sw;
                                        for kx in 0..kw {
                                            acc += g[grow + kx] * wv[wbase + ky * kw + kx];
                                        }
                                    }
                                    dchunk[iy * w + ix] += acc;
                                }
                            }
                        }
                    });
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![S::zero(); wv.len()];
                    dw.par_chunks_mut(cout * kh * kw)
                        .enumerate()
                        .for_each(|(ci, wchunk)| {
                            for b in 0..bsz {
                                let xbase = (b * cin + ci) * h * w;
                                for co in 0..cout {
                                    let gbase = (b * cout + co) * oh * ow;
                                    let wrow = &mut wchunk[co * kh * kw..(co + 1) * kh * kw];
                                    for iy in 0..h {
                                        for ix in 0..w {
                                            let xs = xv[xbase + iy * w + ix];
                                            if xs == S::zero() {
                                                continue;
                                            }
                                            for ky in 0..kh {
                                                let grow = gbase + (iy * sh + ky) * ow + ix * sw;
                                                for kx in 0..kw {
                                                    wrow[ky * kw + kx] += xs * g[grow + kx];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        });
                    dw
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    let db = ctx.needs[2].then(|| {
                        let mut db = vec![S::zero(); cout];
                        for b in 0..bsz {
                            for (co, d) in db.iter_mut().enumerate() {
                                let gbase = (b * cout + co) * oh * ow;
                                for &gv in &g[gbase..gbase + oh * ow] {
                                    *d += gv;
                                }
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
}
