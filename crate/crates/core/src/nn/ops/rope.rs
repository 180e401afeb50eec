//! Rotary position encoding: adjacent feature pairs `(x[2i], x[2i+1])` at
//! sequence position `m` are rotated by `m * theta_i`, with
//! `theta_i = base^(-2i/d)`. Norm-preserving; position 0 is the identity.

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

impl<S: Scalar> Graph<S> {
    /// Rotate feature pairs of `x [..., seq, head_dim]` by position along the
    /// second-to-last axis.
    pub fn rope_rotate(&mut self, x: Var, base: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::Shape(format!(
                "rope needs at least [seq, head_dim], got {shape:?}"
            )));
        }
        let d = shape[shape.len() - 1];
        let seq = shape[shape.len() - 2];
        if d % 2 != 0 {
            return Err(Error::Argument(format!("rope head_dim {d} must be even")));
        }
        if base <= 0.0 {
            return Err(Error::Argument(format!("rope base {base} must be positive")));
        }
        let pairs = d / 2;
        // cos/sin per (position, pair), computed in f64 then narrowed.
        let mut cos = vec![S::zero(); seq * pairs];
        let mut sin = vec![S::zero(); seq * pairs];
        for m in 0..seq {
            for i in 0..pairs {
                let theta = base.powf(-2.0 * i as f64 / d as f64);
                let angle = m as f64 * theta;
                cos[m * pairs + i] = S::from64(angle.cos());
                sin[m * pairs + i] = S::from64(angle.sin());
            }
        }

        let lead: usize = shape[..shape.len() - 2].iter().product();
        let xv = self.value(x);
        let mut value = vec![S::zero(); xv.len()];
        for l in 0..lead {
            for m in 0..seq {
                let row = (l * seq + m) * d;
                for i in 0..pairs {
                    let (c, s) = (cos[m * pairs + i], sin[m * pairs + i]);
                    let a = xv[row + 2 * i];
                    let b = xv[row + 2 * i + 1];
                    value[row + 2 * i] = a * c - b * s;
                    value[row + 2 * i + 1] = a * s + b * c;
                }
            }
        }
        Ok(self.push(
            shape,
            value,
            vec![x.0],
            Box::new(move |ctx| {
                // Rotation is orthogonal: the adjoint rotates by the negated angle.
                let mut dx = vec![S::zero(); ctx.grad.len()];
                for l in 0..lead {
                    for m in 0..seq {
                        let row = (l * seq + m) * d;
                        for i in 0..pairs {
                            let (c, s) = (cos[m * pairs + i], sin[m * pairs + i]);
                            let ga = ctx.grad[row + 2 * i];
                            let gb = ctx.grad[row + 2 * i + 1];
                            dx[row + 2 * i] = ga * c + gb * s;
                            dx[row + 2 * i + 1] = -ga * s + gb * c;
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}
