//! Data-movement ops: reshape, permute, slice, concat, zero-pad.

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::{numel, strides};
use crate::scalar::Scalar;

/// Scatter `src` (shape `src_shape`) into a permuted layout given by `axes`.
fn permute_data<S: Scalar>(src: &[S], src_shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<S>) {
    let rank = src_shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&a| src_shape[a]).collect();
    let in_strides = strides(src_shape);
    let out_strides = strides(&out_shape);
    let mut out = vec![S::zero(); src.len()];
    let mut idx = vec![0usize; rank];
    for (flat, &v) in src.iter().enumerate() {
        // Decompose flat into source multi-index.
        let mut rem = flat;
        for d in 0..rank {
            idx[d] = rem / in_strides[d];
            rem %= in_strides[d];
        }
        let mut out_flat = 0usize;
        for (d, &a) in axes.iter().enumerate() {
            out_flat += idx[a] * out_strides[d];
        }
        out[out_flat] = v;
    }
    (out_shape, out)
}

impl<S: Scalar> Graph<S> {
    /// Same data, new shape (element counts must match).
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.numel(a) {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {:?} changes element count",
                self.shape(a),
                shape
            )));
        }
        let value = self.value(a).to_vec();
        Ok(self.push(
            shape.to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec())]),
        ))
    }

    /// Reorder axes; `axes` is a permutation of `0..rank`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let rank = self.shape(a).len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&x| x >= rank || std::mem::replace(&mut seen[x], true)) {
            return Err(Error::Shape(format!(
                "axes {:?} is not a permutation of 0..{rank}",
                axes
            )));
        }
        let (out_shape, value) = permute_data(self.value(a), self.shape(a), axes);
        let axes_owned = axes.to_vec();
        Ok(self.push(
            out_shape,
            value,
            vec![a.0],
            Box::new(move |ctx| {
                // Backward permutes the gradient by the inverse permutation.
                let mut inverse = vec![0usize; axes_owned.len()];
                for (d, &a) in axes_owned.iter().enumerate() {
                    inverse[a] = d;
                }
                let (_, g) = permute_data(ctx.grad, ctx.shape, &inverse);
                vec![Some(g)]
            }),
        ))
    }

    /// Contiguous sub-range along one axis.
    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) on axis {axis} of {:?}",
                start + len,
                shape
            )));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a);
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            value.extend_from_slice(&src[base..base + len * inner]);
        }
        let full_axis = shape[axis];
        Ok(self.push(
            out_shape,
            value,
            vec![a.0],
            Box::new(move |ctx| {
                let mut g = vec![S::zero(); ctx.parents[0].data.len()];
                for o in 0..outer {
                    let dst = (o * full_axis + start) * inner;
                    let src_at = o * len * inner;
                    g[dst..dst + len * inner]
                        .copy_from_slice(&ctx.grad[src_at..src_at + len * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Concatenate along one axis; all other extents must agree.
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Argument("concat of zero tensors".into()));
        }
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape(format!("concat axis {axis} out of range")));
        }
        let mut total_axis = 0usize;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (&a, &b))| d != axis && a != b)
            {
                return Err(Error::Shape(format!(
                    "concat operand {:?} incompatible with {:?} on axis {axis}",
                    s, first
                )));
            }
            total_axis += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total_axis;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let axis_lens: Vec<usize> = parts.iter().map(|&p| self.shape(p)[axis]).collect();

        let mut value = vec![S::zero(); outer * total_axis * inner];
        for o in 0..outer {
            let mut at = 0usize;
            for (pi, &p) in parts.iter().enumerate() {
                let l = axis_lens[pi];
                let src = self.value(p);
                let src_base = o * l * inner;
                let dst_base = (o * total_axis + at) * inner;
                value[dst_base..dst_base + l * inner]
                    .copy_from_slice(&src[src_base..src_base + l * inner]);
                at += l;
            }
        }
        let parents: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(
            out_shape,
            value,
            parents,
            Box::new(move |ctx| {
                let mut grads: Vec<Option<Vec<S>>> = axis_lens
                    .iter()
                    .map(|&l| Some(vec![S::zero(); outer * l * inner]))
                    .collect();
                for o in 0..outer {
                    let mut at = 0usize;
                    for (pi, &l) in axis_lens.iter().enumerate() {
                        let dst = grads[pi].as_mut().expect("allocated above");
                        let src_base = (o * total_axis + at) * inner;
                        let dst_base = o * l * inner;
                        dst[dst_base..dst_base + l * inner]
                            .copy_from_slice(&ctx.grad[src_base..src_base + l * inner]);
                        at += l;
                    }
                }
                grads
            }),
        ))
    }

    /// Zero-pad along one axis (`before` leading, `after` trailing zeros).
    pub fn pad_axis(&mut self, a: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("pad axis {axis} out of range")));
        }
        if before == 0 && after == 0 {
            return Ok(a);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] += before + after;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let old_axis = shape[axis];
        let new_axis = out_shape[axis];
        let src = self.value(a);
        let mut value = vec![S::zero(); outer * new_axis * inner];
        for o in 0..outer {
            let dst = (o * new_axis + before) * inner;
            let s = o * old_axis * inner;
            value[dst..dst + old_axis * inner].copy_from_slice(&src[s..s + old_axis * inner]);
        }
        Ok(self.push(
            out_shape,
            value,
            vec![a.0],
            Box::new(move |ctx| {
                let mut g = vec![S::zero(); outer * old_axis * inner];
                for o in 0..outer {
                    let src_at = (o * new_axis + before) * inner;
                    let dst = o * old_axis * inner;
                    g[dst..dst + old_axis * inner]
                        .copy_from_slice(&ctx.grad[src_at..src_at + old_axis * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }
}
