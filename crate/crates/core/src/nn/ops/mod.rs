//! Tape operations, grouped by kind. Elementwise ops and reductions live
//! here; heavier kernels in the submodules.

mod conv;
mod matmul;
mod norm;
mod rope;
mod shape;
mod spectral_ops;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

impl<S: Scalar> Graph<S> {
    fn check_same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{op}: operand shapes {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "add")?;
        let value: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0, b.0],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "sub")?;
        let value: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        Ok(self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0, b.0],
            Box::new(|ctx| {
                vec![
                    Some(ctx.grad.to_vec()),
                    Some(ctx.grad.iter().map(|&g| -g).collect()),
                ]
            }),
        ))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "mul")?;
        let value: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0, b.0],
            Box::new(|ctx| {
                let da = ctx.needs[0].then(|| {
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[1].data)
                        .map(|(&g, &y)| g * y)
                        .collect()
                });
                let db = ctx.needs[1].then(|| {
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[0].data)
                        .map(|(&g, &x)| g * x)
                        .collect()
                });
                vec![da, db]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = S::from64(c);
        let value: Vec<S> = self.value(a).iter().map(|&x| x * k).collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(move |ctx| vec![Some(ctx.grad.iter().map(|&g| g * k).collect())]),
        )
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let k = S::from64(c);
        let value: Vec<S> = self.value(a).iter().map(|&x| x + k).collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec())]),
        )
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|&x| if x > S::zero() { x } else { S::zero() })
            .collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| {
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[0].data)
                        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                        .collect(),
                )]
            }),
        )
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let k = S::from64(slope);
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|&x| if x > S::zero() { x } else { x * k })
            .collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(move |ctx| {
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[0].data)
                        .map(|(&g, &x)| if x > S::zero() { g } else { g * k })
                        .collect(),
                )]
            }),
        )
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value: Vec<S> = self.value(a).iter().map(|&x| x.abs()).collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| {
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[0].data)
                        .map(|(&g, &x)| {
                            if x > S::zero() {
                                g
                            } else if x < S::zero() {
                                -g
                            } else {
                                S::zero()
                            }
                        })
                        .collect(),
                )]
            }),
        )
    }

    /// Exact GELU: `x * Phi(x)` with the Gaussian CDF.
    pub fn gelu(&mut self, a: Var) -> Var {
        let half = S::from64(0.5);
        let inv_sqrt2 = S::from64(std::f64::consts::FRAC_1_SQRT_2);
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|&x| x * half * (S::one() + (x * inv_sqrt2).erf()))
            .collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(move |ctx| {
                let inv_sqrt_2pi = S::from64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.parents[0].data)
                        .map(|(&g, &x)| {
                            let phi_cdf = half * (S::one() + (x * inv_sqrt2).erf());
                            let pdf = inv_sqrt_2pi * (-(x * x) * half).exp();
                            g * (phi_cdf + x * pdf)
                        })
                        .collect(),
                )]
            }),
        )
    }

    pub fn tanh_op(&mut self, a: Var) -> Var {
        let value: Vec<S> = self.value(a).iter().map(|&x| x.tanh()).collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| {
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.value)
                        .map(|(&g, &y)| g * (S::one() - y * y))
                        .collect(),
                )]
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|&x| S::one() / (S::one() + (-x).exp()))
            .collect();
        self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(|ctx| {
                vec![Some(
                    ctx.grad
                        .iter()
                        .zip(ctx.value)
                        .map(|(&g, &y)| g * y * (S::one() - y))
                        .collect(),
                )]
            }),
        )
    }

    /// Mean over every element, producing a scalar node.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.numel(a);
        let inv = S::one() / S::from64(n as f64);
        let value = vec![self.value(a).iter().copied().sum::<S>() * inv];
        self.push(
            vec![1],
            value,
            vec![a.0],
            Box::new(move |ctx| {
                let g = ctx.grad[0] * inv;
                vec![Some(vec![g; ctx.parents[0].data.len()])]
            }),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = vec![self.value(a).iter().copied().sum::<S>()];
        self.push(
            vec![1],
            value,
            vec![a.0],
            Box::new(|ctx| {
                let g = ctx.grad[0];
                vec![Some(vec![g; ctx.parents[0].data.len()])]
            }),
        )
    }

    /// Inverted dropout: keeps elements with probability `1-p`, scaling
    /// survivors by `1/(1-p)` so the expectation is the identity.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = S::from64(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.numel(a))
            .map(|_| {
                if rng.gen::<f64>() < p {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let value: Vec<S> = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        Ok(self.push(
            self.shape(a).to_vec(),
            value,
            vec![a.0],
            Box::new(move |ctx| {
                vec![Some(
                    ctx.grad.iter().zip(&mask).map(|(&g, &m)| g * m).collect(),
                )]
            }),
        ))
    }
}
