//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every recorded operation stores its parents plus a closure that maps the
//! output gradient to parent gradients. Nodes are appended in execution
//! order, so walking the tape backwards visits operations in exact reverse
//! topological order; gradients accumulate additively where a value fans out
//! into several consumers.

use crate::error::{Error, Result};
use crate::tensor::{conv1d, conv1d_backward, dims2, dims3, gemm, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackFn>,
}

/// Gradients of one backward pass, indexed by the [`Var`]s of the tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros when the loss does not depend on it.
    pub fn take(&mut self, v: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf that never receives a gradient (inputs, targets, masks).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Vec::new(), None)
    }

    /// Leaf whose gradient is tracked (trainable parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Vec::new(), None)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, parents: Vec<Var>, backward: Option<BackFn>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            parents,
            backward,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, parents: Vec<Var>, backward: BackFn) -> Var {
        let requires = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        if requires {
            self.push(value, true, parents, Some(backward))
        } else {
            self.push(value, false, Vec::new(), None)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.record(value, vec![a, b], Box::new(|g| vec![g.clone(), g.clone()])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.record(
            value,
            vec![a, b],
            Box::new(|g| vec![g.clone(), g.scale(-1.0)]),
        ))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = av.mul(&bv)?;
        Ok(self.record(
            value,
            vec![a, b],
            Box::new(move |g| {
                vec![
                    g.mul(&bv).expect("recorded shapes agree"),
                    g.mul(&av).expect("recorded shapes agree"),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.record(value, vec![a], Box::new(move |g| vec![g.scale(c)]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).map(f64::tanh);
        let yc = y.clone();
        self.record(
            y,
            vec![a],
            Box::new(move |g| {
                vec![g
                    .zip_map(&yc, "tanh_backward", |gv, yv| gv * (1.0 - yv * yv))
                    .expect("recorded shapes agree")]
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        let yc = y.clone();
        self.record(
            y,
            vec![a],
            Box::new(move |g| {
                vec![g
                    .zip_map(&yc, "sigmoid_backward", |gv, yv| gv * yv * (1.0 - yv))
                    .expect("recorded shapes agree")]
            }),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let xv = self.value(a).clone();
        let y = xv.map(|v| v.max(0.0));
        self.record(
            y,
            vec![a],
            Box::new(move |g| {
                vec![g
                    .zip_map(&xv, "relu_backward", |gv, x| if x > 0.0 { gv } else { 0.0 })
                    .expect("recorded shapes agree")]
            }),
        )
    }

    /// Matrix product with the gradient rules dA = G·Bᵀ and dB = Aᵀ·G.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = gemm(&av, false, &bv, false)?;
        Ok(self.record(
            value,
            vec![a, b],
            Box::new(move |g| {
                vec![
                    gemm(g, false, &bv, true).expect("recorded shapes agree"),
                    gemm(&av, true, g, false).expect("recorded shapes agree"),
                ]
            }),
        ))
    }

    /// Affine map `x·Wᵀ + b` for `x:(R,in)`, `w:(out,in)`, `b:(out)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = self.value(b).clone();
        let [rows, in_dim] = dims2(&xv, "linear")?;
        let [out_dim, w_in] = dims2(&wv, "linear")?;
        if w_in != in_dim || bv.shape() != [out_dim] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let mm = gemm(&xv, false, &wv, true)?;
        let mut out = mm.data().to_vec();
        for r in 0..rows {
            for o in 0..out_dim {
                out[r * out_dim + o] += bv.data()[o];
            }
        }
        let value = Tensor::from_vec(vec![rows, out_dim], out)?;
        Ok(self.record(
            value,
            vec![x, w, b],
            Box::new(move |g| {
                let dx = gemm(g, false, &wv, false).expect("recorded shapes agree");
                let dw = gemm(g, true, &xv, false).expect("recorded shapes agree");
                let gd = g.data();
                let mut db = vec![0.0; out_dim];
                for r in 0..rows {
                    for o in 0..out_dim {
                        db[o] += gd[r * out_dim + o];
                    }
                }
                vec![dx, dw, Tensor::from_vec(vec![out_dim], db).unwrap()]
            }),
        ))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, depthwise: bool) -> Result<Var> {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let value = conv1d(&xv, &wv, self.value(b), depthwise)?;
        Ok(self.record(
            value,
            vec![x, w, b],
            Box::new(move |g| {
                let (dx, dw, db) =
                    conv1d_backward(&xv, &wv, g, depthwise).expect("recorded shapes agree");
                vec![dx, dw, db]
            }),
        ))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let value = self.value(a).permute(axes)?;
        let mut inverse = vec![0usize; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| vec![g.permute(&inverse).expect("recorded shapes agree")]),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let orig = self.value(a).shape().to_vec();
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| vec![g.reshape(&orig).expect("recorded shapes agree")]),
        ))
    }

    /// Slice `(B,T,F) -> (B,F)` at time step `t`.
    pub fn select_time(&mut self, a: Var, t: usize) -> Result<Var> {
        let [bt, tt, ft] = dims3(self.value(a), "select_time")?;
        if t >= tt {
            return Err(Error::InvalidShape {
                op: "select_time",
                detail: format!("step {t} out of range for sequence length {tt}"),
            });
        }
        let src = self.value(a).data();
        let mut out = vec![0.0; bt * ft];
        for b in 0..bt {
            out[b * ft..(b + 1) * ft]
                .copy_from_slice(&src[(b * tt + t) * ft..(b * tt + t) * ft + ft]);
        }
        let value = Tensor::from_vec(vec![bt, ft], out)?;
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| {
                let mut dx = vec![0.0; bt * tt * ft];
                let gd = g.data();
                for b in 0..bt {
                    dx[(b * tt + t) * ft..(b * tt + t) * ft + ft]
                        .copy_from_slice(&gd[b * ft..(b + 1) * ft]);
                }
                vec![Tensor::from_vec(vec![bt, tt, ft], dx).unwrap()]
            }),
        ))
    }

    /// Stack `T` tensors of shape `(B,F)` into `(B,T,F)`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        if steps.is_empty() {
            return Err(Error::InvalidShape {
                op: "stack_time",
                detail: "empty step list".into(),
            });
        }
        let [bt, ft] = dims2(self.value(steps[0]), "stack_time")?;
        let tt = steps.len();
        let mut out = vec![0.0; bt * tt * ft];
        for (t, &s) in steps.iter().enumerate() {
            let sv = self.value(s);
            if sv.shape() != [bt, ft] {
                return Err(Error::ShapeMismatch {
                    op: "stack_time",
                    lhs: vec![bt, ft],
                    rhs: sv.shape().to_vec(),
                });
            }
            let sd = sv.data();
            for b in 0..bt {
                out[(b * tt + t) * ft..(b * tt + t) * ft + ft]
                    .copy_from_slice(&sd[b * ft..(b + 1) * ft]);
            }
        }
        let value = Tensor::from_vec(vec![bt, tt, ft], out)?;
        Ok(self.record(
            value,
            steps.to_vec(),
            Box::new(move |g| {
                let gd = g.data();
                (0..tt)
                    .map(|t| {
                        let mut ds = vec![0.0; bt * ft];
                        for b in 0..bt {
                            ds[b * ft..(b + 1) * ft]
                                .copy_from_slice(&gd[(b * tt + t) * ft..(b * tt + t) * ft + ft]);
                        }
                        Tensor::from_vec(vec![bt, ft], ds).unwrap()
                    })
                    .collect()
            }),
        ))
    }

    /// Reverse the middle axis of `(B,T,F)`.
    pub fn reverse_time(&mut self, a: Var) -> Result<Var> {
        let [bt, tt, ft] = dims3(self.value(a), "reverse_time")?;
        let rev = move |src: &Tensor| {
            let sd = src.data();
            let mut out = vec![0.0; sd.len()];
            for b in 0..bt {
                for t in 0..tt {
                    let rt = tt - 1 - t;
                    out[(b * tt + rt) * ft..(b * tt + rt) * ft + ft]
                        .copy_from_slice(&sd[(b * tt + t) * ft..(b * tt + t) * ft + ft]);
                }
            }
            Tensor::from_vec(vec![bt, tt, ft], out).unwrap()
        };
        let value = rev(self.value(a));
        Ok(self.record(value, vec![a], Box::new(move |g| vec![rev(g)])))
    }

    /// Concatenate along the last axis.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let ash = self.value(a).shape().to_vec();
        let bsh = self.value(b).shape().to_vec();
        if ash.len() != bsh.len() || ash[..ash.len() - 1] != bsh[..bsh.len() - 1] {
            return Err(Error::ShapeMismatch {
                op: "concat_last",
                lhs: ash,
                rhs: bsh,
            });
        }
        let rows: usize = ash[..ash.len() - 1].iter().product();
        let (la, lb) = (ash[ash.len() - 1], bsh[bsh.len() - 1]);
        let mut shape = ash.clone();
        *shape.last_mut().unwrap() = la + lb;
        let mut out = vec![0.0; rows * (la + lb)];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for r in 0..rows {
            out[r * (la + lb)..r * (la + lb) + la].copy_from_slice(&ad[r * la..(r + 1) * la]);
            out[r * (la + lb) + la..(r + 1) * (la + lb)].copy_from_slice(&bd[r * lb..(r + 1) * lb]);
        }
        let value = Tensor::from_vec(shape, out)?;
        let (asl, bsl) = (ash.clone(), bsh.clone());
        Ok(self.record(
            value,
            vec![a, b],
            Box::new(move |g| {
                let gd = g.data();
                let mut da = vec![0.0; rows * la];
                let mut db = vec![0.0; rows * lb];
                for r in 0..rows {
                    da[r * la..(r + 1) * la].copy_from_slice(&gd[r * (la + lb)..r * (la + lb) + la]);
                    db[r * lb..(r + 1) * lb]
                        .copy_from_slice(&gd[r * (la + lb) + la..(r + 1) * (la + lb)]);
                }
                vec![
                    Tensor::from_vec(asl.clone(), da).unwrap(),
                    Tensor::from_vec(bsl.clone(), db).unwrap(),
                ]
            }),
        ))
    }

    /// Mean over all elements, producing a scalar.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let shape = self.value(a).shape().to_vec();
        let value = Tensor::scalar(self.value(a).mean());
        self.record(
            value,
            vec![a],
            Box::new(move |g| {
                let gv = g.data()[0] / n as f64;
                vec![Tensor::full(&shape, gv)]
            }),
        )
    }

    /// Sum over all elements, producing a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape().to_vec();
        let value = Tensor::scalar(self.value(a).sum());
        self.record(
            value,
            vec![a],
            Box::new(move |g| vec![Tensor::full(&shape, g.data()[0])]),
        )
    }

    /// Elementwise product with a fixed mask (dropout, gating); the mask is
    /// not differentiated.
    pub fn hadamard_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let value = self.value(a).mul(&mask)?;
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| vec![g.mul(&mask).expect("recorded shapes agree")]),
        ))
    }

    /// Per-column affine over the last axis: `y[..,v] = x[..,v]·scale[v] + shift[v]`.
    /// The coefficients are constants.
    pub fn affine_cols(&mut self, a: Var, scale: Tensor, shift: Tensor) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let m = *shape.last().ok_or(Error::InvalidShape {
            op: "affine_cols",
            detail: "rank-0 input".into(),
        })?;
        if scale.shape() != [m] || shift.shape() != [m] {
            return Err(Error::ShapeMismatch {
                op: "affine_cols",
                lhs: shape,
                rhs: scale.shape().to_vec(),
            });
        }
        let xd = self.value(a).data();
        let (sc, sh) = (scale.data().to_vec(), shift.data().to_vec());
        let out: Vec<f64> = xd
            .iter()
            .enumerate()
            .map(|(i, &v)| v * sc[i % m] + sh[i % m])
            .collect();
        let value = Tensor::from_vec(self.value(a).shape().to_vec(), out)?;
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| {
                let gd: Vec<f64> = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * sc[i % m])
                    .collect();
                vec![Tensor::from_vec(g.shape().to_vec(), gd).unwrap()]
            }),
        ))
    }

    /// Per-column clamp over the last axis; the gradient passes through
    /// inside the bounds and is zero outside.
    pub fn clamp_cols(&mut self, a: Var, lo: Tensor, hi: Tensor) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let m = *shape.last().ok_or(Error::InvalidShape {
            op: "clamp_cols",
            detail: "rank-0 input".into(),
        })?;
        if lo.shape() != [m] || hi.shape() != [m] {
            return Err(Error::ShapeMismatch {
                op: "clamp_cols",
                lhs: shape,
                rhs: lo.shape().to_vec(),
            });
        }
        let xv = self.value(a).clone();
        let (lod, hid) = (lo.data().to_vec(), hi.data().to_vec());
        let out: Vec<f64> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(lod[i % m], hid[i % m]))
            .collect();
        let value = Tensor::from_vec(xv.shape().to_vec(), out)?;
        Ok(self.record(
            value,
            vec![a],
            Box::new(move |g| {
                let gd: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .enumerate()
                    .map(|(i, (&gv, &x))| {
                        if x >= lod[i % m] && x <= hid[i % m] {
                            gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![Tensor::from_vec(g.shape().to_vec(), gd).unwrap()]
            }),
        ))
    }

    /// Reverse pass from a scalar loss; returns a gradient per tape node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State {
                what: "backward on an empty tape".into(),
            });
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_vec(
            loss_node.value.shape().to_vec(),
            vec![1.0],
        )?);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || node.backward.is_none() {
                continue;
            }
            let Some(gout) = grads[i].clone() else { continue };
            let back = node.backward.as_ref().unwrap();
            let parent_grads = back(&gout);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), self.nodes[p.0].value.shape());
                grads[p.0] = Some(match grads[p.0].take() {
                    Some(acc) => acc.add(&pg)?,
                    None => pg,
                });
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(shape: [usize; 2], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t2([2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let loss = tape.sum_all(x);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(x, &[2, 3]).data(), &[1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(x, &[3]).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn fanout_accumulates_gradients() {
        // loss = sum(x + x) => dloss/dx = 2 everywhere
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![2], vec![5.0, -1.0]).unwrap());
        let s = tape.add(x, x).unwrap();
        let loss = tape.sum_all(s);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(x, &[2]).data(), &[2.0, 2.0]);
    }

    #[test]
    fn matmul_gradient_rules() {
        // loss = sum(A·B): dA = ones·Bᵀ, dB = Aᵀ·ones
        let mut tape = Tape::new();
        let a = tape.param(t2([2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.param(t2([2, 2], &[5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum_all(c);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(a, &[2, 2]).data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(g.take(b, &[2, 2]).data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        let y = tape.relu(x);
        assert!(matches!(
            tape.backward(y),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn pointwise_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![3], vec![0.0, -2.5, 2.5]).unwrap());
        let th = tape.tanh(x);
        let sg = tape.sigmoid(x);
        let rl = tape.relu(x);
        assert_eq!(tape.value(th).data()[0], 0.0);
        assert_eq!(tape.value(sg).data()[0], 0.5);
        assert_eq!(tape.value(rl).data(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn constants_do_not_track_gradients() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
        let y = tape.tanh(x);
        let loss = tape.sum_all(y);
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(x).is_none());
    }

    #[test]
    fn select_and_stack_roundtrip() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let steps: Vec<Var> = (0..3).map(|t| tape.select_time(x, t).unwrap()).collect();
        let back = tape.stack_time(&steps).unwrap();
        assert_eq!(tape.value(back).data(), tape.value(x).data());
        let loss = tape.sum_all(back);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(x, &[2, 3, 2]).data(), &[1.0; 12]);
    }

    #[test]
    fn clamp_masks_gradient_outside_bounds() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![2, 2], vec![-5.0, 0.5, 2.0, 0.25]).unwrap());
        let lo = Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap();
        let hi = Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap();
        let y = tape.clamp_cols(x, lo, hi).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.5, 1.0, 0.25]);
        let loss = tape.sum_all(y);
        let mut g = tape.backward(loss).unwrap();
        assert_eq!(g.take(x, &[2, 2]).data(), &[0.0, 1.0, 0.0, 1.0]);
    }
}
