//! Matrix-product and 1-D cross-correlation kernels.

use crate::error::{Error, Result};
use crate::tensor::{dims2, dims3, Tensor};

/// General 2-D product `op(a) · op(b)` where `op` optionally transposes.
///
/// Both operands stay in their row-major buffers; transposition is realised
/// through strides handed to the BLAS-style inner kernel.
pub fn gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    let [ar, ac] = dims2(a, "matmul")?;
    let [br, bc] = dims2(b, "matmul")?;
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
    if k != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (rsa, csa) = if trans_a { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = vec![0.0f64; m * n];
    if m > 0 && n > 0 && k > 0 {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

/// Standard matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, false, b, false)
}

fn conv_checks(input: &Tensor, weight: &Tensor, bias: &Tensor, depthwise: bool) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let [bt, cin, len] = dims3(input, "conv1d")?;
    let [cout, wcin, k] = dims3(weight, "conv1d")?;
    if k % 2 == 0 {
        return Err(Error::InvalidShape {
            op: "conv1d",
            detail: format!("kernel size must be odd, got {k}"),
        });
    }
    if depthwise {
        if wcin != 1 || cout % cin != 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d(depthwise)",
                lhs: input.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
    } else if wcin != cin {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    if bias.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: vec![cout],
            rhs: bias.shape().to_vec(),
        });
    }
    Ok((bt, cin, len, cout, k, (k - 1) / 2))
}

/// Cross-correlation over the last axis with stride 1 and zero padding
/// `(k-1)/2`, so the output length equals the input length.
///
/// `input` is `(B, Cin, L)`, `weight` `(Cout, Cin, k)` (`(Cout, 1, k)` when
/// `depthwise`), `bias` `(Cout)`; the result is `(B, Cout, L)`. In depthwise
/// mode output channel `o` reads only input channel `o / (Cout/Cin)`.
pub fn conv1d(input: &Tensor, weight: &Tensor, bias: &Tensor, depthwise: bool) -> Result<Tensor> {
    let (bt, cin, len, cout, k, pad) = conv_checks(input, weight, bias, depthwise)?;
    let x = input.data();
    let w = weight.data();
    let bs = bias.data();
    let mult = cout / cin.max(1);
    let mut out = vec![0.0f64; bt * cout * len];
    for b in 0..bt {
        for o in 0..cout {
            let channels: &[usize] = if depthwise { &[o / mult] } else { &[] };
            for l in 0..len {
                let mut acc = bs[o];
                let from = pad.saturating_sub(l);
                let to = k.min(len + pad - l);
                if depthwise {
                    let p = channels[0];
                    let wrow = &w[o * k..(o + 1) * k];
                    let xrow = &x[(b * cin + p) * len..(b * cin + p + 1) * len];
                    for j in from..to {
                        acc += wrow[j] * xrow[l + j - pad];
                    }
                } else {
                    for p in 0..cin {
                        let wrow = &w[(o * cin + p) * k..(o * cin + p + 1) * k];
                        let xrow = &x[(b * cin + p) * len..(b * cin + p + 1) * len];
                        for j in from..to {
                            acc += wrow[j] * xrow[l + j - pad];
                        }
                    }
                }
                out[(b * cout + o) * len + l] = acc;
            }
        }
    }
    Tensor::from_vec(vec![bt, cout, len], out)
}

/// Gradients of [`conv1d`] with respect to input, weight, and bias.
pub fn conv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    depthwise: bool,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [bt, cin, len] = dims3(input, "conv1d_backward")?;
    let [cout, _, k] = dims3(weight, "conv1d_backward")?;
    if grad_out.shape() != [bt, cout, len] {
        return Err(Error::ShapeMismatch {
            op: "conv1d_backward",
            lhs: vec![bt, cout, len],
            rhs: grad_out.shape().to_vec(),
        });
    }
    let pad = (k - 1) / 2;
    let mult = cout / cin.max(1);
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    let mut dx = vec![0.0f64; x.len()];
    let mut dw = vec![0.0f64; w.len()];
    let mut db = vec![0.0f64; cout];
    for b in 0..bt {
        for o in 0..cout {
            let grow = &g[(b * cout + o) * len..(b * cout + o + 1) * len];
            db[o] += grow.iter().sum::<f64>();
            let plist: Vec<usize> = if depthwise { vec![o / mult] } else { (0..cin).collect() };
            for (pi, &p) in plist.iter().enumerate() {
                let widx = if depthwise { o } else { o * cin + pi };
                let xrow = &x[(b * cin + p) * len..(b * cin + p + 1) * len];
                let dxrow = &mut dx[(b * cin + p) * len..(b * cin + p + 1) * len];
                for l in 0..len {
                    let gv = grow[l];
                    let from = pad.saturating_sub(l);
                    let to = k.min(len + pad - l);
                    for j in from..to {
                        dw[widx * k + j] += gv * xrow[l + j - pad];
                        dxrow[l + j - pad] += gv * w[widx * k + j];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape().to_vec(), dx)?,
        Tensor::from_vec(weight.shape().to_vec(), dw)?,
        Tensor::from_vec(vec![cout], db)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_case() {
        // [[1,2]] · [[3],[4]] = [[1*3 + 2*4]] = [[11]]
        let a = Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_dimension_error_names_both_shapes() {
        let a = Tensor::zeros(&[3, 4]);
        let b = Tensor::zeros(&[5, 2]);
        match matmul(&a, &b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![3, 4]);
                assert_eq!(rhs, vec![5, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn gemm_transposes() {
        let a = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(vec![3, 2], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let ref_val = matmul(&a.transpose().unwrap(), &b.transpose().unwrap()).unwrap();
        let got = gemm(&a, true, &b, true).unwrap();
        assert_eq!(got, ref_val);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = Tensor::from_vec(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d(&x, &w, &b, false).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv1d_sliding_sum() {
        // kernel [1,1,1] over [1,2,3] with zero pads: [0+1+2, 1+2+3, 2+3+0]
        let x = Tensor::from_vec(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d(&x, &w, &b, false).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv1d_shapes_at_paper_defaults() {
        let x = Tensor::zeros(&[2, 15, 5]);
        let w = Tensor::zeros(&[128, 15, 3]);
        let b = Tensor::zeros(&[128]);
        let y = conv1d(&x, &w, &b, false).unwrap();
        assert_eq!(y.shape(), &[2, 128, 5]);
    }

    #[test]
    fn conv1d_rejects_even_kernel_and_cin_mismatch() {
        let x = Tensor::zeros(&[1, 2, 4]);
        let b1 = Tensor::zeros(&[1]);
        assert!(conv1d(&x, &Tensor::zeros(&[1, 2, 2]), &b1, false).is_err());
        assert!(conv1d(&x, &Tensor::zeros(&[1, 3, 3]), &b1, false).is_err());
    }

    #[test]
    fn conv1d_depthwise_identity_kernel() {
        let x = Tensor::from_vec(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Tensor::from_vec(vec![2, 1, 3], vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        let y = conv1d(&x, &w, &b, true).unwrap();
        assert_eq!(y.data(), x.data());
    }
}
